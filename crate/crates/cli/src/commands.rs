use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use sliq_core::data::manifest::load_dataset;
use sliq_core::data::{qubits_for, split_dataset, synth, DatasetSplit};
use sliq_core::evaluation::{
    classification_partners, cluster_accuracy, gmm_fit, percentile, rank_against_ground_truth, sample_pairs,
    sample_ranking_tasks, Embedder, RankingResult,
};
use sliq_core::statevector::MAX_QUBITS;
use sliq_core::training::{stream_seed, train_with_observer, NetworkMode, TrainedModel};
use sliq_core::{CircuitSpec, Dataset, Error, Result, Sample};

use crate::config::{ClassifyRun, GenSynthConfig, PvmRun, RankRun, SynthKind, TrainRun};
use crate::output::{create_dir, write_csv, write_json};
use crate::{Cli, Command};

/// Stream of the train/test split, kept apart from the training streams.
const SPLIT_STREAM: u64 = 0x5350_4c49;

pub fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(Error::Validation("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Resource(format!("cannot start {n} worker threads: {e}")))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenSynth(args) => gen_synth(&args.resolve()?).map(|_| ()),
        Command::Train(args) => train(&args.resolve()?).map(|_| ()),
        Command::EvalRank(args) => eval_rank(&args.resolve()?).map(|_| ()),
        Command::EvalClassify(args) => eval_classify(&args.resolve()?).map(|_| ()),
        Command::EvalPvm(args) => eval_pvm(&args.resolve()?).map(|_| ()),
    }
}

/// Returns the manifest path.
pub fn gen_synth(config: &GenSynthConfig) -> Result<PathBuf> {
    let manifest = match config.kind {
        SynthKind::ColorBlobs => {
            synth::write_color_blobs(&config.out, config.n, config.width, config.height, config.seed)?
        }
        SynthKind::TwoClassGauss => synth::write_two_class_gauss(&config.out, config.n, config.dim, config.seed)?,
    };
    write_json(&config.out.join("gen_synth_config.json"), config)?;
    println!("wrote {} samples to {}", config.n, manifest.display());
    Ok(manifest)
}

/// The train/test split used by training and by classification evaluation.
pub fn training_split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    split_dataset(dataset, train_fraction, stream_seed(seed, SPLIT_STREAM))
}

/// Narrowest circuit for the dataset, or the requested width if it is wide enough.
pub fn circuit_for(dataset: &Dataset, mode: NetworkMode, layers: usize, qubits: Option<usize>) -> Result<CircuitSpec> {
    let features = dataset.feature_len();
    let (needed, floor) = match mode {
        NetworkMode::Sliq => (qubits_for(2 * features), 4),
        NetworkMode::Baseline => (qubits_for(features), 2),
    };
    let needed = needed.max(floor);
    if needed > MAX_QUBITS {
        return Err(Error::Resource(format!(
            "{features} features need {needed} qubits, the simulator supports at most {MAX_QUBITS}"
        )));
    }
    let n = match qubits {
        Some(q) if q < needed => {
            return Err(Error::Resource(format!(
                "{features} features in {mode:?} mode need {needed} qubits, {q} available"
            )))
        }
        Some(q) => q,
        None => needed,
    };
    match mode {
        NetworkMode::Sliq => CircuitSpec::sliq(n, layers),
        NetworkMode::Baseline => CircuitSpec::baseline(n, layers),
    }
}

pub fn train(run: &TrainRun) -> Result<TrainedModel> {
    let config = run.train_config()?;
    let dataset = load_dataset(&run.manifest()?)?;
    let split = training_split(&dataset, run.train_fraction, run.seed)?;
    let train_set = dataset.subset(&split.train)?;
    let spec = circuit_for(&dataset, run.mode, run.layers, run.qubits)?;

    let model = train_with_observer(&train_set, &spec, &config, |epoch, loss| {
        eprintln!("epoch {:>4}  loss {loss:.6}", epoch + 1);
    })?;

    create_dir(&run.out)?;
    model.save(&run.out.join("model.json"))?;
    write_csv(
        &run.out.join("loss_history.csv"),
        &["epoch", "mean_loss"],
        model.loss_history.iter().enumerate().map(|(e, l)| vec![(e + 1).to_string(), l.to_string()]),
    )?;
    write_json(&run.out.join("split.json"), &split)?;
    write_json(&run.out.join("train_config.json"), run)?;
    println!(
        "trained {} qubits x {} layers on {} samples, model in {}",
        spec.n_qubits(),
        spec.n_layers(),
        train_set.len(),
        run.out.display()
    );
    Ok(model)
}

fn samples(dataset: &Dataset, ids: &[usize]) -> Result<Vec<Sample>> {
    ids.iter().map(|&id| dataset.get(id).cloned()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    pub anchors: usize,
    pub candidates: usize,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p100: f64,
    pub mean: f64,
}

pub fn eval_rank(run: &RankRun) -> Result<RankSummary> {
    let model = TrainedModel::load(&run.model)?;
    let dataset = load_dataset(&run.manifest()?)?;
    let embedder = Embedder::new(&model).with_metric(run.metric);
    let tasks = sample_ranking_tasks(&dataset, run.anchors, run.candidates, run.seed)?;
    let results = tasks
        .par_iter()
        .map(|(anchor, cands)| rank_against_ground_truth(&embedder, dataset.get(*anchor)?, &samples(&dataset, cands)?))
        .collect::<Result<Vec<RankingResult>>>()?;

    let mut rhos: Vec<f64> = results.iter().map(|r| r.spearman_rho).collect();
    rhos.sort_by(f64::total_cmp);
    let summary = RankSummary {
        anchors: run.anchors,
        candidates: run.candidates,
        p25: percentile(&rhos, 25.0)?,
        p50: percentile(&rhos, 50.0)?,
        p75: percentile(&rhos, 75.0)?,
        p100: percentile(&rhos, 100.0)?,
        mean: rhos.iter().sum::<f64>() / rhos.len() as f64,
    };

    create_dir(&run.out)?;
    write_csv(
        &run.out.join("ranking.csv"),
        &["anchor_id", "candidate_id", "ground_truth_distance", "model_distance"],
        results.iter().flat_map(|r| {
            r.candidates.iter().map(move |c| {
                vec![
                    r.anchor_id.to_string(),
                    c.candidate_id.to_string(),
                    c.ground_truth.to_string(),
                    c.model.to_string(),
                ]
            })
        }),
    )?;
    write_csv(
        &run.out.join("rank_anchors.csv"),
        &["anchor_id", "spearman_rho"],
        results.iter().map(|r| vec![r.anchor_id.to_string(), r.spearman_rho.to_string()]),
    )?;
    write_json(&run.out.join("rank_summary.json"), &summary)?;
    write_json(&run.out.join("eval_rank_config.json"), run)?;
    println!("median spearman {:.4} over {} anchors", summary.p50, summary.anchors);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifySummary {
    pub samples: usize,
    pub classes: usize,
    pub accuracy: f64,
    pub gmm_converged: bool,
    pub gmm_iterations: usize,
}

pub fn eval_classify(run: &ClassifyRun) -> Result<ClassifySummary> {
    let model = TrainedModel::load(&run.model)?;
    let dataset = load_dataset(&run.manifest()?)?;
    if !dataset.is_labeled() {
        return Err(Error::Validation("classification needs a labeled manifest".into()));
    }
    let split = training_split(&dataset, run.train_fraction, run.split_seed.unwrap_or(model.config.seed))?;
    if split.test.is_empty() {
        return Err(Error::Validation("the test split is empty".into()));
    }
    let ids: Vec<usize> = split.test.iter().copied().take(run.n_fit).collect();
    let partners = classification_partners(&dataset, &ids, run.pairing, run.seed)?;
    let embedder = Embedder::new(&model);
    let points = ids
        .par_iter()
        .zip(&partners)
        .map(|(&id, &p)| embedder.embed(dataset.get(id)?, dataset.get(p)?))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u32> =
        ids.iter().map(|&id| dataset.get(id).map(|s| s.label.expect("labeled dataset"))).collect::<Result<_>>()?;
    let k = labels.iter().collect::<BTreeSet<_>>().len();

    let gmm = gmm_fit(&points, k, run.seed)?;
    let clusters = gmm.predict(&points)?;
    let summary = ClassifySummary {
        samples: ids.len(),
        classes: k,
        accuracy: cluster_accuracy(&clusters, &labels)?,
        gmm_converged: gmm.converged,
        gmm_iterations: gmm.log_likelihood.len() - 1,
    };

    create_dir(&run.out)?;
    let mut header = vec!["sample_id", "label", "cluster"];
    let coord_names = ["c0", "c1", "c2", "c3"];
    header.extend(&coord_names[..points[0].len()]);
    write_csv(
        &run.out.join("classify_embeddings.csv"),
        &header,
        ids.iter().zip(&labels).zip(&clusters).zip(&points).map(|(((id, l), c), p)| {
            let mut row = vec![id.to_string(), l.to_string(), c.to_string()];
            row.extend(p.iter().map(f64::to_string));
            row
        }),
    )?;
    write_json(&run.out.join("gmm.json"), &gmm)?;
    write_json(&run.out.join("classify_summary.json"), &summary)?;
    write_json(&run.out.join("eval_classify_config.json"), run)?;
    println!("accuracy {:.4} on {} samples, {k} classes", summary.accuracy, summary.samples);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvmSummary {
    pub pairs: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

pub fn eval_pvm(run: &PvmRun) -> Result<PvmSummary> {
    let model = TrainedModel::load(&run.model)?;
    if model.mode() != NetworkMode::Sliq {
        return Err(Error::Validation("projection variance needs a sliq model".into()));
    }
    let dataset = load_dataset(&run.manifest()?)?;
    let embedder = Embedder::new(&model);
    let pairs = sample_pairs(&dataset, run.pairs, run.seed)?;
    let mut values = pairs
        .par_iter()
        .map(|&(a, b)| embedder.projection_variance(dataset.get(a)?, dataset.get(b)?))
        .collect::<Result<Vec<f64>>>()?;
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let summary = PvmSummary {
        pairs: n,
        mean: values.iter().sum::<f64>() / n as f64,
        median: percentile(&values, 50.0)?,
        max: values[n - 1],
    };

    create_dir(&run.out)?;
    write_csv(
        &run.out.join("pvm_cdf.csv"),
        &["rank", "projection_variance", "cdf"],
        values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i + 1).to_string(), v.to_string(), ((i + 1) as f64 / n as f64).to_string()]),
    )?;
    write_json(&run.out.join("pvm_summary.json"), &summary)?;
    write_json(&run.out.join("eval_pvm_config.json"), run)?;
    println!("mean projection variance {:.6} over {n} pairs", summary.mean);
    Ok(summary)
}
