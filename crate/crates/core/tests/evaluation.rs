use sliq_core::data::synth::color_blobs;
use sliq_core::data::{FeatureKind, Sample};
use sliq_core::evaluation::{
    cluster_accuracy, gmm_fit, projection_variance_cdf, rank_against_ground_truth, sample_ranking_tasks, spearman,
    Embedder,
};
use sliq_core::training::{initial_parameters, TrainedModel};
use sliq_core::{CircuitSpec, Dataset, TrainConfig};

fn blobs(n: usize) -> Dataset {
    let samples = color_blobs(n, 8, 8, 5)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(id, img)| Sample { id, features: img.features(), label: None })
        .collect();
    Dataset::new(samples, FeatureKind::Image { width: 8, height: 8 }).unwrap()
}

fn untrained(spec: CircuitSpec, seed: u64) -> TrainedModel {
    let config = TrainConfig { epochs: 0, n_layers: spec.n_layers(), seed, ..TrainConfig::default() };
    TrainedModel { params: initial_parameters(&spec, seed), spec, loss_history: vec![], config }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn untrained_models_rank_at_chance() {
    let ds = blobs(80);
    let tasks = sample_ranking_tasks(&ds, 60, 20, 3).unwrap();
    let rhos: Vec<f64> = tasks
        .iter()
        .enumerate()
        .map(|(i, (anchor, cands))| {
            let embedder = Embedder::new(&untrained(CircuitSpec::sliq(9, 4).unwrap(), 1000 + i as u64));
            let cands: Vec<Sample> = cands.iter().map(|&c| ds.get(c).unwrap().clone()).collect();
            rank_against_ground_truth(&embedder, ds.get(*anchor).unwrap(), &cands).unwrap().spearman_rho
        })
        .collect();
    let m = median(rhos);
    assert!(m.abs() < 0.15, "median rho {m}");
}

#[test]
fn ranking_result_is_consistent() {
    let ds = blobs(12);
    let embedder = Embedder::new(&untrained(CircuitSpec::sliq(9, 1).unwrap(), 4));
    let anchor = ds.get(0).unwrap();
    let cands: Vec<Sample> = ds.samples()[1..].to_vec();
    let r = rank_against_ground_truth(&embedder, anchor, &cands).unwrap();
    assert_eq!(r.candidates.len(), 11);
    let gt: Vec<f64> = r.candidates.iter().map(|c| c.ground_truth).collect();
    let md: Vec<f64> = r.candidates.iter().map(|c| c.model).collect();
    assert_eq!(spearman(&gt, &md).unwrap(), r.spearman_rho);
    assert!(md.iter().all(|&d| (0.0..=4.0).contains(&d)));
    assert_eq!(rank_against_ground_truth(&embedder, anchor, &cands).unwrap(), r);

    let two = rank_against_ground_truth(&embedder, anchor, &cands[..2]).unwrap();
    assert!(two.spearman_rho == 1.0 || two.spearman_rho == -1.0);
    assert!(rank_against_ground_truth(&embedder, anchor, &cands[..1]).is_err());

    let scaled: Vec<f64> = gt.iter().map(|g| 0.01 * g).collect();
    if gt.iter().any(|&g| g != gt[0]) {
        assert_eq!(spearman(&gt, &scaled).unwrap(), 1.0);
    }
}

#[test]
fn projection_variance_values() {
    let ds = blobs(10);
    let embedder = Embedder::new(&untrained(CircuitSpec::sliq(9, 2).unwrap(), 8));
    let pairs: Vec<(&Sample, &Sample)> = ds.samples().windows(2).map(|w| (&w[0], &w[1])).collect();
    let pv = projection_variance_cdf(&embedder, &pairs).unwrap();
    assert_eq!(pv.values.len(), 9);
    assert!(pv.values.windows(2).all(|w| w[0] <= w[1]));
    assert!(pv.values.iter().all(|&v| v >= 0.0));
    let mean = pv.values.iter().sum::<f64>() / 9.0;
    assert!((pv.mean - mean).abs() < 1e-15);
    assert!(projection_variance_cdf(&embedder, &[]).is_err());

    // with no trainable rotation the circuit is a basis permutation and a
    // uniform pair keeps both halves equal
    let spec = CircuitSpec::sliq(4, 1).unwrap();
    let flat = Sample { id: 0, features: vec![1.0; 8], label: None };
    let mut model = untrained(spec.clone(), 0);
    model.params = sliq_core::ParameterVector::zeros(&spec);
    let e = Embedder::new(&model);
    assert!(e.projection_variance(&flat, &flat).unwrap().abs() < 1e-10);

    let baseline = Embedder::new(&TrainedModel {
        config: TrainConfig { mode: sliq_core::NetworkMode::Baseline, ..model.config.clone() },
        spec: CircuitSpec::baseline(3, 1).unwrap(),
        params: sliq_core::ParameterVector::zeros(&CircuitSpec::baseline(3, 1).unwrap()),
        loss_history: vec![],
    });
    assert!(baseline.projection_variance(&flat, &flat).is_err());
}

#[test]
fn gmm_and_permutation_accuracy_on_embedded_clusters() {
    // two tight groups in 4-D with labels flipped relative to cluster order
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for i in 0..100 {
        let t = i as f64 * 0.001;
        if i % 2 == 0 {
            points.push(vec![0.6 + t, -0.3, 0.2 - t, 0.9]);
            labels.push(7u32);
        } else {
            points.push(vec![-0.5, 0.4 + t, -0.7, 0.1 - t]);
            labels.push(3u32);
        }
    }
    let model = gmm_fit(&points, 2, 11).unwrap();
    let assignments = model.predict(&points).unwrap();
    assert_eq!(cluster_accuracy(&assignments, &labels).unwrap(), 1.0);
}
