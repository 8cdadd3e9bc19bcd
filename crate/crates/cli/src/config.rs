//! Command-line flags and resolved run configurations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sliq_core::evaluation::Pairing;
use sliq_core::training::{GradientMode, NetworkMode};
use sliq_core::{Error, LossWeights, Objective, Result, TrainConfig};

/// Defaults, then the JSON file, then the flags that were given.
fn resolve<C, F>(flags: &F, file: Option<&Path>) -> Result<C>
where
    C: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut merged = serde_json::to_value(C::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let Value::Object(entries) = value else {
            return Err(Error::format(path, "config must be a JSON object"));
        };
        overlay(&mut merged, entries);
    }
    if let Value::Object(entries) = serde_json::to_value(flags).expect("flags serialize") {
        overlay(&mut merged, entries);
    }
    serde_json::from_value(merged).map_err(|e| Error::Validation(format!("invalid configuration: {e}")))
}

fn overlay(base: &mut Value, entries: Map<String, Value>) {
    let base = base.as_object_mut().expect("config is an object");
    for (k, v) in entries {
        base.insert(k, v);
    }
}

fn require(manifest: Option<PathBuf>) -> Result<PathBuf> {
    manifest.ok_or_else(|| Error::Validation("a dataset manifest is required (--manifest)".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    ColorBlobs,
    TwoClassGauss,
}

#[derive(Debug, Args, Serialize)]
pub struct GenSynthArgs {
    /// color_blobs or two_class_gauss.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Image width for color_blobs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    /// Feature count for two_class_gauss.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSynthConfig {
    pub kind: SynthKind,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub width: usize,
    pub height: usize,
    pub dim: usize,
}

impl Default for GenSynthConfig {
    fn default() -> Self {
        Self { kind: SynthKind::ColorBlobs, n: 200, seed: 0, out: PathBuf::from("data"), width: 8, height: 8, dim: 8 }
    }
}

impl GenSynthArgs {
    pub fn resolve(&self) -> Result<GenSynthConfig> {
        resolve(self, self.config.as_deref())
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// sliq or baseline.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    /// Weight of the triplet objective.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Weight of the cross-slot consistency term.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// parameter_shift, finite_difference or adjoint.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// l1 or squared_l2; defaults to l1 for sliq and squared_l2 for baseline.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    /// Hinge margin on the triplet objective.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Triplets generated for training; defaults to the training-split size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triplets: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_triplets: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
    /// Circuit width; defaults to the fewest qubits that hold the input.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub mode: NetworkMode,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub layers: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gradient_mode: GradientMode,
    pub seed: u64,
    pub objective: Option<Objective>,
    pub margin: Option<f64>,
    pub triplets: Option<usize>,
    pub resample_triplets: bool,
    pub train_fraction: f64,
    pub qubits: Option<usize>,
}

impl Default for TrainRun {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            manifest: None,
            out: PathBuf::from("run"),
            mode: t.mode,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            layers: t.n_layers,
            alpha: t.weights.alpha,
            beta: t.weights.beta,
            gradient_mode: t.gradient_mode,
            seed: t.seed,
            objective: t.objective,
            margin: t.margin,
            triplets: t.triplets,
            resample_triplets: t.resample_triplets,
            train_fraction: 0.8,
            qubits: None,
        }
    }
}

impl TrainRun {
    pub fn manifest(&self) -> Result<PathBuf> {
        require(self.manifest.clone())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let config = TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            n_layers: self.layers,
            weights: LossWeights::new(self.alpha, self.beta)?,
            gradient_mode: self.gradient_mode,
            seed: self.seed,
            mode: self.mode,
            objective: self.objective,
            margin: self.margin,
            triplets: self.triplets,
            resample_triplets: self.resample_triplets,
        };
        config.validate()?;
        Ok(config)
    }
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainRun> {
        resolve(self, self.config.as_deref())
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchors: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Projection-space distance: l1 or squared_l2.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankRun {
    pub model: PathBuf,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub anchors: usize,
    pub candidates: usize,
    pub seed: u64,
    pub metric: Objective,
}

impl Default for RankRun {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.json"),
            manifest: None,
            out: PathBuf::from("eval"),
            anchors: 30,
            candidates: 50,
            seed: 0,
            metric: Objective::L1,
        }
    }
}

impl RankRun {
    pub fn manifest(&self) -> Result<PathBuf> {
        require(self.manifest.clone())
    }
}

impl RankArgs {
    pub fn resolve(&self) -> Result<RankRun> {
        resolve(self, self.config.as_deref())
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Number of test samples the mixture is fit to.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_fit: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// positive or self_pair.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairing: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
    /// Seed of the train/test split; defaults to the model's training seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyRun {
    pub model: PathBuf,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub n_fit: usize,
    pub seed: u64,
    pub pairing: Pairing,
    pub train_fraction: f64,
    pub split_seed: Option<u64>,
}

impl Default for ClassifyRun {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.json"),
            manifest: None,
            out: PathBuf::from("eval"),
            n_fit: 1000,
            seed: 0,
            pairing: Pairing::Positive,
            train_fraction: 0.8,
            split_seed: None,
        }
    }
}

impl ClassifyRun {
    pub fn manifest(&self) -> Result<PathBuf> {
        require(self.manifest.clone())
    }
}

impl ClassifyArgs {
    pub fn resolve(&self) -> Result<ClassifyRun> {
        resolve(self, self.config.as_deref())
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PvmArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvmRun {
    pub model: PathBuf,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for PvmRun {
    fn default() -> Self {
        Self { model: PathBuf::from("model.json"), manifest: None, out: PathBuf::from("eval"), pairs: 100, seed: 0 }
    }
}

impl PvmRun {
    pub fn manifest(&self) -> Result<PathBuf> {
        require(self.manifest.clone())
    }
}

impl PvmArgs {
    pub fn resolve(&self) -> Result<PvmRun> {
        resolve(self, self.config.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train_args() -> TrainArgs {
        TrainArgs {
            manifest: None,
            out: None,
            mode: None,
            epochs: None,
            learning_rate: None,
            batch_size: None,
            layers: None,
            alpha: None,
            beta: None,
            gradient_mode: None,
            seed: None,
            objective: None,
            margin: None,
            triplets: None,
            resample_triplets: None,
            train_fraction: None,
            qubits: None,
            config: None,
        }
    }

    #[test]
    fn defaults_match_training_defaults() {
        let run = train_args().resolve().unwrap();
        let c = run.train_config().unwrap();
        assert_eq!(c, TrainConfig::default());
        assert!(run.manifest().is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"epochs": 7, "mode": "baseline", "beta": 0.0, "manifest": "m.json"}"#).unwrap();
        let mut args = train_args();
        args.config = Some(path.clone());
        args.epochs = Some(3);
        let run = args.resolve().unwrap();
        assert_eq!(run.epochs, 3);
        assert_eq!(run.mode, NetworkMode::Baseline);
        assert_eq!(run.beta, 0.0);
        assert_eq!(run.manifest().unwrap(), PathBuf::from("m.json"));

        fs::write(&path, r#"{"epoch": 7}"#).unwrap();
        assert!(matches!(args.resolve(), Err(Error::Validation(_))));
        args.config = Some(dir.path().join("missing.json"));
        assert_eq!(args.resolve().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn string_flags_are_checked() {
        let mut args = train_args();
        args.mode = Some("quantum".into());
        assert!(args.resolve().is_err());
        args.mode = Some("baseline".into());
        args.objective = Some("squared_l2".into());
        let run = args.resolve().unwrap();
        assert_eq!(run.objective, Some(Objective::SquaredL2));
    }
}
