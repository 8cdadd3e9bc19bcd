//! Datasets, feature preparation and triplet construction.
//!
//! Images are stored channel-interleaved (pixel-major RGB), the layout of a
//! binary PPM raster. Pair inputs interleave two samples scalar by scalar:
//! the first sample fills the even positions and the second the odd ones.

pub mod manifest;
pub mod ppm;
pub mod synth;

use std::collections::{BTreeMap, HashMap};

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::CircuitSpec;
use crate::error::{Error, Result};

/// Bins per color channel.
pub const BINS_PER_CHANNEL: usize = 8;
/// Total histogram length (R, G, B concatenated).
pub const HISTOGRAM_BINS: usize = 3 * BINS_PER_CHANNEL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f64>,
    pub label: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    /// RGB pixels in [0, 255], channel-interleaved.
    Image {
        width: usize,
        height: usize,
    },
    Tabular,
}

/// Which of the two interleave slots a sample occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    /// Even positions.
    First,
    /// Odd positions.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    pub fn new(anchor: usize, positive: usize, negative: usize) -> Result<Self> {
        if anchor == positive || anchor == negative || positive == negative {
            return Err(Error::Validation(format!(
                "triplet ids must be distinct, got ({anchor}, {positive}, {negative})"
            )));
        }
        Ok(Self { anchor, positive, negative })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    kind: FeatureKind,
    index: HashMap<usize, usize>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, kind: FeatureKind) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Validation("dataset is empty".into()));
        };
        let len = first.features.len();
        if len == 0 {
            return Err(Error::Validation("samples have no features".into()));
        }
        if let FeatureKind::Image { width, height } = kind {
            if width * height * 3 != len {
                return Err(Error::Shape(format!(
                    "{width}x{height} RGB images have {} values, samples have {len}",
                    width * height * 3
                )));
            }
        }
        let mut index = HashMap::with_capacity(samples.len());
        for (pos, s) in samples.iter().enumerate() {
            if s.features.len() != len {
                return Err(Error::Shape(format!("sample {} has {} features, expected {len}", s.id, s.features.len())));
            }
            if index.insert(s.id, pos).is_some() {
                return Err(Error::Validation(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self { samples, kind, index })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn feature_len(&self) -> usize {
        self.samples[0].features.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn ids(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn get(&self, id: usize) -> Result<&Sample> {
        self.index
            .get(&id)
            .map(|&pos| &self.samples[pos])
            .ok_or_else(|| Error::Index(format!("no sample with id {id}")))
    }

    pub fn is_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self.samples.iter().filter_map(|s| s.label).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// A new dataset holding the given ids, in the given order.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        let samples = ids.iter().map(|&id| self.get(id).cloned()).collect::<Result<Vec<_>>>()?;
        Self::new(samples, self.kind)
    }

    /// Color histogram of an image sample.
    pub fn histogram(&self, id: usize) -> Result<Vec<f64>> {
        match self.kind {
            FeatureKind::Image { .. } => color_histogram(&self.get(id)?.features),
            FeatureKind::Tabular => Err(Error::Validation("color histograms need image data".into())),
        }
    }
}

/// `out[2i] = a[i]`, `out[2i+1] = b[i]`.
pub fn interweave(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cannot interweave lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).flat_map(|(&x, &y)| [x, y]).collect())
}

/// Inverse of [`interweave`].
pub fn deinterweave(v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::Shape(format!("odd length {} cannot be split", v.len())));
    }
    Ok(v.chunks_exact(2).map(|c| (c[0], c[1])).unzip())
}

/// Zero-pad on the right to the next power of two.
pub fn pad_pow2(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Shape("cannot pad an empty vector".into()));
    }
    pad_to(v, v.len().next_power_of_two())
}

/// Zero-pad on the right to exactly `len`.
pub fn pad_to(v: &[f64], len: usize) -> Result<Vec<f64>> {
    if v.len() > len {
        return Err(Error::Shape(format!("{} values do not fit in {len} amplitudes", v.len())));
    }
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(v);
    out.resize(len, 0.0);
    Ok(out)
}

/// Eight equal-width bins per channel over [0, 256): value v lands in bin ⌊v/32⌋.
/// Counts are concatenated R, G, B.
pub fn color_histogram(image: &[f64]) -> Result<Vec<f64>> {
    if image.is_empty() || !image.len().is_multiple_of(3) {
        return Err(Error::Shape(format!("RGB image length {} is not a positive multiple of 3", image.len())));
    }
    let mut bins = vec![0.0; HISTOGRAM_BINS];
    for pixel in image.chunks_exact(3) {
        for (channel, &v) in pixel.iter().enumerate() {
            if !(0.0..=255.0).contains(&v) {
                return Err(Error::Validation(format!("pixel value {v} outside [0, 255]")));
            }
            let bin = ((v / 32.0) as usize).min(BINS_PER_CHANNEL - 1);
            bins[channel * BINS_PER_CHANNEL + bin] += 1.0;
        }
    }
    Ok(bins)
}

/// L1 distance between two histograms.
pub fn histogram_distance(h1: &[f64], h2: &[f64]) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(Error::Shape(format!("histogram lengths differ: {} vs {}", h1.len(), h2.len())));
    }
    Ok(h1.iter().zip(h2).map(|(a, b)| (a - b).abs()).sum())
}

/// Random triplets whose positive is the histogram-closer of two random candidates.
///
/// Each triplet draws three distinct samples; the first is the anchor. Ties go
/// to the lower sample id.
pub fn make_triplets_unlabeled(dataset: &Dataset, count: usize, seed: u64) -> Result<Vec<Triplet>> {
    if dataset.len() < 3 {
        return Err(Error::Validation(format!(
            "unlabeled triplets need at least 3 samples, dataset has {}",
            dataset.len()
        )));
    }
    let histograms: BTreeMap<usize, Vec<f64>> =
        dataset.ids().into_iter().map(|id| dataset.histogram(id).map(|h| (id, h))).collect::<Result<_>>()?;
    let ids = dataset.ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let picks = index::sample(&mut rng, ids.len(), 3);
            let (anchor, c1, c2) = (ids[picks.index(0)], ids[picks.index(1)], ids[picks.index(2)]);
            let ha = &histograms[&anchor];
            let d1 = histogram_distance(ha, &histograms[&c1])?;
            let d2 = histogram_distance(ha, &histograms[&c2])?;
            let (positive, negative) = if d1 < d2 || (d1 == d2 && c1 < c2) { (c1, c2) } else { (c2, c1) };
            Triplet::new(anchor, positive, negative)
        })
        .collect()
}

/// Random triplets with the anchor and positive from one class and the negative from another.
pub fn make_triplets_labeled(dataset: &Dataset, count: usize, seed: u64) -> Result<Vec<Triplet>> {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for s in dataset.samples() {
        let label = s.label.ok_or_else(|| Error::Validation(format!("sample {} has no label", s.id)))?;
        by_class.entry(label).or_default().push(s.id);
    }
    if by_class.len() < 2 {
        return Err(Error::Validation(format!("labeled triplets need at least 2 classes, found {}", by_class.len())));
    }
    let anchors: Vec<usize> = by_class.values().filter(|members| members.len() >= 2).flatten().copied().collect();
    if anchors.is_empty() {
        return Err(Error::Validation("labeled triplets need a class with at least 2 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let anchor = anchors[rng.gen_range(0..anchors.len())];
            let label = dataset.get(anchor)?.label.expect("checked above");
            let same = &by_class[&label];
            let positive = loop {
                let c = same[rng.gen_range(0..same.len())];
                if c != anchor {
                    break c;
                }
            };
            let others: Vec<usize> =
                by_class.iter().filter(|(&l, _)| l != label).flat_map(|(_, m)| m.iter().copied()).collect();
            let negative = others[rng.gen_range(0..others.len())];
            Triplet::new(anchor, positive, negative)
        })
        .collect()
}

/// Labeled datasets get class-based triplets, image datasets histogram-based ones.
pub fn make_triplets(dataset: &Dataset, count: usize, seed: u64) -> Result<Vec<Triplet>> {
    if dataset.is_labeled() {
        make_triplets_labeled(dataset, count, seed)
    } else {
        make_triplets_unlabeled(dataset, count, seed)
    }
}

/// Seeded random permutation; the first `round(train_fraction * N)` ids train.
pub fn split_dataset(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if dataset.len() < 2 {
        return Err(Error::Validation(format!("cannot split a dataset of {} samples", dataset.len())));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Validation(format!("train fraction {train_fraction} outside (0, 1]")));
    }
    let mut ids = dataset.ids();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * ids.len() as f64).round() as usize;
    let test = ids.split_off(n_train);
    Ok(DatasetSplit { train: ids, test })
}

/// Interweave two samples and pad to the circuit's full amplitude count.
pub fn prepare_pair_input(a: &Sample, b: &Sample, spec: &CircuitSpec) -> Result<Vec<f64>> {
    if a.features.len() != b.features.len() {
        return Err(Error::Shape(format!(
            "paired samples have {} and {} features",
            a.features.len(),
            b.features.len()
        )));
    }
    let needed = 2 * a.features.len();
    if needed > spec.dim() {
        return Err(Error::Shape(format!(
            "pair of {} features needs {needed} amplitudes, a {}-qubit circuit has {}",
            a.features.len(),
            spec.n_qubits(),
            spec.dim()
        )));
    }
    pad_to(&interweave(&a.features, &b.features)?, spec.dim())
}

/// A single sample padded to the circuit's amplitude count.
pub fn prepare_single_input(a: &Sample, spec: &CircuitSpec) -> Result<Vec<f64>> {
    pad_to(&a.features, spec.dim())
}

/// Qubits needed to hold `values` amplitudes.
pub fn qubits_for(values: usize) -> usize {
    values.max(2).next_power_of_two().trailing_zeros() as usize
}
