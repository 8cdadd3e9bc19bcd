//! Ranking, clustering and projection-variance evaluation of trained models.

pub mod gmm;

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gmm::{gmm_fit, GmmModel};

use crate::data::{color_histogram, histogram_distance, Dataset, Sample, Slot};
use crate::error::{Error, Result};
use crate::loss::{l1_distance, Objective};
use crate::training::{Network, NetworkMode, TrainedModel};

/// Largest cluster count for the exhaustive permutation search.
pub const MAX_PERMUTATION_CLASSES: usize = 8;

/// Fractional ranks starting at 1; tied values share their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of fractional ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("sequences have lengths {} and {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Validation("correlation needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Validation("correlation inputs must be finite".into()));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mean, b - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation undefined for a constant sequence".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// A trained network bound to its parameters, ready for inference.
#[derive(Debug, Clone)]
pub struct Embedder {
    network: Network,
    params: Vec<f64>,
    metric: Objective,
}

impl Embedder {
    pub fn new(model: &TrainedModel) -> Self {
        Self { network: model.network(), params: model.params.as_slice().to_vec(), metric: Objective::L1 }
    }

    pub fn with_metric(mut self, metric: Objective) -> Self {
        self.metric = metric;
        self
    }

    pub fn mode(&self) -> NetworkMode {
        self.network.mode()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Projection-space distance between an anchor and a candidate.
    ///
    /// Paired circuits embed both in one run with the anchor in the first
    /// slot; single-sample circuits embed each separately.
    pub fn distance(&self, anchor: &Sample, candidate: &Sample) -> Result<f64> {
        let (a, b) = match self.network.mode() {
            NetworkMode::Sliq => {
                let p = self.network.forward_sliq(&self.params, anchor, candidate, Slot::First)?;
                (p.anchor_point()?, p.partner_point()?)
            }
            NetworkMode::Baseline => (
                self.network.forward_baseline(&self.params, anchor)?.point()?,
                self.network.forward_baseline(&self.params, candidate)?.point()?,
            ),
        };
        Ok(self.metric.distance(&a, &b))
    }

    /// Coordinates used for clustering: all four of a paired run, or the two of a single run.
    pub fn embed(&self, sample: &Sample, partner: &Sample) -> Result<Vec<f64>> {
        Ok(match self.network.mode() {
            NetworkMode::Sliq => {
                self.network.forward_sliq(&self.params, sample, partner, Slot::First)?.coords().to_vec()
            }
            NetworkMode::Baseline => self.network.forward_baseline(&self.params, sample)?.coords().to_vec(),
        })
    }

    /// Cross-slot anchor discrepancy for the pair `(a, b)`.
    pub fn projection_variance(&self, a: &Sample, b: &Sample) -> Result<f64> {
        if self.network.mode() != NetworkMode::Sliq {
            return Err(Error::Validation("projection variance needs a paired circuit".into()));
        }
        let first = self.network.forward_sliq(&self.params, a, b, Slot::First)?;
        let second = self.network.forward_sliq(&self.params, a, b, Slot::Second)?;
        Ok(l1_distance(&first.anchor_point()?, &second.anchor_point()?))
    }
}

/// L1 projection distance between `anchor` and `candidate` under `model`.
pub fn model_distance(model: &TrainedModel, anchor: &Sample, candidate: &Sample) -> Result<f64> {
    Embedder::new(model).distance(anchor, candidate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDistance {
    pub candidate_id: usize,
    pub ground_truth: f64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub anchor_id: usize,
    pub spearman_rho: f64,
    pub candidates: Vec<CandidateDistance>,
}

/// Spearman correlation between color-histogram distances and model distances.
pub fn rank_against_ground_truth(embedder: &Embedder, anchor: &Sample, candidates: &[Sample]) -> Result<RankingResult> {
    if candidates.len() < 2 {
        return Err(Error::Validation(format!("ranking needs at least 2 candidates, got {}", candidates.len())));
    }
    let ha = color_histogram(&anchor.features)?;
    let pairs = candidates
        .iter()
        .map(|c| {
            Ok(CandidateDistance {
                candidate_id: c.id,
                ground_truth: histogram_distance(&ha, &color_histogram(&c.features)?)?,
                model: embedder.distance(anchor, c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gt: Vec<f64> = pairs.iter().map(|p| p.ground_truth).collect();
    let md: Vec<f64> = pairs.iter().map(|p| p.model).collect();
    Ok(RankingResult { anchor_id: anchor.id, spearman_rho: spearman(&gt, &md)?, candidates: pairs })
}

/// Anchors and candidate lists drawn without replacement from `dataset`.
///
/// Each anchor gets its own candidates, none equal to the anchor.
pub fn sample_ranking_tasks(
    dataset: &Dataset,
    n_anchors: usize,
    n_candidates: usize,
    seed: u64,
) -> Result<Vec<(usize, Vec<usize>)>> {
    if n_candidates < 2 {
        return Err(Error::Validation(format!("ranking needs at least 2 candidates, got {n_candidates}")));
    }
    if n_anchors == 0 {
        return Err(Error::Validation("need at least one anchor".into()));
    }
    if n_anchors > dataset.len() || n_candidates + 1 > dataset.len() {
        return Err(Error::Validation(format!(
            "{n_anchors} anchors with {n_candidates} candidates each do not fit a dataset of {}",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = dataset.ids();
    let anchors: Vec<usize> = ids.choose_multiple(&mut rng, n_anchors).copied().collect();
    Ok(anchors
        .into_iter()
        .map(|a| {
            let others: Vec<usize> = ids.iter().copied().filter(|&i| i != a).collect();
            let picks = others.choose_multiple(&mut rng, n_candidates).copied().collect();
            (a, picks)
        })
        .collect())
}

/// `n_pairs` random pairs of distinct samples, drawn with replacement across pairs.
pub fn sample_pairs(dataset: &Dataset, n_pairs: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n_pairs == 0 {
        return Err(Error::Validation("need at least one pair".into()));
    }
    if dataset.len() < 2 {
        return Err(Error::Validation("pairs need at least 2 samples".into()));
    }
    let ids = dataset.ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_pairs)
        .map(|_| {
            let picks = rand::seq::index::sample(&mut rng, ids.len(), 2);
            (ids[picks.index(0)], ids[picks.index(1)])
        })
        .collect())
}

/// How a sample is paired when a paired circuit embeds it for clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// A different random sample of the same class, or the sample itself if it is alone.
    Positive,
    /// The sample with itself.
    SelfPair,
}

/// Partner id for every sample in `ids`, chosen among `ids`.
pub fn classification_partners(dataset: &Dataset, ids: &[usize], pairing: Pairing, seed: u64) -> Result<Vec<usize>> {
    if pairing == Pairing::SelfPair {
        return Ok(ids.to_vec());
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &id in ids {
        let label = dataset.get(id)?.label.ok_or_else(|| Error::Validation(format!("sample {id} has no label")))?;
        by_class.entry(label).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.iter()
        .map(|&id| {
            let label = dataset.get(id)?.label.expect("checked above");
            let others: Vec<usize> = by_class[&label].iter().copied().filter(|&o| o != id).collect();
            Ok(others.choose(&mut rng).copied().unwrap_or(id))
        })
        .collect()
}

/// Percentile of ascending `sorted` values with linear interpolation between ranks.
pub fn percentile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Validation("percentile of an empty list".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Validation(format!("percentile {p} outside [0, 100]")));
    }
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Best agreement between cluster ids and labels over all one-to-one relabelings.
pub fn cluster_accuracy<A: Ord + Copy, L: Ord + Copy>(assignments: &[A], labels: &[L]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(Error::Shape(format!("{} assignments for {} labels", assignments.len(), labels.len())));
    }
    if assignments.is_empty() {
        return Err(Error::Validation("no assignments to score".into()));
    }
    let cluster_ids: BTreeMap<A, usize> = assignments.iter().copied().sorted().dedup().zip(0..).collect();
    let label_ids: BTreeMap<L, usize> = labels.iter().copied().sorted().dedup().zip(0..).collect();
    let k = cluster_ids.len().max(label_ids.len());
    if k > MAX_PERMUTATION_CLASSES {
        return Err(Error::Resource(format!(
            "{k} classes exceed the permutation search limit of {MAX_PERMUTATION_CLASSES}"
        )));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (a, l) in assignments.iter().zip(labels) {
        counts[cluster_ids[a]][label_ids[l]] += 1;
    }
    let best = (0..k)
        .permutations(k)
        .map(|perm| perm.iter().enumerate().map(|(c, &l)| counts[c][l]).sum::<usize>())
        .max()
        .unwrap_or(0);
    Ok(best as f64 / assignments.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionVariance {
    /// Ascending.
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Sorted cross-slot anchor discrepancies over `pairs`, with their mean.
pub fn projection_variance_cdf(embedder: &Embedder, pairs: &[(&Sample, &Sample)]) -> Result<ProjectionVariance> {
    if pairs.is_empty() {
        return Err(Error::Validation("no pairs to evaluate".into()));
    }
    let mut values = pairs.iter().map(|(a, b)| embedder.projection_variance(a, b)).collect::<Result<Vec<_>>>()?;
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(ProjectionVariance { values, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_rho(xs: &[f64], ys: &[f64]) -> f64 {
        // distinct values only: rank by counting smaller elements
        let rank = |v: &[f64], x: f64| v.iter().filter(|&&y| y < x).count() as f64 + 1.0;
        let n = xs.len() as f64;
        let d2: f64 = xs.iter().zip(ys).map(|(&x, &y)| (rank(xs, x) - rank(ys, y)).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let xs = [1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 2.0];
        assert!((spearman(&xs, &ys).unwrap() - brute_force_rho(&xs, &ys)).abs() < 1e-12);
        assert!((spearman(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    proptest! {
        #[test]
        fn spearman_matches_rank_formula(xs in proptest::collection::hash_set(-1000i32..1000, 3..20)) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (x * 0.37).sin()).collect();
            prop_assume!(ranks(&ys).iter().sum::<f64>() > 0.0);
            let rho = spearman(&xs, &ys).unwrap();
            prop_assert!((rho - brute_force_rho(&xs, &ys)).abs() < 1e-9);
        }

        #[test]
        fn spearman_monotone_invariance(xs in proptest::collection::vec(-5.0f64..5.0, 3..30),
                                        ys in proptest::collection::vec(-5.0f64..5.0, 30)) {
            let ys = &ys[..xs.len()];
            let rho = spearman(&xs, ys);
            let tx: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
            let ty: Vec<f64> = ys.iter().map(|y| 3.0 * y.powi(3) - 1.0).collect();
            match (rho, spearman(&tx, &ty)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12 && (-1.0..=1.0).contains(&a)),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn accuracy_relabeling_invariance(labels in proptest::collection::vec(0u32..4, 1..40), shift in 0u32..4) {
            let relabeled: Vec<u32> = labels.iter().map(|l| (l + shift) % 4 + 10).collect();
            prop_assert_eq!(cluster_accuracy(&relabeled, &labels).unwrap(), 1.0);
        }
    }

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0).unwrap(), 3.0);
        assert_eq!(percentile(&v, 25.0).unwrap(), 2.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 5.0);
        assert_eq!(percentile(&[1.0, 2.0], 50.0).unwrap(), 1.5);
        assert!(percentile(&[], 50.0).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let labels = [0, 0, 1, 1, 2, 2];
        assert_eq!(cluster_accuracy(&labels, &labels).unwrap(), 1.0);
        assert_eq!(cluster_accuracy(&[2, 2, 0, 0, 1, 1], &labels).unwrap(), 1.0);
        // independent binary assignments on balanced data
        let acc = cluster_accuracy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
        assert!(acc >= 0.5);
        assert_eq!(cluster_accuracy(&[0, 0, 0], &[5, 5, 5]).unwrap(), 1.0);
        let many: Vec<u32> = (0..9).collect();
        assert!(matches!(cluster_accuracy(&many, &many), Err(Error::Resource(_))));
        assert!(cluster_accuracy(&[0], &[0, 1]).is_err());
    }
}
