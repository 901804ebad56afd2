use std::collections::VecDeque;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::graph::{accumulate_joint_feature, loss, score, Labeling, ParameterVector};
use crate::inference::Quality;
use crate::qp::JointConstraint;

/// The last `capacity` oracle outputs for one sample, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCache {
    capacity: usize,
    entries: VecDeque<Labeling>,
}

impl SampleCache {
    pub fn new(capacity: usize) -> Self {
        SampleCache {
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    /// Records `labeling` as the most recent entry; an equal older entry is
    /// moved to the front instead of stored twice.
    pub fn push(&mut self, labeling: Labeling) {
        if let Some(pos) = self.entries.iter().position(|e| *e == labeling) {
            self.entries.remove(pos);
        }
        self.entries.push_front(labeling);
        self.entries.truncate(self.capacity);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Labeling> {
        self.entries.iter()
    }
}

/// Cached labeling with the largest Δ − ⟨θ, ψ(y) − ψ(ŷ)⟩, most recent entry
/// on ties, together with that violation.
pub fn best_cached<'a>(
    cache: &'a SampleCache,
    sample: &crate::dataset::Sample,
    params: &ParameterVector,
) -> Result<Option<(&'a Labeling, f64)>> {
    let truth_score = score(&sample.instance, &sample.truth, params)?;
    let mut best: Option<(&Labeling, f64)> = None;
    for y in cache.iter() {
        let v = loss(&sample.truth, y, &sample.loss)? + score(&sample.instance, y, params)? - truth_score;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((y, v));
        }
    }
    Ok(best)
}

/// Joint constraint assembled from the caches, or `None` when every cache is
/// empty. Samples with an empty cache contribute their ground truth (zero
/// loss, zero feature difference).
pub fn cache_lookup(
    params: &ParameterVector,
    dataset: &Dataset,
    caches: &[SampleCache],
) -> Result<Option<(JointConstraint, f64)>> {
    if caches.iter().all(SampleCache::is_empty) {
        return Ok(None);
    }
    let layout = dataset.layout();
    let mut delta_psi = vec![0.0; layout.dim()];
    let mut loss_sum = 0.0;
    for (sample, cache) in dataset.samples().iter().zip(caches) {
        if let Some((y, _)) = best_cached(cache, sample, params)? {
            accumulate_joint_feature(layout, &sample.instance, &sample.truth, 1.0, &mut delta_psi)?;
            accumulate_joint_feature(layout, &sample.instance, y, -1.0, &mut delta_psi)?;
            loss_sum += loss(&sample.truth, y, &sample.loss)?;
        }
    }
    let constraint = JointConstraint::new(delta_psi, loss_sum, Quality::Cached);
    let xi_prime = constraint.violation(params.as_slice());
    Ok(Some((constraint, xi_prime)))
}
