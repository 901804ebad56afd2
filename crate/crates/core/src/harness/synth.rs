//! Synthetic 4-connected grid problems.
//!
//! Ground truth is a Voronoi partition of the grid into a few random blocks,
//! each with a random label. Node features are the one-hot truth plus
//! Gaussian noise; edge features are a bias and the mean absolute difference
//! of the two endpoint feature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::graph::{FactorGraphInstance, FeatureLayout, Labeling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub grid_w: usize,
    pub grid_h: usize,
    pub num_labels: usize,
    pub noise_sigma: f64,
    pub n_instances: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(grid_w: usize, grid_h: usize, num_labels: usize, noise_sigma: f64, n_instances: usize, seed: u64) -> Self {
        SyntheticSpec {
            grid_w,
            grid_h,
            num_labels,
            noise_sigma,
            n_instances,
            seed,
        }
    }
}

pub const PAIRWISE_DIM: usize = 2;

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.grid_w == 0 || spec.grid_h == 0 {
        return Err(Error::InvalidConfig("grid dimensions must be at least 1".into()));
    }
    if spec.num_labels < 2 {
        return Err(Error::InvalidConfig("synthetic data needs at least 2 labels".into()));
    }
    if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
        return Err(Error::InvalidConfig("noise sigma must be finite and nonnegative".into()));
    }
    let l = spec.num_labels;
    let layout = FeatureLayout::new(l, l, PAIRWISE_DIM, true)?;
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (w, h) = (spec.grid_w, spec.grid_h);
    let n = w * h;
    let mut edges = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = r * w + c;
            if c + 1 < w {
                edges.push((v, v + 1));
            }
            if r + 1 < h {
                edges.push((v, v + w));
            }
        }
    }

    let mut samples = Vec::with_capacity(spec.n_instances);
    for _ in 0..spec.n_instances {
        let blocks = 2.max(n.div_ceil(6)).min(n);
        let centres: Vec<(f64, f64, usize)> = (0..blocks)
            .map(|_| {
                (
                    rng.random_range(0.0..w as f64),
                    rng.random_range(0.0..h as f64),
                    rng.random_range(0..l),
                )
            })
            .collect();
        let truth: Vec<usize> = (0..n)
            .map(|v| {
                let (x, y) = ((v % w) as f64 + 0.5, (v / w) as f64 + 0.5);
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (k, &(cx, cy, _)) in centres.iter().enumerate() {
                    let d = (x - cx).powi(2) + (y - cy).powi(2);
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                centres[best].2
            })
            .collect();

        let unary: Vec<Vec<f64>> = truth
            .iter()
            .map(|&t| {
                (0..l)
                    .map(|k| if k == t { 1.0 } else { 0.0 } + noise.sample(&mut rng))
                    .collect()
            })
            .collect();
        let edge_features: Vec<Vec<f64>> = edges
            .iter()
            .map(|&(i, j)| {
                let contrast = unary[i]
                    .iter()
                    .zip(&unary[j])
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / l as f64;
                vec![1.0, contrast]
            })
            .collect();

        let instance = FactorGraphInstance::new(l, l, PAIRWISE_DIM, unary, edges.clone(), edge_features)?;
        samples.push(Sample::new(instance, Labeling::new(truth), None)?);
    }
    Dataset::new(layout, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset_file::DatasetFile;

    #[test]
    fn grid_structure() {
        let ds = generate_synthetic(&SyntheticSpec::new(4, 3, 3, 1.0, 2, 0)).unwrap();
        let inst = &ds.samples()[0].instance;
        assert_eq!(inst.node_count(), 12);
        // 3 rows * 3 horizontal + 2 * 4 vertical
        assert_eq!(inst.edges().len(), 17);
        assert_eq!(ds.layout().dim(), 3 * 3 + 6 * 2);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = DatasetFile::from_dataset(&generate_synthetic(&SyntheticSpec::new(3, 3, 3, 1.0, 4, 9)).unwrap());
        let b = DatasetFile::from_dataset(&generate_synthetic(&SyntheticSpec::new(3, 3, 3, 1.0, 4, 9)).unwrap());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = DatasetFile::from_dataset(&generate_synthetic(&SyntheticSpec::new(3, 3, 3, 1.0, 4, 10)).unwrap());
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn noiseless_features_are_one_hot() {
        let ds = generate_synthetic(&SyntheticSpec::new(3, 3, 3, 0.0, 3, 1)).unwrap();
        for s in ds.samples() {
            for n in 0..s.instance.node_count() {
                let x = s.instance.unary(n);
                let argmax = (0..3).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
                assert_eq!(argmax, s.truth[n]);
                assert_eq!(x.iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_synthetic(&SyntheticSpec::new(0, 3, 3, 1.0, 1, 0)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(3, 3, 1, 1.0, 1, 0)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(3, 3, 3, -1.0, 1, 0)).is_err());
    }
}
