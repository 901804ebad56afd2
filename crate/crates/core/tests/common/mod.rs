#![allow(dead_code)]

use certcrf::graph::{FactorGraphInstance, FeatureLayout, ParameterVector};
use certcrf::qp::JointConstraint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct RandomModel {
    pub instance: FactorGraphInstance,
    pub params: ParameterVector,
    pub acyclic: bool,
}

/// Random graph with Gaussian features and parameters. Even seeds are trees
/// (or forests), odd seeds get extra edges.
pub fn random_model(seed: u64, max_nodes: usize, max_labels: usize) -> RandomModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let l = rng.random_range(2..=max_labels);
    let (du, dp) = (2, 2);
    let acyclic = seed.is_multiple_of(2);
    let mut edges = Vec::new();
    for v in 1..n {
        if rng.random_bool(0.85) {
            edges.push((rng.random_range(0..v), v));
        }
    }
    if !acyclic {
        for i in 0..n {
            for j in i + 1..n {
                if !edges.contains(&(i, j)) && rng.random_bool(0.3) {
                    edges.push((i, j));
                }
            }
        }
    }
    let mut gauss = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
    let unary = (0..n).map(|_| gauss(du)).collect();
    let edge_features = edges.iter().map(|_| gauss(dp)).collect();
    let layout = FeatureLayout::new(l, du, dp, false).unwrap();
    let params = ParameterVector::from_vec(layout, gauss(layout.dim())).unwrap();
    let instance = FactorGraphInstance::new(l, du, dp, unary, edges, edge_features).unwrap();
    let acyclic = instance.is_forest();
    RandomModel {
        instance,
        params,
        acyclic,
    }
}

/// Random working set of up to `max_k` constraints in up to `max_d`
/// dimensions, with a C drawn from a small menu.
pub fn random_working_set(seed: u64, max_k: usize, max_d: usize) -> (Vec<JointConstraint>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=max_k);
    let d = rng.random_range(1..=max_d);
    let c = [0.5, 1.0, 2.0, 10.0][rng.random_range(0..4)];
    let ws = (0..k)
        .map(|_| {
            let a: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b = rng.random_range(0.0..2.0);
            JointConstraint::new(a, b, certcrf::inference::Quality::ExactCertified)
        })
        .collect();
    (ws, c)
}

/// Primal ½‖θ‖² + C·max(0, maxᵢ bᵢ − ⟨aᵢ, θ⟩).
pub fn qp_primal(ws: &[JointConstraint], c: f64, theta: &[f64]) -> f64 {
    let xi = ws
        .iter()
        .map(|w| w.loss_sum - w.delta_psi.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>())
        .fold(0.0, f64::max);
    0.5 * theta.iter().map(|t| t * t).sum::<f64>() + c * xi
}

/// Minimises the primal by repeated grid refinement around the best point.
/// The objective is convex, so shrinking the box around the incumbent keeps
/// the optimum inside.
pub fn grid_search_qp(ws: &[JointConstraint], c: f64) -> f64 {
    let d = ws[0].delta_psi.len();
    let radius0 = c * ws
        .iter()
        .map(|w| w.delta_psi.iter().map(|a| a * a).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        + 1e-9;
    let steps = 16usize;
    let mut centre = vec![0.0; d];
    let mut radius = radius0;
    let mut best = qp_primal(ws, c, &centre);
    for _ in 0..100 {
        let mut best_point = centre.clone();
        let total = (2 * steps + 1).pow(d as u32);
        let mut point = vec![0.0; d];
        for idx in 0..total {
            let mut rest = idx;
            for (k, p) in point.iter_mut().enumerate() {
                let s = rest % (2 * steps + 1);
                rest /= 2 * steps + 1;
                *p = centre[k] + radius * (s as f64 - steps as f64) / steps as f64;
            }
            let v = qp_primal(ws, c, &point);
            if v < best {
                best = v;
                best_point.clone_from(&point);
            }
        }
        centre = best_point;
        radius *= 0.75;
        if radius < 1e-9 {
            break;
        }
    }
    best
}
