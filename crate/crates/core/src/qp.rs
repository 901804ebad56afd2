//! The restricted one-slack QP over a working set of joint constraints.
//!
//! Solved in the dual
//!
//! ```text
//! max  Σ_j α_j ℓ_j − ½ ‖Σ_j α_j δψ_j‖²   s.t.  α ≥ 0,  Σ_j α_j ≤ C
//! ```
//!
//! with a zero constraint standing in for the unused budget, so the sum
//! constraint becomes an equality and pairwise updates preserve it. The primal
//! is recovered as θ = Σ α_j δψ_j and ξ = max(0, max_j ℓ_j − ⟨θ, δψ_j⟩).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::dot;
use crate::inference::Quality;

/// Constraints closer than this in every coordinate count as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-10;

const MAX_STEPS: usize = 10_000_000;
const REFRESH_EVERY: usize = 10_000;
const CURVATURE_FLOOR: f64 = 1e-12;
const CG_EVERY_PER_CONSTRAINT: usize = 4;

/// One aggregated cutting plane: ⟨θ, delta_psi⟩ ≥ loss_sum − ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConstraint {
    /// Σ_i ψ(x_i, y_i) − ψ(x_i, ŷ_i).
    pub delta_psi: Vec<f64>,
    /// Σ_i Δ(y_i, ŷ_i).
    pub loss_sum: f64,
    pub origin: Quality,
    pub last_active_iteration: usize,
}

impl JointConstraint {
    pub fn new(delta_psi: Vec<f64>, loss_sum: f64, origin: Quality) -> Self {
        JointConstraint {
            delta_psi,
            loss_sum,
            origin,
            last_active_iteration: 0,
        }
    }

    /// loss_sum − ⟨θ, delta_psi⟩.
    pub fn violation(&self, theta: &[f64]) -> f64 {
        self.loss_sum - dot(theta, &self.delta_psi)
    }

    fn duplicates(&self, other: &JointConstraint) -> bool {
        (self.loss_sum - other.loss_sum).abs() <= DUPLICATE_TOL
            && self
                .delta_psi
                .iter()
                .zip(&other.delta_psi)
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub theta: Vec<f64>,
    pub xi: f64,
    pub alphas: Vec<f64>,
    /// Primal value ½‖θ‖² + Cξ.
    pub objective: f64,
    pub dual_objective: f64,
    pub kkt_residual: f64,
}

/// Solves the QP on `working_set` from scratch.
pub fn solve_restricted_qp(working_set: &[JointConstraint], c: f64, tol: f64) -> Result<QpSolution> {
    let dim = working_set.first().map_or(0, |w| w.delta_psi.len());
    let mut qp = RestrictedQp::new(dim);
    for w in working_set {
        qp.insert(w.clone())?;
    }
    qp.solve(c, tol)
}

/// Drops constraints that have been inactive for at least `patience` solves.
pub fn prune_inactive(working_set: Vec<JointConstraint>, current_iteration: usize, patience: usize) -> Vec<JointConstraint> {
    let patience = patience.max(1);
    working_set
        .into_iter()
        .filter(|w| current_iteration.saturating_sub(w.last_active_iteration) < patience)
        .collect()
}

/// Working set with cached Gram matrix and warm-started multipliers.
#[derive(Debug, Clone)]
pub struct RestrictedQp {
    dim: usize,
    constraints: Vec<JointConstraint>,
    gram: Vec<Vec<f64>>,
    alphas: Vec<f64>,
    solves: usize,
}

impl RestrictedQp {
    pub fn new(dim: usize) -> Self {
        RestrictedQp {
            dim,
            constraints: Vec::new(),
            gram: Vec::new(),
            alphas: Vec::new(),
            solves: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[JointConstraint] {
        &self.constraints
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Number of completed solves.
    pub fn solves(&self) -> usize {
        self.solves
    }

    /// Adds a constraint with zero multiplier. Returns `false` (and leaves the
    /// set unchanged) when an equal constraint is already present.
    pub fn insert(&mut self, mut constraint: JointConstraint) -> Result<bool> {
        if constraint.delta_psi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "constraint",
                expected: self.dim,
                found: constraint.delta_psi.len(),
            });
        }
        if !constraint.loss_sum.is_finite() || constraint.delta_psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("joint constraint"));
        }
        if self.constraints.iter().any(|w| w.duplicates(&constraint)) {
            return Ok(false);
        }
        constraint.last_active_iteration = self.solves;
        let row: Vec<f64> = self
            .constraints
            .iter()
            .map(|w| dot(&w.delta_psi, &constraint.delta_psi))
            .chain(std::iter::once(dot(&constraint.delta_psi, &constraint.delta_psi)))
            .collect();
        for (g, &v) in self.gram.iter_mut().zip(&row) {
            g.push(v);
        }
        self.gram.push(row);
        self.constraints.push(constraint);
        self.alphas.push(0.0);
        Ok(true)
    }

    /// Removes constraints inactive for at least `patience` solves; returns
    /// how many were dropped.
    pub fn prune(&mut self, patience: usize) -> usize {
        let patience = patience.max(1);
        let keep: Vec<bool> = self
            .constraints
            .iter()
            .map(|w| self.solves.saturating_sub(w.last_active_iteration) < patience)
            .collect();
        let removed = keep.iter().filter(|k| !**k).count();
        if removed == 0 {
            return 0;
        }
        let retain = |v: &mut Vec<f64>| {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        };
        retain(&mut self.alphas);
        for row in self.gram.iter_mut() {
            retain(row);
        }
        let mut it = keep.iter();
        self.gram.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.constraints.retain(|_| *it.next().unwrap());
        removed
    }

    /// Pairwise coordinate ascent from the current multipliers until the KKT
    /// residual is at most `tol` or the duality gap is at most
    /// `tol · max(1, |dual|)`.
    pub fn solve(&mut self, c: f64, tol: f64) -> Result<QpSolution> {
        if !(c > 0.0) || !c.is_finite() || !(tol > 0.0) {
            return Err(Error::InvalidConfig("qp needs C > 0 and tol > 0".into()));
        }
        let k = self.constraints.len();
        // Rescale if C changed between solves.
        let total: f64 = self.alphas.iter().sum();
        if total > c {
            let s = c / total;
            self.alphas.iter_mut().for_each(|a| *a *= s);
        }
        let mut slack = (c - self.alphas.iter().sum::<f64>()).max(0.0);

        let mut grad = self.gradient();
        let mut steps = 0;
        let mut residual;
        loop {
            // index k stands for the budget slack: gradient 0, no curvature
            let (mut up, mut up_g) = (k, 0.0);
            for (j, &g) in grad.iter().enumerate() {
                if g > up_g {
                    up = j;
                    up_g = g;
                }
            }
            // first-order violation decides convergence; the partner is then
            // picked by the second-order gain b² / a
            let mut down_g = f64::INFINITY;
            let mut down = usize::MAX;
            let mut best_gain = 0.0;
            let g_uu = if up < k { self.gram[up][up] } else { 0.0 };
            let mut consider = |j: usize, g: f64, g_jj: f64, g_uj: f64| {
                down_g = down_g.min(g);
                let b = up_g - g;
                if b > 0.0 {
                    let a = (g_uu + g_jj - 2.0 * g_uj).max(CURVATURE_FLOOR);
                    let gain = b * b / a;
                    if gain > best_gain {
                        best_gain = gain;
                        down = j;
                    }
                }
            };
            if slack > 0.0 {
                consider(k, 0.0, 0.0, 0.0);
            }
            for (j, &g) in grad.iter().enumerate() {
                if self.alphas[j] > 0.0 {
                    let g_uj = if up < k { self.gram[up][j] } else { 0.0 };
                    consider(j, g, self.gram[j][j], g_uj);
                }
            }
            residual = if down_g.is_finite() { (up_g - down_g).max(0.0) } else { 0.0 };
            // duality gap from the gradient alone: grad = b − Aθ, ξ = max(0, max grad)
            let weighted: f64 = grad.iter().zip(&self.alphas).map(|(g, a)| g * a).sum();
            let linear: f64 = self.constraints.iter().zip(&self.alphas).map(|(w, a)| a * w.loss_sum).sum();
            let dual = 0.5 * (linear + weighted);
            let gap = c * up_g.max(0.0) - weighted;
            if residual <= tol || gap <= tol * dual.abs().max(1.0) || down == usize::MAX {
                // confirm against a freshly computed gradient
                let fresh = self.gradient();
                let drift = fresh
                    .iter()
                    .zip(&grad)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                grad = fresh;
                if drift <= 0.5 * tol {
                    break;
                }
                continue;
            }
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Qp(format!(
                    "no convergence after {MAX_STEPS} steps (residual {residual:e})"
                )));
            }
            if steps % REFRESH_EVERY == 0 {
                grad = self.gradient();
                continue;
            }
            if steps % (CG_EVERY_PER_CONSTRAINT * k + 16) == 0 {
                self.face_cg(&mut grad, &mut slack, c, tol);
                continue;
            }

            let g_dd = if down < k { self.gram[down][down] } else { 0.0 };
            let g_ud = if up < k && down < k { self.gram[up][down] } else { 0.0 };
            let curvature = g_uu + g_dd - 2.0 * g_ud;
            let available = if down < k { self.alphas[down] } else { slack };
            let down_g = if down < k { grad[down] } else { 0.0 };
            let t = if curvature > 1e-15 {
                ((up_g - down_g) / curvature).min(available)
            } else {
                available
            };
            if t <= 0.0 {
                break;
            }
            if up < k {
                self.alphas[up] += t;
            } else {
                slack += t;
            }
            if down < k {
                if t >= self.alphas[down] {
                    self.alphas[down] = 0.0;
                } else {
                    self.alphas[down] -= t;
                }
            } else if t >= slack {
                slack = 0.0;
            } else {
                slack -= t;
            }
            for (j, g) in grad.iter_mut().enumerate() {
                let gu = if up < k { self.gram[j][up] } else { 0.0 };
                let gd = if down < k { self.gram[j][down] } else { 0.0 };
                *g -= t * (gu - gd);
            }
        }

        self.solves += 1;
        for (w, &a) in self.constraints.iter_mut().zip(&self.alphas) {
            if a > 0.0 {
                w.last_active_iteration = self.solves;
            }
        }

        let mut theta = vec![0.0; self.dim];
        for (w, &a) in self.constraints.iter().zip(&self.alphas) {
            if a > 0.0 {
                for (t, d) in theta.iter_mut().zip(&w.delta_psi) {
                    *t += a * d;
                }
            }
        }
        let xi = self
            .constraints
            .iter()
            .map(|w| w.violation(&theta))
            .fold(0.0, f64::max);
        let norm_sq = dot(&theta, &theta);
        let linear: f64 = self
            .constraints
            .iter()
            .zip(&self.alphas)
            .map(|(w, a)| a * w.loss_sum)
            .sum();
        Ok(QpSolution {
            objective: 0.5 * norm_sq + c * xi,
            dual_objective: linear - 0.5 * norm_sq,
            theta,
            xi,
            alphas: self.alphas.clone(),
            kkt_residual: residual,
        })
    }

    /// Conjugate gradient ascent on the face where the currently nonzero
    /// multipliers (and the slack, if positive) are free and sum to C.
    /// Stops at the first bound it hits. Pairwise steps alone crawl when the
    /// Gram matrix is singular on that face.
    fn face_cg(&mut self, grad: &mut [f64], slack: &mut f64, c: f64, tol: f64) {
        let k = self.constraints.len();
        let mut free: Vec<usize> = (0..k).filter(|&j| self.alphas[j] > 0.0).collect();
        let with_slack = *slack > 0.0;
        if with_slack {
            free.push(k);
        }
        if free.len() < 2 {
            return;
        }
        let n = free.len() as f64;
        let g_at = |grad: &[f64], j: usize| if j < k { grad[j] } else { 0.0 };
        let project = |grad: &[f64]| -> Vec<f64> {
            let mean = free.iter().map(|&j| g_at(grad, j)).sum::<f64>() / n;
            free.iter().map(|&j| g_at(grad, j) - mean).collect()
        };
        let mut r = project(grad);
        let mut p = r.clone();
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let scale = free.iter().map(|&j| g_at(grad, j).abs()).fold(1.0, f64::max);
        for _ in 0..free.len() {
            if rr.sqrt() <= (0.1 * tol).max(1e-13 * scale) {
                break;
            }
            // keep Σp = 0 exactly, or a long step turns rounding into mass
            let mean = p.iter().sum::<f64>() / n;
            p.iter_mut().for_each(|v| *v -= mean);
            // G p over all constraints (the slack has no Gram row)
            let gp: Vec<f64> = (0..k)
                .map(|i| {
                    free.iter()
                        .zip(&p)
                        .filter(|&(&j, _)| j < k)
                        .map(|(&j, &pj)| self.gram[i][j] * pj)
                        .sum()
                })
                .collect();
            let curvature: f64 = free.iter().zip(&p).filter(|&(&j, _)| j < k).map(|(&j, &pj)| pj * gp[j]).sum();
            let ascent: f64 = free.iter().zip(&p).map(|(&j, &pj)| pj * g_at(grad, j)).sum();
            if ascent <= 0.0 {
                break;
            }
            let mut limit = f64::INFINITY;
            let mut blocking = None;
            for (idx, (&j, &pj)) in free.iter().zip(&p).enumerate() {
                if pj < 0.0 {
                    let value = if j < k { self.alphas[j] } else { *slack };
                    let t = value / -pj;
                    if t < limit {
                        limit = t;
                        blocking = Some(idx);
                    }
                }
            }
            let unconstrained = if curvature > 1e-300 { ascent / curvature } else { f64::INFINITY };
            let t = unconstrained.min(limit);
            if !t.is_finite() {
                break;
            }
            for (idx, (&j, &pj)) in free.iter().zip(&p).enumerate() {
                let hit = t >= limit && blocking == Some(idx);
                let slot = if j < k { &mut self.alphas[j] } else { &mut *slack };
                *slot = if hit { 0.0 } else { (*slot + t * pj).max(0.0) };
            }
            for (g, d) in grad.iter_mut().zip(&gp) {
                *g -= t * d;
            }
            if t >= limit {
                break;
            }
            r = project(grad);
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
        }
        // keep Σα + slack = C exact
        let total: f64 = self.alphas.iter().sum::<f64>() + *slack;
        if total > 0.0 && with_slack {
            *slack = (*slack + (c - total)).max(0.0);
        }
    }

    fn gradient(&self) -> Vec<f64> {
        self.constraints
            .iter()
            .zip(&self.gram)
            .map(|(w, row)| w.loss_sum - row.iter().zip(&self.alphas).map(|(g, a)| g * a).sum::<f64>())
            .collect()
    }
}
