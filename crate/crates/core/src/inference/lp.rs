//! Local-polytope LP relaxation by alternating-directions dual decomposition.
//!
//! The model is split into one factor per node (carrying the unary table) and
//! one factor per edge (carrying the pair table). Each factor keeps a local
//! distribution over its own configurations; consensus node marginals tie the
//! copies together through Lagrange multipliers. An iteration solves every
//! factor's quadratic subproblem, averages into the consensus, and takes a
//! multiplier step with penalty `penalty`.
//!
//! For any multipliers the Lagrangian dual is an upper bound on the LP, hence
//! on the integral maximum. The reported objective is the smallest dual value
//! seen, so it stays valid when the iteration limit is hit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FactorGraphInstance, ParameterVector, Potentials};

/// Distance from {0, 1} below which a marginal counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpConfig {
    pub max_iters: usize,
    /// Stopping threshold on primal and dual residuals.
    pub tol: f64,
    pub penalty: f64,
    /// Iteration cap for the projected-gradient edge subproblem.
    pub inner_iters: usize,
    /// Evaluate the dual bound every this many iterations.
    pub bound_every: usize,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            max_iters: 20_000,
            tol: 1e-6,
            penalty: 1.0,
            inner_iters: 200,
            bound_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    num_labels: usize,
    /// `n * L`, row per node.
    pub node_marginals: Vec<f64>,
    /// `m * L * L`, row-major table per edge.
    pub edge_marginals: Vec<f64>,
    /// Upper bound on the integral maximum (best dual value).
    pub objective: f64,
    /// Objective of the returned marginals.
    pub primal_objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub fractional: bool,
    /// Set when the solve stopped early because the bound fell below a cutoff.
    pub cut_off: bool,
}

impl RelaxedSolution {
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn node_marginal(&self, node: usize) -> &[f64] {
        &self.node_marginals[node * self.num_labels..(node + 1) * self.num_labels]
    }

    pub fn edge_marginal(&self, edge: usize) -> &[f64] {
        let ll = self.num_labels * self.num_labels;
        &self.edge_marginals[edge * ll..(edge + 1) * ll]
    }

    /// Largest deviation between an edge marginal's row/column sums and the
    /// incident node marginals.
    pub fn consistency_violation(&self, edges: &[(usize, usize)]) -> f64 {
        let l = self.num_labels;
        let mut worst: f64 = 0.0;
        for (e, &(i, j)) in edges.iter().enumerate() {
            let mu = self.edge_marginal(e);
            for a in 0..l {
                let row: f64 = (0..l).map(|b| mu[a * l + b]).sum();
                let col: f64 = (0..l).map(|b| mu[b * l + a]).sum();
                worst = worst
                    .max((row - self.node_marginal(i)[a]).abs())
                    .max((col - self.node_marginal(j)[a]).abs());
            }
        }
        worst
    }

    /// Labels with the largest marginal, lowest label on ties.
    pub fn rounded(&self) -> Vec<usize> {
        (0..self.node_marginals.len() / self.num_labels)
            .map(|i| argmax(self.node_marginal(i)))
            .collect()
    }

    /// Entropy of each node marginal.
    pub fn entropies(&self) -> Vec<f64> {
        (0..self.node_marginals.len() / self.num_labels)
            .map(|i| {
                self.node_marginal(i)
                    .iter()
                    .filter(|&&v| v > 0.0)
                    .map(|&v| -v * v.ln())
                    .sum()
            })
            .collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// LP relaxation of MAP for a model.
pub fn lp_relaxation(
    instance: &FactorGraphInstance,
    params: &ParameterVector,
    max_iters: usize,
    tol: f64,
) -> Result<RelaxedSolution> {
    let potentials = Potentials::from_model(instance, params)?;
    let config = LpConfig {
        max_iters,
        tol,
        ..LpConfig::default()
    };
    solve_lp(&potentials, &config)
}

pub fn solve_lp(potentials: &Potentials, config: &LpConfig) -> Result<RelaxedSolution> {
    if config.max_iters == 0 || !(config.tol > 0.0) || !(config.penalty > 0.0) {
        return Err(Error::InvalidConfig(
            "lp relaxation needs max_iters >= 1, tol > 0 and penalty > 0".into(),
        ));
    }
    Ok(Admm::new(potentials, config).run(None))
}

/// Solve with early exit once the dual bound drops to `cutoff` or below.
pub(crate) fn solve_lp_with_cutoff(potentials: &Potentials, config: &LpConfig, cutoff: f64) -> RelaxedSolution {
    Admm::new(potentials, config).run(Some(cutoff))
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if s - candidate > 0.0 {
            shift = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - shift).max(0.0);
    }
}

struct Admm<'a> {
    pot: &'a Potentials,
    config: &'a LpConfig,
    l: usize,
    n: usize,
    m: usize,
    degree: Vec<f64>,
    consensus: Vec<f64>,
    node_local: Vec<f64>,
    node_dual: Vec<f64>,
    edge_local: Vec<f64>,
    /// Multipliers on the edge's first-endpoint (row) marginal.
    row_dual: Vec<f64>,
    /// Multipliers on the edge's second-endpoint (column) marginal.
    col_dual: Vec<f64>,
}

impl<'a> Admm<'a> {
    fn new(pot: &'a Potentials, config: &'a LpConfig) -> Self {
        let l = pot.num_labels();
        let n = pot.node_count();
        let m = pot.edges().len();
        let mut degree = vec![1.0; n];
        for &(i, j) in pot.edges() {
            degree[i] += 1.0;
            degree[j] += 1.0;
        }
        let uniform = 1.0 / l as f64;
        Admm {
            pot,
            config,
            l,
            n,
            m,
            degree,
            consensus: vec![uniform; n * l],
            node_local: vec![uniform; n * l],
            node_dual: vec![0.0; n * l],
            edge_local: vec![uniform * uniform; m * l * l],
            row_dual: vec![0.0; m * l],
            col_dual: vec![0.0; m * l],
        }
    }

    fn run(mut self, cutoff: Option<f64>) -> RelaxedSolution {
        let (l, n, m) = (self.l, self.n, self.m);
        let eta = self.config.penalty;
        let mut best_bound = f64::INFINITY;
        let mut converged = false;
        let mut cut_off = false;
        let mut iterations = 0;
        let mut accum = vec![0.0; n * l];
        let mut grad = vec![0.0; l * l];

        for it in 1..=self.config.max_iters {
            iterations = it;

            for i in 0..n {
                let row = &mut self.node_local[i * l..(i + 1) * l];
                for (a, r) in row.iter_mut().enumerate() {
                    *r = self.consensus[i * l + a] + (self.pot.unary(i, a) + self.node_dual[i * l + a]) / eta;
                }
                project_simplex(row);
            }

            for e in 0..m {
                self.solve_edge(e, &mut grad);
            }

            // consensus update
            for i in 0..n {
                for a in 0..l {
                    accum[i * l + a] = self.node_local[i * l + a] - self.node_dual[i * l + a] / eta;
                }
            }
            for (e, &(i, j)) in self.pot.edges().iter().enumerate() {
                let mu = &self.edge_local[e * l * l..(e + 1) * l * l];
                for a in 0..l {
                    let row: f64 = (0..l).map(|b| mu[a * l + b]).sum();
                    let col: f64 = (0..l).map(|b| mu[b * l + a]).sum();
                    accum[i * l + a] += row - self.row_dual[e * l + a] / eta;
                    accum[j * l + a] += col - self.col_dual[e * l + a] / eta;
                }
            }
            let mut dual_residual: f64 = 0.0;
            for i in 0..n {
                for a in 0..l {
                    let k = i * l + a;
                    let next = accum[k] / self.degree[i];
                    dual_residual = dual_residual.max((next - self.consensus[k]).abs());
                    self.consensus[k] = next;
                }
            }
            dual_residual *= eta;

            // multiplier step
            let mut primal_residual: f64 = 0.0;
            for k in 0..n * l {
                let r = self.node_local[k] - self.consensus[k];
                primal_residual = primal_residual.max(r.abs());
                self.node_dual[k] -= eta * r;
            }
            for (e, &(i, j)) in self.pot.edges().iter().enumerate() {
                let mu = &self.edge_local[e * l * l..(e + 1) * l * l];
                for a in 0..l {
                    let row: f64 = (0..l).map(|b| mu[a * l + b]).sum();
                    let col: f64 = (0..l).map(|b| mu[b * l + a]).sum();
                    let rr = row - self.consensus[i * l + a];
                    let rc = col - self.consensus[j * l + a];
                    primal_residual = primal_residual.max(rr.abs()).max(rc.abs());
                    self.row_dual[e * l + a] -= eta * rr;
                    self.col_dual[e * l + a] -= eta * rc;
                }
            }

            let done = primal_residual <= self.config.tol && dual_residual <= self.config.tol;
            if done || it % self.config.bound_every.max(1) == 0 || it == self.config.max_iters {
                best_bound = best_bound.min(self.dual_bound());
                if let Some(c) = cutoff {
                    if best_bound <= c {
                        cut_off = true;
                        break;
                    }
                }
            }
            if done {
                converged = true;
                break;
            }
        }

        let primal_objective = self.primal_objective();
        let fractional = self
            .node_local
            .chunks(l)
            .any(|q| 1.0 - q.iter().cloned().fold(0.0, f64::max) > INTEGRALITY_TOL);
        RelaxedSolution {
            num_labels: l,
            node_marginals: self.node_local,
            edge_marginals: self.edge_local,
            objective: best_bound,
            primal_objective,
            converged,
            iterations,
            fractional,
            cut_off,
        }
    }

    /// Accelerated projected gradient on the edge's quadratic subproblem,
    /// warm started from the previous local marginal.
    fn solve_edge(&mut self, e: usize, grad: &mut [f64]) {
        let l = self.l;
        let ll = l * l;
        let eta = self.config.penalty;
        let (i, j) = self.pot.edges()[e];
        let table = self.pot.pair_table(e);
        let target_row: Vec<f64> = (0..l).map(|a| self.consensus[i * l + a]).collect();
        let target_col: Vec<f64> = (0..l).map(|b| self.consensus[j * l + b]).collect();
        let row_dual = &self.row_dual[e * l..(e + 1) * l];
        let col_dual = &self.col_dual[e * l..(e + 1) * l];
        let step = 1.0 / (2.0 * l as f64 * eta);
        let inner_tol = 0.01 * self.config.tol;

        let mut x: Vec<f64> = self.edge_local[e * ll..(e + 1) * ll].to_vec();
        let mut y = x.clone();
        let mut t = 1.0_f64;
        let mut rows = vec![0.0; l];
        let mut cols = vec![0.0; l];
        for _ in 0..self.config.inner_iters {
            rows.iter_mut().for_each(|r| *r = 0.0);
            cols.iter_mut().for_each(|c| *c = 0.0);
            for a in 0..l {
                for b in 0..l {
                    rows[a] += y[a * l + b];
                    cols[b] += y[a * l + b];
                }
            }
            for a in 0..l {
                for b in 0..l {
                    grad[a * l + b] = -(table[a * l + b] + row_dual[a] + col_dual[b])
                        + eta * (rows[a] - target_row[a] + cols[b] - target_col[b]);
                }
            }
            let mut next: Vec<f64> = y.iter().zip(grad.iter()).map(|(v, g)| v - step * g).collect();
            project_simplex(&mut next);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            let mut change: f64 = 0.0;
            for k in 0..ll {
                change = change.max((next[k] - x[k]).abs());
                y[k] = next[k] + momentum * (next[k] - x[k]);
            }
            x = next;
            t = t_next;
            if change < inner_tol {
                break;
            }
        }
        self.edge_local[e * ll..(e + 1) * ll].copy_from_slice(&x);
    }

    fn dual_bound(&self) -> f64 {
        let l = self.l;
        let mut bound = self.pot.constant();
        let mut slack = vec![0.0; self.n * l];
        for i in 0..self.n {
            bound += (0..l)
                .map(|a| self.pot.unary(i, a) + self.node_dual[i * l + a])
                .fold(f64::NEG_INFINITY, f64::max);
            for a in 0..l {
                slack[i * l + a] -= self.node_dual[i * l + a];
            }
        }
        for (e, &(i, j)) in self.pot.edges().iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for a in 0..l {
                for b in 0..l {
                    best = best.max(self.pot.pairwise(e, a, b) + self.row_dual[e * l + a] + self.col_dual[e * l + b]);
                }
            }
            bound += best;
            for a in 0..l {
                slack[i * l + a] -= self.row_dual[e * l + a];
                slack[j * l + a] -= self.col_dual[e * l + a];
            }
        }
        bound += slack
            .chunks(l)
            .map(|s| s.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>();
        bound
    }

    fn primal_objective(&self) -> f64 {
        let l = self.l;
        let mut v = self.pot.constant();
        for i in 0..self.n {
            v += (0..l).map(|a| self.pot.unary(i, a) * self.node_local[i * l + a]).sum::<f64>();
        }
        for e in 0..self.m {
            let table = self.pot.pair_table(e);
            v += table
                .iter()
                .zip(&self.edge_local[e * l * l..(e + 1) * l * l])
                .map(|(t, mu)| t * mu)
                .sum::<f64>();
        }
        v
    }
}
