//! Exact MAP by best-first branch-and-bound over label clampings.
//!
//! Each subproblem clamps some nodes; its bound is the LP relaxation of the
//! conditioned model. Every LP solve also yields a candidate labeling (rounded
//! marginals polished by conditional modes) for the incumbent. Subproblems
//! branch on the free node with the highest-entropy marginal and are closed
//! once their bound is within `tol` of the incumbent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::lp::{solve_lp_with_cutoff, LpConfig};
use super::{OracleResult, Quality};
use crate::error::{Error, Result};
use crate::graph::{FactorGraphInstance, Labeling, ParameterVector, Potentials};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbConfig {
    pub tol: f64,
    pub max_expansions: usize,
    pub lp: LpConfig,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            tol: 1e-7,
            max_expansions: 100_000,
            lp: LpConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnbOutcome {
    pub result: OracleResult,
    /// Subproblems that were branched.
    pub expansions: usize,
    pub lp_solves: usize,
}

/// Certified MAP of a model.
pub fn branch_and_bound(instance: &FactorGraphInstance, params: &ParameterVector, tol: f64) -> Result<OracleResult> {
    let potentials = Potentials::from_model(instance, params)?;
    let config = BnbConfig {
        tol,
        ..BnbConfig::default()
    };
    Ok(solve_branch_and_bound(&potentials, &config, None)?.result)
}

struct Open {
    bound: f64,
    seq: usize,
    fixed: Vec<Option<usize>>,
    branch_node: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // max-heap: highest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    pot: &'a Potentials,
    config: &'a BnbConfig,
    incumbent: Option<Vec<usize>>,
    incumbent_value: f64,
    closed_bound: f64,
    lp_solves: usize,
    root_fractional: Option<bool>,
    seq: usize,
}

enum Evaluated {
    Closed,
    Open(Open),
}

impl<'a> Search<'a> {
    fn offer(&mut self, y: Vec<usize>) {
        let v = self.pot.score(&y);
        if self.incumbent.is_none() || v > self.incumbent_value {
            self.incumbent_value = v;
            self.incumbent = Some(y);
        }
    }

    fn close(&mut self, bound: f64) -> Evaluated {
        self.closed_bound = self.closed_bound.max(bound);
        Evaluated::Closed
    }

    fn evaluate(&mut self, fixed: Vec<Option<usize>>) -> Evaluated {
        let (reduced, free) = self.pot.condition(&fixed);
        if free.is_empty() {
            let y: Vec<usize> = fixed.iter().map(|f| f.expect("all clamped")).collect();
            let v = self.pot.score(&y);
            self.offer(y);
            return self.close(v);
        }

        let cutoff = if self.incumbent.is_some() {
            self.incumbent_value + self.config.tol
        } else {
            f64::NEG_INFINITY
        };
        let sol = solve_lp_with_cutoff(&reduced, &self.config.lp, cutoff);
        self.lp_solves += 1;
        if self.root_fractional.is_none() {
            self.root_fractional = Some(sol.fractional);
        }

        let rounded = sol.rounded();
        let mut y: Vec<usize> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
        for (k, &node) in free.iter().enumerate() {
            y[node] = rounded[k];
        }
        polish(self.pot, &mut y, &free);
        self.offer(y);

        if sol.objective <= self.incumbent_value + self.config.tol {
            return self.close(sol.objective);
        }
        let entropy = sol.entropies();
        let mut pick = 0;
        for k in 1..free.len() {
            if entropy[k] > entropy[pick] {
                pick = k;
            }
        }
        self.seq += 1;
        Evaluated::Open(Open {
            bound: sol.objective,
            seq: self.seq,
            fixed,
            branch_node: free[pick],
        })
    }
}

/// Conditional-mode descent restricted to `free` nodes.
fn polish(pot: &Potentials, y: &mut [usize], free: &[usize]) {
    let l = pot.num_labels();
    loop {
        let mut changed = false;
        for &n in free {
            let mut best = y[n];
            let mut best_score = pot.local_score(y, n, y[n]);
            for a in 0..l {
                let s = pot.local_score(y, n, a);
                if s > best_score + 1e-12 {
                    best = a;
                    best_score = s;
                }
            }
            if best != y[n] {
                y[n] = best;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

/// Branch-and-bound on explicit potentials. `hint` seeds the incumbent.
pub fn solve_branch_and_bound(pot: &Potentials, config: &BnbConfig, hint: Option<&Labeling>) -> Result<BnbOutcome> {
    if !(config.tol > 0.0) {
        return Err(Error::InvalidConfig("branch-and-bound tolerance must be positive".into()));
    }
    let n = pot.node_count();
    let l = pot.num_labels();
    let mut search = Search {
        pot,
        config,
        incumbent: None,
        incumbent_value: f64::NEG_INFINITY,
        closed_bound: f64::NEG_INFINITY,
        lp_solves: 0,
        root_fractional: None,
        seq: 0,
    };
    if let Some(h) = hint {
        if h.len() != n || h.iter().any(|&a| a >= l) {
            return Err(Error::InvalidLabeling("branch-and-bound hint does not fit the model".into()));
        }
        search.offer(h.as_slice().to_vec());
    }

    let mut heap = BinaryHeap::new();
    if let Evaluated::Open(o) = search.evaluate(vec![None; n]) {
        heap.push(o);
    }
    let mut expansions = 0;
    while let Some(top) = heap.pop() {
        if top.bound <= search.incumbent_value + config.tol {
            // everything left is bounded by `top`
            search.closed_bound = search.closed_bound.max(top.bound);
            break;
        }
        if expansions >= config.max_expansions {
            return Err(Error::SearchBudget {
                expansions,
                incumbent: search.incumbent.map(Labeling::new),
                incumbent_value: search.incumbent_value,
                upper_bound: top.bound.max(search.incumbent_value).max(search.closed_bound),
            });
        }
        expansions += 1;
        for a in 0..l {
            let mut fixed = top.fixed.clone();
            fixed[top.branch_node] = Some(a);
            if let Evaluated::Open(o) = search.evaluate(fixed) {
                heap.push(o);
            }
        }
    }

    let value = search.incumbent_value;
    let upper_bound = value.max(search.closed_bound);
    Ok(BnbOutcome {
        result: OracleResult {
            labeling: search.incumbent.map(Labeling::new),
            value,
            quality: Quality::ExactCertified,
            upper_bound,
            fractional: search.root_fractional.unwrap_or(false),
        },
        expansions,
        lp_solves: search.lp_solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::exhaustive::solve_exhaustive;
    use crate::inference::testutil::{brute_force_max, frustrated_triangle, random_potentials};

    #[test]
    fn single_node_is_unary_argmax() {
        let p = Potentials::new(3, vec![0.5, 2.0, -1.0], vec![], vec![], 0.0).unwrap();
        let out = solve_branch_and_bound(&p, &BnbConfig::default(), None).unwrap();
        assert_eq!(out.result.labeling.unwrap().as_slice(), &[1]);
        assert!((out.result.value - 2.0).abs() < 1e-12);
        assert_eq!(out.expansions, 0);
    }

    #[test]
    fn trees_need_no_branching() {
        for seed in 0..25 {
            let p = random_potentials(seed, 8, 3, true);
            let out = solve_branch_and_bound(&p, &BnbConfig::default(), None).unwrap();
            let exact = solve_exhaustive(&p, 1 << 20).unwrap();
            assert_eq!(out.expansions, 0, "seed {seed}");
            assert_eq!(out.lp_solves, 1, "seed {seed}");
            assert!((out.result.value - exact.value).abs() < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn frustrated_triangle_is_certified() {
        let cfg = BnbConfig::default();
        let out = solve_branch_and_bound(&frustrated_triangle(), &cfg, None).unwrap();
        assert_eq!(out.result.value, -1.0);
        assert!(out.result.upper_bound - out.result.value <= cfg.tol);
        assert!(out.result.fractional);
    }

    #[test]
    fn matches_brute_force_on_loopy_graphs() {
        for seed in 100..160 {
            let p = random_potentials(seed, 9, 3, false);
            let cfg = BnbConfig::default();
            let out = solve_branch_and_bound(&p, &cfg, None).unwrap();
            let best = brute_force_max(&p);
            assert!((out.result.value - best).abs() <= 1e-6, "seed {seed}");
            assert!(out.result.upper_bound >= best - 1e-9);
            assert!(out.result.upper_bound - out.result.value <= cfg.tol);
        }
    }

    #[test]
    fn budget_exhaustion_reports_incumbent() {
        let p = random_potentials(4, 10, 3, false);
        let cfg = BnbConfig {
            max_expansions: 0,
            lp: LpConfig {
                max_iters: 2,
                ..LpConfig::default()
            },
            ..BnbConfig::default()
        };
        match solve_branch_and_bound(&p, &cfg, None) {
            Err(Error::SearchBudget {
                incumbent,
                incumbent_value,
                upper_bound,
                ..
            }) => {
                assert!(incumbent.is_some());
                assert!(upper_bound >= incumbent_value);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}
