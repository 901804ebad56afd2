//! Under-generating MAP by local search.
//!
//! Each sweep tries, for every label α, an expansion move: nodes may switch
//! to α or keep their label. The binary move is solved greedily (start with
//! every node switched, then flip single choices while that helps) and is
//! accepted only if it strictly improves the full score. Sweeps alternate
//! with single-node conditional-mode passes until neither changes anything.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{OracleResult, Quality};
use crate::error::Result;
use crate::graph::{FactorGraphInstance, Labeling, ParameterVector, Potentials};

/// Minimum gain for a move to count as an improvement.
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveMakingConfig {
    /// Random starting labelings tried after the given ones.
    pub restarts: usize,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for MoveMakingConfig {
    fn default() -> Self {
        MoveMakingConfig {
            restarts: 2,
            max_sweeps: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MoveMakingOutcome {
    pub result: OracleResult,
    /// Accepted scores per start, beginning with the start's own score.
    pub trajectories: Vec<Vec<f64>>,
}

pub struct MoveMaker {
    config: MoveMakingConfig,
}

/// Move-making MAP on a model, starting from `init`.
pub fn move_making(
    instance: &FactorGraphInstance,
    params: &ParameterVector,
    init: &Labeling,
    restarts: usize,
    seed: u64,
) -> Result<OracleResult> {
    instance.check_labeling(init)?;
    let potentials = Potentials::from_model(instance, params)?;
    let maker = MoveMaker::new(MoveMakingConfig {
        restarts,
        seed,
        ..MoveMakingConfig::default()
    });
    Ok(maker.run(&potentials, init, &[])?.result)
}

impl MoveMaker {
    pub fn new(config: MoveMakingConfig) -> Self {
        MoveMaker { config }
    }

    /// Local search from `init`, each of `extra_starts`, then random restarts.
    /// Returns the best labeling found; earlier starts win ties.
    pub fn run(&self, potentials: &Potentials, init: &Labeling, extra_starts: &[Labeling]) -> Result<MoveMakingOutcome> {
        let n = potentials.node_count();
        let l = potentials.num_labels();
        let check = |y: &Labeling| {
            if y.len() != n || y.iter().any(|&a| a >= l) {
                Err(crate::error::Error::InvalidLabeling(format!(
                    "start labeling does not fit {n} nodes with {l} labels"
                )))
            } else {
                Ok(())
            }
        };
        check(init)?;
        for s in extra_starts {
            check(s)?;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut starts: Vec<Vec<usize>> = std::iter::once(init)
            .chain(extra_starts)
            .map(|y| y.as_slice().to_vec())
            .collect();
        for _ in 0..self.config.restarts {
            starts.push((0..n).map(|_| rng.random_range(0..l)).collect());
        }

        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut trajectories = Vec::with_capacity(starts.len());
        for start in starts {
            let (y, value, trajectory) = self.descend(potentials, start);
            trajectories.push(trajectory);
            if best.as_ref().is_none_or(|(_, b)| value > *b) {
                best = Some((y, value));
            }
        }
        let (y, value) = best.expect("at least one start");
        Ok(MoveMakingOutcome {
            result: OracleResult {
                labeling: Some(Labeling::new(y)),
                value,
                quality: Quality::UnderGenerating,
                upper_bound: f64::INFINITY,
                fractional: false,
            },
            trajectories,
        })
    }

    fn descend(&self, p: &Potentials, mut y: Vec<usize>) -> (Vec<usize>, f64, Vec<f64>) {
        let l = p.num_labels();
        let mut value = p.score(&y);
        let mut trajectory = vec![value];
        for _ in 0..self.config.max_sweeps {
            let mut changed = false;
            for alpha in 0..l {
                let candidate = expansion(p, &y, alpha);
                let v = p.score(&candidate);
                if v > value + IMPROVEMENT_EPS {
                    y = candidate;
                    value = v;
                    trajectory.push(value);
                    changed = true;
                }
            }
            for n in 0..y.len() {
                let current = p.local_score(&y, n, y[n]);
                let mut best_label = y[n];
                let mut best_local = current;
                for a in 0..l {
                    let s = p.local_score(&y, n, a);
                    if s > best_local + IMPROVEMENT_EPS {
                        best_label = a;
                        best_local = s;
                    }
                }
                if best_label != y[n] {
                    y[n] = best_label;
                    // recompute rather than accumulate to keep the value exact
                    value = p.score(&y);
                    trajectory.push(value);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (y, value, trajectory)
    }
}

/// Greedy solution of the binary keep-or-switch-to-α problem, starting from
/// the all-switched state.
fn expansion(p: &Potentials, current: &[usize], alpha: usize) -> Vec<usize> {
    let mut y = vec![alpha; current.len()];
    loop {
        let mut flipped = false;
        for n in 0..y.len() {
            if current[n] == alpha {
                continue;
            }
            let other = if y[n] == alpha { current[n] } else { alpha };
            if p.local_score(&y, n, other) > p.local_score(&y, n, y[n]) + IMPROVEMENT_EPS {
                y[n] = other;
                flipped = true;
            }
        }
        if !flipped {
            return y;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::exhaustive::solve_exhaustive;
    use crate::inference::testutil::{frustrated_triangle, random_potentials};
    use proptest::prelude::*;

    fn maker(restarts: usize, seed: u64) -> MoveMaker {
        MoveMaker::new(MoveMakingConfig {
            restarts,
            max_sweeps: 100,
            seed,
        })
    }

    #[test]
    fn zero_potentials_keep_init() {
        let p = Potentials::new(3, vec![0.0; 12], vec![(0, 1), (1, 2), (2, 3)], vec![0.0; 27], 0.0).unwrap();
        let init = Labeling::new(vec![2, 0, 1, 1]);
        let out = maker(0, 0).run(&p, &init, &[]).unwrap();
        assert_eq!(out.result.value, 0.0);
        assert_eq!(out.result.labeling.unwrap(), init);
        assert_eq!(out.result.quality, Quality::UnderGenerating);
    }

    #[test]
    fn frustrated_cycle_reaches_optimum() {
        let p = frustrated_triangle();
        let out = maker(0, 0).run(&p, &Labeling::uniform(3, 0), &[]).unwrap();
        assert_eq!(out.result.value, -1.0);
        assert_eq!(out.result.value, solve_exhaustive(&p, 1 << 20).unwrap().value);
    }

    #[test]
    fn optimal_init_is_kept_optimal() {
        for seed in 0..30 {
            let p = random_potentials(seed, 6, 3, false);
            let exact = solve_exhaustive(&p, 1 << 20).unwrap();
            let out = maker(1, seed).run(&p, exact.labeling.as_ref().unwrap(), &[]).unwrap();
            assert_eq!(out.result.value, exact.value);
        }
    }

    #[test]
    fn expansion_moves_whole_blocks() {
        // Two strongly attracted nodes both prefer label 1 slightly; single
        // node changes cannot leave (0, 0) but the expansion to 1 can.
        let node = vec![0.0, 0.5, 0.0, 0.5];
        let pair = vec![5.0, 0.0, 0.0, 5.0];
        let p = Potentials::new(2, node, vec![(0, 1)], pair, 0.0).unwrap();
        let out = maker(0, 0).run(&p, &Labeling::uniform(2, 0), &[]).unwrap();
        assert_eq!(out.result.labeling.unwrap().as_slice(), &[1, 1]);
        assert_eq!(out.result.value, 6.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = random_potentials(3, 9, 3, false);
        let init = Labeling::uniform(p.node_count(), 0);
        let a = maker(4, 11).run(&p, &init, &[]).unwrap();
        let b = maker(4, 11).run(&p, &init, &[]).unwrap();
        assert_eq!(a.result, b.result);
        assert_eq!(a.trajectories, b.trajectories);
    }

    proptest! {
        #[test]
        fn trajectories_never_decrease(seed in 0u64..10_000, restarts in 0usize..3) {
            let p = random_potentials(seed, 8, 3, false);
            let init = Labeling::uniform(p.node_count(), 0);
            let out = maker(restarts, seed).run(&p, &init, &[]).unwrap();
            for t in &out.trajectories {
                prop_assert!(t.windows(2).all(|w| w[1] >= w[0]));
            }
            prop_assert!(out.result.value >= p.score(init.as_slice()));
            let exact = solve_exhaustive(&p, 1 << 20).unwrap();
            prop_assert!(out.result.value <= exact.value + 1e-9);
        }
    }
}
