use super::{OracleResult, Quality};
use crate::error::{Error, Result};
use crate::graph::{FactorGraphInstance, Labeling, ParameterVector, Potentials};

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 2_000_000;

/// Brute-force MAP over all `L^n` labelings.
pub fn exhaustive_map(instance: &FactorGraphInstance, params: &ParameterVector) -> Result<OracleResult> {
    let potentials = Potentials::from_model(instance, params)?;
    solve_exhaustive(&potentials, DEFAULT_ENUMERATION_BUDGET)
}

/// Enumerates in lexicographic order and keeps the first maximizer, so ties
/// resolve to the lexicographically smallest labeling.
pub fn solve_exhaustive(potentials: &Potentials, budget: u64) -> Result<OracleResult> {
    let n = potentials.node_count();
    let l = potentials.num_labels();
    let states = (l as f64).powi(n as i32);
    if states > budget as f64 {
        return Err(Error::EnumerationBudget { states, budget });
    }

    let mut y = vec![0usize; n];
    let mut best = y.clone();
    let mut best_value = potentials.score(&y);
    'outer: loop {
        let mut k = n;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            y[k] += 1;
            if y[k] < l {
                break;
            }
            y[k] = 0;
        }
        let v = potentials.score(&y);
        if v > best_value {
            best_value = v;
            best.copy_from_slice(&y);
        }
    }

    Ok(OracleResult {
        labeling: Some(Labeling::new(best)),
        value: best_value,
        quality: Quality::ExactCertified,
        upper_bound: best_value,
        fractional: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Potentials;
    use crate::inference::testutil::frustrated_triangle;

    #[test]
    fn single_node_argmax() {
        let p = Potentials::new(2, vec![3.0, 5.0], vec![], vec![], 0.0).unwrap();
        let r = solve_exhaustive(&p, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(r.labeling.unwrap().as_slice(), &[1]);
        assert_eq!(r.value, 5.0);
    }

    #[test]
    fn total_tie_picks_all_zeros() {
        let p = Potentials::new(3, vec![0.0; 12], vec![(0, 1), (2, 3)], vec![0.0; 18], 0.0).unwrap();
        let r = solve_exhaustive(&p, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(r.labeling.unwrap().as_slice(), &[0, 0, 0, 0]);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn attractive_pair_agrees() {
        // unaries pull apart by one, agreement is worth ten
        let node = vec![1.0, 0.0, 0.0, 1.0];
        let pair = vec![10.0, 0.0, 0.0, 10.0];
        let p = Potentials::new(2, node, vec![(0, 1)], pair, 0.0).unwrap();
        let r = solve_exhaustive(&p, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let y = r.labeling.unwrap();
        assert_eq!(y[0], y[1]);
        assert_eq!(r.value, 11.0);
        assert_eq!(y.as_slice(), &[0, 0]);
    }

    #[test]
    fn frustrated_cycle_optimum() {
        let r = solve_exhaustive(&frustrated_triangle(), DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(r.value, -1.0);
        assert_eq!(r.labeling.unwrap().as_slice(), &[0, 0, 1]);
    }

    #[test]
    fn refuses_over_budget() {
        let p = Potentials::new(3, vec![0.0; 3 * 20], vec![], vec![], 0.0).unwrap();
        assert!(matches!(
            solve_exhaustive(&p, DEFAULT_ENUMERATION_BUDGET),
            Err(Error::EnumerationBudget { .. })
        ));
    }
}
