//! Separation oracles for (loss-augmented) MAP inference on pairwise models.
//!
//! Every routine maximizes a [`Potentials`] table. The oracles differ in what
//! they promise about the returned labeling, see [`Quality`].

mod bnb;
mod exhaustive;
mod lp;
mod move_making;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{loss_augment, FactorGraphInstance, Labeling, LossSpec, ParameterVector, Potentials};

pub use bnb::{branch_and_bound, solve_branch_and_bound, BnbConfig, BnbOutcome};
pub use exhaustive::{exhaustive_map, solve_exhaustive, DEFAULT_ENUMERATION_BUDGET};
pub use lp::{lp_relaxation, project_simplex, solve_lp, LpConfig, RelaxedSolution, INTEGRALITY_TOL};
pub use move_making::{move_making, MoveMaker, MoveMakingConfig, MoveMakingOutcome};

/// What an oracle guarantees about its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    /// Picked from previously seen labelings.
    Cached,
    /// Feasible labeling, no maximality guarantee.
    UnderGenerating,
    /// Bound from a relaxation; labeling may be absent.
    RelaxedUpperBound,
    /// Feasible labeling whose value is certified within tolerance.
    ExactCertified,
}

impl Quality {
    /// Whether the labeling is a member of the true output space.
    pub fn is_feasible(self) -> bool {
        !matches!(self, Quality::RelaxedUpperBound)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub labeling: Option<Labeling>,
    /// Score of `labeling`, or the relaxed bound when no labeling is given.
    pub value: f64,
    pub quality: Quality,
    /// Best known bound on the true maximum.
    pub upper_bound: f64,
    pub fractional: bool,
}

impl OracleResult {
    pub fn labeling(&self) -> Option<&Labeling> {
        self.labeling.as_ref()
    }
}

/// Which full inference routine answers a loss-augmented query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleTier {
    MoveMaking,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct OracleConfig {
    pub move_making: MoveMakingConfig,
    pub bnb: BnbConfig,
}


/// Runs the tier's oracle on already built potentials.
///
/// `init` seeds move-making (and gives branch-and-bound a first incumbent);
/// `extra_starts` are additional move-making starting points.
pub fn solve_tier(
    potentials: &Potentials,
    tier: OracleTier,
    init: &Labeling,
    extra_starts: &[Labeling],
    config: &OracleConfig,
) -> Result<OracleResult> {
    match tier {
        OracleTier::MoveMaking => {
            let maker = MoveMaker::new(config.move_making.clone());
            Ok(maker.run(potentials, init, extra_starts)?.result)
        }
        OracleTier::Exact => {
            Ok(solve_branch_and_bound(potentials, &config.bnb, Some(init))?.result)
        }
    }
}

/// argmax over ŷ of score(ŷ) + Δ(truth, ŷ) with the tier's oracle.
///
/// Move-making starts from the ground truth.
pub fn loss_augmented_oracle(
    instance: &FactorGraphInstance,
    truth: &Labeling,
    spec: &LossSpec,
    params: &ParameterVector,
    tier: OracleTier,
    config: &OracleConfig,
) -> Result<OracleResult> {
    let augmented = loss_augment(instance, truth, spec)?;
    let potentials = augmented.potentials(params)?;
    solve_tier(&potentials, tier, truth, &[], config)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{loss, score, FeatureLayout};

    fn random_instance(seed: u64) -> (FactorGraphInstance, ParameterVector, Labeling) {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let layout = FeatureLayout::new(3, 2, 2, true).unwrap();
        let mut g = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.sample(StandardNormal)).collect() };
        let inst = FactorGraphInstance::new(
            3,
            2,
            2,
            vec![g(2), g(2), g(2)],
            vec![(0, 1), (1, 2), (0, 2)],
            vec![g(2), g(2), g(2)],
        )
        .unwrap();
        let theta = ParameterVector::from_vec(layout, g(layout.dim())).unwrap();
        (inst, theta, Labeling::new(vec![2, 0, 1]))
    }

    fn all_labelings(n: usize, l: usize) -> Vec<Labeling> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    (0..l).map(move |a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        out.into_iter().map(Labeling::new).collect()
    }

    #[test]
    fn augmentation_adds_loss_exactly() {
        for seed in 0..5 {
            let (inst, theta, truth) = random_instance(seed);
            let spec = LossSpec::new(vec![0.5, 1.0, 2.0]).unwrap();
            let aug = loss_augment(&inst, &truth, &spec).unwrap();
            for y in all_labelings(3, 3) {
                let diff = aug.augmented_score(&y, &theta).unwrap() - score(&inst, &y, &theta).unwrap();
                assert!((diff - loss(&truth, &y, &spec).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_theta_loss_dominates() {
        let (inst, theta, truth) = random_instance(1);
        let zero = ParameterVector::zeros(*theta.layout());
        let spec = LossSpec::unit(3);
        let cfg = OracleConfig::default();
        for tier in [OracleTier::MoveMaking, OracleTier::Exact] {
            let r = loss_augmented_oracle(&inst, &truth, &spec, &zero, tier, &cfg).unwrap();
            assert_eq!(r.value, 3.0);
            let y = r.labeling.unwrap();
            assert!(y.iter().zip(truth.iter()).all(|(a, b)| a != b));
        }
    }

    #[test]
    fn exact_tier_matches_enumeration_of_score_plus_loss() {
        let cfg = OracleConfig::default();
        for seed in 0..10 {
            let (inst, theta, truth) = random_instance(seed);
            let spec = LossSpec::unit(3);
            let brute = all_labelings(3, 3)
                .iter()
                .map(|y| score(&inst, y, &theta).unwrap() + loss(&truth, y, &spec).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let r = loss_augmented_oracle(&inst, &truth, &spec, &theta, OracleTier::Exact, &cfg).unwrap();
            assert_eq!(r.quality, Quality::ExactCertified);
            assert!((r.value - brute).abs() < 1e-6, "seed {seed}: {} vs {brute}", r.value);
        }
    }

    #[test]
    fn zero_weight_exact_equals_plain_bnb() {
        let cfg = OracleConfig::default();
        let (inst, theta, truth) = random_instance(7);
        let spec = LossSpec::new(vec![0.0; 3]).unwrap();
        let r = loss_augmented_oracle(&inst, &truth, &spec, &theta, OracleTier::Exact, &cfg).unwrap();
        let plain = branch_and_bound(&inst, &theta, cfg.bnb.tol).unwrap();
        assert!((r.value - plain.value).abs() < 1e-6);
    }
}
