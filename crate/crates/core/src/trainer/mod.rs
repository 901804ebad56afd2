//! One-slack cutting-plane training with a ladder of separation oracles.
//!
//! Each iteration solves the restricted QP, then asks the current tier for a
//! joint constraint at the new θ. Tiers run from cheap to exact: cached
//! labelings, move-making, branch-and-bound. A tier that finds nothing
//! violated by more than ε hands over to the next one; a full oracle that
//! does find a violation sends the ladder back to the start. Training stops
//! when the last tier finds nothing, and when that tier is exact the final
//! bounds certify the objective.

mod bounds;
mod cache;
mod schedule;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bounds::{compute_bounds, BoundTrace, Certificate, CertificateStatus, NullSink, TraceRow, TraceSink};
pub use cache::{best_cached, cache_lookup, SampleCache};
pub use schedule::{schedule_next_tier, CacheStrategy, LadderState, LadderStep, Tier};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{accumulate_joint_feature, loss, loss_augment, score, Labeling, ParameterVector};
use crate::inference::{solve_tier, OracleConfig, OracleTier, Quality};
use crate::qp::{JointConstraint, RestrictedQp};

/// Where move-making starts its search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveInit {
    Truth,
    /// The ground truth and the most violated cached labeling.
    TruthAndCache,
}

/// Whether trace rows carry wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    Wall,
    /// `wall_ms` is always 0, so traces are reproducible byte for byte.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub c: f64,
    pub epsilon: f64,
    pub ladder: Vec<OracleTier>,
    pub cache_strategy: CacheStrategy,
    pub cache_size: usize,
    pub prune_patience: usize,
    pub qp_tol: f64,
    /// Slack added to C·ε when deciding whether the final gap certifies.
    pub certificate_tol: f64,
    pub max_iterations: usize,
    pub move_init: MoveInit,
    pub oracle: OracleConfig,
    pub seed: u64,
    pub clock: Clock,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            c: 1.0,
            epsilon: 1e-4,
            ladder: vec![OracleTier::MoveMaking, OracleTier::Exact],
            cache_strategy: CacheStrategy::Dynamic,
            cache_size: 50,
            prune_patience: 20,
            qp_tol: 1e-9,
            certificate_tol: 1e-6,
            max_iterations: 5_000,
            move_init: MoveInit::TruthAndCache,
            oracle: OracleConfig::default(),
            seed: 0,
            clock: Clock::Wall,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.ladder.is_empty() {
            return Err(Error::InvalidConfig("ladder needs at least one full oracle".into()));
        }
        if self.cache_strategy != CacheStrategy::None && self.cache_size == 0 {
            return Err(Error::InvalidConfig("cache size must be positive when caching".into()));
        }
        if !(self.qp_tol > 0.0) {
            return Err(Error::InvalidConfig("qp tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Whether the last tier can certify.
    pub fn ends_exact(&self) -> bool {
        self.ladder.last() == Some(&OracleTier::Exact)
    }

    /// Gap below which a certificate is issued.
    pub fn certificate_threshold(&self) -> f64 {
        self.c * self.epsilon + self.certificate_tol
    }
}

/// A constraint from a full oracle plus its bookkeeping.
#[derive(Debug, Clone)]
pub struct GeneratedConstraint {
    pub constraint: JointConstraint,
    /// loss_sum − ⟨θ, delta_psi⟩.
    pub xi_prime: f64,
    /// Upper bound on the exact ξ′ at θ, for certified tiers.
    pub xi_upper: Option<f64>,
    pub labelings: Vec<Labeling>,
    /// Some sample's exact search ran out of budget; its incumbent was used.
    pub budget_exhausted: bool,
}

struct SampleAnswer {
    labeling: Labeling,
    /// Upper bound on max_ŷ Δ + score(ŷ) − score(y) when certified.
    violation_upper: Option<f64>,
    exhausted: bool,
}

/// Runs the tier's oracle on every sample (in parallel) and sums the results
/// in sample order.
///
/// `caches` supplies extra move-making starts when `config.move_init` asks
/// for them; it is not modified.
pub fn generate_constraint(
    params: &ParameterVector,
    dataset: &Dataset,
    tier: OracleTier,
    caches: Option<&[SampleCache]>,
    config: &TrainerConfig,
    iteration: usize,
) -> Result<GeneratedConstraint> {
    let answers: Vec<Result<SampleAnswer>> = dataset
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let augmented = loss_augment(&sample.instance, &sample.truth, &sample.loss)?;
            let potentials = augmented.potentials(params)?;
            let mut extra = Vec::new();
            if tier == OracleTier::MoveMaking && config.move_init == MoveInit::TruthAndCache {
                if let Some(cache) = caches.and_then(|c| c.get(i)) {
                    if let Some((y, _)) = best_cached(cache, sample, params)? {
                        extra.push(y.clone());
                    }
                }
            }
            let mut oracle = config.oracle.clone();
            oracle.move_making.seed = mix_seed(config.seed, iteration as u64, i as u64);
            let truth_score = score(&sample.instance, &sample.truth, params)?;
            match solve_tier(&potentials, tier, &sample.truth, &extra, &oracle) {
                Ok(r) => {
                    let certified = r.quality == Quality::ExactCertified;
                    Ok(SampleAnswer {
                        labeling: r.labeling.expect("feasible oracles return a labeling"),
                        violation_upper: certified.then_some(r.upper_bound - truth_score),
                        exhausted: false,
                    })
                }
                Err(Error::SearchBudget {
                    incumbent: Some(y),
                    upper_bound,
                    ..
                }) => Ok(SampleAnswer {
                    labeling: y,
                    violation_upper: Some(upper_bound - truth_score),
                    exhausted: true,
                }),
                Err(e) => Err(e),
            }
        })
        .collect();

    let layout = dataset.layout();
    let mut delta_psi = vec![0.0; layout.dim()];
    let mut loss_sum = 0.0;
    let mut xi_upper = Some(0.0);
    let mut labelings = Vec::with_capacity(answers.len());
    let mut budget_exhausted = false;
    for (sample, answer) in dataset.samples().iter().zip(answers) {
        let answer = answer?;
        accumulate_joint_feature(layout, &sample.instance, &sample.truth, 1.0, &mut delta_psi)?;
        accumulate_joint_feature(layout, &sample.instance, &answer.labeling, -1.0, &mut delta_psi)?;
        loss_sum += loss(&sample.truth, &answer.labeling, &sample.loss)?;
        xi_upper = match (xi_upper, answer.violation_upper) {
            // ŷ = y is always a candidate, so each term is at least 0
            (Some(acc), Some(v)) => Some(acc + v.max(0.0)),
            _ => None,
        };
        budget_exhausted |= answer.exhausted;
        labelings.push(answer.labeling);
    }
    let origin = match tier {
        OracleTier::Exact if !budget_exhausted => Quality::ExactCertified,
        _ => Quality::UnderGenerating,
    };
    let constraint = JointConstraint::new(delta_psi, loss_sum, origin);
    let xi_prime = constraint.violation(params.as_slice());
    Ok(GeneratedConstraint {
        constraint,
        xi_prime,
        xi_upper,
        labelings,
        budget_exhausted,
    })
}

fn mix_seed(seed: u64, iteration: u64, sample: u64) -> u64 {
    // splitmix64 finalizer over the three inputs
    let mut z = seed
        .wrapping_add(iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(sample.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Primal estimate Cξ′ + ½‖θ‖² with the tier's oracle at `params`, plus an
/// upper bound on the true objective at `params` when the tier is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEstimate {
    pub value: f64,
    pub upper: Option<f64>,
}

pub fn primal_objective(
    params: &ParameterVector,
    dataset: &Dataset,
    tier: OracleTier,
    config: &TrainerConfig,
) -> Result<ObjectiveEstimate> {
    let generated = generate_constraint(params, dataset, tier, None, config, 0)?;
    let half_norm = 0.5 * params.norm_sq();
    Ok(ObjectiveEstimate {
        value: config.c * generated.xi_prime.max(0.0) + half_norm,
        upper: generated.xi_upper.map(|xi| config.c * xi + half_norm),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub iterations: usize,
    /// Batches answered by a full oracle.
    pub oracle_calls: usize,
    /// Constraints taken from the cache (each followed by one QP solve).
    pub cache_constraints: usize,
    pub working_set_size: usize,
    pub pruned: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub params: ParameterVector,
    pub xi: f64,
    pub certificate: Certificate,
    pub trace: BoundTrace,
    pub stats: TrainingStats,
}

/// Trains with the default in-memory trace.
pub fn fit(dataset: &Dataset, config: &TrainerConfig) -> Result<TrainingOutcome> {
    fit_with_sink(dataset, config, &mut NullSink)
}

/// Trains, streaming each trace row to `sink` as it is produced. The returned
/// outcome also carries the full trace.
pub fn fit_with_sink(dataset: &Dataset, config: &TrainerConfig, sink: &mut dyn TraceSink) -> Result<TrainingOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    let layout = *dataset.layout();
    let started = Instant::now();
    let elapsed = || match config.clock {
        Clock::Wall => started.elapsed().as_millis() as u64,
        Clock::Frozen => 0,
    };

    let mut qp = RestrictedQp::new(layout.dim());
    let mut caches = vec![SampleCache::new(config.cache_size); dataset.len()];
    let mut ladder = LadderState::new(config.ladder.clone(), config.cache_strategy);
    let mut trace = BoundTrace::default();
    let mut stats = TrainingStats::default();
    let mut solution = qp.solve(config.c, config.qp_tol)?;
    let mut params = ParameterVector::from_vec(layout, solution.theta.clone())?;

    let mut record = |trace: &mut BoundTrace, row: TraceRow| -> Result<()> {
        sink.record(&row)?;
        trace.rows.push(row);
        Ok(())
    };

    let certificate = loop {
        if stats.iterations >= config.max_iterations {
            let mut cert = compute_bounds(
                solution.dual_objective,
                params.norm_sq(),
                config.c,
                None,
                config.epsilon,
                config.certificate_threshold(),
            );
            cert.status = CertificateStatus::IterationLimit;
            break cert;
        }
        let o_w = solution.dual_objective;
        let half_norm = 0.5 * params.norm_sq();

        match ladder.current() {
            Tier::Cache => {
                let looked_up = cache_lookup(&params, dataset, &caches)?;
                let Some((constraint, xi_prime)) = looked_up else {
                    ladder.cache_exhausted();
                    continue;
                };
                if xi_prime - solution.xi < config.epsilon {
                    ladder.cache_exhausted();
                    continue;
                }
                stats.iterations += 1;
                stats.cache_constraints += 1;
                let o_c = config.c * xi_prime + half_norm;
                ladder.cache_produced(o_c, o_w);
                record(
                    &mut trace,
                    TraceRow {
                        iteration: stats.iterations,
                        tier: Tier::Cache,
                        o_w,
                        o_i: o_c,
                        oracle_calls_cumulative: stats.oracle_calls,
                        wall_ms: elapsed(),
                    },
                )?;
                qp.insert(constraint)?;
            }
            tier => {
                let oracle_tier = tier.oracle().expect("full oracle tier");
                let generated =
                    generate_constraint(&params, dataset, oracle_tier, Some(&caches), config, stats.iterations)?;
                stats.iterations += 1;
                stats.oracle_calls += 1;
                for (cache, y) in caches.iter_mut().zip(&generated.labelings) {
                    cache.push(y.clone());
                }
                let o_i = config.c * generated.xi_prime + half_norm;
                record(
                    &mut trace,
                    TraceRow {
                        iteration: stats.iterations,
                        tier,
                        o_w,
                        o_i,
                        oracle_calls_cumulative: stats.oracle_calls,
                        wall_ms: elapsed(),
                    },
                )?;
                let violated = generated.xi_prime - solution.xi >= config.epsilon;

                if generated.budget_exhausted {
                    // bounds stay valid, but no termination claim is possible
                    let mut cert = compute_bounds(
                        o_w,
                        params.norm_sq(),
                        config.c,
                        generated.xi_upper,
                        config.epsilon,
                        config.certificate_threshold(),
                    );
                    cert.certified = false;
                    cert.status = CertificateStatus::BudgetExhausted;
                    break cert;
                }

                match ladder.oracle_ran(violated, o_i) {
                    LadderStep::Terminate => {
                        let exact_upper = (oracle_tier == OracleTier::Exact)
                            .then_some(generated.xi_upper)
                            .flatten();
                        break compute_bounds(
                            o_w,
                            params.norm_sq(),
                            config.c,
                            exact_upper,
                            config.epsilon,
                            config.certificate_threshold(),
                        );
                    }
                    LadderStep::Next(_) if !violated => continue,
                    LadderStep::Next(_) => {
                        qp.insert(generated.constraint)?;
                    }
                }
            }
        }

        stats.pruned += qp.prune(config.prune_patience);
        solution = qp.solve(config.c, config.qp_tol)?;
        params = ParameterVector::from_vec(layout, solution.theta.clone())?;
    };

    stats.working_set_size = qp.len();
    Ok(TrainingOutcome {
        params,
        xi: solution.xi,
        certificate,
        trace,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::graph::{FactorGraphInstance, FeatureLayout};

    fn single_node_dataset() -> Dataset {
        let layout = FeatureLayout::new(2, 1, 1, true).unwrap();
        let inst = FactorGraphInstance::new(2, 1, 1, vec![vec![1.0]], vec![], vec![]).unwrap();
        let s = Sample::new(inst, Labeling::new(vec![0]), None).unwrap();
        Dataset::new(layout, vec![s]).unwrap()
    }

    #[test]
    fn single_node_margin_meets_loss() {
        let ds = single_node_dataset();
        let config = TrainerConfig {
            c: 100.0,
            ..TrainerConfig::default()
        };
        let out = fit(&ds, &config).unwrap();
        let s = &ds.samples()[0];
        let margin = score(&s.instance, &Labeling::new(vec![0]), &out.params).unwrap()
            - score(&s.instance, &Labeling::new(vec![1]), &out.params).unwrap();
        assert!(margin >= 1.0 - config.epsilon, "margin {margin}");
        assert!(out.certificate.certified);
        // minimum of ½(a² + b²) with a − b ≥ 1 is ¼
        assert!((out.certificate.lower_bound - 0.25).abs() < 1e-6);
    }

    #[test]
    fn zero_theta_exact_constraint_counts_all_nodes() {
        let layout = FeatureLayout::new(3, 1, 1, true).unwrap();
        let mk = |n: usize| {
            let inst = FactorGraphInstance::new(
                3,
                1,
                1,
                vec![vec![0.5]; n],
                (1..n).map(|j| (j - 1, j)).collect(),
                vec![vec![1.0]; n - 1],
            )
            .unwrap();
            Sample::new(inst, Labeling::uniform(n, 1), None).unwrap()
        };
        let ds = Dataset::new(layout, vec![mk(3), mk(4)]).unwrap();
        let zero = ParameterVector::zeros(layout);
        let g = generate_constraint(&zero, &ds, OracleTier::Exact, None, &TrainerConfig::default(), 0).unwrap();
        assert_eq!(g.constraint.loss_sum, 7.0);
        assert_eq!(g.xi_prime, 7.0);
        assert!((g.xi_upper.unwrap() - 7.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let ds = single_node_dataset();
        for config in [
            TrainerConfig { c: 0.0, ..TrainerConfig::default() },
            TrainerConfig { epsilon: -1.0, ..TrainerConfig::default() },
            TrainerConfig { ladder: vec![], ..TrainerConfig::default() },
        ] {
            assert!(matches!(fit(&ds, &config), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn seeds_differ_by_sample_and_iteration() {
        assert_ne!(mix_seed(1, 0, 0), mix_seed(1, 0, 1));
        assert_ne!(mix_seed(1, 0, 0), mix_seed(1, 1, 0));
        assert_eq!(mix_seed(5, 3, 2), mix_seed(5, 3, 2));
    }
}
