//! User-facing experiment configuration and its mapping to the trainer's.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::OracleTier;
use crate::trainer::{CacheStrategy, Clock, Tier, TrainerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub c: f64,
    pub epsilon: f64,
    /// Full oracles in escalation order; the cache is governed separately.
    pub ladder: Vec<Tier>,
    pub cache_strategy: CacheStrategy,
    pub cache_size: usize,
    pub bnb_max_expansions: usize,
    pub move_restarts: usize,
    pub qp_tol: f64,
    pub certificate_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub frozen_clock: bool,
    pub require_certificate: bool,
    pub model_out: Option<PathBuf>,
    pub certificate_out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
    pub plot_out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainerConfig::default();
        ExperimentConfig {
            c: t.c,
            epsilon: t.epsilon,
            ladder: t.ladder.iter().map(|&o| Tier::from(o)).collect(),
            cache_strategy: t.cache_strategy,
            cache_size: t.cache_size,
            bnb_max_expansions: t.oracle.bnb.max_expansions,
            move_restarts: t.oracle.move_making.restarts,
            qp_tol: t.qp_tol,
            certificate_tol: t.certificate_tol,
            max_iterations: t.max_iterations,
            seed: t.seed,
            frozen_clock: false,
            require_certificate: false,
            model_out: None,
            certificate_out: None,
            trace_out: None,
            plot_out: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses a comma-separated ladder such as `move,exact`. A leading
    /// `cache` entry is accepted and ignored: the cache strategy decides when
    /// the cache runs.
    pub fn parse_ladder(spec: &str) -> Result<Vec<Tier>> {
        let tiers = spec
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<Tier>().map_err(Error::InvalidConfig))
            .collect::<Result<Vec<_>>>()?;
        Ok(tiers.into_iter().filter(|&t| t != Tier::Cache).collect())
    }

    pub fn can_certify(&self) -> bool {
        self.ladder.last() == Some(&Tier::Exact)
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer_config().and_then(|t| t.validate())
    }

    pub fn trainer_config(&self) -> Result<TrainerConfig> {
        let ladder = self
            .ladder
            .iter()
            .map(|t| {
                t.oracle()
                    .ok_or_else(|| Error::InvalidConfig("the cache cannot be a ladder tier".into()))
            })
            .collect::<Result<Vec<OracleTier>>>()?;
        let mut t = TrainerConfig {
            c: self.c,
            epsilon: self.epsilon,
            ladder,
            cache_strategy: self.cache_strategy,
            cache_size: self.cache_size,
            qp_tol: self.qp_tol,
            certificate_tol: self.certificate_tol,
            max_iterations: self.max_iterations,
            seed: self.seed,
            clock: if self.frozen_clock { Clock::Frozen } else { Clock::Wall },
            ..TrainerConfig::default()
        };
        t.oracle.bnb.max_expansions = self.bnb_max_expansions;
        t.oracle.move_making.restarts = self.move_restarts;
        t.oracle.move_making.seed = self.seed;
        t.validate()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_maps_to_trainer_default() {
        let t = ExperimentConfig::default().trainer_config().unwrap();
        assert_eq!(t, TrainerConfig::default());
    }

    #[test]
    fn ladder_parsing() {
        assert_eq!(
            ExperimentConfig::parse_ladder("cache,move,exact").unwrap(),
            vec![Tier::MoveMaking, Tier::Exact]
        );
        assert!(ExperimentConfig::parse_ladder("move,icm").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let bad_c = ExperimentConfig { c: 0.0, ..Default::default() };
        assert!(bad_c.validate().is_err());
        let bad_eps = ExperimentConfig { epsilon: -1.0, ..Default::default() };
        assert!(bad_eps.validate().is_err());
        let empty = ExperimentConfig { ladder: vec![], ..Default::default() };
        assert!(empty.validate().is_err());
        let move_only = ExperimentConfig { ladder: vec![Tier::MoveMaking], ..Default::default() };
        assert!(move_only.validate().is_ok());
        assert!(!move_only.can_certify());
    }
}
