//! Runs the same training problem under each cache strategy and tabulates
//! the work each one needed.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plot::trace_svg;
use super::trace::trace_to_csv;
use super::write_atomic;
use crate::dataset::Dataset;
use crate::error::Result;
use crate::trainer::{fit, CacheStrategy, Certificate, TraceRow, TrainerConfig};

pub const STRATEGIES: [CacheStrategy; 3] = [CacheStrategy::None, CacheStrategy::UntilExhausted, CacheStrategy::Dynamic];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: CacheStrategy,
    pub iterations: usize,
    pub oracle_calls: usize,
    pub cache_solves: usize,
    pub final_o_w: f64,
    pub gap: Option<f64>,
    pub certificate: Certificate,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<StrategyRow>,
}

pub const COMPARISON_HEADER: &str = "strategy,iterations,oracle_calls,cache_solves,final_o_W,gap,certified";

impl ComparisonReport {
    pub fn row(&self, strategy: CacheStrategy) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{COMPARISON_HEADER}\n");
        for r in &self.rows {
            let gap = r.gap.map(|g| g.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.strategy, r.iterations, r.oracle_calls, r.cache_solves, r.final_o_w, gap, r.certificate.certified
            );
        }
        s
    }

    /// Writes `comparison.csv`, plus `trace_<strategy>.csv` and
    /// `trace_<strategy>.svg` for every strategy, into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("comparison.csv"), self.to_csv().as_bytes())?;
        for r in &self.rows {
            let name = r.strategy.to_string();
            write_atomic(&dir.join(format!("trace_{name}.csv")), trace_to_csv(&r.trace).as_bytes())?;
            let svg = trace_svg(&r.trace, &format!("cache strategy: {name}"));
            write_atomic(&dir.join(format!("trace_{name}.svg")), svg.as_bytes())?;
        }
        Ok(())
    }
}

/// Trains once per strategy; everything else in `config` is shared.
pub fn compare_caching_strategies(dataset: &Dataset, config: &TrainerConfig) -> Result<ComparisonReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(STRATEGIES.len());
    for strategy in STRATEGIES {
        let cfg = TrainerConfig {
            cache_strategy: strategy,
            ..config.clone()
        };
        let out = fit(dataset, &cfg)?;
        rows.push(StrategyRow {
            strategy,
            iterations: out.stats.iterations,
            oracle_calls: out.stats.oracle_calls,
            cache_solves: out.stats.cache_constraints,
            final_o_w: out.certificate.lower_bound,
            gap: out.certificate.gap,
            certificate: out.certificate,
            trace: out.trace.rows,
        });
    }
    Ok(ComparisonReport { rows })
}
