//! Experiment plumbing: dataset files, synthetic data, evaluation metrics,
//! model and certificate files, bound traces and their plots.

use std::path::Path;

use crate::error::Result;

pub mod compare;
pub mod config;
pub mod dataset_file;
pub mod metrics;
pub mod model_file;
pub mod plot;
pub mod synth;
pub mod trace;

pub use compare::{compare_caching_strategies, ComparisonReport, StrategyRow};
pub use config::ExperimentConfig;
pub use dataset_file::{read_dataset, write_dataset, DatasetFile};
pub use metrics::{evaluate, predict, Metrics};
pub use model_file::{config_hash, CertificateFile, ModelFile};
pub use plot::trace_svg;
pub use synth::{generate_synthetic, SyntheticSpec};
pub use trace::{read_trace_csv, trace_to_csv, CsvTraceSink};

/// Writes through a sibling temporary file and renames it into place, so a
/// crash never leaves a half-written file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
