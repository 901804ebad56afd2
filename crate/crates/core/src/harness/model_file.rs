//! Trained model and certificate files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::graph::{FeatureLayout, ParameterVector};
use crate::trainer::{Certificate, CertificateStatus, TrainerConfig};

pub const MODEL_FORMAT: &str = "certcrf-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBlock {
    pub labels: (usize, usize),
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub layout: FeatureLayout,
    /// One weight vector per label.
    pub unary: Vec<Vec<f64>>,
    /// One entry per distinct pairwise block; in symmetric mode only `a ≤ b`.
    pub pairwise: Vec<PairBlock>,
    pub config_hash: String,
    pub certificate: Option<Certificate>,
}

fn pair_labels(layout: &FeatureLayout) -> Vec<(usize, usize)> {
    let l = layout.num_labels;
    let mut out = Vec::with_capacity(layout.pair_count());
    for a in 0..l {
        let from = if layout.symmetric { a } else { 0 };
        for b in from..l {
            out.push((a, b));
        }
    }
    out
}

impl ModelFile {
    pub fn new(params: &ParameterVector, config_hash: String, certificate: Option<Certificate>) -> Self {
        let layout = *params.layout();
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layout,
            unary: (0..layout.num_labels).map(|k| params.unary_block(k).to_vec()).collect(),
            pairwise: pair_labels(&layout)
                .into_iter()
                .map(|(a, b)| PairBlock {
                    labels: (a, b),
                    weights: params.pairwise_block(a, b).to_vec(),
                })
                .collect(),
            config_hash,
            certificate,
        }
    }

    pub fn params(&self) -> Result<ParameterVector> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model file '{}' version {}",
                self.format, self.version
            )));
        }
        let layout = FeatureLayout::new(
            self.layout.num_labels,
            self.layout.unary_dim,
            self.layout.pairwise_dim,
            self.layout.symmetric,
        )?;
        if self.unary.len() != layout.num_labels {
            return Err(Error::DimensionMismatch {
                what: "unary blocks",
                expected: layout.num_labels,
                found: self.unary.len(),
            });
        }
        if self.pairwise.len() != layout.pair_count() {
            return Err(Error::DimensionMismatch {
                what: "pairwise blocks",
                expected: layout.pair_count(),
                found: self.pairwise.len(),
            });
        }
        let mut values = vec![0.0; layout.dim()];
        for (k, w) in self.unary.iter().enumerate() {
            if w.len() != layout.unary_dim {
                return Err(Error::DimensionMismatch {
                    what: "unary block width",
                    expected: layout.unary_dim,
                    found: w.len(),
                });
            }
            let off = layout.unary_offset(k);
            values[off..off + w.len()].copy_from_slice(w);
        }
        let mut seen = vec![false; layout.pair_count()];
        for block in &self.pairwise {
            let (a, b) = block.labels;
            if a >= layout.num_labels || b >= layout.num_labels {
                return Err(Error::Format(format!("pairwise block ({a}, {b}) out of range")));
            }
            if block.weights.len() != layout.pairwise_dim {
                return Err(Error::DimensionMismatch {
                    what: "pairwise block width",
                    expected: layout.pairwise_dim,
                    found: block.weights.len(),
                });
            }
            let slot = layout.pair_slot(a, b);
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::Format(format!("pairwise block ({a}, {b}) given twice")));
            }
            let off = layout.pairwise_offset(a, b);
            values[off..off + block.weights.len()].copy_from_slice(&block.weights);
        }
        ParameterVector::from_vec(layout, values)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// SHA-256 of the canonical JSON encoding of the training configuration.
pub fn config_hash(config: &TrainerConfig) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub lower: f64,
    pub upper: Option<f64>,
    pub gap: Option<f64>,
    pub epsilon: f64,
    pub certified: bool,
    pub status: CertificateStatus,
}

impl From<&Certificate> for CertificateFile {
    fn from(c: &Certificate) -> Self {
        CertificateFile {
            lower: c.lower_bound,
            upper: c.upper_bound,
            gap: c.gap,
            epsilon: c.epsilon,
            certified: c.certified,
            status: c.status,
        }
    }
}

impl CertificateFile {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(symmetric: bool) -> ParameterVector {
        let layout = FeatureLayout::new(3, 2, 2, symmetric).unwrap();
        let values = (0..layout.dim()).map(|k| k as f64 * 0.5 - 3.0).collect();
        ParameterVector::from_vec(layout, values).unwrap()
    }

    #[test]
    fn blocks_round_trip() {
        for sym in [true, false] {
            let p = params(sym);
            let m = ModelFile::new(&p, "h".into(), None);
            assert_eq!(m.pairwise.len(), p.layout().pair_count());
            let json = serde_json::to_string(&m).unwrap();
            let back: ModelFile = serde_json::from_str(&json).unwrap();
            assert_eq!(back.params().unwrap(), p);
        }
    }

    #[test]
    fn duplicate_block_rejected() {
        let mut m = ModelFile::new(&params(true), "h".into(), None);
        m.pairwise[1].labels = m.pairwise[0].labels;
        assert!(m.params().is_err());
    }

    #[test]
    fn hash_tracks_config() {
        let a = TrainerConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.c = 2.0;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }
}
