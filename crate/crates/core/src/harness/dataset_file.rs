//! On-disk dataset container: self-describing JSON with explicit dimensions
//! and a format version.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::graph::{FactorGraphInstance, FeatureLayout, Labeling, LossSpec};

pub const DATASET_FORMAT: &str = "certcrf-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub unary_dim: usize,
    pub pairwise_dim: usize,
    pub symmetric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub node_count: usize,
    pub num_labels: usize,
    pub edges: Vec<(usize, usize)>,
    pub unary_features: Vec<Vec<f64>>,
    pub edge_features: Vec<Vec<f64>>,
    pub truth: Labeling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub instances: Vec<InstanceRecord>,
}

impl DatasetFile {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let layout = dataset.layout();
        let instances = dataset
            .samples()
            .iter()
            .map(|s| {
                let inst = &s.instance;
                let unit = s.loss.weights().iter().all(|&w| w == 1.0);
                InstanceRecord {
                    node_count: inst.node_count(),
                    num_labels: inst.num_labels(),
                    edges: inst.edges().to_vec(),
                    unary_features: (0..inst.node_count()).map(|n| inst.unary(n).to_vec()).collect(),
                    edge_features: (0..inst.edges().len()).map(|e| inst.edge_feature(e).to_vec()).collect(),
                    truth: s.truth.clone(),
                    loss_weights: (!unit).then(|| s.loss.weights().to_vec()),
                }
            })
            .collect();
        DatasetFile {
            header: DatasetHeader {
                format: DATASET_FORMAT.to_string(),
                version: DATASET_VERSION,
                unary_dim: layout.unary_dim,
                pairwise_dim: layout.pairwise_dim,
                symmetric: layout.symmetric,
            },
            instances,
        }
    }

    /// Validates every record and builds the in-memory dataset.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let h = &self.header;
        if h.format != DATASET_FORMAT {
            return Err(Error::Format(format!("unexpected format tag '{}'", h.format)));
        }
        if h.version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {} (expected {DATASET_VERSION})",
                h.version
            )));
        }
        let num_labels = match self.instances.first() {
            Some(r) => r.num_labels,
            None => return Err(Error::Format("dataset has no instances".into())),
        };
        let layout = FeatureLayout::new(num_labels, h.unary_dim, h.pairwise_dim, h.symmetric)?;
        let mut samples = Vec::with_capacity(self.instances.len());
        for (k, r) in self.instances.iter().enumerate() {
            let at = |e: Error| Error::Format(format!("instance {k}: {e}"));
            if r.node_count != r.unary_features.len() {
                return Err(at(Error::DimensionMismatch {
                    what: "node_count",
                    expected: r.node_count,
                    found: r.unary_features.len(),
                }));
            }
            let instance = FactorGraphInstance::new(
                r.num_labels,
                h.unary_dim,
                h.pairwise_dim,
                r.unary_features.clone(),
                r.edges.clone(),
                r.edge_features.clone(),
            )
            .map_err(at)?;
            let loss = r.loss_weights.clone().map(LossSpec::new).transpose().map_err(at)?;
            samples.push(Sample::new(instance, r.truth.clone(), loss).map_err(at)?);
        }
        Dataset::new(layout, samples)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    DatasetFile::read(path)?.to_dataset()
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    DatasetFile::from_dataset(dataset).write(path)
}
