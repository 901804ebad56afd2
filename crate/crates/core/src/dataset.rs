use crate::error::{Error, Result};
use crate::graph::{FactorGraphInstance, FeatureLayout, Labeling, LossSpec};

/// A training example with its ground truth and loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub instance: FactorGraphInstance,
    pub truth: Labeling,
    pub loss: LossSpec,
}

impl Sample {
    /// Unit Hamming weights when `loss` is `None`.
    pub fn new(instance: FactorGraphInstance, truth: Labeling, loss: Option<LossSpec>) -> Result<Self> {
        instance.check_labeling(&truth)?;
        let loss = loss.unwrap_or_else(|| LossSpec::unit(instance.node_count()));
        if loss.weights().len() != instance.node_count() {
            return Err(Error::DimensionMismatch {
                what: "loss weights",
                expected: instance.node_count(),
                found: loss.weights().len(),
            });
        }
        Ok(Sample { instance, truth, loss })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    layout: FeatureLayout,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(layout: FeatureLayout, samples: Vec<Sample>) -> Result<Self> {
        for s in &samples {
            layout.check_instance(&s.instance)?;
        }
        Ok(Dataset { layout, samples })
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_nodes(&self) -> usize {
        self.samples.iter().map(|s| s.instance.node_count()).sum()
    }

    /// Total loss weight, i.e. the largest achievable summed loss.
    pub fn total_loss_weight(&self) -> f64 {
        self.samples.iter().map(|s| s.loss.total()).sum()
    }

    /// Copy with all edges dropped: a unary-only model of the same data.
    pub fn unary_only(&self) -> Dataset {
        Dataset {
            layout: self.layout,
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    instance: s.instance.without_edges(),
                    truth: s.truth.clone(),
                    loss: s.loss.clone(),
                })
                .collect(),
        }
    }
}
