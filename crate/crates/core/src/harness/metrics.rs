//! Node-level evaluation: confusion matrix, per-class and global accuracy,
//! per-class Jaccard index.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Labeling, ParameterVector, Potentials};
use crate::inference::{solve_tier, OracleConfig, OracleTier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `confusion[truth][predicted]` node counts.
    pub confusion: Vec<Vec<u64>>,
    /// Recall per class; `None` for classes absent from the ground truth.
    pub class_accuracy: Vec<Option<f64>>,
    /// Mean of the defined per-class accuracies.
    pub mean_class_accuracy: f64,
    pub global_accuracy: f64,
    /// `None` where a class appears in neither truth nor prediction.
    pub jaccard: Vec<Option<f64>>,
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let l = confusion.len();
        if confusion.iter().any(|r| r.len() != l) {
            return Err(Error::Format("confusion matrix must be square".into()));
        }
        let total: u64 = confusion.iter().flatten().sum();
        let diag: u64 = (0..l).map(|k| confusion[k][k]).sum();
        let class_accuracy: Vec<Option<f64>> = (0..l)
            .map(|k| {
                let row: u64 = confusion[k].iter().sum();
                (row > 0).then(|| confusion[k][k] as f64 / row as f64)
            })
            .collect();
        let defined: Vec<f64> = class_accuracy.iter().flatten().copied().collect();
        let mean_class_accuracy = if defined.is_empty() {
            0.0
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        };
        let jaccard = (0..l)
            .map(|k| {
                let row: u64 = confusion[k].iter().sum();
                let col: u64 = confusion.iter().map(|r| r[k]).sum();
                let union = row + col - confusion[k][k];
                (union > 0).then(|| confusion[k][k] as f64 / union as f64)
            })
            .collect();
        Ok(Metrics {
            global_accuracy: if total == 0 { 0.0 } else { diag as f64 / total as f64 },
            confusion,
            class_accuracy,
            mean_class_accuracy,
            jaccard,
        })
    }

    pub fn from_labelings(num_labels: usize, pairs: &[(&Labeling, &Labeling)]) -> Result<Self> {
        let mut confusion = vec![vec![0u64; num_labels]; num_labels];
        for (truth, pred) in pairs {
            if truth.len() != pred.len() {
                return Err(Error::DimensionMismatch {
                    what: "prediction length",
                    expected: truth.len(),
                    found: pred.len(),
                });
            }
            for (&t, &p) in truth.iter().zip(pred.iter()) {
                if t >= num_labels || p >= num_labels {
                    return Err(Error::InvalidLabeling(format!("label out of range 0..{num_labels}")));
                }
                confusion[t][p] += 1;
            }
        }
        Self::from_confusion(confusion)
    }
}

/// MAP labeling of every instance under `params` with the given tier.
///
/// Move-making starts from the per-node unary argmax.
pub fn predict(
    params: &ParameterVector,
    dataset: &Dataset,
    tier: OracleTier,
    config: &OracleConfig,
) -> Result<Vec<Labeling>> {
    let (m, d) = (params.layout(), dataset.layout());
    if m != d {
        return Err(Error::DimensionMismatch {
            what: "model parameter dimension",
            expected: d.dim(),
            found: m.dim(),
        });
    }
    dataset
        .samples()
        .iter()
        .map(|s| {
            let pot = Potentials::from_model(&s.instance, params)?;
            let init = Labeling::new(
                (0..pot.node_count())
                    .map(|n| {
                        let t = pot.node_table(n);
                        (0..t.len()).fold(0, |b, k| if t[k] > t[b] { k } else { b })
                    })
                    .collect(),
            );
            let r = solve_tier(&pot, tier, &init, &[], config)?;
            Ok(r.labeling.unwrap_or(init))
        })
        .collect()
}

pub fn evaluate(
    params: &ParameterVector,
    dataset: &Dataset,
    tier: OracleTier,
    config: &OracleConfig,
) -> Result<Metrics> {
    let preds = predict(params, dataset, tier, config)?;
    let pairs: Vec<_> = dataset.samples().iter().zip(&preds).map(|(s, p)| (&s.truth, p)).collect();
    Metrics::from_labelings(dataset.layout().num_labels, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let t = Labeling::new(vec![0, 1, 1, 2]);
        let m = Metrics::from_labelings(4, &[(&t, &t)]).unwrap();
        assert_eq!(m.global_accuracy, 1.0);
        assert_eq!(m.mean_class_accuracy, 1.0);
        assert_eq!(m.jaccard, vec![Some(1.0), Some(1.0), Some(1.0), None]);
        assert_eq!(m.class_accuracy[3], None);
    }

    #[test]
    fn constant_prediction_on_balanced_data() {
        let t = Labeling::new(vec![0, 1, 0, 1]);
        let p = Labeling::uniform(4, 0);
        let m = Metrics::from_labelings(2, &[(&t, &p)]).unwrap();
        assert_eq!(m.global_accuracy, 0.5);
        assert_eq!(m.class_accuracy, vec![Some(1.0), Some(0.0)]);
        assert_eq!(m.mean_class_accuracy, 0.5);
        assert_eq!(m.jaccard, vec![Some(0.5), Some(0.0)]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let t = Labeling::new(vec![0, 1]);
        let p = Labeling::new(vec![0]);
        assert!(Metrics::from_labelings(2, &[(&t, &p)]).is_err());
    }
}
