//! Lower/upper bounds on the training objective and their per-iteration trace.
//!
//! With only feasible constraints in the working set, the restricted optimum
//! o_W is a lower bound on the true optimum. The primal estimate
//! o^I = Cξ′ + ½‖θ‖² is an upper bound only when ξ′ comes from an exact (or
//! over-generating) oracle; under-generating estimates are recorded but never
//! used as bounds.

use serde::{Deserialize, Serialize};

use super::schedule::Tier;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub tier: Tier,
    /// Restricted objective at the θ the constraint was generated for.
    pub o_w: f64,
    /// Cξ′ + ½‖θ‖² for the tier that ran.
    pub o_i: f64,
    pub oracle_calls_cumulative: usize,
    pub wall_ms: u64,
}

/// Receives trace rows as training produces them.
pub trait TraceSink {
    fn record(&mut self, row: &TraceRow) -> Result<()>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    pub rows: Vec<TraceRow>,
}

impl BoundTrace {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Largest drop of o_W between consecutive rows (0 if none).
    pub fn max_o_w_decrease(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[0].o_w - w[1].o_w)
            .fold(0.0, f64::max)
    }
}

impl TraceSink for BoundTrace {
    fn record(&mut self, row: &TraceRow) -> Result<()> {
        self.rows.push(row.clone());
        Ok(())
    }
}

impl<T: TraceSink + ?Sized> TraceSink for &mut T {
    fn record(&mut self, row: &TraceRow) -> Result<()> {
        (**self).record(row)
    }
}

/// Discards rows.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _row: &TraceRow) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    /// Exact upper bound within the threshold of the lower bound.
    Certified,
    /// Exact upper bound available but the gap exceeds the threshold.
    GapTooLarge,
    /// No exact evaluation at the final parameters.
    Uncertified,
    /// The exact oracle ran out of budget; the upper bound is still valid.
    BudgetExhausted,
    /// Iteration limit reached before the ladder terminated.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lower_bound: f64,
    pub upper_bound: Option<f64>,
    pub gap: Option<f64>,
    pub epsilon: f64,
    /// Largest gap accepted as certified.
    pub threshold: f64,
    pub certified: bool,
    pub status: CertificateStatus,
}

/// Bounds at the final parameters.
///
/// `o_w` is the restricted objective, `norm_sq` is ‖θ‖², and
/// `exact_xi_upper` is an upper bound on the exact ξ′ at θ if one was
/// computed. Certified iff the gap is at most `threshold`.
pub fn compute_bounds(
    o_w: f64,
    norm_sq: f64,
    c: f64,
    exact_xi_upper: Option<f64>,
    epsilon: f64,
    threshold: f64,
) -> Certificate {
    match exact_xi_upper {
        None => Certificate {
            lower_bound: o_w,
            upper_bound: None,
            gap: None,
            epsilon,
            threshold,
            certified: false,
            status: CertificateStatus::Uncertified,
        },
        Some(xi) => {
            let upper = c * xi.max(0.0) + 0.5 * norm_sq;
            let gap = upper - o_w;
            let certified = gap <= threshold;
            Certificate {
                lower_bound: o_w,
                upper_bound: Some(upper),
                gap: Some(gap),
                epsilon,
                threshold,
                certified,
                status: if certified {
                    CertificateStatus::Certified
                } else {
                    CertificateStatus::GapTooLarge
                },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_exact_evaluation_is_uncertified() {
        let c = compute_bounds(1.0, 0.5, 1.0, None, 1e-4, 1e-4);
        assert!(!c.certified);
        assert_eq!(c.status, CertificateStatus::Uncertified);
        assert_eq!(c.upper_bound, None);
    }

    #[test]
    fn zero_theta_upper_is_loss_dominated() {
        // θ = 0 and an exact oracle sees ξ′ = total node count
        let c = compute_bounds(0.0, 0.0, 2.0, Some(7.0), 1e-4, 1e-4);
        assert_eq!(c.lower_bound, 0.0);
        assert_eq!(c.upper_bound, Some(14.0));
        assert!(!c.certified);
        assert_eq!(c.status, CertificateStatus::GapTooLarge);
    }

    #[test]
    fn tight_bounds_certify() {
        let c = compute_bounds(3.0, 4.0, 1.0, Some(1.0 + 5e-5), 1e-4, 1e-4);
        assert!(c.certified);
        assert!((c.gap.unwrap() - 5e-5).abs() < 1e-12);
    }

    #[test]
    fn decrease_detection() {
        let row = |i, o_w| TraceRow {
            iteration: i,
            tier: Tier::Exact,
            o_w,
            o_i: 0.0,
            oracle_calls_cumulative: i,
            wall_ms: 0,
        };
        let t = BoundTrace {
            rows: vec![row(1, 0.0), row(2, 1.0), row(3, 0.5), row(4, 2.0)],
        };
        assert_eq!(t.max_o_w_decrease(), 0.5);
    }
}
