use serde::{Deserialize, Serialize};

/// Default relative tolerance for parameter equality and vanishing checks.
pub const TAU_EQ: f64 = 1e-8;
/// Absolute floor under every threshold.
pub const TAU_FLOOR: f64 = 1e-10;

/// Threshold policy for "is this log-scale quantity zero" decisions.
///
/// A residual is zero when it falls below `eq * max(1, scale)` (never below
/// `floor`), times the number of terms in the alternating sum that produced
/// it. `scale` is the magnitude of the log-probabilities involved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub eq: f64,
    pub floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            eq: TAU_EQ,
            floor: TAU_FLOOR,
        }
    }
}

impl Tolerance {
    pub fn with_eq(eq: f64) -> Self {
        Tolerance {
            eq,
            ..Tolerance::default()
        }
    }

    pub fn threshold(&self, scale: f64) -> f64 {
        (self.eq * scale.max(1.0)).max(self.floor)
    }

    /// Threshold for an alternating sum with `terms` summands.
    pub fn for_terms(&self, scale: f64, terms: usize) -> f64 {
        self.threshold(scale) * terms.max(1) as f64
    }
}

/// A residual together with the threshold it was judged against.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Judged {
    pub residual: f64,
    pub threshold: f64,
}

impl Judged {
    pub fn new(residual: f64, threshold: f64) -> Self {
        Judged {
            residual,
            threshold,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.residual < self.threshold
    }

    fn clearly_nonzero(&self) -> bool {
        self.residual > 10.0 * self.threshold
    }
}

/// Two routes to the same verdict contradict each other when one is zero and
/// the other is more than ten thresholds away from zero. Disagreements inside
/// that band are boundary cases, not engine faults.
pub(crate) fn contradicts(a: Judged, b: Judged) -> bool {
    (a.is_zero() && b.clearly_nonzero()) || (b.is_zero() && a.clearly_nonzero())
}
