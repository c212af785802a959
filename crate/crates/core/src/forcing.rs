//! Bounded forcing coefficients `c(t)`.
//!
//! The same schedule type drives the curve flow coefficient, the radial
//! coefficient and the sphere-family coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingKind {
    Constant {
        value: f64,
    },
    /// Piecewise-linear through `(times[j], values[j])`, held constant outside.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

/// A forcing coefficient evaluable for every `t >= 0`, with its sup bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSchedule {
    kind: ForcingKind,
    bound: f64,
}

impl ForcingSchedule {
    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(FlowError::InvalidInput(format!(
                "forcing constant must be finite, got {value}"
            )));
        }
        Ok(Self {
            kind: ForcingKind::Constant { value },
            bound: value.abs(),
        })
    }

    /// The unforced schedule `c ≡ 0`.
    pub fn zero() -> Self {
        Self {
            kind: ForcingKind::Constant { value: 0.0 },
            bound: 0.0,
        }
    }

    pub fn table(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(FlowError::InvalidInput(format!(
                "forcing table needs matching non-empty columns (got {} times, {} values)",
                times.len(),
                values.len()
            )));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidInput(
                "forcing table contains non-finite entries".into(),
            ));
        }
        if let Some(j) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(FlowError::InvalidInput(format!(
                "forcing table times must be strictly increasing (row {} -> {})",
                j,
                j + 1
            )));
        }
        let bound = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self {
            kind: ForcingKind::Table { times, values },
            bound,
        })
    }

    pub fn kind(&self) -> &ForcingKind {
        &self.kind
    }

    /// `sup_t |c(t)|`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// True when `c(t) <= 0` for every `t`.
    pub fn is_non_positive(&self) -> bool {
        match &self.kind {
            ForcingKind::Constant { value } => *value <= 0.0,
            // linear interpolation between non-positive knots stays non-positive
            ForcingKind::Table { values, .. } => values.iter().all(|v| *v <= 0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bound == 0.0
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            ForcingKind::Constant { value } => *value,
            ForcingKind::Table { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[last] {
                    return values[last];
                }
                // first knot strictly greater than t
                let hi = times.partition_point(|&tj| tj <= t);
                let lo = hi - 1;
                let w = (t - times[lo]) / (times[hi] - times[lo]);
                values[lo] + w * (values[hi] - values[lo])
            }
        }
    }
}
