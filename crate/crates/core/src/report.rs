//! Pass/fail rows shared by the verification reports.

use serde::{Deserialize, Serialize};

/// One verified quantity: either an inequality `lhs ≤ rhs` or a residual
/// `lhs` compared against the tolerance `rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl CheckRow {
    /// `lhs ≤ rhs · (1 + slack)`.
    pub fn bound(id: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        let ratio = ratio(lhs, rhs);
        CheckRow {
            id: id.into(),
            lhs,
            rhs,
            ratio,
            pass: lhs.is_finite() && lhs <= rhs * (1.0 + slack),
        }
    }

    /// `|lhs − rhs| ≤ tol · max(|rhs|, tiny)`; the ratio column holds `lhs/rhs`.
    pub fn equality(id: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        CheckRow {
            id: id.into(),
            lhs,
            rhs,
            ratio: ratio(lhs, rhs),
            pass: (lhs - rhs).abs() <= tol * rhs.abs().max(f64::MIN_POSITIVE),
        }
    }

    /// A residual that must not exceed `tol`.
    pub fn residual(id: impl Into<String>, value: f64, tol: f64) -> Self {
        CheckRow {
            id: id.into(),
            lhs: value,
            rhs: tol,
            ratio: ratio(value, tol),
            pass: value.is_finite() && value <= tol,
        }
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs != 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn all_pass(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

pub fn failures(rows: &[CheckRow]) -> Vec<&CheckRow> {
    rows.iter().filter(|r| !r.pass).collect()
}
