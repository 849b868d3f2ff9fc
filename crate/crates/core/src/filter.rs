//! Low-pass filter weighting Hermite terms by total degree.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// `g(1-t) / (g(1-t) + g(t-1/2))` on the transition band, with
    /// `g(s) = exp(-1/s)` for `s > 0` and 0 otherwise.
    #[default]
    SmoothBump,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterKind::SmoothBump => f.write_str("smooth_bump"),
        }
    }
}

impl FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth_bump" => Ok(FilterKind::SmoothBump),
            other => Err(Error::invalid(format!("unknown filter kind '{other}'"))),
        }
    }
}

/// A C-infinity, non-increasing function on `[0, inf)` equal to 1 on
/// `[0, 1/2]` and 0 on `[1, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
}

impl FilterSpec {
    pub const PLATEAU_END: f64 = 0.5;
    pub const SUPPORT_END: f64 = 1.0;

    pub fn new(kind: FilterKind) -> Self {
        FilterSpec { kind }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite("filter argument"));
        }
        if t < 0.0 {
            return Err(Error::invalid(format!("filter argument must be >= 0, got {t}")));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            FilterKind::SmoothBump => smooth_bump(t),
        }
    }

    /// Weights `n^{-q} H(sqrt(t) / n)` for total degrees `t < n^2`.
    pub fn degree_weights(&self, n: usize, q: usize) -> Vec<f64> {
        let nf = n as f64;
        let norm = nf.powi(-(q as i32));
        (0..n * n)
            .map(|t| norm * self.eval_unchecked((t as f64).sqrt() / nf))
            .collect()
    }
}

fn bump_piece(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn smooth_bump(t: f64) -> f64 {
    if t <= FilterSpec::PLATEAU_END {
        1.0
    } else if t >= FilterSpec::SUPPORT_END {
        0.0
    } else {
        let up = bump_piece(1.0 - t);
        let down = bump_piece(t - 0.5);
        up / (up + down)
    }
}
