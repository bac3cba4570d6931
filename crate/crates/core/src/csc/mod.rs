//! Convolutional sparse coding of a single window by greedy pursuit.
//!
//! [`comp_interp`] is convolutional OMP over an interpolated bank (with
//! `K = 1` it is plain COMP). Selection correlates the residual with every
//! atom; projection grows a Cholesky factor of the active Gram matrix one
//! row at a time. [`cmp`] and [`comp_slow`] are the matching-pursuit and
//! dense-projection baselines, and [`dense_omp_oracle`] is a textbook OMP on
//! an explicit dictionary matrix used to check the others.

mod cholesky;
mod oracle;
mod pursuit;
mod select;

pub use cholesky::{cholesky_extend, gram_entry, solve_coefficients, update_residual, ActiveSet, CholeskyState};
pub use oracle::{dense_omp_oracle, DenseLayout, MAX_ORACLE_WINDOW};
pub use pursuit::{cmp, code_windows, comp_interp, comp_interp_observed, comp_slow, IterationView, Solver};
pub use select::{select_atom, CorrelationMap, CorrelationMethod, Correlator, Selection};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An atom placed in a window: template `c`, sub-grid shift `k`, lag `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActiveAtom {
    pub c: usize,
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Maximize `|<atom, r>|`.
    #[default]
    Absolute,
    /// Maximize `<atom, r>`; only positive amplitudes are sought.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEvents,
    ResidualThreshold,
    ZeroResidual,
    /// No remaining candidate has a positive score.
    NoCandidate,
    /// Every retried candidate was linearly dependent on the active set.
    CandidatesRejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeEvent {
    pub c: usize,
    pub k: usize,
    pub n: usize,
    pub amplitude: f64,
}

impl CodeEvent {
    pub fn atom(&self) -> ActiveAtom {
        ActiveAtom { c: self.c, k: self.k, n: self.n }
    }
}

/// Code of one window, events in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    pub window: usize,
    pub events: Vec<CodeEvent>,
    pub residual_norm: f64,
    pub stop: StopReason,
}

impl SparseCode {
    /// Sum of the placed, scaled atoms.
    pub fn reconstruct(&self, bank: &crate::interp::InterpolatedDictionary, window_len: usize) -> Vec<f64> {
        let mut out = vec![0.0; window_len];
        for e in &self.events {
            for (o, h) in out[e.n..].iter_mut().zip(bank.atom(e.c, e.k)) {
                *o += e.amplitude * h;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CscConfig {
    /// Sub-grid refinement the bank was built with.
    pub k_factor: usize,
    /// Sparsity cap per window.
    pub max_events: Option<usize>,
    /// Stop once `||r||_2 <= threshold`.
    pub residual_threshold: Option<f64>,
    pub selection: SelectionMode,
    pub correlation: CorrelationMethod,
    /// Smallest admissible squared Cholesky pivot.
    pub pivot_floor: f64,
    /// Next-best candidates tried after a linear-dependence rejection.
    pub max_rejections: usize,
}

impl Default for CscConfig {
    fn default() -> Self {
        Self {
            k_factor: 1,
            max_events: None,
            residual_threshold: Some(1e-8),
            selection: SelectionMode::Absolute,
            correlation: CorrelationMethod::Fft,
            pivot_floor: 1e-12,
            max_rejections: 10,
        }
    }
}

impl CscConfig {
    pub fn with_k(k_factor: usize) -> Self {
        Self { k_factor, ..Self::default() }
    }

    pub fn max_events(mut self, max: usize) -> Self {
        self.max_events = Some(max);
        self
    }

    pub fn residual_threshold(mut self, threshold: Option<f64>) -> Self {
        self.residual_threshold = threshold;
        self
    }

    pub fn selection(mut self, mode: SelectionMode) -> Self {
        self.selection = mode;
        self
    }

    pub fn correlation(mut self, method: CorrelationMethod) -> Self {
        self.correlation = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_factor == 0 {
            return Err(Error::Config("csc.k_factor must be at least 1".into()));
        }
        if self.max_events.is_none() && self.residual_threshold.is_none() {
            return Err(Error::Config("csc needs max_events or residual_threshold".into()));
        }
        if let Some(t) = self.residual_threshold {
            if !(t >= 0.0) {
                return Err(Error::Config("csc.residual_threshold must be non-negative".into()));
            }
        }
        if !(self.pivot_floor > 0.0) {
            return Err(Error::Config("csc.pivot_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Pursuit algorithm; `Comp` over a `K > 1` bank is COMP-INTERP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Cmp,
    Comp,
    CompSlow,
}

/// Pursuit method as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cmp")]
    Cmp,
    #[serde(rename = "comp")]
    Comp,
    #[serde(rename = "comp-slow", alias = "comp_slow")]
    CompSlow,
    #[serde(rename = "comp-interp", alias = "comp_interp")]
    CompInterp,
}

impl Method {
    pub const ALL: [Method; 4] = [Self::Cmp, Self::Comp, Self::CompSlow, Self::CompInterp];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Cmp => "cmp",
            Self::Comp => "comp",
            Self::CompSlow => "comp-slow",
            Self::CompInterp => "comp-interp",
        }
    }

    pub fn algorithm(self) -> Algorithm {
        match self {
            Self::Cmp => Algorithm::Cmp,
            Self::Comp | Self::CompInterp => Algorithm::Comp,
            Self::CompSlow => Algorithm::CompSlow,
        }
    }

    /// `K` used by this method; only COMP-INTERP interpolates.
    pub fn k_factor(self, k_interp: usize) -> usize {
        match self {
            Self::CompInterp => k_interp,
            _ => 1,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cmp" => Ok(Self::Cmp),
            "comp" => Ok(Self::Comp),
            "comp-slow" | "comp_slow" => Ok(Self::CompSlow),
            "comp-interp" | "comp_interp" => Ok(Self::CompInterp),
            "cbp" => Err(Error::UnsupportedMethod("cbp (continuous basis pursuit) is not implemented".into())),
            other => Err(Error::UnsupportedMethod(other.into())),
        }
    }
}
