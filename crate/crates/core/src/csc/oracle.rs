//! Textbook OMP on an explicit dictionary matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signal_model::l2_norm;

use super::{CodeEvent, SelectionMode, SparseCode, StopReason};

pub const MAX_ORACLE_WINDOW: usize = 1024;

/// How dense columns map back to atoms: column `(c*K + k)*lags + n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayout {
    pub num_sources: usize,
    pub k_factor: usize,
    pub lags: usize,
}

/// OMP with a fresh normal-equations solve every iteration.
pub fn dense_omp_oracle(
    y: &[f64],
    dictionary: &DMatrix<f64>,
    layout: DenseLayout,
    mode: SelectionMode,
    max_events: Option<usize>,
    residual_threshold: Option<f64>,
) -> Result<SparseCode> {
    if y.len() > MAX_ORACLE_WINDOW {
        return Err(Error::InvalidArgument(format!("dense oracle limited to windows of {MAX_ORACLE_WINDOW} samples")));
    }
    if dictionary.nrows() != y.len() || dictionary.ncols() != layout.num_sources * layout.k_factor * layout.lags {
        return Err(Error::InvalidArgument("dictionary shape does not match layout".into()));
    }
    let y_vec = DVector::from_column_slice(y);
    let mut residual = y_vec.clone();
    let mut support: Vec<usize> = Vec::new();
    let mut coefs = DVector::zeros(0);

    let stop = loop {
        if max_events.is_some_and(|m| support.len() >= m) {
            break StopReason::MaxEvents;
        }
        let norm = residual.norm();
        if residual_threshold.is_some_and(|t| norm <= t) {
            break StopReason::ResidualThreshold;
        }
        if norm == 0.0 {
            break StopReason::ZeroResidual;
        }
        let scores = dictionary.transpose() * &residual;
        let mut best: Option<(usize, f64)> = None;
        for (j, &v) in scores.iter().enumerate() {
            if support.contains(&j) {
                continue;
            }
            let s = match mode {
                SelectionMode::Absolute => v.abs(),
                SelectionMode::Positive => v,
            };
            if s > best.map_or(0.0, |b| b.1) {
                best = Some((j, s));
            }
        }
        let Some((j, _)) = best else {
            break StopReason::NoCandidate;
        };
        support.push(j);

        let sub = dictionary.select_columns(support.iter());
        let normal = sub.transpose() * &sub;
        let rhs = sub.transpose() * &y_vec;
        coefs = normal.lu().solve(&rhs).ok_or(Error::SingularGram)?;
        residual = &y_vec - &sub * &coefs;
    };

    let events = support
        .iter()
        .zip(coefs.iter())
        .map(|(&col, &amplitude)| {
            let block = col / layout.lags;
            CodeEvent { c: block / layout.k_factor, k: block % layout.k_factor, n: col % layout.lags, amplitude }
        })
        .collect();
    Ok(SparseCode { window: 0, events, residual_norm: l2_norm(residual.as_slice()), stop })
}
