//! Atom selection by cross-correlating the residual with every atom.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::InterpolatedDictionary;

use super::{ActiveAtom, SelectionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    /// Frequency-domain correlation, `O(W log W)` per atom.
    #[default]
    Fft,
    /// Sliding dot products, `O(W L)` per atom.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub atom: ActiveAtom,
    /// `|corr|` in absolute mode, `corr` in positive mode.
    pub score: f64,
    pub correlation: f64,
}

/// Correlations of one residual with all atoms at all valid lags, stored
/// atom-major: entry `(c*K + k) * lags + n`.
#[derive(Debug, Clone)]
pub struct CorrelationMap {
    pub lags: usize,
    pub k_factor: usize,
    pub values: Vec<f64>,
}

impl CorrelationMap {
    pub fn get(&self, atom: ActiveAtom) -> f64 {
        self.values[self.flat_index(atom)]
    }

    pub fn flat_index(&self, atom: ActiveAtom) -> usize {
        (atom.c * self.k_factor + atom.k) * self.lags + atom.n
    }

    fn atom_at(&self, idx: usize) -> ActiveAtom {
        let block = idx / self.lags;
        ActiveAtom { c: block / self.k_factor, k: block % self.k_factor, n: idx % self.lags }
    }

    /// Highest-scoring atom not in `excluded` (flat indices), lowest
    /// `(c, k, n)` on ties. `None` if no candidate has a positive score.
    pub fn best(&self, mode: SelectionMode, excluded: &[usize]) -> Option<Selection> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, &v) in self.values.iter().enumerate() {
            let score = match mode {
                SelectionMode::Absolute => v.abs(),
                SelectionMode::Positive => v,
            };
            let improves = match best {
                None => score > 0.0,
                Some((_, s)) => score > s,
            };
            if improves && !excluded.contains(&idx) {
                best = Some((idx, score));
            }
        }
        best.map(|(idx, score)| Selection { atom: self.atom_at(idx), score, correlation: self.values[idx] })
    }
}

struct FftPlan {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Conjugated atom spectra, one per atom.
    spectra: Vec<Vec<Complex<f64>>>,
}

/// Correlates residuals of a fixed window length against a fixed bank.
/// Immutable once built, so one instance serves concurrent windows.
pub struct Correlator<'a> {
    bank: &'a InterpolatedDictionary,
    window_len: usize,
    plan: Option<FftPlan>,
}

impl<'a> Correlator<'a> {
    pub fn new(bank: &'a InterpolatedDictionary, window_len: usize, method: CorrelationMethod) -> Result<Self> {
        let len = bank.template_len();
        if window_len < len {
            return Err(Error::WindowTooShort { window: window_len, template: len });
        }
        let plan = match method {
            CorrelationMethod::Direct => None,
            CorrelationMethod::Fft => {
                // Valid lags never wrap once the transform covers the window.
                let size = window_len.next_power_of_two();
                let mut planner = FftPlanner::new();
                let forward = planner.plan_fft_forward(size);
                let inverse = planner.plan_fft_inverse(size);
                let mut spectra = Vec::with_capacity(bank.num_atoms());
                for c in 0..bank.num_sources() {
                    for k in 0..bank.k_factor() {
                        let mut buf = vec![Complex::new(0.0, 0.0); size];
                        for (b, &v) in buf.iter_mut().zip(bank.atom(c, k)) {
                            b.re = v;
                        }
                        forward.process(&mut buf);
                        buf.iter_mut().for_each(|z| *z = z.conj());
                        spectra.push(buf);
                    }
                }
                Some(FftPlan { size, forward, inverse, spectra })
            }
        };
        Ok(Self { bank, window_len, plan })
    }

    pub fn bank(&self) -> &'a InterpolatedDictionary {
        self.bank
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn lags(&self) -> usize {
        self.window_len - self.bank.template_len() + 1
    }

    pub fn correlate(&self, residual: &[f64]) -> CorrelationMap {
        assert_eq!(residual.len(), self.window_len, "residual length mismatch");
        let lags = self.lags();
        let mut values = Vec::with_capacity(self.bank.num_atoms() * lags);
        match &self.plan {
            None => {
                for c in 0..self.bank.num_sources() {
                    for k in 0..self.bank.k_factor() {
                        let atom = self.bank.atom(c, k);
                        values.extend(
                            (0..lags).map(|n| atom.iter().zip(&residual[n..]).map(|(a, r)| a * r).sum::<f64>()),
                        );
                    }
                }
            }
            Some(plan) => {
                let mut spectrum = vec![Complex::new(0.0, 0.0); plan.size];
                for (s, &v) in spectrum.iter_mut().zip(residual) {
                    s.re = v;
                }
                plan.forward.process(&mut spectrum);
                let scale = 1.0 / plan.size as f64;
                let mut buf = vec![Complex::new(0.0, 0.0); plan.size];
                for atom_spec in &plan.spectra {
                    for ((b, s), a) in buf.iter_mut().zip(&spectrum).zip(atom_spec) {
                        *b = s * a;
                    }
                    plan.inverse.process(&mut buf);
                    values.extend(buf[..lags].iter().map(|z| z.re * scale));
                }
            }
        }
        CorrelationMap { lags, k_factor: self.bank.k_factor(), values }
    }
}

/// Best atom for `residual` over all `C*K` atoms and valid lags.
pub fn select_atom(residual: &[f64], bank: &InterpolatedDictionary, mode: SelectionMode) -> Result<Selection> {
    if residual.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroResidual);
    }
    let correlator = Correlator::new(bank, residual.len(), CorrelationMethod::Fft)?;
    correlator.correlate(residual).best(mode, &[]).ok_or(Error::ZeroResidual)
}
