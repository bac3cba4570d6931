//! Sub-sample template shifts by truncated bandlimited interpolation.
//!
//! A template delayed by `k/K` of a sample is obtained by convolving it with
//! the sinc kernel `f^k[n] = sinc(n - k/K)` restricted to
//! `n in [-(L-1)/2, (L-1)/2]` and keeping the central `L` outputs. The
//! interpolated atoms are renormalized to unit norm; the norms before
//! renormalization are kept because the dictionary update needs them to map
//! code amplitudes back onto the unnormalized operator `F^k`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::signal_model::{l2_norm, Dictionary, Template};

/// Normalized sinc, exact at integer arguments.
pub fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else if u.fract() == 0.0 {
        0.0
    } else {
        let x = std::f64::consts::PI * u;
        x.sin() / x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSinc {
    pub k: usize,
    pub k_factor: usize,
    /// `taps[i]` is `f^k[i - (L-1)/2]`.
    pub taps: Vec<f64>,
}

impl ShiftedSinc {
    pub fn half_len(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// `f^k[n]`, zero outside the truncated support.
    pub fn tap(&self, n: isize) -> f64 {
        let idx = n + self.half_len() as isize;
        if idx < 0 || idx as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[idx as usize]
        }
    }
}

fn check_shift(k: usize, k_factor: usize, len: usize) -> Result<()> {
    if k_factor == 0 {
        return Err(Error::InvalidArgument("refinement factor K must be at least 1".into()));
    }
    if k >= k_factor {
        return Err(Error::SubGridIndex { k, k_factor });
    }
    if len.is_multiple_of(2) {
        return Err(Error::EvenTemplateLength(len));
    }
    Ok(())
}

pub fn build_shifted_sinc(k: usize, k_factor: usize, len: usize) -> Result<ShiftedSinc> {
    check_shift(k, k_factor, len)?;
    let half = (len as isize - 1) / 2;
    let frac = k as f64 / k_factor as f64;
    let taps = (-half..=half).map(|n| if k == 0 { f64::from(n == 0) } else { sinc(n as f64 - frac) }).collect();
    Ok(ShiftedSinc { k, k_factor, taps })
}

/// The `L x L` Toeplitz matrix with entry `(r, c) = f^k[r - c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpMatrix {
    pub k: usize,
    pub k_factor: usize,
    entries: DMatrix<f64>,
}

impl InterpMatrix {
    fn identity(len: usize, k_factor: usize) -> Self {
        Self { k: 0, k_factor, entries: DMatrix::identity(len, len) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let len = self.len();
        (0..len).map(|r| (0..len).map(|c| self.entries[(r, c)] * h[c]).sum()).collect()
    }
}

pub fn build_interp_matrix(k: usize, k_factor: usize, len: usize) -> Result<InterpMatrix> {
    let sinc = build_shifted_sinc(k, k_factor, len)?;
    let entries = DMatrix::from_fn(len, len, |r, c| sinc.tap(r as isize - c as isize));
    Ok(InterpMatrix { k, k_factor, entries })
}

/// `F^k h` before renormalization.
pub fn shift_template_raw(h: &[f64], k: usize, k_factor: usize) -> Result<Vec<f64>> {
    check_shift(k, k_factor, h.len())?;
    if k == 0 {
        return Ok(h.to_vec());
    }
    let sinc = build_shifted_sinc(k, k_factor, h.len())?;
    let len = h.len() as isize;
    Ok((0..len).map(|r| (0..len).map(|c| sinc.tap(r - c) * h[c as usize]).sum()).collect())
}

/// Template delayed by `k/K` samples and renormalized; `k = 0` is the identity.
pub fn interpolate_template(h: &Template, k: usize, k_factor: usize) -> Result<Template> {
    if k == 0 && k_factor > 0 {
        return Ok(h.clone());
    }
    Template::from_unnormalized(shift_template_raw(h.samples(), k, k_factor)?)
}

/// Bank of `C x K` atoms; atom `(c, k)` is template `c` delayed by `k/K`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedDictionary {
    base: Dictionary,
    k_factor: usize,
    atoms: Vec<Template>,
    pre_norms: Vec<f64>,
    matrices: Vec<InterpMatrix>,
}

pub fn expand_dictionary(dict: &Dictionary, k_factor: usize) -> Result<InterpolatedDictionary> {
    if k_factor == 0 {
        return Err(Error::InvalidArgument("refinement factor K must be at least 1".into()));
    }
    let len = dict.template_len();
    let matrices = if k_factor == 1 {
        vec![InterpMatrix::identity(len, 1)]
    } else {
        let mut m = vec![InterpMatrix::identity(len, k_factor)];
        for k in 1..k_factor {
            m.push(build_interp_matrix(k, k_factor, len)?);
        }
        m
    };
    let mut bank = InterpolatedDictionary {
        base: dict.clone(),
        k_factor,
        atoms: Vec::with_capacity(dict.num_sources() * k_factor),
        pre_norms: Vec::with_capacity(dict.num_sources() * k_factor),
        matrices,
    };
    for c in 0..dict.num_sources() {
        for k in 0..k_factor {
            let (atom, norm) = bank.shifted(c, k)?;
            bank.atoms.push(atom);
            bank.pre_norms.push(norm);
        }
    }
    Ok(bank)
}

impl InterpolatedDictionary {
    fn shifted(&self, c: usize, k: usize) -> Result<(Template, f64)> {
        let h = self.base.template(c);
        if k == 0 {
            return Ok((h.clone(), 1.0));
        }
        let raw = self.matrices[k].apply(h.samples());
        let norm = l2_norm(&raw);
        Ok((Template::from_unnormalized(raw)?, norm))
    }

    pub fn base(&self) -> &Dictionary {
        &self.base
    }

    pub fn k_factor(&self) -> usize {
        self.k_factor
    }

    pub fn num_sources(&self) -> usize {
        self.base.num_sources()
    }

    pub fn template_len(&self) -> usize {
        self.base.template_len()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom(&self, c: usize, k: usize) -> &[f64] {
        self.atoms[c * self.k_factor + k].samples()
    }

    /// `||F^k h_c||` before renormalization.
    pub fn pre_norm(&self, c: usize, k: usize) -> f64 {
        self.pre_norms[c * self.k_factor + k]
    }

    pub fn interp_matrix(&self, k: usize) -> &InterpMatrix {
        &self.matrices[k]
    }

    /// Replaces base template `c` and re-derives its `K` shifted atoms.
    pub fn replace_template(&mut self, c: usize, template: Template) -> Result<()> {
        if template.len() != self.template_len() {
            return Err(Error::InvalidArgument("replacement template has the wrong length".into()));
        }
        self.base.replace(c, template);
        for k in 0..self.k_factor {
            let (atom, norm) = self.shifted(c, k)?;
            self.atoms[c * self.k_factor + k] = atom;
            self.pre_norms[c * self.k_factor + k] = norm;
        }
        Ok(())
    }
}

/// Dense `W x CK(W-L+1)` interpolated dictionary with column
/// `(c*K + k)*(W-L+1) + n`. Oracle use only.
pub fn build_dense_interp_toeplitz(bank: &InterpolatedDictionary, window_len: usize) -> Result<DMatrix<f64>> {
    let len = bank.template_len();
    if window_len < len {
        return Err(Error::WindowTooShort { window: window_len, template: len });
    }
    let lags = window_len - len + 1;
    let k_factor = bank.k_factor();
    let mut h = DMatrix::zeros(window_len, bank.num_atoms() * lags);
    for c in 0..bank.num_sources() {
        for k in 0..k_factor {
            let atom = bank.atom(c, k);
            for n in 0..lags {
                let col = (c * k_factor + k) * lags + n;
                for (m, &v) in atom.iter().enumerate() {
                    h[(n + m, col)] = v;
                }
            }
        }
    }
    Ok(h)
}
