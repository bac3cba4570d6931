//! Closed-form convolutional dictionary update.
//!
//! With codes fixed, each template solves a linear least-squares problem in
//! its `L` samples. An occurrence of atom `(c, k)` at lag `n` contributes the
//! operator `S_n F^k`: the sinc shift followed by zero-padded placement. The
//! normal equations `A h = b` are accumulated window by window without ever
//! forming a `W x L` matrix, then solved and renormalized. Templates are
//! refreshed one at a time; later templates see the already-updated earlier
//! ones when their residual targets are formed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csc::{CodeEvent, SparseCode};
use crate::error::{Error, Result};
use crate::interp::{expand_dictionary, InterpolatedDictionary};
use crate::signal_model::{Dictionary, Template, WindowedSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CduMode {
    /// Exact least squares, including cross terms between different
    /// sub-grid variants of overlapping occurrences.
    #[default]
    Full,
    /// Only cross terms between occurrences with the same sub-grid index.
    Literal,
}

/// One occurrence of a template inside a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftPlacement {
    pub window: usize,
    pub source: usize,
    pub k: usize,
    pub n: usize,
    /// Amplitude on the unnormalized operator `F^k`, i.e. the code
    /// amplitude divided by `||F^k h||`.
    pub amplitude: f64,
}

impl ShiftPlacement {
    pub fn from_event(event: &CodeEvent, window: usize, bank: &InterpolatedDictionary) -> Self {
        Self {
            window,
            source: event.c,
            k: event.k,
            n: event.n,
            amplitude: event.amplitude / bank.pre_norm(event.c, event.k),
        }
    }
}

/// Placements of `source` in one window's code.
pub fn placements_for(code: &SparseCode, source: usize, bank: &InterpolatedDictionary) -> Vec<ShiftPlacement> {
    code.events.iter().filter(|e| e.c == source).map(|e| ShiftPlacement::from_event(e, code.window, bank)).collect()
}

/// Sinc shift matrices `F^k` and their Gram matrices `F^kT F^k`.
#[derive(Debug, Clone)]
pub struct ShiftOperators {
    shifts: Vec<DMatrix<f64>>,
    grams: Vec<DMatrix<f64>>,
}

impl ShiftOperators {
    pub fn new(bank: &InterpolatedDictionary) -> Self {
        let shifts: Vec<DMatrix<f64>> = (0..bank.k_factor()).map(|k| bank.interp_matrix(k).matrix().clone()).collect();
        let grams = shifts
            .iter()
            .map(|f| {
                let g = f.transpose() * f;
                (&g + g.transpose()) * 0.5
            })
            .collect();
        Self { shifts, grams }
    }

    pub fn template_len(&self) -> usize {
        self.shifts[0].nrows()
    }

    pub fn k_factor(&self) -> usize {
        self.shifts.len()
    }
}

/// Normal-equation terms `A` (`L x L`) and `b` (`L`) for one template.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateAccumulator {
    pub source: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub count: usize,
}

impl UpdateAccumulator {
    pub fn new(source: usize, len: usize) -> Self {
        Self { source, a: DMatrix::zeros(len, len), b: DVector::zeros(len), count: 0 }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        self.a += &other.a;
        self.b += &other.b;
        self.count += other.count;
        self
    }
}

/// `E_j`: the window minus every coded occurrence of sources other than
/// `exclude`, all sub-grid variants included.
pub fn compute_residual_ej(y: &[f64], code: &SparseCode, bank: &InterpolatedDictionary, exclude: usize) -> Vec<f64> {
    let mut e = y.to_vec();
    for ev in code.events.iter().filter(|ev| ev.c != exclude) {
        for (v, h) in e[ev.n..].iter_mut().zip(bank.atom(ev.c, ev.k)) {
            *v -= ev.amplitude * h;
        }
    }
    e
}

/// Adds one window's occurrences of `acc.source` to the normal equations.
pub fn accumulate_update(
    acc: &mut UpdateAccumulator,
    placements: &[ShiftPlacement],
    e_j: &[f64],
    ops: &ShiftOperators,
    mode: CduMode,
) -> Result<()> {
    let len = ops.template_len();
    for p in placements {
        if p.source != acc.source {
            return Err(Error::InvalidArgument(format!(
                "placement of source {} given to the accumulator of source {}",
                p.source, acc.source
            )));
        }
        if p.k >= ops.k_factor() || p.n + len > e_j.len() {
            return Err(Error::InvalidArgument(format!("placement {p:?} out of range")));
        }
    }

    for (i, p) in placements.iter().enumerate() {
        acc.a += &ops.grams[p.k] * (p.amplitude * p.amplitude);
        let segment = DVector::from_column_slice(&e_j[p.n..p.n + len]);
        acc.b += ops.shifts[p.k].tr_mul(&segment) * p.amplitude;

        for q in &placements[i + 1..] {
            if mode == CduMode::Literal && q.k != p.k {
                continue;
            }
            // (S_p)^T S_q pairs row a of the p block with row a + n_p - n_q of the q block.
            let d = p.n as isize - q.n as isize;
            if d.unsigned_abs() >= len {
                continue;
            }
            let first = (-d).max(0) as usize;
            let rows = len - d.unsigned_abs();
            let fp = ops.shifts[p.k].rows(first, rows);
            let fq = ops.shifts[q.k].rows((first as isize + d) as usize, rows);
            let cross = fp.tr_mul(&fq) * (p.amplitude * q.amplitude);
            acc.a += &cross + cross.transpose();
        }
    }
    acc.count += placements.len();
    Ok(())
}

/// Solves `A h = b` and normalizes. A ridge of `1e-8 tr(A)/L` is added when
/// `A` is numerically singular.
pub fn solve_template(acc: &UpdateAccumulator) -> Result<Template> {
    if acc.count == 0 {
        return Err(Error::TemplateUnused(acc.source));
    }
    let len = acc.a.nrows();
    let scale = acc.a.trace() / len as f64;
    if !(scale > 0.0) {
        return Err(Error::SingularGram);
    }
    let well_posed = |m: &DMatrix<f64>| {
        m.clone().cholesky().filter(|ch| {
            let min_pivot = ch.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &v| a.min(v * v));
            min_pivot >= 1e-10 * scale
        })
    };
    let chol = match well_posed(&acc.a) {
        Some(ch) => ch,
        None => {
            log::debug!("template {}: adding ridge to a near-singular system", acc.source);
            let ridged = &acc.a + DMatrix::identity(len, len) * (1e-8 * scale);
            ridged.cholesky().ok_or(Error::SingularGram)?
        }
    };
    let h = chol.solve(&acc.b);
    Template::from_unnormalized(h.as_slice().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CduOutcome {
    pub dictionary: Dictionary,
    /// Sources without any occurrence; their templates were kept.
    pub unused: Vec<usize>,
}

const REDUCE_CHUNK: usize = 8;

/// One sequential pass over all templates. `codes[j]` must be the code of
/// window `j`, produced against the `K`-expansion of `dict`.
pub fn cdu_pass(
    signal: &WindowedSignal,
    codes: &[SparseCode],
    dict: &Dictionary,
    k_factor: usize,
    mode: CduMode,
) -> Result<CduOutcome> {
    if codes.len() != signal.num_windows() {
        return Err(Error::InvalidArgument(format!("{} codes for {} windows", codes.len(), signal.num_windows())));
    }
    if let Some((j, _)) = codes.iter().enumerate().find(|(j, c)| c.window != *j) {
        return Err(Error::InvalidArgument(format!("code at position {j} is not for window {j}")));
    }
    let mut bank = expand_dictionary(dict, k_factor)?;
    let ops = ShiftOperators::new(&bank);
    let len = dict.template_len();
    let mut unused = Vec::new();

    for source in 0..dict.num_sources() {
        let acc = {
            let bank = &bank;
            let ops = &ops;
            // Fixed chunks reduced in order keep the float sums independent
            // of the thread count.
            let partials = codes
                .par_chunks(REDUCE_CHUNK)
                .map(|chunk| -> Result<UpdateAccumulator> {
                    let mut acc = UpdateAccumulator::new(source, len);
                    for code in chunk.iter().filter(|code| code.events.iter().any(|e| e.c == source)) {
                        let e_j = compute_residual_ej(signal.window(code.window), code, bank, source);
                        let placements = placements_for(code, source, bank);
                        accumulate_update(&mut acc, &placements, &e_j, ops, mode)?;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?;
            partials.iter().fold(UpdateAccumulator::new(source, len), |a, b| a.merge(b))
        };
        match solve_template(&acc) {
            Ok(h) => bank.replace_template(source, h)?,
            Err(Error::TemplateUnused(c)) => unused.push(c),
            Err(e) => return Err(e),
        }
    }
    Ok(CduOutcome { dictionary: bank.base().clone(), unused })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csc::StopReason;
    use crate::signal_model::{gamma_tone_dictionary, GammaTone};
    use approx::assert_abs_diff_eq;

    fn code(window: usize, events: Vec<CodeEvent>) -> SparseCode {
        SparseCode { window, events, residual_norm: 0.0, stop: StopReason::MaxEvents }
    }

    fn ev(c: usize, k: usize, n: usize, amplitude: f64) -> CodeEvent {
        CodeEvent { c, k, n, amplitude }
    }

    #[test]
    fn single_and_disjoint_placements() {
        let d = gamma_tone_dictionary(&[GammaTone::One], 1e4, 5).unwrap();
        let bank = expand_dictionary(&d, 1).unwrap();
        let ops = ShiftOperators::new(&bank);
        let e: Vec<f64> = (0..20).map(f64::from).collect();

        let mut acc = UpdateAccumulator::new(0, 5);
        let p = placements_for(&code(0, vec![ev(0, 0, 3, 1.0)]), 0, &bank);
        accumulate_update(&mut acc, &p, &e, &ops, CduMode::Full).unwrap();
        assert_eq!(acc.a, DMatrix::identity(5, 5));
        assert_eq!(acc.b.as_slice(), &e[3..8]);

        let mut acc = UpdateAccumulator::new(0, 5);
        let p = placements_for(&code(0, vec![ev(0, 0, 1, 1.0), ev(0, 0, 9, 2.0)]), 0, &bank);
        accumulate_update(&mut acc, &p, &e, &ops, CduMode::Full).unwrap();
        assert_eq!(acc.a, DMatrix::identity(5, 5) * 5.0);
        for i in 0..5 {
            assert_abs_diff_eq!(acc.b[i], e[1 + i] + 2.0 * e[9 + i]);
        }
    }

    #[test]
    fn residual_excludes_only_other_sources() {
        let d = gamma_tone_dictionary(&[GammaTone::One, GammaTone::Two], 1e4, 101).unwrap();
        let bank = expand_dictionary(&d, 1).unwrap();
        let y: Vec<f64> = (0..300).map(|i| (i as f64 * 0.1).sin()).collect();
        let only_self = code(0, vec![ev(0, 0, 10, 1.0)]);
        assert_eq!(compute_residual_ej(&y, &only_self, &bank, 0), y);

        let mut clean = vec![0.0; 300];
        for (i, h) in bank.atom(0, 0).iter().enumerate() {
            clean[10 + i] += 1.5 * h;
        }
        let mut y = clean.clone();
        for (i, h) in bank.atom(1, 0).iter().enumerate() {
            y[150 + i] -= 0.7 * h;
        }
        let both = code(0, vec![ev(0, 0, 10, 1.5), ev(1, 0, 150, -0.7)]);
        let e = compute_residual_ej(&y, &both, &bank, 0);
        for (a, b) in e.iter().zip(&clean) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn unused_template_signals() {
        let acc = UpdateAccumulator::new(3, 5);
        assert!(matches!(solve_template(&acc), Err(Error::TemplateUnused(3))));
    }

    #[test]
    fn two_disjoint_noiseless_occurrences_recover_template() {
        let d = gamma_tone_dictionary(&[GammaTone::Two], 1e4, 101).unwrap();
        let bank = expand_dictionary(&d, 1).unwrap();
        let ops = ShiftOperators::new(&bank);
        let h = bank.atom(0, 0);
        let mut y = vec![0.0; 400];
        for (i, v) in h.iter().enumerate() {
            y[20 + i] += v;
            y[250 + i] += 2.0 * v;
        }
        let c = code(0, vec![ev(0, 0, 20, 1.0), ev(0, 0, 250, 2.0)]);
        let mut acc = UpdateAccumulator::new(0, 101);
        accumulate_update(&mut acc, &placements_for(&c, 0, &bank), &y, &ops, CduMode::Full).unwrap();
        for (b, v) in acc.b.iter().zip(h) {
            assert_abs_diff_eq!(*b, 5.0 * v, epsilon = 1e-14);
        }
        let t = solve_template(&acc).unwrap();
        for (a, b) in t.samples().iter().zip(h) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_system_gets_ridge() {
        let mut acc = UpdateAccumulator::new(0, 3);
        acc.a[(0, 0)] = 1.0;
        acc.b[0] = 2.0;
        acc.count = 1;
        let t = solve_template(&acc).unwrap();
        assert_abs_diff_eq!(t.samples()[0], 1.0, epsilon = 1e-12);
    }
}
