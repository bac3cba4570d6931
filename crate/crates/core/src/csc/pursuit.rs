use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::InterpolatedDictionary;
use crate::signal_model::{l2_norm, WindowedSignal};

use super::cholesky::{solve_coefficients, update_residual, ActiveSet, CholeskyState};
use super::select::Correlator;
use super::{Algorithm, CodeEvent, CscConfig, SparseCode, StopReason};

/// State after one accepted COMP iteration.
pub struct IterationView<'a> {
    pub active: &'a ActiveSet,
    pub factor: &'a CholeskyState,
    pub amplitudes: &'a [f64],
    pub residual: &'a [f64],
}

/// Pursuit solver bound to one bank and window length. Shareable across
/// threads; every call owns its own window state.
pub struct Solver<'a> {
    correlator: Correlator<'a>,
    config: CscConfig,
}

impl<'a> Solver<'a> {
    pub fn new(bank: &'a InterpolatedDictionary, window_len: usize, config: CscConfig) -> Result<Self> {
        config.validate()?;
        if bank.k_factor() != config.k_factor {
            return Err(Error::Config(format!(
                "bank was built with K = {} but csc.k_factor = {}",
                bank.k_factor(),
                config.k_factor
            )));
        }
        Ok(Self { correlator: Correlator::new(bank, window_len, config.correlation)?, config })
    }

    pub fn config(&self) -> &CscConfig {
        &self.config
    }

    fn bank(&self) -> &'a InterpolatedDictionary {
        self.correlator.bank()
    }

    fn check_window(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.correlator.window_len() {
            return Err(Error::InvalidArgument(format!(
                "window has {} samples, solver expects {}",
                y.len(),
                self.correlator.window_len()
            )));
        }
        Ok(())
    }

    /// Checks the stopping rules before the next selection.
    fn should_stop(&self, selected: usize, residual: &[f64], max_events: Option<usize>) -> Option<StopReason> {
        if max_events.is_some_and(|m| selected >= m) {
            return Some(StopReason::MaxEvents);
        }
        let norm = l2_norm(residual);
        if self.config.residual_threshold.is_some_and(|t| norm <= t) {
            return Some(StopReason::ResidualThreshold);
        }
        if norm == 0.0 {
            return Some(StopReason::ZeroResidual);
        }
        None
    }

    pub fn run(&self, algorithm: Algorithm, y: &[f64], max_events: Option<usize>) -> Result<SparseCode> {
        match algorithm {
            Algorithm::Cmp => self.cmp(y, max_events),
            Algorithm::Comp => self.comp(y, max_events, &mut |_| {}),
            Algorithm::CompSlow => self.comp_slow(y, max_events),
        }
    }

    /// COMP / COMP-INTERP with the incremental Cholesky projection.
    pub fn comp(
        &self,
        y: &[f64],
        max_events: Option<usize>,
        observer: &mut dyn FnMut(&IterationView<'_>),
    ) -> Result<SparseCode> {
        self.check_window(y)?;
        let bank = self.bank();
        let max_events = max_events.or(self.config.max_events);
        let mut residual = y.to_vec();
        let mut active = ActiveSet::new();
        let mut factor = CholeskyState::new();
        let mut amplitudes = Vec::new();

        let stop = loop {
            if let Some(reason) = self.should_stop(active.len(), &residual, max_events) {
                break reason;
            }
            let map = self.correlator.correlate(&residual);
            let mut excluded: Vec<usize> = active.atoms().iter().map(|&a| map.flat_index(a)).collect();
            let mut accepted = None;
            let mut rejected_any = false;
            for _ in 0..=self.config.max_rejections {
                let Some(sel) = map.best(self.config.selection, &excluded) else {
                    break;
                };
                match factor.try_extend(&active, sel.atom, bank, self.config.pivot_floor) {
                    Ok(()) => {
                        accepted = Some(sel);
                        break;
                    }
                    Err(Error::LinearDependence { pivot_sq }) => {
                        log::debug!("rejecting {:?}: pivot^2 = {pivot_sq:e}", sel.atom);
                        rejected_any = true;
                        excluded.push(map.flat_index(sel.atom));
                    }
                    Err(e) => return Err(e),
                }
            }
            let Some(sel) = accepted else {
                break if rejected_any { StopReason::CandidatesRejected } else { StopReason::NoCandidate };
            };
            active.push(sel.atom)?;
            amplitudes = solve_coefficients(&factor, &active, y, bank)?;
            residual = update_residual(y, &active, &amplitudes, bank);
            observer(&IterationView { active: &active, factor: &factor, amplitudes: &amplitudes, residual: &residual });
        };

        Ok(SparseCode {
            window: 0,
            events: active
                .atoms()
                .iter()
                .zip(&amplitudes)
                .map(|(a, &amplitude)| CodeEvent { c: a.c, k: a.k, n: a.n, amplitude })
                .collect(),
            residual_norm: l2_norm(&residual),
            stop,
        })
    }

    /// Matching pursuit: no projection, repeated atoms accumulate amplitude.
    /// `max_events` caps the number of selections.
    pub fn cmp(&self, y: &[f64], max_events: Option<usize>) -> Result<SparseCode> {
        self.check_window(y)?;
        let bank = self.bank();
        let max_events = max_events.or(self.config.max_events);
        let mut residual = y.to_vec();
        let mut events: Vec<CodeEvent> = Vec::new();
        let mut iterations = 0;
        let stop = loop {
            if let Some(reason) = self.should_stop(iterations, &residual, max_events) {
                break reason;
            }
            let map = self.correlator.correlate(&residual);
            let Some(sel) = map.best(self.config.selection, &[]) else {
                break StopReason::NoCandidate;
            };
            let atom = bank.atom(sel.atom.c, sel.atom.k);
            let coef = sel.correlation / atom.iter().map(|v| v * v).sum::<f64>();
            for (r, h) in residual[sel.atom.n..].iter_mut().zip(atom) {
                *r -= coef * h;
            }
            match events.iter_mut().find(|e| e.atom() == sel.atom) {
                Some(e) => e.amplitude += coef,
                None => events.push(CodeEvent { c: sel.atom.c, k: sel.atom.k, n: sel.atom.n, amplitude: coef }),
            }
            iterations += 1;
        };
        Ok(SparseCode { window: 0, events, residual_norm: l2_norm(&residual), stop })
    }

    /// COMP whose projection forms the active columns densely and inverts
    /// their Gram matrix every iteration. Benchmark baseline.
    pub fn comp_slow(&self, y: &[f64], max_events: Option<usize>) -> Result<SparseCode> {
        self.check_window(y)?;
        let bank = self.bank();
        let window_len = y.len();
        let len = bank.template_len();
        let max_events = max_events.or(self.config.max_events);
        let y_vec = DVector::from_column_slice(y);
        let mut residual = y.to_vec();
        let mut active = ActiveSet::new();
        let mut amplitudes = DVector::zeros(0);

        let stop = loop {
            if let Some(reason) = self.should_stop(active.len(), &residual, max_events) {
                break reason;
            }
            let map = self.correlator.correlate(&residual);
            let excluded: Vec<usize> = active.atoms().iter().map(|&a| map.flat_index(a)).collect();
            let Some(sel) = map.best(self.config.selection, &excluded) else {
                break StopReason::NoCandidate;
            };
            active.push(sel.atom)?;

            let t = active.len();
            let mut columns = DMatrix::zeros(window_len, t);
            for (j, a) in active.atoms().iter().enumerate() {
                for (m, &h) in bank.atom(a.c, a.k).iter().enumerate().take(len) {
                    columns[(a.n + m, j)] = h;
                }
            }
            let gram = columns.transpose() * &columns;
            let inverse = gram.try_inverse().ok_or(Error::SingularGram)?;
            amplitudes = inverse * (columns.transpose() * &y_vec);
            let fitted = &columns * &amplitudes;
            residual = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
        };

        Ok(SparseCode {
            window: 0,
            events: active
                .atoms()
                .iter()
                .zip(amplitudes.iter())
                .map(|(a, &amplitude)| CodeEvent { c: a.c, k: a.k, n: a.n, amplitude })
                .collect(),
            residual_norm: l2_norm(&residual),
            stop,
        })
    }
}

pub fn comp_interp(y: &[f64], bank: &InterpolatedDictionary, config: &CscConfig) -> Result<SparseCode> {
    Solver::new(bank, y.len(), *config)?.comp(y, None, &mut |_| {})
}

/// [`comp_interp`] with a callback after every accepted iteration.
pub fn comp_interp_observed(
    y: &[f64],
    bank: &InterpolatedDictionary,
    config: &CscConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<SparseCode> {
    Solver::new(bank, y.len(), *config)?.comp(y, None, observer)
}

pub fn cmp(y: &[f64], bank: &InterpolatedDictionary, config: &CscConfig) -> Result<SparseCode> {
    Solver::new(bank, y.len(), *config)?.cmp(y, None)
}

pub fn comp_slow(y: &[f64], bank: &InterpolatedDictionary, config: &CscConfig) -> Result<SparseCode> {
    Solver::new(bank, y.len(), *config)?.comp_slow(y, None)
}

/// Codes every window in parallel. `budgets`, when given, overrides the
/// sparsity cap per window. The first failing window (by index) aborts.
pub fn code_windows(
    signal: &WindowedSignal,
    bank: &InterpolatedDictionary,
    config: &CscConfig,
    algorithm: Algorithm,
    budgets: Option<&[usize]>,
) -> Result<Vec<SparseCode>> {
    if let Some(b) = budgets {
        if b.len() != signal.num_windows() {
            return Err(Error::InvalidArgument(format!(
                "{} sparsity budgets for {} windows",
                b.len(),
                signal.num_windows()
            )));
        }
    }
    let solver = Solver::new(bank, signal.window_len(), *config)?;
    let results: Vec<Result<SparseCode>> = (0..signal.num_windows())
        .into_par_iter()
        .map(|j| {
            let budget = budgets.map(|b| b[j]);
            solver
                .run(algorithm, signal.window(j), budget)
                .map(|mut code| {
                    code.window = j;
                    code
                })
                .map_err(|e| e.in_window(j))
        })
        .collect();
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::expand_dictionary;
    use crate::signal_model::{dot, gamma_tone_dictionary, Dictionary, GammaTone, Template};
    use approx::assert_abs_diff_eq;

    fn place(window_len: usize, atom: &[f64], n: usize, x: f64, out: &mut Vec<f64>) {
        out.resize(window_len, 0.0);
        for (o, h) in out[n..].iter_mut().zip(atom) {
            *o += x * h;
        }
    }

    #[test]
    fn single_atom_exact_recovery() {
        let d = gamma_tone_dictionary(&[GammaTone::One, GammaTone::Two], 1e4, 101).unwrap();
        let bank = expand_dictionary(&d, 1).unwrap();
        let mut y = Vec::new();
        place(400, bank.atom(1, 0), 150, 1.7, &mut y);
        let cfg = CscConfig::with_k(1).max_events(1);
        let code = comp_interp(&y, &bank, &cfg).unwrap();
        assert_eq!(code.events.len(), 1);
        let e = code.events[0];
        assert_eq!((e.c, e.k, e.n), (1, 0, 150));
        assert_abs_diff_eq!(e.amplitude, 1.7, epsilon = 1e-12);

        let mp = cmp(&y, &bank, &cfg).unwrap();
        assert_eq!(mp.events[0].atom(), e.atom());
        assert_abs_diff_eq!(mp.events[0].amplitude, e.amplitude, epsilon = 1e-12);

        let slow = comp_slow(&y, &bank, &cfg).unwrap();
        assert_eq!(slow.events[0].atom(), e.atom());
        assert_abs_diff_eq!(slow.events[0].amplitude, e.amplitude, epsilon = 1e-12);
    }

    #[test]
    fn comp_never_repeats_and_cmp_may() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = Dictionary::new(vec![Template::from_unnormalized(vec![s, s]).unwrap()]).unwrap();
        let bank = expand_dictionary(&d, 1).unwrap();
        let y = vec![0.0, 1.0, 1.2, 0.9, 0.0, 0.3];
        let cfg = CscConfig::with_k(1).max_events(5).residual_threshold(Some(1e-12));
        let omp = comp_interp(&y, &bank, &cfg).unwrap();
        let mut atoms: Vec<_> = omp.events.iter().map(|e| e.atom()).collect();
        atoms.sort();
        atoms.dedup();
        assert_eq!(atoms.len(), omp.events.len());

        let mp = cmp(&y, &bank, &CscConfig::with_k(1).max_events(40).residual_threshold(Some(1e-12))).unwrap();
        assert!(mp.events.len() < 40, "cmp accumulates repeated atoms into one event");
        assert!(mp.residual_norm >= omp.residual_norm - 1e-12);
    }

    #[test]
    fn cmp_stops_on_zero_residual() {
        let d = Dictionary::new(vec![Template::from_unnormalized(vec![1.0]).unwrap()]).unwrap();
        let bank = expand_dictionary(&d, 1).unwrap();
        let cfg = CscConfig::with_k(1).max_events(10).residual_threshold(None);
        let code = cmp(&[0.0, 2.0, 0.0], &bank, &cfg).unwrap();
        assert_eq!(code.events.len(), 1);
        assert_eq!(code.stop, StopReason::ZeroResidual);
    }

    #[test]
    fn positive_mode_ignores_negative_events() {
        let d = gamma_tone_dictionary(&[GammaTone::Two], 1e4, 101).unwrap();
        let bank = expand_dictionary(&d, 1).unwrap();
        let mut y = Vec::new();
        place(300, bank.atom(0, 0), 20, -1.0, &mut y);
        place(300, bank.atom(0, 0), 170, 1.0, &mut y);
        let cfg = CscConfig::with_k(1).max_events(1).selection(super::super::SelectionMode::Positive);
        let code = comp_interp(&y, &bank, &cfg).unwrap();
        assert_eq!(code.events[0].n, 170);
    }

    #[test]
    fn residual_is_orthogonal_to_active_atoms() {
        let d = gamma_tone_dictionary(&[GammaTone::One, GammaTone::Two], 1e4, 101).unwrap();
        let bank = expand_dictionary(&d, 4).unwrap();
        let y: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.1).collect();
        let cfg = CscConfig::with_k(4).max_events(8);
        let mut worst: f64 = 0.0;
        comp_interp_observed(&y, &bank, &cfg, &mut |view| {
            for a in view.active.atoms() {
                let ip = dot(bank.atom(a.c, a.k), &view.residual[a.n..a.n + 101]);
                worst = worst.max(ip.abs());
            }
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn mismatched_k_is_rejected() {
        let d = gamma_tone_dictionary(&[GammaTone::One], 1e4, 101).unwrap();
        let bank = expand_dictionary(&d, 2).unwrap();
        assert!(matches!(comp_interp(&[0.0; 200], &bank, &CscConfig::with_k(1).max_events(1)), Err(Error::Config(_))));
        let no_stop = CscConfig { max_events: None, residual_threshold: None, ..CscConfig::with_k(2) };
        assert!(comp_interp(&[0.0; 200], &bank, &no_stop).is_err());
    }
}
