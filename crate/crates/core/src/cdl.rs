//! Alternating CSC / CDU driver.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cdu::{cdu_pass, CduMode};
use crate::csc::{code_windows, Algorithm, CscConfig, SparseCode};
use crate::error::{Error, Result};
use crate::interp::expand_dictionary;
use crate::metrics::aligned_err;
use crate::signal_model::{dot, Dictionary, Template, WindowedSignal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdlConfig {
    pub k_factor: usize,
    pub csc: CscConfig,
    pub max_iters: usize,
    /// Stop once the relative change of the total reconstruction error
    /// between consecutive iterations drops below this.
    pub convergence_tol: f64,
    pub cdu_mode: CduMode,
}

impl Default for CdlConfig {
    fn default() -> Self {
        Self { k_factor: 1, csc: CscConfig::default(), max_iters: 15, convergence_tol: 1e-4, cdu_mode: CduMode::Full }
    }
}

impl CdlConfig {
    pub fn with_k(k_factor: usize) -> Self {
        Self { k_factor, csc: CscConfig::with_k(k_factor), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("cdl.max_iters must be at least 1".into()));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::Config("cdl.convergence_tol must be non-negative".into()));
        }
        if self.csc.k_factor != self.k_factor {
            return Err(Error::Config(format!(
                "cdl.k_factor = {} disagrees with csc.k_factor = {}",
                self.k_factor, self.csc.k_factor
            )));
        }
        self.csc.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `sum_j |Y_j - H X_j|^2` right after the CSC step.
    pub reconstruction_error: f64,
    /// Per-template shift-aligned err against the reference, after the CDU step.
    pub template_err: Option<Vec<f64>>,
    pub csc_seconds: f64,
    pub cdu_seconds: f64,
    pub unused_templates: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CdlTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct CdlOutcome {
    pub dictionary: Dictionary,
    /// Codes from the last CSC step.
    pub codes: Vec<SparseCode>,
    pub trace: CdlTrace,
}

/// Total squared reconstruction error of `codes` against the windows.
pub fn reconstruction_error(
    signal: &WindowedSignal,
    codes: &[SparseCode],
    dict: &Dictionary,
    k_factor: usize,
) -> Result<f64> {
    let bank = expand_dictionary(dict, k_factor)?;
    Ok(codes
        .iter()
        .map(|code| {
            let recon = code.reconstruct(&bank, signal.window_len());
            signal.window(code.window).iter().zip(&recon).map(|(y, r)| (y - r) * (y - r)).sum::<f64>()
        })
        .sum())
}

/// Runs CDL from `init`. `budgets` caps the sparsity per window; `reference`
/// enables per-iteration template error tracking.
pub fn run_cdl(
    signal: &WindowedSignal,
    init: &Dictionary,
    config: &CdlConfig,
    budgets: Option<&[usize]>,
    reference: Option<&Dictionary>,
) -> Result<CdlOutcome> {
    config.validate()?;
    if let Some(r) = reference {
        if r.num_sources() != init.num_sources() || r.template_len() != init.template_len() {
            return Err(Error::InvalidArgument("reference dictionary shape differs from init".into()));
        }
    }
    let energy = dot(signal.concat(), signal.concat());
    let mut dict = init.clone();
    let mut trace = CdlTrace::default();
    let mut codes = Vec::new();
    let mut previous: Option<f64> = None;

    for iteration in 1..=config.max_iters {
        let start = Instant::now();
        let bank = expand_dictionary(&dict, config.k_factor)?;
        codes = code_windows(signal, &bank, &config.csc, Algorithm::Comp, budgets)?;
        let csc_seconds = start.elapsed().as_secs_f64();
        let error = reconstruction_error(signal, &codes, &dict, config.k_factor)?;

        let start = Instant::now();
        let outcome = cdu_pass(signal, &codes, &dict, config.k_factor, config.cdu_mode)?;
        let cdu_seconds = start.elapsed().as_secs_f64();
        dict = outcome.dictionary;

        let template_err = reference
            .map(|r| {
                dict.templates()
                    .iter()
                    .zip(r.templates())
                    .map(|(h, t)| aligned_err(h.samples(), t.samples()))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        log::info!("cdl iteration {iteration}: reconstruction error {error}");
        trace.iterations.push(IterationRecord {
            iteration,
            reconstruction_error: error,
            template_err,
            csc_seconds,
            cdu_seconds,
            unused_templates: outcome.unused,
        });

        let exact_fit = error <= f64::EPSILON * energy;
        let stalled = previous.is_some_and(|p| p > 0.0 && ((p - error) / p).abs() < config.convergence_tol);
        if exact_fit || stalled {
            trace.converged = true;
            break;
        }
        previous = Some(error);
    }
    Ok(CdlOutcome { dictionary: dict, codes, trace })
}

/// Adds Gaussian noise (orthogonal to each template) scaled so that the
/// err of every renormalized template lands in `[target, target + 0.1]`.
pub fn perturb_templates(dict: &Dictionary, target_err: f64, seed: u64) -> Result<Dictionary> {
    if !(target_err > 0.0 && target_err < 1.0) {
        return Err(Error::InvalidArgument(format!("target err must lie in (0, 1), got {target_err}")));
    }
    let aim = target_err + (0.05f64).min((1.0 - target_err) / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates = dict
        .templates()
        .iter()
        .map(|t| {
            let h = t.samples();
            let (g, g_norm) = loop {
                let mut g: Vec<f64> = (0..h.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let proj = dot(&g, h);
                g.iter_mut().zip(h).for_each(|(gi, hi)| *gi -= proj * hi);
                let norm = dot(&g, &g).sqrt();
                if norm > 1e-8 {
                    break (g, norm);
                }
            };
            // err(h + s g) = s|g| / sqrt(1 + s^2 |g|^2) for unit h and g orthogonal to h.
            let scale = aim / (g_norm * (1.0 - aim * aim).sqrt());
            Template::from_unnormalized(h.iter().zip(&g).map(|(hi, gi)| hi + scale * gi).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Dictionary::new(templates)
}
