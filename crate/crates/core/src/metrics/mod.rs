//! Template distance, event-timing accuracy, SNR, and CSC timing.

mod bench;

pub use bench::{bench_csc, write_bench_csv, BenchConfig, BenchPoint, BenchRecord};

use serde::{Deserialize, Serialize};

use crate::csc::{CodeEvent, SparseCode};
use crate::error::{Error, Result};
use crate::signal_model::{dot, EventTrain};

/// `sqrt(1 - <a,b>^2 / (|a|^2 |b|^2))`: sine of the angle between `a` and
/// `b`, invariant to scale and sign.
pub fn err_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("templates of length {} and {}", a.len(), b.len())));
    }
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroNorm("err_distance input"));
    }
    let ab = dot(a, b);
    Ok((1.0 - ab * ab / (aa * bb)).max(0.0).sqrt())
}

/// [`err_distance`] minimized over integer shifts of `learned` within
/// `+-(L-1)/2` samples (zero fill). Learned templates are only defined up
/// to such a shift.
pub fn aligned_err(learned: &[f64], reference: &[f64]) -> Result<f64> {
    let len = learned.len();
    let half = (len as isize - 1) / 2;
    let mut best = err_distance(learned, reference)?;
    let mut shifted = vec![0.0; len];
    for lag in -half..=half {
        if lag == 0 {
            continue;
        }
        for (i, s) in shifted.iter_mut().enumerate() {
            let src = i as isize - lag;
            *s = if (0..len as isize).contains(&src) { learned[src as usize] } else { 0.0 };
        }
        if let Ok(e) = err_distance(&shifted, reference) {
            best = best.min(e);
        }
    }
    Ok(best)
}

/// `10 log10(|clean|^2 / |noise|^2)`; `+inf` when the noise is zero.
pub fn snr_db(clean: &[f64], noise: &[f64]) -> Result<f64> {
    if clean.len() != noise.len() {
        return Err(Error::InvalidArgument("clean and noise lengths differ".into()));
    }
    let signal = dot(clean, clean);
    let noise = dot(noise, noise);
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Maps code events back to absolute sample positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeLayout {
    pub fs: f64,
    pub window_len: usize,
    pub template_len: usize,
    pub k_factor: usize,
}

impl CodeLayout {
    /// Position of the event's template center, in samples from the start of
    /// the signal, optionally including the sub-grid delay `k/K`.
    pub fn event_position(&self, window: usize, event: &CodeEvent, sub_grid: bool) -> f64 {
        let center = (self.template_len - 1) as f64 / 2.0;
        let frac = if sub_grid { event.k as f64 / self.k_factor as f64 } else { 0.0 };
        (window * self.window_len + event.n) as f64 + center + frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HitOptions {
    pub tolerance_samples: f64,
    pub sub_grid: bool,
}

impl Default for HitOptions {
    fn default() -> Self {
        Self { tolerance_samples: 30.0, sub_grid: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub source: usize,
    pub true_samples: f64,
    pub estimated_samples: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitMatchReport {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_true: usize,
    pub unmatched_est: usize,
    /// Mean absolute offset in samples over all matched pairs, pooled across
    /// sources; `None` when nothing matched.
    pub average_hit_error: Option<f64>,
    pub per_source: Vec<Option<f64>>,
}

/// Greedy one-to-one matching: candidate pairs within `tolerance` are taken
/// in ascending offset order. Returns `(true_idx, est_idx, |offset|)`.
pub fn match_greedy(truth: &[f64], estimates: &[f64], tolerance: f64) -> Vec<(usize, usize, f64)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &t) in truth.iter().enumerate() {
        for (j, &e) in estimates.iter().enumerate() {
            let off = (t - e).abs();
            if off <= tolerance {
                candidates.push((off, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimates.len()];
    let mut out = Vec::new();
    for (off, i, j) in candidates {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            out.push((i, j, off));
        }
    }
    out
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Average hit error of `codes` (one per window) against the true events.
pub fn average_hit_error(
    truth: &EventTrain,
    codes: &[SparseCode],
    layout: &CodeLayout,
    options: &HitOptions,
) -> Result<HitMatchReport> {
    if !(options.tolerance_samples >= 1.0) {
        return Err(Error::InvalidArgument("hit tolerance must be at least one sample".into()));
    }
    let num_sources = truth
        .events
        .iter()
        .map(|e| e.source + 1)
        .chain(codes.iter().flat_map(|c| c.events.iter().map(|e| e.c + 1)))
        .max()
        .unwrap_or(0);

    let mut pairs = Vec::new();
    let mut per_source = Vec::with_capacity(num_sources);
    let mut unmatched_true = 0;
    let mut unmatched_est = 0;
    for source in 0..num_sources {
        let t: Vec<f64> = truth.events.iter().filter(|e| e.source == source).map(|e| e.time * layout.fs).collect();
        let est: Vec<f64> = codes
            .iter()
            .flat_map(|code| {
                code.events
                    .iter()
                    .filter(move |e| e.c == source)
                    .map(move |e| layout.event_position(code.window, e, options.sub_grid))
            })
            .collect();
        let matched = match_greedy(&t, &est, options.tolerance_samples);
        unmatched_true += t.len() - matched.len();
        unmatched_est += est.len() - matched.len();
        per_source.push(mean(matched.iter().map(|m| m.2)));
        pairs.extend(matched.into_iter().map(|(i, j, off)| MatchedPair {
            source,
            true_samples: t[i],
            estimated_samples: est[j],
            offset: off,
        }));
    }
    Ok(HitMatchReport {
        average_hit_error: mean(pairs.iter().map(|p| p.offset)),
        pairs,
        unmatched_true,
        unmatched_est,
        per_source,
    })
}

/// Median of finite values; `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}
