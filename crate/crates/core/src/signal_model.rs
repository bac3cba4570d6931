//! Continuous-time event signals, their sampled observations, and windowing.
//!
//! A signal is a superposition of template occurrences at arbitrary (not
//! necessarily on-grid) times plus white Gaussian noise. Sample `i` of a
//! [`DiscreteSignal`] is the value at time `i / fs`. Templates are sampled
//! centered: sample `n` of a length-`L` template sits at `(n - (L-1)/2) / fs`,
//! so an atom placed at lag `n` in a window has its center at `n + (L-1)/2`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::sinc;

/// Half-width of the gamma-tone templates, in seconds (they span 10 ms).
pub const GAMMA_TONE_HALF_WIDTH: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaTone {
    /// `u exp(-u^2) cos(pi u / 2)` with `u = 1e3 t`.
    #[serde(rename = "gamma-tone-1")]
    One,
    /// `u exp(-u^2)` with `u = 1e3 t`.
    #[serde(rename = "gamma-tone-2")]
    Two,
}

/// Unnormalized closed-form gamma-tone value; zero outside `[-5 ms, 5 ms]`.
pub fn eval_gamma_tone(kind: GammaTone, t: f64) -> f64 {
    if t.abs() > GAMMA_TONE_HALF_WIDTH {
        return 0.0;
    }
    let u = 1e3 * t;
    let envelope = u * (-u * u).exp();
    match kind {
        GammaTone::One => envelope * (std::f64::consts::FRAC_PI_2 * u).cos(),
        GammaTone::Two => envelope,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemplateFamily {
    GammaTone(GammaTone),
    /// Centered samples at rate `fs`, reconstructed by sinc interpolation.
    SampledBandlimited {
        samples: Vec<f64>,
        fs: f64,
    },
}

/// A template evaluable at any real time, identically zero outside
/// `[-half_width, half_width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousTemplate {
    pub family: TemplateFamily,
    pub scale: f64,
    pub half_width: f64,
}

impl ContinuousTemplate {
    pub fn gamma_tone(kind: GammaTone) -> Self {
        Self { family: TemplateFamily::GammaTone(kind), scale: 1.0, half_width: GAMMA_TONE_HALF_WIDTH }
    }

    pub fn bandlimited(samples: Vec<f64>, fs: f64) -> Self {
        let half_width = samples.len().saturating_sub(1) as f64 / 2.0 / fs;
        Self { family: TemplateFamily::SampledBandlimited { samples, fs }, scale: 1.0, half_width }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t.abs() > self.half_width {
            return 0.0;
        }
        let raw = match &self.family {
            TemplateFamily::GammaTone(kind) => eval_gamma_tone(*kind, t),
            TemplateFamily::SampledBandlimited { samples, fs } => {
                let center = (samples.len() as f64 - 1.0) / 2.0;
                let pos = t * fs + center;
                samples.iter().enumerate().map(|(m, s)| s * sinc(pos - m as f64)).sum()
            }
        };
        self.scale * raw
    }

    /// Rescales so that sampling at `fs` with `len` centered samples gives a
    /// unit-norm vector. Synthesized amplitudes then refer to unit-norm atoms.
    pub fn normalized_for(mut self, fs: f64, len: usize) -> Result<Self> {
        self.scale = 1.0;
        let energy: f64 = centered_times(fs, len).map(|t| self.eval(t).powi(2)).sum();
        if energy <= 0.0 {
            return Err(Error::ZeroNorm("sampled continuous template"));
        }
        self.scale = 1.0 / energy.sqrt();
        Ok(self)
    }
}

fn centered_times(fs: f64, len: usize) -> impl Iterator<Item = f64> {
    let center = (len as f64 - 1.0) / 2.0;
    (0..len).map(move |n| (n as f64 - center) / fs)
}

/// A unit-norm discrete template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template(Vec<f64>);

impl Template {
    /// Normalizes `samples` to unit Euclidean norm.
    pub fn from_unnormalized(mut samples: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&samples);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm("template"));
        }
        samples.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(samples))
    }

    pub fn samples(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn sample_template(ct: &ContinuousTemplate, fs: f64, len: usize) -> Result<Template> {
    if len.is_multiple_of(2) {
        return Err(Error::EvenTemplateLength(len));
    }
    if (len as f64 - 1.0) / fs < 2.0 * ct.half_width - 1e-12 {
        log::warn!("template of {len} samples at {fs} Hz does not cover the {} s support", 2.0 * ct.half_width);
    }
    Template::from_unnormalized(centered_times(fs, len).map(|t| ct.eval(t)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    templates: Vec<Template>,
}

impl Dictionary {
    pub fn new(templates: Vec<Template>) -> Result<Self> {
        let Some(first) = templates.first() else {
            return Err(Error::InvalidArgument("dictionary needs at least one template".into()));
        };
        let len = first.len();
        if len == 0 {
            return Err(Error::InvalidArgument("empty template".into()));
        }
        if templates.iter().any(|t| t.len() != len) {
            return Err(Error::InvalidArgument("templates differ in length".into()));
        }
        Ok(Self { templates })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn template(&self, c: usize) -> &Template {
        &self.templates[c]
    }

    pub fn num_sources(&self) -> usize {
        self.templates.len()
    }

    pub fn template_len(&self) -> usize {
        self.templates[0].len()
    }

    pub(crate) fn replace(&mut self, c: usize, template: Template) {
        debug_assert_eq!(template.len(), self.template_len());
        self.templates[c] = template;
    }
}

/// Gamma-tone dictionary sampled at `fs` with `len` samples per template.
pub fn gamma_tone_dictionary(kinds: &[GammaTone], fs: f64, len: usize) -> Result<Dictionary> {
    let templates = kinds
        .iter()
        .map(|&k| sample_template(&ContinuousTemplate::gamma_tone(k), fs, len))
        .collect::<Result<Vec<_>>>()?;
    Dictionary::new(templates)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Zero-based source index.
    pub source: usize,
    /// Occurrence time in seconds, in `(0, T]`.
    pub time: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrain {
    pub events: Vec<Event>,
    pub duration: f64,
}

impl EventTrain {
    /// Number of events whose center sample falls in each window.
    pub fn counts_per_window(&self, fs: f64, window_len: usize, num_windows: usize) -> Vec<usize> {
        let mut counts = vec![0; num_windows];
        for e in &self.events {
            let j = (e.time * fs / window_len as f64).floor() as usize;
            if j < num_windows {
                counts[j] += 1;
            }
        }
        counts
    }
}

/// Keeps event centers at least `margin_samples` away from the edges of
/// non-overlapping windows of `window_len` samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMargin {
    pub fs: f64,
    pub window_len: usize,
    pub margin_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTrainSpec {
    pub sources: usize,
    pub per_source: usize,
    pub duration: f64,
    pub amp_range: (f64, f64),
    /// Minimum spacing between any two events (all sources), in seconds.
    pub min_gap: f64,
    pub margin: Option<WindowMargin>,
    /// Snap times onto the sampling grid of this rate.
    pub on_grid: Option<f64>,
}

impl EventTrainSpec {
    pub fn new(sources: usize, per_source: usize, duration: f64) -> Self {
        Self { sources, per_source, duration, amp_range: (1.0, 2.0), min_gap: 0.0, margin: None, on_grid: None }
    }

    fn admissible(&self, time: f64) -> bool {
        let Some(m) = self.margin else {
            return true;
        };
        let pos = time * m.fs;
        let n_total = sample_count(self.duration, m.fs);
        let num_windows = n_total / m.window_len;
        let j = (pos / m.window_len as f64).floor();
        if j < 0.0 || j as usize >= num_windows {
            return false;
        }
        let within = pos - j * m.window_len as f64;
        within >= m.margin_samples as f64 && within <= (m.window_len - m.margin_samples) as f64
    }

    fn usable_span(&self) -> f64 {
        match self.margin {
            None => self.duration,
            Some(m) => {
                let num_windows = sample_count(self.duration, m.fs) / m.window_len;
                let per_window = m.window_len.saturating_sub(2 * m.margin_samples) as f64 / m.fs;
                num_windows as f64 * per_window
            }
        }
    }
}

const DRAWS_PER_EVENT: usize = 10_000;
const RESTARTS: usize = 20;

/// Uniform event times and amplitudes, reproducible for a given seed.
pub fn random_event_train(spec: &EventTrainSpec, seed: u64) -> Result<EventTrain> {
    if !(spec.duration > 0.0) {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    let (lo, hi) = spec.amp_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument("amplitude range must be positive".into()));
    }
    if let Some(m) = spec.margin {
        if 2 * m.margin_samples >= m.window_len {
            return Err(Error::InvalidArgument("window margin leaves no room for events".into()));
        }
    }
    let total = spec.sources * spec.per_source;
    let infeasible = || Error::InfeasiblePacking { requested: total, duration: spec.duration };
    if total > 1 && (total - 1) as f64 * spec.min_gap > spec.usable_span() + spec.min_gap {
        return Err(infeasible());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'restart: for _ in 0..RESTARTS {
        let mut events: Vec<Event> = Vec::with_capacity(total);
        for source in 0..spec.sources {
            for _ in 0..spec.per_source {
                let mut placed = None;
                for _ in 0..DRAWS_PER_EVENT {
                    let u: f64 = rng.random();
                    let mut time = spec.duration * (1.0 - u);
                    if let Some(fs) = spec.on_grid {
                        time = (time * fs).round().max(1.0) / fs;
                    }
                    if time > spec.duration || !spec.admissible(time) {
                        continue;
                    }
                    if events.iter().any(|e| (e.time - time).abs() < spec.min_gap) {
                        continue;
                    }
                    placed = Some(time);
                    break;
                }
                let Some(time) = placed else {
                    continue 'restart;
                };
                let amplitude = if hi > lo { rng.random_range(lo..hi) } else { lo };
                events.push(Event { source, time, amplitude });
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.source.cmp(&b.source)));
        return Ok(EventTrain { events, duration: spec.duration });
    }
    Err(infeasible())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSignal {
    pub samples: Vec<f64>,
    pub fs: f64,
}

/// `floor(T * fs)`, tolerant of representation error in the product.
pub fn sample_count(duration: f64, fs: f64) -> usize {
    (duration * fs + 1e-9).floor().max(0.0) as usize
}

/// Observed signal together with its clean and noise components.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub signal: DiscreteSignal,
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Samples the continuous model at `fs` and adds white Gaussian noise whose
/// variance is set from the realized clean energy. `snr_db = None` is noiseless.
pub fn synthesize(
    templates: &[ContinuousTemplate],
    train: &EventTrain,
    fs: f64,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<Synthesis> {
    let n = sample_count(train.duration, fs);
    let mut clean = vec![0.0; n];
    for e in &train.events {
        let ct = templates
            .get(e.source)
            .ok_or_else(|| Error::InvalidArgument(format!("event source {} has no template", e.source)))?;
        let pos = e.time * fs;
        let reach = ct.half_width * fs;
        let first = (pos - reach).floor().max(0.0) as usize;
        let last = ((pos + reach).ceil() as usize).min(n.saturating_sub(1));
        for (i, out) in clean.iter_mut().enumerate().take(last + 1).skip(first) {
            *out += e.amplitude * ct.eval((i as f64 - pos) / fs);
        }
    }

    let mut noise = vec![0.0; n];
    if let Some(snr) = snr_db {
        let energy: f64 = clean.iter().map(|v| v * v).sum();
        let variance = energy / (n as f64 * 10f64.powf(snr / 10.0));
        if variance > 0.0 {
            let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            noise.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        }
    }
    let samples = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
    Ok(Synthesis { signal: DiscreteSignal { samples, fs }, clean, noise })
}

/// `J` non-overlapping windows of `W` samples stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSignal {
    data: Vec<f64>,
    window_len: usize,
}

impl WindowedSignal {
    pub fn from_windows(windows: &[Vec<f64>]) -> Result<Self> {
        let window_len = windows.first().map_or(0, Vec::len);
        if window_len == 0 || windows.iter().any(|w| w.len() != window_len) {
            return Err(Error::InvalidArgument("windows must share a nonzero length".into()));
        }
        Ok(Self { data: windows.concat(), window_len })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn num_windows(&self) -> usize {
        self.data.len() / self.window_len
    }

    pub fn window(&self, j: usize) -> &[f64] {
        &self.data[j * self.window_len..(j + 1) * self.window_len]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.window_len)
    }

    /// Column-concatenation of the windows.
    pub fn concat(&self) -> &[f64] {
        &self.data
    }
}

/// Splits `sig` into windows of `window_len`; trailing samples that do not
/// fill a window are dropped.
pub fn window(sig: &DiscreteSignal, window_len: usize, template_len: usize) -> Result<WindowedSignal> {
    if window_len <= template_len {
        return Err(Error::WindowTooShort { window: window_len, template: template_len });
    }
    let num_windows = sig.samples.len() / window_len;
    if num_windows == 0 {
        return Err(Error::InvalidArgument(format!(
            "signal of {} samples is shorter than one window",
            sig.samples.len()
        )));
    }
    let kept = num_windows * window_len;
    if kept < sig.samples.len() {
        log::warn!("dropping {} trailing samples that do not fill a window of {window_len}", sig.samples.len() - kept);
    }
    Ok(WindowedSignal { data: sig.samples[..kept].to_vec(), window_len })
}

/// Dense block-Toeplitz dictionary, `N x C(N-L+1)`; column `c*(N-L+1) + d`
/// is template `c` starting at sample `d`. Only meant for small oracles.
pub fn build_dense_toeplitz(dict: &Dictionary, n: usize) -> Result<DMatrix<f64>> {
    let len = dict.template_len();
    if n < len {
        return Err(Error::InvalidArgument(format!("N = {n} is shorter than L = {len}")));
    }
    let lags = n - len + 1;
    let mut h = DMatrix::zeros(n, dict.num_sources() * lags);
    for (c, t) in dict.templates().iter().enumerate() {
        for d in 0..lags {
            for (m, &v) in t.samples().iter().enumerate() {
                h[(d + m, c * lags + d)] = v;
            }
        }
    }
    Ok(h)
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gamma_tones_vanish_at_origin_and_outside_support() {
        assert_eq!(eval_gamma_tone(GammaTone::One, 0.0), 0.0);
        assert_eq!(eval_gamma_tone(GammaTone::Two, 0.0), 0.0);
        assert_eq!(eval_gamma_tone(GammaTone::Two, 6e-3), 0.0);
        assert_abs_diff_eq!(eval_gamma_tone(GammaTone::Two, 1e-3), (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(eval_gamma_tone(GammaTone::Two, 1e-3), 0.36788, epsilon = 1e-5);
    }

    #[test]
    fn sampled_gamma_tones() {
        let h1 = sample_template(&ContinuousTemplate::gamma_tone(GammaTone::One), 1e4, 101).unwrap();
        assert_abs_diff_eq!(l2_norm(h1.samples()), 1.0, epsilon = 1e-12);
        assert_eq!(h1.samples()[50], 0.0);
        let h2 = sample_template(&ContinuousTemplate::gamma_tone(GammaTone::Two), 1e4, 101).unwrap();
        for i in 0..50 {
            assert_abs_diff_eq!(h2.samples()[50 - i], -h2.samples()[50 + i], epsilon = 1e-15);
        }
        assert!(sample_template(&ContinuousTemplate::gamma_tone(GammaTone::One), 1e4, 100).is_err());
    }

    #[test]
    fn zero_energy_template_is_rejected() {
        let ct = ContinuousTemplate::bandlimited(vec![0.0; 5], 1e4);
        assert!(matches!(sample_template(&ct, 1e4, 5), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn event_train_edge_cases() {
        let empty = random_event_train(&EventTrainSpec::new(2, 0, 1.0), 1).unwrap();
        assert!(empty.events.is_empty());

        let spec = EventTrainSpec::new(2, 10, 1.0);
        assert_eq!(random_event_train(&spec, 7).unwrap(), random_event_train(&spec, 7).unwrap());

        let mut tight = EventTrainSpec::new(1, 5, 0.01);
        tight.min_gap = 0.005;
        assert!(matches!(random_event_train(&tight, 3), Err(Error::InfeasiblePacking { .. })));
    }

    #[test]
    fn event_train_respects_gap_and_margin() {
        let mut spec = EventTrainSpec::new(2, 10, 1.0);
        spec.min_gap = 202.0 / 1e4;
        spec.margin = Some(WindowMargin { fs: 1e4, window_len: 1000, margin_samples: 101 });
        let train = random_event_train(&spec, 11).unwrap();
        assert_eq!(train.events.len(), 20);
        for pair in train.events.windows(2) {
            assert!(pair[1].time - pair[0].time >= spec.min_gap);
        }
        for e in &train.events {
            let within = (e.time * 1e4) % 1000.0;
            assert!((101.0..=899.0).contains(&within));
            assert!((1.0..2.0).contains(&e.amplitude));
            assert!(e.time > 0.0 && e.time <= 1.0);
        }
    }

    #[test]
    fn noiseless_synthesis_of_on_grid_event_is_shifted_template() {
        let fs = 1e4;
        let ct = ContinuousTemplate::gamma_tone(GammaTone::One).normalized_for(fs, 101).unwrap();
        let h = sample_template(&ct, fs, 101).unwrap();
        let train = EventTrain { events: vec![Event { source: 0, time: 300.0 / fs, amplitude: 1.5 }], duration: 0.1 };
        let syn = synthesize(&[ct], &train, fs, None, 0).unwrap();
        assert_eq!(syn.signal.samples.len(), 1000);
        let lag = 300 - 50;
        for (i, v) in syn.signal.samples.iter().enumerate() {
            let expect = if (lag..lag + 101).contains(&i) { 1.5 * h.samples()[i - lag] } else { 0.0 };
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn half_sample_event_matches_closed_form() {
        let fs = 1e4;
        let ct = ContinuousTemplate::gamma_tone(GammaTone::Two);
        let tau = 300.5 / fs;
        let train = EventTrain { events: vec![Event { source: 0, time: tau, amplitude: 1.0 }], duration: 0.1 };
        let syn = synthesize(std::slice::from_ref(&ct), &train, fs, None, 0).unwrap();
        for (i, v) in syn.signal.samples.iter().enumerate() {
            let expect = eval_gamma_tone(GammaTone::Two, i as f64 / fs - tau);
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_train_without_noise_is_silent() {
        let train = EventTrain { events: vec![], duration: 0.05 };
        let syn = synthesize(&[ContinuousTemplate::gamma_tone(GammaTone::One)], &train, 1e4, None, 0).unwrap();
        assert!(syn.signal.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn windowing_partitions_and_truncates() {
        let sig = DiscreteSignal { samples: (0..8).map(f64::from).collect(), fs: 1.0 };
        let w = window(&sig, 4, 3).unwrap();
        assert_eq!(w.num_windows(), 2);
        assert_eq!(w.window(1), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(w.concat(), sig.samples.as_slice());

        let sig = DiscreteSignal { samples: (0..10).map(f64::from).collect(), fs: 1.0 };
        let w = window(&sig, 4, 3).unwrap();
        assert_eq!(w.num_windows(), 2);
        assert_eq!(w.concat(), &sig.samples[..8]);

        assert!(matches!(window(&sig, 3, 3), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn dense_toeplitz_small_cases() {
        let one = Dictionary::new(vec![Template::from_unnormalized(vec![1.0]).unwrap()]).unwrap();
        assert_eq!(build_dense_toeplitz(&one, 3).unwrap(), DMatrix::identity(3, 3));

        let d = Dictionary::new(vec![Template::from_unnormalized(vec![1.0, 0.0]).unwrap()]).unwrap();
        let h = build_dense_toeplitz(&d, 3).unwrap();
        assert_eq!(h, DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
    }
}
