//! Python bindings: templates, synthesis, CSC, CDL and metrics on plain
//! lists of floats.

use offgrid_cdl::cdl::{perturb_templates, run_cdl, CdlConfig};
use offgrid_cdl::csc::{code_windows, CscConfig, Method, SparseCode};
use offgrid_cdl::interp::{expand_dictionary, interpolate_template};
use offgrid_cdl::metrics::{aligned_err, average_hit_error, err_distance, snr_db, CodeLayout, HitOptions};
use offgrid_cdl::signal_model::{
    random_event_train, sample_template, synthesize, window, ContinuousTemplate, Dictionary, DiscreteSignal, Event,
    EventTrain, EventTrainSpec, GammaTone, Template, WindowMargin,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: offgrid_cdl::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn gamma_kind(name: &str) -> PyResult<GammaTone> {
    match name {
        "gamma-tone-1" => Ok(GammaTone::One),
        "gamma-tone-2" => Ok(GammaTone::Two),
        other => Err(PyValueError::new_err(format!("unknown template family `{other}`"))),
    }
}

/// A set of unit-norm templates of equal odd length.
#[pyclass(name = "Dictionary", from_py_object)]
#[derive(Clone)]
pub struct PyDictionary {
    inner: Dictionary,
}

#[pymethods]
impl PyDictionary {
    /// Templates are normalized to unit norm.
    #[new]
    fn new(templates: Vec<Vec<f64>>) -> PyResult<Self> {
        let templates = templates
            .into_iter()
            .map(Template::from_unnormalized)
            .collect::<offgrid_cdl::Result<Vec<_>>>()
            .map_err(py_err)?;
        Ok(Self { inner: Dictionary::new(templates).map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (families, fs = 1e4, length = 101))]
    fn gamma_tone(families: Vec<String>, fs: f64, length: usize) -> PyResult<Self> {
        let templates = families
            .iter()
            .map(|f| {
                let ct = ContinuousTemplate::gamma_tone(gamma_kind(f)?);
                sample_template(&ct, fs, length).map_err(py_err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: Dictionary::new(templates).map_err(py_err)? })
    }

    fn templates(&self) -> Vec<Vec<f64>> {
        self.inner.templates().iter().map(|t| t.samples().to_vec()).collect()
    }

    #[getter]
    fn num_sources(&self) -> usize {
        self.inner.num_sources()
    }

    #[getter]
    fn template_len(&self) -> usize {
        self.inner.template_len()
    }

    /// Template `c` delayed by `k/K` samples via truncated sinc interpolation.
    fn interpolate(&self, c: usize, k: usize, k_factor: usize) -> PyResult<Vec<f64>> {
        let t = self.inner.templates().get(c).ok_or_else(|| PyValueError::new_err(format!("no template {c}")))?;
        Ok(interpolate_template(t, k, k_factor).map_err(py_err)?.into_inner())
    }

    fn __repr__(&self) -> String {
        format!("Dictionary(C={}, L={})", self.inner.num_sources(), self.inner.template_len())
    }
}

/// Simulated signal with ground-truth events `(source, time_seconds, amplitude)`.
#[pyclass(name = "Dataset", get_all)]
pub struct PyDataset {
    signal: Vec<f64>,
    clean: Vec<f64>,
    events: Vec<(usize, f64, f64)>,
    fs: f64,
    duration: f64,
    window_len: usize,
    truth: PyDictionary,
}

impl PyDataset {
    fn train(&self) -> EventTrain {
        EventTrain {
            events: self.events.iter().map(|&(source, time, amplitude)| Event { source, time, amplitude }).collect(),
            duration: self.duration,
        }
    }

    fn budgets(&self, num_windows: usize) -> Vec<usize> {
        self.train().counts_per_window(self.fs, self.window_len, num_windows)
    }
}

/// Simulates gamma-tone sources with window margins and a `2L` minimum gap.
#[pyfunction]
#[pyo3(signature = (duration = 1.0, per_source = 10, snr_db = Some(20.0), seed = 0, fs = 1e4, template_len = 101, window_len = 1000, on_grid = false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    duration: f64,
    per_source: usize,
    snr_db: Option<f64>,
    seed: u64,
    fs: f64,
    template_len: usize,
    window_len: usize,
    on_grid: bool,
) -> PyResult<PyDataset> {
    let cts = [GammaTone::One, GammaTone::Two]
        .iter()
        .map(|&k| ContinuousTemplate::gamma_tone(k).normalized_for(fs, template_len))
        .collect::<offgrid_cdl::Result<Vec<_>>>()
        .map_err(py_err)?;
    let truth = Dictionary::new(
        cts.iter()
            .map(|ct| sample_template(ct, fs, template_len))
            .collect::<offgrid_cdl::Result<Vec<_>>>()
            .map_err(py_err)?,
    )
    .map_err(py_err)?;
    let spec = EventTrainSpec {
        min_gap: 2.0 * template_len as f64 / fs,
        margin: Some(WindowMargin { fs, window_len, margin_samples: template_len }),
        on_grid: on_grid.then_some(fs),
        ..EventTrainSpec::new(2, per_source, duration)
    };
    let train = random_event_train(&spec, seed).map_err(py_err)?;
    let syn = synthesize(&cts, &train, fs, snr_db, seed.wrapping_add(1)).map_err(py_err)?;
    Ok(PyDataset {
        signal: syn.signal.samples,
        clean: syn.clean,
        events: train.events.iter().map(|e| (e.source, e.time, e.amplitude)).collect(),
        fs,
        duration,
        window_len,
        truth: PyDictionary { inner: truth },
    })
}

type CodeRows = Vec<(usize, usize, usize, usize, f64)>;

fn code_rows(codes: &[SparseCode]) -> CodeRows {
    codes.iter().flat_map(|code| code.events.iter().map(move |e| (code.window, e.c, e.k, e.n, e.amplitude))).collect()
}

fn rows_to_codes(rows: &CodeRows, num_windows: usize) -> Vec<SparseCode> {
    let mut codes: Vec<SparseCode> = (0..num_windows)
        .map(|window| SparseCode {
            window,
            events: Vec::new(),
            residual_norm: f64::NAN,
            stop: offgrid_cdl::csc::StopReason::MaxEvents,
        })
        .collect();
    for &(w, c, k, n, amplitude) in rows {
        if let Some(code) = codes.get_mut(w) {
            code.events.push(offgrid_cdl::csc::CodeEvent { c, k, n, amplitude });
        }
    }
    codes
}

/// Codes every window of the dataset with the true templates. Returns rows
/// `(window, c, k, n, amplitude)`; sparsity per window equals the true count.
#[pyfunction]
#[pyo3(signature = (data, k_factor = 10, method = "comp-interp"))]
fn sparse_code(py: Python<'_>, data: &PyDataset, k_factor: usize, method: &str) -> PyResult<CodeRows> {
    let method: Method = method.parse().map_err(py_err)?;
    let signal = DiscreteSignal { samples: data.signal.clone(), fs: data.fs };
    let truth = data.truth.inner.clone();
    let windows = window(&signal, data.window_len, truth.template_len()).map_err(py_err)?;
    let budgets = data.budgets(windows.num_windows());
    let codes = py
        .detach(|| {
            let bank = expand_dictionary(&truth, k_factor)?;
            code_windows(&windows, &bank, &CscConfig::with_k(k_factor), method.algorithm(), Some(&budgets))
        })
        .map_err(py_err)?;
    Ok(code_rows(&codes))
}

/// Average hit error in samples of code rows against the dataset's events;
/// `None` when nothing matched.
#[pyfunction]
#[pyo3(signature = (data, rows, k_factor, tolerance_samples = 30.0))]
fn hit_error(data: &PyDataset, rows: CodeRows, k_factor: usize, tolerance_samples: f64) -> PyResult<Option<f64>> {
    let num_windows = data.signal.len() / data.window_len;
    let layout = CodeLayout {
        fs: data.fs,
        window_len: data.window_len,
        template_len: data.truth.inner.template_len(),
        k_factor,
    };
    let options = HitOptions { tolerance_samples, sub_grid: true };
    let report =
        average_hit_error(&data.train(), &rows_to_codes(&rows, num_windows), &layout, &options).map_err(py_err)?;
    Ok(report.average_hit_error)
}

/// Learns templates from `init`. Returns the learned dictionary and the
/// per-iteration reconstruction errors.
#[pyfunction]
#[pyo3(signature = (data, init, k_factor = 10, max_iters = 15))]
fn learn(
    py: Python<'_>,
    data: &PyDataset,
    init: &PyDictionary,
    k_factor: usize,
    max_iters: usize,
) -> PyResult<(PyDictionary, Vec<f64>)> {
    let signal = DiscreteSignal { samples: data.signal.clone(), fs: data.fs };
    let windows = window(&signal, data.window_len, init.inner.template_len()).map_err(py_err)?;
    let budgets = data.budgets(windows.num_windows());
    let config = CdlConfig { max_iters, ..CdlConfig::with_k(k_factor) };
    let init = init.inner.clone();
    let out = py.detach(|| run_cdl(&windows, &init, &config, Some(&budgets), None)).map_err(py_err)?;
    let errors = out.trace.iterations.iter().map(|i| i.reconstruction_error).collect();
    Ok((PyDictionary { inner: out.dictionary }, errors))
}

#[pyfunction]
#[pyo3(name = "perturb_templates")]
fn py_perturb_templates(dict: &PyDictionary, target_err: f64, seed: u64) -> PyResult<PyDictionary> {
    Ok(PyDictionary { inner: perturb_templates(&dict.inner, target_err, seed).map_err(py_err)? })
}

#[pyfunction]
#[pyo3(name = "err_distance")]
fn py_err_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    err_distance(&a, &b).map_err(py_err)
}

#[pyfunction]
#[pyo3(name = "aligned_err")]
fn py_aligned_err(learned: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    aligned_err(&learned, &reference).map_err(py_err)
}

#[pyfunction]
#[pyo3(name = "snr_db")]
fn py_snr_db(clean: Vec<f64>, noise: Vec<f64>) -> PyResult<f64> {
    snr_db(&clean, &noise).map_err(py_err)
}

#[pymodule]
fn offgrid_cdl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_code, m)?)?;
    m.add_function(wrap_pyfunction!(hit_error, m)?)?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(py_perturb_templates, m)?)?;
    m.add_function(wrap_pyfunction!(py_err_distance, m)?)?;
    m.add_function(wrap_pyfunction!(py_aligned_err, m)?)?;
    m.add_function(wrap_pyfunction!(py_snr_db, m)?)?;
    Ok(())
}
