//! Experiment runner behind the `offgrid-cdl` binary.
//!
//! Configuration is resolved in layers: built-in defaults, the `--config`
//! JSON file, `OGCDL_*` environment variables (`OGCDL_SIGNAL__SNR_DB=14`
//! sets `signal.snr_db`; values are parsed as JSON, falling back to a
//! string), then command-line flags. Every command writes a manifest with
//! the resolved configuration, which can be fed back through `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cdl::{perturb_templates, run_cdl, CdlConfig, CdlTrace};
use crate::cdu::CduMode;
use crate::csc::{code_windows, CscConfig, Method, SparseCode};
use crate::error::{Error, Result};
use crate::interp::expand_dictionary;
use crate::io::{
    read_codes_csv, read_dictionary, read_events_csv, read_f64_array, read_json, write_codes_csv, write_dictionary,
    write_events_csv, write_f64_array, write_json, ArrayMeta,
};
use crate::metrics::{
    aligned_err, average_hit_error, bench_csc, snr_db, write_bench_csv, BenchConfig, CodeLayout, HitMatchReport,
    HitOptions,
};
use crate::signal_model::{
    random_event_train, sample_count, sample_template, synthesize, window, ContinuousTemplate, Dictionary,
    DiscreteSignal, EventTrain, EventTrainSpec, GammaTone, WindowMargin, WindowedSignal,
};

pub const ENV_PREFIX: &str = "OGCDL_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub duration: f64,
    pub fs: f64,
    pub sources: usize,
    pub per_source: usize,
    /// `null` for a noiseless signal.
    pub snr_db: Option<f64>,
    /// Minimum spacing between events in samples.
    pub min_gap_samples: Option<f64>,
    pub amp_range: (f64, f64),
    pub on_grid: bool,
    pub window_len: usize,
    /// Keep events at least `L` samples away from window edges.
    pub window_margin: bool,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            duration: 1.0,
            fs: 1e4,
            sources: 2,
            per_source: 10,
            snr_db: Some(20.0),
            min_gap_samples: None,
            amp_range: (1.0, 2.0),
            on_grid: false,
            window_len: 1000,
            window_margin: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictionaryConfig {
    pub families: Vec<GammaTone>,
    /// Raw template file (with sidecar) used instead of `families`.
    pub template_file: Option<PathBuf>,
    pub template_len: usize,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self { families: vec![GammaTone::One, GammaTone::Two], template_file: None, template_len: 101 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    Truth,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdlBlock {
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub cdu_mode: CduMode,
    pub init: InitPolicy,
    pub perturb_err: f64,
}

impl Default for CdlBlock {
    fn default() -> Self {
        let d = CdlConfig::default();
        Self {
            max_iters: d.max_iters,
            convergence_tol: d.convergence_tol,
            cdu_mode: d.cdu_mode,
            init: InitPolicy::Perturbed,
            perturb_err: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityPolicy {
    /// Per-window budget equal to the true number of events in the window.
    Truth,
    /// Use `csc.max_events` / `csc.residual_threshold` as configured.
    Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub method: Method,
    pub sparsity: SparsityPolicy,
    pub signal: SignalConfig,
    pub dictionary: DictionaryConfig,
    pub csc: CscConfig,
    pub cdl: CdlBlock,
    pub hit: HitOptions,
    pub bench: BenchConfig,
    pub output: PathBuf,
    /// Dataset directory read by `csc`, `learn` and `metrics`; defaults to `output`.
    pub dataset: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            method: Method::CompInterp,
            sparsity: SparsityPolicy::Truth,
            signal: SignalConfig::default(),
            dictionary: DictionaryConfig::default(),
            csc: CscConfig::with_k(10),
            cdl: CdlBlock::default(),
            hit: HitOptions::default(),
            bench: BenchConfig::default(),
            output: PathBuf::from("out"),
            dataset: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.signal;
        if !(s.duration > 0.0) || !(s.fs > 0.0) {
            return Err(Error::Config("signal.duration and signal.fs must be positive".into()));
        }
        if s.sources == 0 {
            return Err(Error::Config("signal.sources must be positive".into()));
        }
        if s.window_len <= self.dictionary.template_len {
            return Err(Error::Config(format!(
                "signal.window_len = {} must exceed dictionary.template_len = {}",
                s.window_len, self.dictionary.template_len
            )));
        }
        if self.dictionary.template_file.is_none() && self.dictionary.families.len() != s.sources {
            return Err(Error::Config(format!(
                "{} template families for {} sources",
                self.dictionary.families.len(),
                s.sources
            )));
        }
        if !(s.amp_range.0 <= s.amp_range.1) {
            return Err(Error::Config("signal.amp_range must be ordered".into()));
        }
        self.csc.validate()?;
        self.cdl_config().validate()?;
        if self.cdl.init == InitPolicy::Perturbed && !(self.cdl.perturb_err > 0.0 && self.cdl.perturb_err < 1.0) {
            return Err(Error::Config("cdl.perturb_err must lie in (0, 1)".into()));
        }
        if !(self.hit.tolerance_samples >= 1.0) {
            return Err(Error::Config("hit.tolerance_samples must be at least 1".into()));
        }
        self.bench.validate()
    }

    pub fn cdl_config(&self) -> CdlConfig {
        CdlConfig {
            k_factor: self.csc.k_factor,
            csc: self.csc,
            max_iters: self.cdl.max_iters,
            convergence_tol: self.cdl.convergence_tol,
            cdu_mode: self.cdl.cdu_mode,
        }
    }

    pub fn dataset_dir(&self) -> &Path {
        self.dataset.as_deref().unwrap_or(&self.output)
    }
}

/// Sets `path` (lower-cased, `__`-separated) inside a JSON object tree.
fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut node = root;
    for key in parents {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override path through non-object at `{key}`")))?;
        node = obj.entry(key.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Config(format!("override of `{last}` inside a non-object")))?
        .insert(last.clone(), value);
    Ok(())
}

/// Applies `OGCDL_A__B=v` style overrides to a raw JSON config.
pub fn apply_env_overrides<I>(root: &mut Value, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        set_path(root, &path, value)?;
    }
    Ok(())
}

pub fn parse_config(root: Value) -> Result<ExperimentConfig> {
    serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Parser)]
#[command(name = "offgrid-cdl", version, about = "Off-the-grid convolutional sparse coding and dictionary learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset directory for csc/learn/metrics (defaults to --out).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// cmp, comp, comp-slow or comp-interp.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Sub-grid refinement factor.
    #[arg(long = "K", global = true)]
    pub k: Option<u32>,
    #[arg(long, global = true)]
    pub threads: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate a dataset.
    Synth,
    /// Code a dataset with the true templates.
    Csc,
    /// Learn templates from a dataset.
    Learn,
    /// Time the CSC methods.
    Bench,
    /// Evaluate codes and learned templates against the ground truth.
    Metrics,
}

/// Builds the resolved configuration for `cli` from the config file, the
/// given environment, and the flags.
pub fn resolve_config<I>(cli: &Cli, env: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut root = match &cli.config {
        Some(path) => read_json::<Value>(path)?,
        None => Value::Object(Default::default()),
    };
    apply_env_overrides(&mut root, env)?;
    let mut cfg = parse_config(root)?;
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(data) = &cli.data {
        cfg.dataset = Some(data.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.bench.seed = seed;
    }
    if let Some(m) = &cli.method {
        cfg.method = m.parse()?;
    }
    if let Some(k) = cli.k {
        cfg.csc.k_factor = k as usize;
        cfg.bench.k_interp = k as usize;
    }
    if let Some(m) = &cli.method {
        if cli.k.is_none() && matches!(m.parse::<Method>()?, Method::Cmp | Method::Comp | Method::CompSlow) {
            cfg.csc.k_factor = 1;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses flags, resolves the configuration, and runs the command. Returns
/// the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = resolve_config(cli, std::env::vars())?;
    let job = || execute(cli.command, &cfg);
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(job),
        None => job(),
    }
}

pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    match command {
        Command::Synth => cmd_synth(cfg),
        Command::Csc => cmd_csc(cfg),
        Command::Learn => cmd_learn(cfg),
        Command::Bench => cmd_bench(cfg),
        Command::Metrics => cmd_metrics(cfg),
    }
}

fn continuous_templates(cfg: &ExperimentConfig) -> Result<Vec<ContinuousTemplate>> {
    let len = cfg.dictionary.template_len;
    match &cfg.dictionary.template_file {
        Some(path) => {
            let (dict, fs) = read_dictionary(path)?;
            if dict.template_len() != len || dict.num_sources() != cfg.signal.sources {
                return Err(Error::Config(format!(
                    "{} holds {} templates of length {}, config expects {} of length {len}",
                    path.display(),
                    dict.num_sources(),
                    dict.template_len(),
                    cfg.signal.sources
                )));
            }
            dict.templates()
                .iter()
                .map(|t| ContinuousTemplate::bandlimited(t.samples().to_vec(), fs).normalized_for(cfg.signal.fs, len))
                .collect()
        }
        None => cfg
            .dictionary
            .families
            .iter()
            .map(|&k| ContinuousTemplate::gamma_tone(k).normalized_for(cfg.signal.fs, len))
            .collect(),
    }
}

fn write_manifest(cfg: &ExperimentConfig, name: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = cfg.output.join(name);
    write_json(&path, cfg)?;
    written.push(path);
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSummary {
    pub samples: usize,
    pub events: usize,
    /// Measured; `null` when the signal is noiseless.
    pub snr_db: Option<f64>,
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let s = &cfg.signal;
    let len = cfg.dictionary.template_len;
    let continuous = continuous_templates(cfg)?;
    let dict = Dictionary::new(continuous.iter().map(|ct| sample_template(ct, s.fs, len)).collect::<Result<_>>()?)?;
    let spec = EventTrainSpec {
        amp_range: s.amp_range,
        min_gap: s.min_gap_samples.unwrap_or(2.0 * len as f64) / s.fs,
        margin: s.window_margin.then_some(WindowMargin { fs: s.fs, window_len: s.window_len, margin_samples: len }),
        on_grid: s.on_grid.then_some(s.fs),
        ..EventTrainSpec::new(s.sources, s.per_source, s.duration)
    };
    let train = random_event_train(&spec, cfg.seed)?;
    let syn = synthesize(&continuous, &train, s.fs, s.snr_db, cfg.seed.wrapping_add(1))?;

    let out = &cfg.output;
    let mut written = Vec::new();
    let meta = ArrayMeta { length: syn.signal.samples.len(), fs: s.fs, template_len: None, num_sources: None };
    for (name, data) in [("signal.f64", &syn.signal.samples), ("clean.f64", &syn.clean)] {
        let p = out.join(name);
        write_f64_array(&p, data, &meta)?;
        written.push(p);
    }
    let p = out.join("templates.f64");
    write_dictionary(&p, &dict, s.fs)?;
    written.push(p);
    let p = out.join("events.csv");
    write_events_csv(&p, &train, s.fs)?;
    written.push(p);
    let summary = SynthSummary {
        samples: syn.signal.samples.len(),
        events: train.events.len(),
        snr_db: s.snr_db.map(|_| snr_db(&syn.clean, &syn.noise)).transpose()?,
    };
    let p = out.join("synth_summary.json");
    write_json(&p, &summary)?;
    written.push(p);
    write_manifest(cfg, "manifest.json", &mut written)?;
    Ok(written)
}

/// A synthesized dataset loaded back from disk.
pub struct Dataset {
    pub config: ExperimentConfig,
    pub signal: DiscreteSignal,
    pub clean: Vec<f64>,
    pub truth: Dictionary,
    pub events: EventTrain,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let config: ExperimentConfig = read_json(&dir.join("manifest.json"))?;
        let (samples, meta) = read_f64_array(&dir.join("signal.f64"))?;
        let (clean, _) = read_f64_array(&dir.join("clean.f64"))?;
        let (truth, _) = read_dictionary(&dir.join("templates.f64"))?;
        let events = read_events_csv(&dir.join("events.csv"), config.signal.duration)?;
        Ok(Self { signal: DiscreteSignal { samples, fs: meta.fs }, clean, truth, events, config })
    }

    pub fn windows(&self) -> Result<WindowedSignal> {
        window(&self.signal, self.config.signal.window_len, self.truth.template_len())
    }

    pub fn layout(&self, k_factor: usize) -> CodeLayout {
        CodeLayout {
            fs: self.signal.fs,
            window_len: self.config.signal.window_len,
            template_len: self.truth.template_len(),
            k_factor,
        }
    }

    pub fn budgets(&self, policy: SparsityPolicy, num_windows: usize) -> Option<Vec<usize>> {
        match policy {
            SparsityPolicy::Truth => {
                Some(self.events.counts_per_window(self.signal.fs, self.config.signal.window_len, num_windows))
            }
            SparsityPolicy::Config => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitSummary {
    pub method: Method,
    pub k_factor: usize,
    pub average_hit_error_seconds: Option<f64>,
    pub report: HitMatchReport,
}

fn hit_summary(data: &Dataset, codes: &[SparseCode], cfg: &ExperimentConfig) -> Result<HitSummary> {
    let report = average_hit_error(&data.events, codes, &data.layout(cfg.csc.k_factor), &cfg.hit)?;
    Ok(HitSummary {
        method: cfg.method,
        k_factor: cfg.csc.k_factor,
        average_hit_error_seconds: report.average_hit_error.map(|e| e / data.signal.fs),
        report,
    })
}

pub fn cmd_csc(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = Dataset::load(cfg.dataset_dir())?;
    let windows = data.windows()?;
    if cfg.method == Method::Comp && cfg.csc.k_factor > 1 {
        log::warn!("method comp with K = {} runs COMP-INTERP", cfg.csc.k_factor);
    }
    let bank = expand_dictionary(&data.truth, cfg.csc.k_factor)?;
    let budgets = data.budgets(cfg.sparsity, windows.num_windows());
    let codes = code_windows(&windows, &bank, &cfg.csc, cfg.method.algorithm(), budgets.as_deref())?;

    let mut written = Vec::new();
    let p = cfg.output.join("codes.csv");
    write_codes_csv(&p, &codes, &data.layout(cfg.csc.k_factor))?;
    written.push(p);
    let p = cfg.output.join("hit_report.json");
    write_json(&p, &hit_summary(&data, &codes, cfg)?)?;
    written.push(p);
    write_manifest(cfg, "csc_manifest.json", &mut written)?;
    Ok(written)
}

fn write_trace_csv(path: &Path, trace: &CdlTrace, num_sources: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration".to_string(), "reconstruction_error".to_string()];
    header.extend((0..num_sources).map(|c| format!("err_{c}")));
    header.extend(["csc_seconds".to_string(), "cdu_seconds".to_string()]);
    w.write_record(&header)?;
    for it in &trace.iterations {
        let mut row = vec![it.iteration.to_string(), it.reconstruction_error.to_string()];
        match &it.template_err {
            Some(errs) => row.extend(errs.iter().map(f64::to_string)),
            None => row.extend((0..num_sources).map(|_| String::new())),
        }
        row.extend([it.csc_seconds.to_string(), it.cdu_seconds.to_string()]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_learn(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = Dataset::load(cfg.dataset_dir())?;
    let windows = data.windows()?;
    let init = match cfg.cdl.init {
        InitPolicy::Truth => data.truth.clone(),
        InitPolicy::Perturbed => perturb_templates(&data.truth, cfg.cdl.perturb_err, cfg.seed.wrapping_add(2))?,
    };
    let budgets = data.budgets(cfg.sparsity, windows.num_windows());
    let outcome = run_cdl(&windows, &init, &cfg.cdl_config(), budgets.as_deref(), Some(&data.truth))?;

    let mut written = Vec::new();
    let p = cfg.output.join("learned_templates.f64");
    write_dictionary(&p, &outcome.dictionary, data.signal.fs)?;
    written.push(p);
    let p = cfg.output.join("trace.csv");
    write_trace_csv(&p, &outcome.trace, data.truth.num_sources())?;
    written.push(p);
    let p = cfg.output.join("learn_codes.csv");
    write_codes_csv(&p, &outcome.codes, &data.layout(cfg.csc.k_factor))?;
    written.push(p);
    write_manifest(cfg, "learn_manifest.json", &mut written)?;
    Ok(written)
}

pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let records = bench_csc(&cfg.bench)?;
    let p = cfg.output.join("bench.csv");
    let file = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
    write_bench_csv(&records, file)?;
    let mut written = vec![p];
    write_manifest(cfg, "bench_manifest.json", &mut written)?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub snr_db: Option<f64>,
    pub hit: Option<HitSummary>,
    pub template_err: Option<Vec<f64>>,
}

/// Scores whatever outputs are present in the output directory
/// (`codes.csv`, `learned_templates.f64`) against the dataset.
pub fn cmd_metrics(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = Dataset::load(cfg.dataset_dir())?;
    let noise: Vec<f64> = data.signal.samples.iter().zip(&data.clean).map(|(y, c)| y - c).collect();
    let snr = snr_db(&data.clean, &noise)?;
    let codes_path = cfg.output.join("codes.csv");
    let hit = if codes_path.exists() {
        let num_windows = sample_count(data.config.signal.duration, data.signal.fs) / data.config.signal.window_len;
        let codes = read_codes_csv(&codes_path, num_windows)?;
        Some(hit_summary(&data, &codes, cfg)?)
    } else {
        None
    };
    let learned_path = cfg.output.join("learned_templates.f64");
    let template_err = if learned_path.exists() {
        let (learned, _) = read_dictionary(&learned_path)?;
        Some(
            learned
                .templates()
                .iter()
                .zip(data.truth.templates())
                .map(|(h, t)| aligned_err(h.samples(), t.samples()))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let report = MetricsReport { snr_db: snr.is_finite().then_some(snr), hit, template_err };
    let p = cfg.output.join("metrics.json");
    write_json(&p, &report)?;
    Ok(vec![p])
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn env_overrides_nest_and_parse() {
        let mut root = json!({"signal": {"fs": 8000.0}});
        let env = vec![
            ("OGCDL_SIGNAL__SNR_DB".to_string(), "14".to_string()),
            ("OGCDL_CDL__CDU_MODE".to_string(), "literal".to_string()),
            ("OGCDL_SEED".to_string(), "9".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        apply_env_overrides(&mut root, env).unwrap();
        let cfg = parse_config(root).unwrap();
        assert_eq!(cfg.signal.snr_db, Some(14.0));
        assert_eq!(cfg.signal.fs, 8000.0);
        assert_eq!(cfg.cdl.cdu_mode, CduMode::Literal);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config(json!({"signal": {"bogus": 1}})).is_err());
        assert!(parse_config(json!({"nope": 1})).is_err());
        let mut root = json!({});
        apply_env_overrides(&mut root, [("OGCDL_CSC__WHAT".to_string(), "1".to_string())]).unwrap();
        assert!(parse_config(root).is_err());
    }

    #[test]
    fn default_config_validates_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = parse_config(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_duration_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.signal.duration = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from(["offgrid-cdl", "csc", "--method", "comp", "--seed", "4", "--out", "/tmp/x"]);
        let cfg = resolve_config(&cli, Vec::new()).unwrap();
        assert_eq!(cfg.method, Method::Comp);
        assert_eq!(cfg.csc.k_factor, 1);
        assert_eq!(cfg.seed, 4);
        let cli = Cli::parse_from(["offgrid-cdl", "csc", "--method", "cbp"]);
        let err = resolve_config(&cli, Vec::new()).unwrap_err();
        assert!(err.to_string().contains("unsupported method"));
    }
}
