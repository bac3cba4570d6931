use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::csc::{CscConfig, Method, Solver};
use crate::error::{Error, Result};
use crate::interp::expand_dictionary;
use crate::signal_model::{
    random_event_train, sample_template, synthesize, ContinuousTemplate, Dictionary, EventTrainSpec, GammaTone,
};

use super::median;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPoint {
    pub duration: f64,
    pub n_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub points: Vec<BenchPoint>,
    pub trials: usize,
    pub seed: u64,
    pub k_interp: usize,
    pub fs: f64,
    pub template_len: usize,
    pub snr_db: Option<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            points: vec![BenchPoint { duration: 3.0, n_events: 30 }],
            trials: 10,
            seed: 0,
            k_interp: 10,
            fs: 1e4,
            template_len: 101,
            snr_db: Some(20.0),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("bench.trials must be positive".into()));
        }
        if self.methods.is_empty() || self.points.is_empty() {
            return Err(Error::Config("bench needs at least one method and one grid point".into()));
        }
        if self.k_interp == 0 {
            return Err(Error::Config("bench.k_interp must be positive".into()));
        }
        for p in &self.points {
            if !(p.duration > 0.0) || p.n_events == 0 {
                return Err(Error::Config(format!("bench point T={} with {} events is empty", p.duration, p.n_events)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: String,
    #[serde(rename = "T_seconds")]
    pub t_seconds: f64,
    pub n_events: usize,
    pub median_seconds: f64,
    pub trials: usize,
}

fn trial_seed(seed: u64, point: usize, trial: usize) -> u64 {
    seed ^ ((point as u64) << 32) ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Times the CSC step of each method on identical synthesized inputs. The
/// whole signal is one window and the sparsity equals the true event count.
/// Bank expansion and correlator setup are part of the timed step.
pub fn bench_csc(config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    let kinds = [GammaTone::One, GammaTone::Two];
    let continuous: Vec<ContinuousTemplate> = kinds
        .iter()
        .map(|&k| ContinuousTemplate::gamma_tone(k).normalized_for(config.fs, config.template_len))
        .collect::<Result<_>>()?;
    let dict = Dictionary::new(
        continuous.iter().map(|ct| sample_template(ct, config.fs, config.template_len)).collect::<Result<_>>()?,
    )?;

    let mut records = Vec::new();
    for (pi, point) in config.points.iter().enumerate() {
        let mut times: Vec<Vec<f64>> = vec![Vec::with_capacity(config.trials); config.methods.len()];
        // Trial 0 runs twice; its first run is the discarded warm-up.
        for trial in 0..config.trials {
            let seed = trial_seed(config.seed, pi, trial);
            let per_source = point.n_events.div_ceil(kinds.len());
            let mut spec = EventTrainSpec::new(kinds.len(), per_source, point.duration);
            spec.min_gap = 0.0;
            let mut train = random_event_train(&spec, seed)?;
            train.events.truncate(point.n_events);
            let y = synthesize(&continuous, &train, config.fs, config.snr_db, seed.wrapping_add(1))?.signal.samples;
            for (mi, &method) in config.methods.iter().enumerate() {
                let runs = if trial == 0 { 2 } else { 1 };
                for run in 0..runs {
                    let elapsed = time_method(method, &dict, &y, train.events.len(), config.k_interp)?;
                    if run + 1 == runs {
                        times[mi].push(elapsed);
                    }
                }
            }
        }
        for (mi, &method) in config.methods.iter().enumerate() {
            records.push(BenchRecord {
                method: method.tag().into(),
                t_seconds: point.duration,
                n_events: point.n_events,
                median_seconds: median(&times[mi]).unwrap_or(f64::NAN),
                trials: config.trials,
            });
        }
    }
    Ok(records)
}

fn time_method(method: Method, dict: &Dictionary, y: &[f64], events: usize, k_interp: usize) -> Result<f64> {
    let k = method.k_factor(k_interp);
    let config = CscConfig::with_k(k).max_events(events).residual_threshold(None);
    let start = Instant::now();
    let bank = expand_dictionary(dict, k)?;
    let solver = Solver::new(&bank, y.len(), config)?;
    let code = solver.run(method.algorithm(), y, None)?;
    let elapsed = start.elapsed().as_secs_f64();
    log::debug!("{method}: {} events in {elapsed}s", code.events.len());
    Ok(elapsed)
}

pub fn write_bench_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_rejected() {
        let cfg = BenchConfig { trials: 0, ..Default::default() };
        assert!(bench_csc(&cfg).is_err());
    }

    #[test]
    fn small_grid_emits_rows_per_method() {
        let cfg = BenchConfig {
            methods: vec![Method::Comp, Method::CompSlow],
            points: vec![BenchPoint { duration: 0.1, n_events: 4 }, BenchPoint { duration: 0.2, n_events: 4 }],
            trials: 2,
            ..Default::default()
        };
        let recs = bench_csc(&cfg).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.median_seconds > 0.0));
        let mut buf = Vec::new();
        write_bench_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,T_seconds,n_events,median_seconds,trials\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
