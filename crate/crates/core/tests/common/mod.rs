#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use offgrid_cdl::cdl::{run_cdl, CdlConfig};
use offgrid_cdl::cdu::{
    accumulate_update, compute_residual_ej, placements_for, CduMode, ShiftOperators, UpdateAccumulator,
};
use offgrid_cdl::csc::{comp_interp_observed, CodeEvent, CscConfig, SparseCode, StopReason};
use offgrid_cdl::interp::{build_interp_matrix, expand_dictionary, InterpolatedDictionary};
use offgrid_cdl::metrics::err_distance;
use offgrid_cdl::signal_model::{
    gamma_tone_dictionary, random_event_train, sample_template, synthesize, window, ContinuousTemplate, Dictionary,
    EventTrainSpec, GammaTone, WindowMargin,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FS: f64 = 1e4;
pub const L: usize = 101;

pub fn gamma_dict(len: usize) -> Dictionary {
    gamma_tone_dictionary(&[GammaTone::One, GammaTone::Two], FS, len).unwrap()
}

pub struct Instance {
    pub y: Vec<f64>,
    pub bank: InterpolatedDictionary,
    pub events: usize,
}

/// A window built from 1..=4 random atoms of a `K`-expanded gamma-tone bank
/// plus a little white noise.
pub fn random_instance(seed: u64, window_len: usize, k_factor: usize) -> Instance {
    let bank = expand_dictionary(&gamma_dict(L), k_factor).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lags = window_len - L + 1;
    let events = rng.random_range(1..=4);
    let mut y = vec![0.0; window_len];
    for _ in 0..events {
        let c = rng.random_range(0..2);
        let k = rng.random_range(0..k_factor);
        let n = rng.random_range(0..lags);
        let amp = rng.random_range(1.0..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for (o, h) in y[n..].iter_mut().zip(bank.atom(c, k)) {
            *o += amp * h;
        }
    }
    for v in y.iter_mut() {
        *v += 1e-3 * (rng.random::<f64>() - 0.5);
    }
    Instance { y, bank, events }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// After every COMP iteration the residual is orthogonal to each active atom.
pub fn residual_orthogonality(seed: u64) -> Result<(), String> {
    let inst = random_instance(seed, 256, 1 + (seed % 4) as usize);
    let cfg = CscConfig::with_k(inst.bank.k_factor()).max_events(inst.events + 2);
    let scale = dot(&inst.y, &inst.y).sqrt();
    let mut worst: f64 = 0.0;
    comp_interp_observed(&inst.y, &inst.bank, &cfg, &mut |view| {
        for a in view.active.atoms() {
            let atom = inst.bank.atom(a.c, a.k);
            let ip = dot(&view.residual[a.n..a.n + atom.len()], atom);
            worst = worst.max(ip.abs() / scale);
        }
    })
    .map_err(|e| e.to_string())?;
    if worst < 1e-9 {
        Ok(())
    } else {
        Err(format!("seed {seed}: |<r, atom>| / |y| = {worst:e}"))
    }
}

/// Residual norms never increase from one COMP iteration to the next.
pub fn residual_monotonicity(seed: u64) -> Result<(), String> {
    let inst = random_instance(seed, 256, 1 + (seed % 4) as usize);
    let cfg = CscConfig::with_k(inst.bank.k_factor()).max_events(inst.events + 3);
    let mut norms = vec![dot(&inst.y, &inst.y).sqrt()];
    comp_interp_observed(&inst.y, &inst.bank, &cfg, &mut |view| {
        norms.push(dot(view.residual, view.residual).sqrt());
    })
    .map_err(|e| e.to_string())?;
    for w in norms.windows(2) {
        if w[1] > w[0] * (1.0 + 1e-12) {
            return Err(format!("seed {seed}: residual grew {} -> {}", w[0], w[1]));
        }
    }
    Ok(())
}

/// CDU normal equations against explicitly materialized placement and
/// interpolation matrices.
pub fn accumulator_matches_dense(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_factor = [1, 2, 4][rng.random_range(0..3)];
    let len = 21;
    let window_len = 96;
    let dict = gamma_dict(len);
    let bank = expand_dictionary(&dict, k_factor).unwrap();
    let ops = ShiftOperators::new(&bank);
    let source = rng.random_range(0..2);

    let mut a_acc = UpdateAccumulator::new(source, len);
    let mut a_dense = DMatrix::<f64>::zeros(len, len);
    let mut b_dense = DVector::<f64>::zeros(len);
    for window in 0..3 {
        let y: Vec<f64> = (0..window_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Clustered lags so that occurrences overlap.
        let events: Vec<CodeEvent> = (0..rng.random_range(1..6))
            .map(|_| CodeEvent {
                c: rng.random_range(0..2),
                k: rng.random_range(0..k_factor),
                n: rng.random_range(0..30),
                amplitude: rng.random_range(-2.0..2.0),
            })
            .collect();
        let code = SparseCode { window, events, residual_norm: 0.0, stop: StopReason::MaxEvents };
        let e_j = compute_residual_ej(&y, &code, &bank, source);
        accumulate_update(&mut a_acc, &placements_for(&code, source, &bank), &e_j, &ops, CduMode::Full)
            .map_err(|e| e.to_string())?;

        let mut m = DMatrix::<f64>::zeros(window_len, len);
        let mut other = DVector::from_column_slice(&y);
        for e in &code.events {
            let f = build_interp_matrix(e.k, k_factor, len).unwrap();
            let mut s = DMatrix::<f64>::zeros(window_len, len);
            for i in 0..len {
                s[(e.n + i, i)] = 1.0;
            }
            if e.c == source {
                m += (s * f.matrix()) * (e.amplitude / bank.pre_norm(e.c, e.k));
            } else {
                for (i, h) in bank.atom(e.c, e.k).iter().enumerate() {
                    other[e.n + i] -= e.amplitude * h;
                }
            }
        }
        a_dense += m.transpose() * &m;
        b_dense += m.transpose() * other;
    }
    let da = (&a_acc.a - &a_dense).amax();
    let db = (&a_acc.b - &b_dense).amax();
    let asym = (&a_acc.a - a_acc.a.transpose()).amax();
    if da < 1e-10 && db < 1e-10 && asym == 0.0 {
        Ok(())
    } else {
        Err(format!("seed {seed}: |dA| = {da:e}, |db| = {db:e}, asymmetry {asym:e}"))
    }
}

/// Non-negativity, bounds, identity, symmetry, scale and sign invariance,
/// and the triangle inequality for the template distance.
pub fn err_distance_axioms(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..40);
    let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let (a, b, c) = (draw(), draw(), draw());
    let d = |x: &[f64], y: &[f64]| err_distance(x, y).unwrap();
    let scaled: Vec<f64> = a.iter().map(|v| -3.7 * v).collect();
    let checks = [
        ("range", (0.0..=1.0).contains(&d(&a, &b))),
        ("identity", d(&a, &a) < 1e-7),
        ("collinear", d(&a, &scaled) < 1e-7),
        ("symmetry", (d(&a, &b) - d(&b, &a)).abs() < 1e-12),
        ("scale", (d(&scaled, &b) - d(&a, &b)).abs() < 1e-12),
        ("triangle", d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12),
    ];
    match checks.iter().find(|(_, ok)| !ok) {
        None => Ok(()),
        Some((name, _)) => Err(format!("seed {seed}: {name} violated")),
    }
}

#[derive(Debug, PartialEq)]
pub struct Snapshot {
    pub signal: Vec<f64>,
    pub dictionary: Dictionary,
    pub codes: Vec<SparseCode>,
    pub errors: Vec<f64>,
}

/// Synthesis, perturbation and a short CDL run with everything seeded.
pub fn seeded_pipeline(seed: u64) -> Snapshot {
    let kinds = [GammaTone::One, GammaTone::Two];
    let continuous: Vec<ContinuousTemplate> =
        kinds.iter().map(|&k| ContinuousTemplate::gamma_tone(k).normalized_for(FS, L).unwrap()).collect();
    let truth = Dictionary::new(continuous.iter().map(|ct| sample_template(ct, FS, L).unwrap()).collect()).unwrap();
    let spec = EventTrainSpec {
        min_gap: 2.0 * L as f64 / FS,
        margin: Some(WindowMargin { fs: FS, window_len: 1000, margin_samples: L }),
        ..EventTrainSpec::new(2, 6, 0.6)
    };
    let train = random_event_train(&spec, seed).unwrap();
    let syn = synthesize(&continuous, &train, FS, Some(15.0), seed + 1).unwrap();
    let windows = window(&syn.signal, 1000, L).unwrap();
    let init = offgrid_cdl::cdl::perturb_templates(&truth, 0.5, seed + 2).unwrap();
    let budgets = train.counts_per_window(FS, 1000, windows.num_windows());
    let cfg = CdlConfig { max_iters: 4, ..CdlConfig::with_k(4) };
    let out = run_cdl(&windows, &init, &cfg, Some(&budgets), Some(&truth)).unwrap();
    Snapshot {
        signal: syn.signal.samples,
        dictionary: out.dictionary,
        codes: out.codes,
        errors: out.trace.iterations.iter().map(|i| i.reconstruction_error).collect(),
    }
}

/// Identical seeds give bit-identical results, also across thread counts.
pub fn determinism(seed: u64) -> Result<(), String> {
    let first = seeded_pipeline(seed);
    let second = seeded_pipeline(seed);
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| seeded_pipeline(seed));
    if first == second && first == serial {
        Ok(())
    } else {
        Err(format!("seed {seed}: outputs differ between identical runs"))
    }
}
