//! Sweep execution and CSV persistence.
//!
//! Records are independent, so runs are spread over a rayon pool; output
//! order is fixed by (sweep index, scheme, seed) regardless of completion
//! order.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::FieldRegime;
use crate::metrics::range_error_cm;
use crate::optimizer::{evaluate, run_ao_on, scheme_budget, Instance, Scheme};
use crate::scenario::{ScenarioConfig, SweepVariable};

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml_str(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario_hash: String,
    pub scheme: Scheme,
    pub seed: u64,
    pub sweep_var: SweepVariable,
    /// `NaN` when the configuration has no sweep.
    pub sweep_value: f64,
    /// `NaN` when no feasible design was produced.
    pub crb_s2: f64,
    pub range_err_cm: f64,
    pub alpha_star: f64,
    pub iterations: usize,
    pub rate_s_bps: f64,
    pub rate_k_bps: Vec<f64>,
    pub feasible: bool,
    pub wall_ms: f64,
    pub regime_ap_ris: Option<FieldRegime>,
    /// Set when the run ended in an error other than an infeasible scenario.
    pub failure: Option<String>,
}

/// First 16 hex digits of SHA-256 over the canonical TOML of a
/// single-point configuration. Schemes and seeds have their own columns and
/// are left out, so the hash names the physical scenario alone.
pub fn scenario_hash(config: &ScenarioConfig) -> String {
    let mut scenario = config.clone();
    scenario.schemes.clear();
    scenario.seeds.clear();
    let digest = Sha256::digest(scenario.to_toml_string().as_bytes());
    hex::encode(&digest[..8])
}

/// The per-point configurations of a sweep, paired with their sweep value.
pub fn sweep_points(config: &ScenarioConfig) -> Result<Vec<(f64, ScenarioConfig)>> {
    match config.sweep.variable {
        SweepVariable::None => {
            let mut point = config.clone();
            point.sweep = Default::default();
            Ok(vec![(f64::NAN, point)])
        }
        var => config
            .sweep
            .values
            .iter()
            .map(|&v| Ok((v, config.with_sweep_value(var, v)?)))
            .collect(),
    }
}

fn run_one(point: &ScenarioConfig, hash: &str, var: SweepVariable, value: f64, scheme: Scheme, seed: u64) -> RunRecord {
    let k = point.num_devices;
    let mut record = RunRecord {
        scenario_hash: hash.to_string(),
        scheme,
        seed,
        sweep_var: var,
        sweep_value: value,
        crb_s2: f64::NAN,
        range_err_cm: f64::NAN,
        alpha_star: f64::NAN,
        iterations: 0,
        rate_s_bps: f64::NAN,
        rate_k_bps: vec![f64::NAN; k],
        feasible: false,
        wall_ms: 0.0,
        regime_ap_ris: None,
        failure: None,
    };
    let start = Instant::now();
    let outcome = Instance::build(point, seed).and_then(|inst| {
        record.regime_ap_ris = Some(inst.channels.regime_ap_ris);
        let (vars, trace) = run_ao_on(&inst, scheme)?;
        Ok((evaluate(&vars, &inst.channels, &scheme_budget(scheme, &inst.budget)), vars, trace))
    });
    match outcome {
        Ok((eval, vars, trace)) => {
            record.crb_s2 = eval.crb;
            record.range_err_cm = range_error_cm(eval.crb);
            record.alpha_star = vars.alpha;
            record.iterations = trace.passes();
            record.rate_s_bps = eval.rates.rate_s;
            record.rate_k_bps = eval.rates.rate_k.clone();
            record.feasible = eval.feasible;
        }
        Err(Error::InfeasibleScenario(_)) => {}
        Err(e) => record.failure = Some(e.to_string()),
    }
    if point.algorithm.record_timing {
        record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    record
}

/// Runs every (sweep value, scheme, seed) combination on the current rayon
/// pool.
pub fn run_sweep(config: &ScenarioConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let points = sweep_points(config)?;
    let hashes: Vec<String> = points.iter().map(|(_, p)| scenario_hash(p)).collect();
    let mut tasks = Vec::new();
    for i in 0..points.len() {
        for &scheme in &config.schemes {
            for &seed in &config.seeds {
                tasks.push((i, scheme, seed));
            }
        }
    }
    let var = config.sweep.variable;
    Ok(tasks
        .par_iter()
        .map(|&(i, scheme, seed)| run_one(&points[i].1, &hashes[i], var, points[i].0, scheme, seed))
        .collect())
}

/// [`run_sweep`] on a dedicated pool of `jobs` worker threads.
pub fn run_sweep_with_jobs(config: &ScenarioConfig, jobs: usize) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| run_sweep(config))
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders records as CSV. The number of `rate_k` columns is the largest
/// device count among the records.
pub fn to_csv(records: &[RunRecord]) -> String {
    let k = records.iter().map(|r| r.rate_k_bps.len()).max().unwrap_or(0);
    let mut out = String::from(
        "scenario_hash,scheme,seed,sweep_var,sweep_value,crb_s2,range_err_cm,alpha_star,iterations,rate_s_bps",
    );
    for i in 1..=k {
        write!(out, ",rate_k{i}_bps").unwrap();
    }
    out.push_str(",feasible,wall_ms\n");
    for r in records {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scenario_hash,
            r.scheme.label(),
            r.seed,
            r.sweep_var.label(),
            float(r.sweep_value),
            float(r.crb_s2),
            float(r.range_err_cm),
            float(r.alpha_star),
            r.iterations,
            float(r.rate_s_bps),
        )
        .unwrap();
        for i in 0..k {
            write!(out, ",{}", float(r.rate_k_bps.get(i).copied().unwrap_or(f64::NAN))).unwrap();
        }
        writeln!(out, ",{},{}", r.feasible, float(r.wall_ms)).unwrap();
    }
    out
}

pub fn write_results(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv(records)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
