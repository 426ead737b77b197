//! Acceptance checks. Runs as a plain binary (`harness = false`) so that
//! every criterion prints exactly one PASS/FAIL line; the process exits
//! non-zero when any hard criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use risisac::channel::{ff_steering, nf_response};
use risisac::geometry::{direction, element_positions, rayleigh_distance, Position};
use risisac::harness::{run_sweep, to_csv};
use risisac::metrics::{fim_from_gain, fim_second_derivative};
use risisac::optimizer::{evaluate, run_ao_on, scheme_budget, Evaluation, Instance};
use risisac::{AoTrace, DesignVariables, Error, ScenarioConfig, Scheme, SdpStatus, SweepVariable};

const SEEDS: u64 = 20;
const RATES: [f64; 3] = [1e6, 2e6, 4e6];

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("criterion {id:<3} {} {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn warn(&self, id: &str, detail: String) {
        println!("criterion {id:<3} WARN {detail}");
    }
}

/// Composite Simpson rule; exact for the quadratic integrands used here up
/// to rounding.
fn simpson(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// FIM from the band integrals: twice the echo SNR density times the mean
/// squared angular frequency, with unit-power waveforms over `T`.
fn fim_oracle(alpha: f64, echo_gain: f64, beta_power: f64, n: usize, config: &ScenarioConfig) -> f64 {
    let budget = config.link_budget();
    let b = config.bandwidth_hz;
    let lo = config.band_offset_hz - b / 2.0;
    let split = lo + alpha * b;
    let hi = config.band_offset_hz + b / 2.0;
    let t = config.observation_s;
    let psd_so = alpha * b * config.rho_so;
    let psd_isac = (1.0 - alpha) * b * config.rho_isac;
    let w2 = |f: f64| (2.0 * PI * f).powi(2);
    let so = simpson(lo, split, 2000, |f| psd_so * t * w2(f));
    let isac = simpson(split, hi, 2000, |f| psd_isac * t * w2(f));
    2.0 * beta_power * echo_gain / n as f64 / budget.sigma2 * (so + isac)
}

fn criterion_1(r: &mut Report) {
    let start = Instant::now();
    let config = ScenarioConfig::default();
    let budget = config.link_budget();
    let inst = Instance::build(&config, 1).unwrap();
    let f = inst.channels.a_ap_s.normalized().unwrap();
    let gain = f.dot(&inst.channels.a_ap_s).unwrap().norm_sqr();
    let beta = inst.channels.beta_power();
    let mut worst = 0.0f64;
    for i in 0..=100 {
        let alpha = i as f64 / 100.0;
        let closed = fim_from_gain(alpha, gain, beta, 8, &budget);
        let oracle = fim_oracle(alpha, gain, beta, 8, &config);
        worst = worst.max((closed - oracle).abs() / oracle);
    }
    let secs = start.elapsed().as_secs_f64();
    r.line(
        "1",
        worst <= 1e-8 && secs < 1.0,
        format!("closed-form FIM vs band integral over 101 ratios: max rel err {worst:.2e} (tol 1e-8), {secs:.3}s (limit 1s)"),
    );
}

fn criterion_2(r: &mut Report) {
    let start = Instant::now();
    let config = ScenarioConfig::default();
    let budget = config.link_budget();
    let beta = config.beta_s * config.beta_s;
    let j = |a: f64| fim_from_gain(a, 8.0, beta, 8, &budget);
    let h = 1e-3;
    let mut min_second = f64::INFINITY;
    let mut worst_five = 0.0f64;
    let mut worst_three = 0.0f64;
    for i in 1..1000 {
        let a = i as f64 * h;
        let three = (j(a + h) - 2.0 * j(a) + j(a - h)) / (h * h);
        min_second = min_second.min(three);
        let analytic = fim_second_derivative(a, 8.0, beta, 8, &budget);
        worst_three = worst_three.max((three - analytic).abs() / analytic.abs());
        if (2..=998).contains(&i) {
            let five =
                (-j(a + 2.0 * h) + 16.0 * j(a + h) - 30.0 * j(a) + 16.0 * j(a - h) - j(a - 2.0 * h)) / (12.0 * h * h);
            worst_five = worst_five.max((five - analytic).abs() / analytic.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.line(
        "2",
        min_second > 0.0 && worst_five <= 1e-6 && secs < 1.0,
        format!(
            "J'' > 0 on (0,1): min central difference {min_second:.3e}; analytic J'' vs 5-point central stencil max rel err {worst_five:.2e} (tol 1e-6); 3-point stencil {worst_three:.2e} (truncation h^2/12 J''''); {secs:.3}s"
        ),
    );
}

struct Run {
    rate: f64,
    seed: u64,
    scheme: Scheme,
    outcome: Result<(DesignVariables, AoTrace, Evaluation), Error>,
    secs: f64,
}

impl Run {
    fn crb(&self) -> f64 {
        match &self.outcome {
            Ok((_, _, e)) if e.feasible => e.crb,
            _ => f64::INFINITY,
        }
    }
}

fn shared_runs() -> Vec<Run> {
    let mut runs = Vec::new();
    for &rate in &RATES {
        let config = ScenarioConfig {
            rate_k_bps: rate,
            ..Default::default()
        };
        for seed in 1..=SEEDS {
            let inst = Instance::build(&config, seed).unwrap();
            for scheme in Scheme::ALL {
                let start = Instant::now();
                let outcome = run_ao_on(&inst, scheme).map(|(vars, trace)| {
                    let e = evaluate(&vars, &inst.channels, &scheme_budget(scheme, &inst.budget));
                    (vars, trace, e)
                });
                runs.push(Run {
                    rate,
                    seed,
                    scheme,
                    outcome,
                    secs: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    runs
}

fn find<'a>(runs: &'a [Run], rate: f64, seed: u64, scheme: Scheme) -> &'a Run {
    runs.iter()
        .find(|r| r.rate == rate && r.seed == seed && r.scheme == scheme)
        .expect("run exists")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else if v[n / 2 - 1].is_infinite() || v[n / 2].is_infinite() {
        v[n / 2].max(v[n / 2 - 1])
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_3(r: &mut Report, runs: &[Run]) {
    let mut worst = f64::NEG_INFINITY;
    let mut max_passes = 0;
    let mut problems = Vec::new();
    let mut total = 0.0;
    for run in runs.iter().filter(|x| x.scheme == Scheme::Proposed) {
        total += run.secs;
        match &run.outcome {
            Ok((_, trace, _)) => {
                worst = worst.max(trace.max_relative_increase());
                max_passes = max_passes.max(trace.passes());
                if !trace.converged {
                    problems.push(format!("seed {} at {} bps hit the iteration cap", run.seed, run.rate));
                }
            }
            Err(e) => problems.push(format!("seed {} at {} bps: {e}", run.seed, run.rate)),
        }
    }
    r.line(
        "3",
        worst <= 1e-6 && problems.is_empty() && total < 600.0,
        format!(
            "Proposed over {} runs: max iteration CRB change {worst:+.2e} (tol +1e-6), max passes {max_passes} (cap 50), {total:.1}s{}",
            SEEDS as usize * RATES.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    );
}

fn criterion_4(r: &mut Report, runs: &[Run]) {
    let mut violations = Vec::new();
    let mut medians = Vec::new();
    for &rate in &RATES {
        let mut prop = Vec::new();
        let mut random = Vec::new();
        for seed in 1..=SEEDS {
            let p = find(runs, rate, seed, Scheme::Proposed).crb();
            for other in [Scheme::FullIsac, Scheme::EqualSplit] {
                let o = find(runs, rate, seed, other).crb();
                if !(p <= o * (1.0 + 1e-6)) {
                    violations.push(format!("{other} seed {seed} at {rate} bps ({p:.3e} > {o:.3e})"));
                }
            }
            let so = find(runs, rate, seed, Scheme::FullSo).crb();
            if !(so <= p * (1.0 + 1e-6)) {
                violations.push(format!("full_so seed {seed} at {rate} bps ({so:.3e} > {p:.3e})"));
            }
            prop.push(p);
            random.push(find(runs, rate, seed, Scheme::RandomRis).crb());
        }
        let (mp, mr) = (median(prop), median(random));
        if !(mp < mr) {
            violations.push(format!("median at {rate} bps: proposed {mp:.3e} not below random_ris {mr:.3e}"));
        }
        medians.push(format!("{:.0} Mbps {mp:.3e} vs {mr:.3e}", rate / 1e6));
    }
    r.line(
        "4",
        violations.is_empty(),
        format!(
            "dominance on {} matched seeds x {} rates; median CRB proposed vs random_ris (infeasible = inf): {}{}",
            SEEDS,
            RATES.len(),
            medians.join(", "),
            if violations.is_empty() { String::new() } else { format!("; violations: {}", violations.join("; ")) }
        ),
    );
}

fn median_alpha(runs: &[Run], rate: f64) -> f64 {
    let v: Vec<f64> = (1..=SEEDS)
        .filter_map(|s| match &find(runs, rate, s, Scheme::Proposed).outcome {
            Ok((vars, _, e)) if e.feasible => Some(vars.alpha),
            _ => None,
        })
        .collect();
    median(v)
}

fn criterion_5(r: &mut Report, runs: &[Run]) {
    let a1 = median_alpha(runs, 1e6);
    let a4 = median_alpha(runs, 4e6);
    r.line("5", a1 > a4, format!("median alpha* at 1 Mbps {a1:.2} > at 4 Mbps {a4:.2}"));
    let (in1, in4) = ((a1 - 0.94).abs() <= 0.15, (a4 - 0.41).abs() <= 0.15);
    if !(in1 && in4) {
        r.warn(
            "5b",
            format!("reference medians 0.94 / 0.41 +-0.15: 1 Mbps {} , 4 Mbps {}", band(in1), band(in4)),
        );
    } else {
        println!("criterion 5b PASS medians within +-0.15 of 0.94 / 0.41");
    }
}

fn band(ok: bool) -> &'static str {
    if ok {
        "inside"
    } else {
        "outside"
    }
}

fn criterion_6(r: &mut Report, runs: &[Run]) {
    let mut infeasible = 0;
    let mut proposed_ok = 0;
    for seed in 1..=SEEDS {
        let eq = find(runs, 4e6, seed, Scheme::EqualSplit);
        let failed = match &eq.outcome {
            Err(Error::InfeasibleScenario(_)) | Err(Error::EmptyFeasibleSet) => true,
            Ok((_, _, e)) => !e.feasible,
            Err(_) => false,
        };
        infeasible += failed as usize;
        if matches!(&find(runs, 4e6, seed, Scheme::Proposed).outcome, Ok((_, _, e)) if e.feasible) {
            proposed_ok += 1;
        }
    }
    r.line(
        "6",
        infeasible * 2 > SEEDS as usize && proposed_ok == SEEDS as usize,
        format!("at 4 Mbps equal_split infeasible on {infeasible}/{SEEDS} seeds (need majority); proposed feasible on {proposed_ok}/{SEEDS}"),
    );
}

fn criterion_7(r: &mut Report, runs: &[Run]) {
    let mut checked = 0;
    let (mut min_eig, mut max_eq, mut max_norm, mut max_mod): (f64, f64, f64, f64) = (f64::INFINITY, 0.0, 0.0, 0.0);
    let mut bad_rates = Vec::new();
    let mut gap_worst = 0.0f64;
    for run in runs {
        let Ok((vars, trace, e)) = &run.outcome else { continue };
        for a in trace.audits.iter().filter(|a| a.status == SdpStatus::Optimal) {
            checked += 1;
            min_eig = min_eig.min(a.residuals.min_eigenvalue);
            max_eq = max_eq.max(a.residuals.max_eq_residual);
            if a.subproblem.ends_with("_f") || a.subproblem == "p22" {
                max_norm = max_norm.max(a.structure_error);
            } else {
                max_mod = max_mod.max(a.structure_error);
            }
            if a.accepted && (a.subproblem == "p22" || a.subproblem == "p43") {
                if let Some(obj) = a.recovered_objective {
                    let gap = (a.sdr_bound - obj) / a.sdr_bound.abs().max(1e-300);
                    gap_worst = gap_worst.max(gap);
                }
            }
        }
        if (vars.f.norm() - 1.0).abs() > 1e-12 {
            max_norm = max_norm.max((vars.f.norm() - 1.0).abs());
        }
        max_mod = max_mod.max(vars.phase.v().max_modulus_deviation());
        if run.scheme.rate_constrained() && !e.feasible {
            bad_rates.push(format!("{} seed {} at {} bps: {:?}", run.scheme, run.seed, run.rate, e.violations));
        }
    }
    r.line(
        "7",
        min_eig >= -1e-7 && max_eq <= 1e-6 && max_norm <= 1e-12 && max_mod <= 1e-12 && bad_rates.is_empty(),
        format!(
            "{checked} optimal SDP solutions: min eig {min_eig:.2e} (>= -1e-7), max eq residual {max_eq:.2e} (<= 1e-6), unit-norm err {max_norm:.1e}, unit-modulus err {max_mod:.1e}; final rate violations: {}; worst reported relaxation gap {gap_worst:.2e}",
            if bad_rates.is_empty() { "none".to_string() } else { bad_rates.join("; ") }
        ),
    );
}

fn criterion_8(r: &mut Report) {
    let config = ScenarioConfig::default();
    let layout = element_positions(&config).unwrap();
    let rayleigh = rayleigh_distance(layout.aperture, layout.wavelength);
    let mut worst = 0.0f64;
    for bearing in [[1.0f64, 0.0, 0.0], [0.6, 0.0, 0.8], [0.3, 0.4, -0.866]] {
        let norm = (bearing[0] * bearing[0] + bearing[1] * bearing[1] + bearing[2] * bearing[2]).sqrt();
        let u = [bearing[0] / norm, bearing[1] / norm, bearing[2] / norm];
        let d = 50.0 * rayleigh;
        let c = layout.ap_center;
        let q = Position::new(c.x + d * u[0], c.y + d * u[1], c.z + d * u[2]);
        let near = nf_response(&layout.ap_antennas, q, layout.wavelength).unwrap();
        let far = ff_steering(&layout.ap_antennas, c, direction(c, q).unwrap(), layout.wavelength);
        let ratio: Vec<f64> = near.iter().zip(far.iter()).map(|(n, f)| (n * f.conj()).arg()).collect();
        let common = ratio[0];
        for p in &ratio {
            let dev = (p - common + PI).rem_euclid(2.0 * PI) - PI;
            worst = worst.max(dev.abs());
        }
    }
    r.line(
        "8",
        worst <= 0.05,
        format!("near-field vs planar steering at 50x Rayleigh ({:.1} m): max phase deviation {worst:.2e} rad (tol 0.05)", 50.0 * rayleigh),
    );
}

fn criterion_9(r: &mut Report) {
    let config = ScenarioConfig {
        schemes: vec![Scheme::Proposed, Scheme::FullSo],
        seeds: vec![1, 2],
        sweep: risisac::SweepSpec {
            variable: SweepVariable::RisX,
            values: vec![20.0, 55.0],
        },
        ..Default::default()
    };
    let first = to_csv(&run_sweep(&config).unwrap());
    let second = to_csv(&run_sweep(&config).unwrap());
    let inst = Instance::build(&ScenarioConfig::default(), 1).unwrap();
    let start = Instant::now();
    let ok = run_ao_on(&inst, Scheme::Proposed).is_ok();
    let secs = start.elapsed().as_secs_f64();
    r.line(
        "9",
        first == second && ok && secs < 60.0,
        format!(
            "repeated sweep CSV identical: {} ({} bytes); single Proposed run N=8 M=32 K=3: {secs:.2}s (limit 60s)",
            first == second,
            first.len()
        ),
    );
}

fn sweep_monotonicity(r: &mut Report, runs: &[Run]) {
    let mut violations = Vec::new();
    for scheme in Scheme::ALL.into_iter().filter(|s| s.rate_constrained()) {
        for seed in 1..=SEEDS {
            let crbs: Vec<f64> = RATES.iter().map(|&rate| find(runs, rate, seed, scheme).crb()).collect();
            for w in crbs.windows(2) {
                if w[1] < w[0] * (1.0 - 1e-6) {
                    violations.push(format!("{scheme} seed {seed}"));
                }
            }
        }
    }
    r.line(
        "R",
        violations.is_empty(),
        format!(
            "CRB non-decreasing in the device rate threshold for rate-constrained schemes on matched seeds{}",
            if violations.is_empty() { String::new() } else { format!("; violations: {}", violations.join(", ")) }
        ),
    );
}

fn m_monotonicity(r: &mut Report) {
    let mut violations = Vec::new();
    let seeds = 1..=5u64;
    for seed in seeds.clone() {
        let mut crbs = Vec::new();
        for m in [16usize, 32, 48] {
            let config = ScenarioConfig {
                ris_elements: m,
                ..Default::default()
            };
            let inst = Instance::build(&config, seed).unwrap();
            let c = match run_ao_on(&inst, Scheme::Proposed) {
                Ok((vars, _)) => {
                    let e = evaluate(&vars, &inst.channels, &inst.budget);
                    if e.feasible {
                        e.crb
                    } else {
                        f64::INFINITY
                    }
                }
                Err(_) => f64::INFINITY,
            };
            crbs.push((m, c));
        }
        for w in crbs.windows(2) {
            if w[1].1 > w[0].1 * (1.0 + 1e-6) {
                violations.push(format!("seed {seed}: M={} {:.3e} -> M={} {:.3e}", w[0].0, w[0].1, w[1].0, w[1].1));
            }
        }
    }
    r.line(
        "M",
        violations.is_empty(),
        format!(
            "Proposed CRB non-increasing in M over {{16, 32, 48}} on 5 matched seeds{}",
            if violations.is_empty() { String::new() } else { format!("; violations: {}", violations.join("; ")) }
        ),
    );
}

fn main() {
    // Keep `cargo test -- --list` and filtered invocations cheap.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut r = Report { failures: 0 };
    criterion_1(&mut r);
    criterion_2(&mut r);
    let runs = shared_runs();
    criterion_3(&mut r, &runs);
    criterion_4(&mut r, &runs);
    criterion_5(&mut r, &runs);
    criterion_6(&mut r, &runs);
    criterion_7(&mut r, &runs);
    criterion_8(&mut r);
    criterion_9(&mut r);
    sweep_monotonicity(&mut r, &runs);
    m_monotonicity(&mut r);
    println!("acceptance: {} failing criteria", r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
