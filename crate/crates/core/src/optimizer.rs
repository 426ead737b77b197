//! Alternating minimization of the delay CRB over the receive beamformer
//! `f`, the bandwidth ratio `α` and the RIS phases `Φ`, plus the baseline
//! schemes that pin or skip some of those blocks.
//!
//! Every rate constraint is handled as a quadratic row
//! `Σ_r c_r·x_rᴴ Z x_r ≥ b` over the lifted variable `Z` (`F = ffᴴ` for the
//! beamformer step, `V = vvᴴ` for the phase step). The same rows drive the
//! SDP builders, the rank-one recovery checks and the feasibility search.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{build_channels, ChannelSet, RisPhase};
use crate::error::{Error, Result};
use crate::geometry::{element_positions, place_devices, ArrayLayout};
use crate::linalg::{CVector, C64};
use crate::metrics::{
    crb, eta_isac, fim_from_gain, sinr_threshold, BandSplit, BeamGains, InterferenceSum, LinkBudget, RateReport,
};
use crate::scenario::{AlgorithmKnobs, ScenarioConfig};
use crate::sdp::{
    de_embed, rank_one_recover, solve, ConstraintKind, Projection, RecoveryMode, Residuals, SdpProblem, SdpSolution,
    SdpStatus, Sense, SolverOptions, SymMatrix,
};

/// Relative slack used when auditing rate constraints.
pub const RATE_AUDIT_TOL: f64 = 1e-6;
/// Relative slack used when the optimizer itself decides feasibility.
const RATE_DECISION_TOL: f64 = 1e-9;

const STREAM_DEVICES: u64 = 0;
const STREAM_PHASE: u64 = 1;
const STREAM_RECOVERY: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    RandomRis,
    FullIsac,
    EqualSplit,
    FullSo,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Proposed,
        Scheme::RandomRis,
        Scheme::FullIsac,
        Scheme::EqualSplit,
        Scheme::FullSo,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::RandomRis => "random_ris",
            Scheme::FullIsac => "full_isac",
            Scheme::EqualSplit => "equal_split",
            Scheme::FullSo => "full_so",
        }
    }

    pub fn pinned_alpha(self) -> Option<f64> {
        match self {
            Scheme::FullIsac => Some(0.0),
            Scheme::EqualSplit => Some(0.5),
            Scheme::FullSo => Some(1.0),
            Scheme::Proposed | Scheme::RandomRis => None,
        }
    }

    pub fn optimizes_phase(self) -> bool {
        !matches!(self, Scheme::RandomRis | Scheme::FullSo)
    }

    pub fn rate_constrained(self) -> bool {
        self != Scheme::FullSo
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignVariables {
    pub alpha: f64,
    pub f: CVector,
    pub phase: RisPhase,
}

impl DesignVariables {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if (self.f.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("beamformer norm {} is not 1", self.f.norm())));
        }
        if self.phase.v().max_modulus_deviation() > RisPhase::UNIT_MODULUS_TOL {
            return Err(Error::Validation("RIS coefficients are not unit modulus".into()));
        }
        Ok(())
    }
}

/// One scenario realisation: geometry, channels, budget and the seeded
/// initial RIS phases shared by every scheme.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: ScenarioConfig,
    pub layout: ArrayLayout,
    pub channels: ChannelSet,
    pub budget: LinkBudget,
    pub initial_phase: RisPhase,
    pub seed: u64,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Instance {
    pub fn build(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        let layout = element_positions(config)?;
        let devices = place_devices(config, &mut stream(seed, STREAM_DEVICES))?;
        let channels = build_channels(&layout, config.target_position(), C64::new(config.beta_s, 0.0), &devices)?;
        let initial_phase = RisPhase::random(config.ris_elements, &mut stream(seed, STREAM_PHASE));
        Ok(Self {
            config: config.clone(),
            layout,
            channels,
            budget: config.link_budget(),
            initial_phase,
            seed,
        })
    }
}

/// Metrics recomputed from scratch for a design point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fim: f64,
    /// `INFINITY` when the FIM is not positive.
    pub crb: f64,
    pub rates: RateReport,
    pub feasible: bool,
    pub violations: Vec<String>,
}

fn evaluate_with_tol(vars: &DesignVariables, channels: &ChannelSet, budget: &LinkBudget, tol: f64) -> Evaluation {
    let mut violations = Vec::new();
    if !(0.0..=1.0).contains(&vars.alpha) {
        violations.push("alpha_range".to_string());
    }
    if (vars.f.norm() - 1.0).abs() > 1e-9 {
        violations.push("unit_norm".to_string());
    }
    if vars.phase.v().max_modulus_deviation() > RisPhase::UNIT_MODULUS_TOL {
        violations.push("unit_modulus".to_string());
    }
    let gains = BeamGains::new(&vars.f, channels, &vars.phase);
    let (fim, rates) = match gains {
        Ok(g) => {
            let fim = fim_from_gain(vars.alpha, g.echo, channels.beta_power(), channels.n_antennas(), budget);
            let alpha = vars.alpha.clamp(0.0, 1.0);
            let rates = RateReport::compute(alpha, &g, channels.beta_power(), budget).unwrap_or_else(|_| RateReport {
                rate_s: 0.0,
                rate_k: vec![0.0; g.devices.len()],
                sinr_s: 0.0,
                sinr_k: vec![0.0; g.devices.len()],
            });
            (fim, rates)
        }
        Err(_) => {
            violations.push("dimensions".to_string());
            let k = channels.num_devices();
            (
                0.0,
                RateReport {
                    rate_s: 0.0,
                    rate_k: vec![0.0; k],
                    sinr_s: 0.0,
                    sinr_k: vec![0.0; k],
                },
            )
        }
    };
    let crb_value = crb(fim).unwrap_or(f64::INFINITY);
    if !crb_value.is_finite() {
        violations.push("fim".to_string());
    }
    violations.extend(rates.violations(budget, tol));
    Evaluation {
        fim,
        crb: crb_value,
        feasible: violations.is_empty(),
        rates,
        violations,
    }
}

/// Recomputes CRB, rates and constraint status of `vars` with the audit
/// tolerance. Pass a budget without rate thresholds to skip rate checks.
pub fn evaluate(vars: &DesignVariables, channels: &ChannelSet, budget: &LinkBudget) -> Evaluation {
    evaluate_with_tol(vars, channels, budget, RATE_AUDIT_TOL)
}

/// `Σ_r c_r |x_rᴴ z|² ≥ b`.
#[derive(Debug, Clone)]
struct QuadRow {
    terms: Vec<(f64, CVector)>,
    b: f64,
}

impl QuadRow {
    fn value(&self, z: &CVector) -> f64 {
        self.terms
            .iter()
            .map(|(c, x)| c * x.dot(z).map(|d| d.norm_sqr()).unwrap_or(f64::NAN))
            .sum()
    }

    /// Magnitude used to nondimensionalize the row.
    fn scale(&self) -> f64 {
        let s = self
            .terms
            .iter()
            .map(|(c, x)| c.abs() * x.norm_squared())
            .fold(self.b.abs(), f64::max);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    fn margin(&self, z: &CVector) -> f64 {
        (self.value(z) - self.b) / self.scale()
    }

    fn holds(&self, z: &CVector) -> bool {
        self.value(z) >= self.b
    }

    fn lifted(&self, dim: usize, factor: f64) -> Result<SymMatrix> {
        let mut a = SymMatrix::zeros(2 * dim);
        for (c, x) in &self.terms {
            a.add_hermitian_rank_one(c * factor, x)?;
        }
        Ok(a)
    }
}

/// Residual echo and ISAC-band noise `|fᴴa|²|β|²η p_ISAC` factors.
struct EchoTerms {
    echo_coeff: f64,
    noise: f64,
}

fn echo_terms(alpha: f64, channels: &ChannelSet, budget: &LinkBudget) -> EchoTerms {
    let split = BandSplit::new(alpha, budget);
    EchoTerms {
        echo_coeff: channels.beta_power() * eta_isac(alpha, budget.bandwidth, budget.sigma_tau2) * split.p_isac,
        noise: (1.0 - alpha) * budget.sigma2,
    }
}

fn check_alpha(alpha: f64, budget: &LinkBudget) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) || (alpha >= 1.0 && budget.has_rate_constraints()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Rate rows over `F = ffᴴ`; rows with a zero threshold are omitted.
fn beamformer_rows(channels: &ChannelSet, cascades: &[CVector], alpha: f64, budget: &LinkBudget) -> Vec<QuadRow> {
    let mut rows = Vec::new();
    if alpha >= 1.0 {
        return rows;
    }
    let e = echo_terms(alpha, channels, budget);
    let a = &channels.a_ap_s;
    let c_s = sinr_threshold(alpha, budget.bandwidth, budget.rate_s_th);
    if budget.rate_s_th > 0.0 {
        let mut terms = vec![(budget.p_s, channels.h_ap_s.clone())];
        match budget.interference {
            InterferenceSum::Coherent => {
                let mut sum = CVector::zeros(a.len());
                for h in cascades {
                    sum = sum.add(h).expect("cascades share the AP dimension");
                }
                terms.push((-c_s * budget.coherent_power(), sum));
            }
            InterferenceSum::Incoherent => {
                for (h, &p) in cascades.iter().zip(&budget.p_k) {
                    terms.push((-c_s * p, h.clone()));
                }
            }
        }
        terms.push((-c_s * e.echo_coeff, a.clone()));
        rows.push(QuadRow {
            terms,
            b: c_s * e.noise,
        });
    }
    for k in 0..cascades.len() {
        let th = budget.rate_k_th[k];
        if th <= 0.0 {
            continue;
        }
        let d = sinr_threshold(alpha, budget.bandwidth, th);
        let mut terms = vec![(budget.p_k[k], cascades[k].clone())];
        for (i, h) in cascades.iter().enumerate() {
            if i != k {
                terms.push((-d * budget.p_k[i], h.clone()));
            }
        }
        terms.push((-d * e.echo_coeff, a.clone()));
        rows.push(QuadRow {
            terms,
            b: d * e.noise,
        });
    }
    rows
}

/// `r̄_k` with `r̄_{k,m} = (H f)_m · conj(h_{RIS,k,m})`, so that
/// `fᴴ h̄_k = r̄_kᴴ v` and `|fᴴh̄_k|² = vᴴ r̄_k r̄_kᴴ v`.
pub fn reflection_vectors(channels: &ChannelSet, f: &CVector) -> Result<Vec<CVector>> {
    let hf = channels.h_ap_ris.mul_vec(f)?;
    Ok(channels
        .h_ris_k
        .iter()
        .map(|h| CVector::from_vec(hf.iter().zip(h.iter()).map(|(x, y)| x * y.conj()).collect()))
        .collect())
}

/// Rate rows over `V = vvᴴ` for fixed `f` and `α`; all K+1 rows are kept.
fn phase_rows(channels: &ChannelSet, f: &CVector, alpha: f64, budget: &LinkBudget) -> Result<Vec<QuadRow>> {
    let r = reflection_vectors(channels, f)?;
    let e = echo_terms(alpha, channels, budget);
    let echo = f.dot(&channels.a_ap_s)?.norm_sqr() * e.echo_coeff;
    let direct = f.dot(&channels.h_ap_s)?.norm_sqr() * budget.p_s;
    let c_s = sinr_threshold(alpha, budget.bandwidth, budget.rate_s_th);
    let mut rows = Vec::new();
    let mut terms = Vec::new();
    match budget.interference {
        InterferenceSum::Coherent => {
            let mut sum = CVector::zeros(channels.ris_elements());
            for x in &r {
                sum = sum.add(x)?;
            }
            terms.push((-c_s * budget.coherent_power(), sum));
        }
        InterferenceSum::Incoherent => {
            for (x, &p) in r.iter().zip(&budget.p_k) {
                terms.push((-c_s * p, x.clone()));
            }
        }
    }
    rows.push(QuadRow {
        terms,
        b: c_s * (echo + e.noise) - direct,
    });
    for k in 0..r.len() {
        let d = sinr_threshold(alpha, budget.bandwidth, budget.rate_k_th[k]);
        let mut terms = vec![(budget.p_k[k], r[k].clone())];
        for (i, x) in r.iter().enumerate() {
            if i != k {
                terms.push((-d * budget.p_k[i], x.clone()));
            }
        }
        rows.push(QuadRow {
            terms,
            b: d * (echo + e.noise),
        });
    }
    Ok(rows)
}

fn trace_constraint(n: usize) -> SymMatrix {
    let mut a = SymMatrix::zeros(2 * n);
    for i in 0..2 * n {
        a.add_diagonal_unit(0.5, i).expect("index in range");
    }
    a
}

fn diagonal_constraint(m: usize, i: usize) -> SymMatrix {
    let mut a = SymMatrix::zeros(2 * m);
    a.add_diagonal_unit(0.5, i).expect("index in range");
    a.add_diagonal_unit(0.5, i + m).expect("index in range");
    a
}

fn p22_from_rows(channels: &ChannelSet, rows: &[QuadRow]) -> Result<SdpProblem> {
    let n = channels.n_antennas();
    let mut objective = SymMatrix::zeros(2 * n);
    objective.add_hermitian_rank_one(1.0, &channels.a_ap_s)?;
    let mut problem = SdpProblem::new(2 * n, Sense::Maximize, objective);
    problem.add_eq(trace_constraint(n), 1.0);
    for row in rows {
        let s = row.scale();
        problem.add_geq(row.lifted(n, 1.0 / s)?, row.b / s);
    }
    Ok(problem)
}

/// Beamforming relaxation: maximize `tr(F aaᴴ)` subject to the rate rows,
/// `tr F = 1` and `F ⪰ 0`, over the real embedding of `F`.
pub fn build_p22(channels: &ChannelSet, phase: &RisPhase, alpha: f64, budget: &LinkBudget) -> Result<SdpProblem> {
    check_alpha(alpha, budget)?;
    let cascades = channels.cascades(phase)?;
    p22_from_rows(channels, &beamformer_rows(channels, &cascades, alpha, budget))
}

/// Slack weights of the phase relaxation; entry `i` converts the scaled
/// slack of row `i` back to physical units.
fn p43_from_rows(m: usize, rows: &[QuadRow]) -> Result<(SdpProblem, Vec<f64>)> {
    let mut problem = SdpProblem::new(2 * m, Sense::Maximize, SymMatrix::zeros(2 * m));
    let mut weights = Vec::new();
    for row in rows {
        let s = row.scale();
        let delta = problem.add_scalar(s);
        problem.add_constraint(row.lifted(m, 1.0 / s)?, vec![(delta, -1.0)], row.b / s, ConstraintKind::GreaterEqual);
        weights.push(s);
    }
    for i in 0..m {
        problem.add_eq(diagonal_constraint(m, i), 1.0);
    }
    Ok((problem, weights))
}

/// Phase relaxation: maximize `δ_s + Σ δ_k` over `V ⪰ 0` with unit
/// diagonal, each rate row holding with slack `δ ≥ 0`.
///
/// Rows are divided by their magnitude and each slack is carried in the
/// matching scaled units, so the objective weights are the row magnitudes.
pub fn build_p43(channels: &ChannelSet, f: &CVector, alpha: f64, budget: &LinkBudget) -> Result<SdpProblem> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let rows = phase_rows(channels, f, alpha, budget)?;
    Ok(p43_from_rows(channels.ris_elements(), &rows)?.0)
}

/// Grid for the bandwidth ratio: `{i/G}` with `G = 1/ν`, or multiples of `ν`
/// followed by 1 when `ν` does not divide 1.
pub fn alpha_grid(step: f64, include_one: bool) -> Vec<f64> {
    let g = (1.0 / step).round();
    let mut grid: Vec<f64> = if (g * step - 1.0).abs() < 1e-9 {
        (0..=g as usize).map(|i| i as f64 / g).collect()
    } else {
        let mut v: Vec<f64> = (0..).map(|i| i as f64 * step).take_while(|&a| a < 1.0).collect();
        v.push(1.0);
        v
    };
    if !include_one {
        grid.retain(|&a| a < 1.0);
    }
    grid
}

/// Grid search for the bandwidth ratio at fixed `f` and `Φ`. Returns the
/// CRB-minimizing feasible ratio and the number of feasible grid points.
pub fn solve_alpha(
    channels: &ChannelSet,
    f: &CVector,
    phase: &RisPhase,
    budget: &LinkBudget,
    step: f64,
) -> Result<(f64, usize)> {
    if !(step > 0.0 && step <= 0.25) {
        return Err(Error::InvalidConfig(format!("grid step {step} outside (0, 0.25]")));
    }
    let gains = BeamGains::new(f, channels, phase)?;
    let grid = alpha_grid(step, !budget.has_rate_constraints());
    let mut best: Option<(f64, f64)> = None;
    let mut count = 0;
    for alpha in grid {
        let rates = RateReport::compute(alpha, &gains, channels.beta_power(), budget)?;
        if !rates.meets(budget, RATE_DECISION_TOL) {
            continue;
        }
        count += 1;
        let j = fim_from_gain(alpha, gains.echo, channels.beta_power(), channels.n_antennas(), budget);
        let c = crb(j).unwrap_or(f64::INFINITY);
        if best.is_none_or(|(_, bc)| c < bc) {
            best = Some((alpha, c));
        }
    }
    match best {
        Some((alpha, _)) => Ok((alpha, count)),
        None => Err(Error::EmptyFeasibleSet),
    }
}

/// Largest feasible grid ratio at fixed `f` and `Φ`.
fn largest_feasible_alpha(channels: &ChannelSet, vars: &DesignVariables, budget: &LinkBudget, step: f64) -> Option<f64> {
    let gains = BeamGains::new(&vars.f, channels, &vars.phase).ok()?;
    alpha_grid(step, !budget.has_rate_constraints())
        .into_iter()
        .rev()
        .find(|&alpha| {
            RateReport::compute(alpha, &gains, channels.beta_power(), budget)
                .map(|r| r.meets(budget, RATE_DECISION_TOL))
                .unwrap_or(false)
        })
}

/// Audit entry for one relaxed subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemAudit {
    pub iteration: usize,
    pub subproblem: String,
    pub status: SdpStatus,
    pub residuals: Residuals,
    pub sdp_iterations: usize,
    /// Objective of the relaxation, in the subproblem's physical units.
    pub sdr_bound: f64,
    /// Objective of the recovered rank-one point, when one was found.
    pub recovered_objective: Option<f64>,
    pub eigen_mass: f64,
    pub from_eigenvector: bool,
    /// `|‖f‖ − 1|` or `max |v_m| − 1` of the recovered vector.
    pub structure_error: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub crb: f64,
    pub alpha: f64,
    /// `[R_s, R_1, …, R_K]` in bit/s.
    pub rates: Vec<f64>,
    pub feasible: bool,
    /// Number of feasible grid points seen by the ratio step, if it ran.
    pub alpha_feasible_points: Option<usize>,
    pub statuses: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AoTrace {
    pub iterations: Vec<IterationRecord>,
    pub audits: Vec<SubproblemAudit>,
    pub events: Vec<String>,
    pub converged: bool,
}

impl AoTrace {
    /// Number of completed AO passes (the initial point is not counted).
    pub fn passes(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    /// Largest relative increase of the CRB between consecutive records.
    pub fn max_relative_increase(&self) -> f64 {
        self.iterations
            .windows(2)
            .map(|w| (w[1].crb - w[0].crb) / w[0].crb)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Context<'a> {
    channels: &'a ChannelSet,
    budget: LinkBudget,
    knobs: &'a AlgorithmKnobs,
    options: SolverOptions,
    rng: ChaCha8Rng,
}

impl Context<'_> {
    fn mode(&self) -> RecoveryMode {
        RecoveryMode::Eigen {
            threshold: self.knobs.rank_one_threshold,
            draws: self.knobs.randomizations,
        }
    }

    fn eval(&self, vars: &DesignVariables) -> Evaluation {
        evaluate_with_tol(vars, self.channels, &self.budget, RATE_DECISION_TOL)
    }

    fn solve(&self, problem: &SdpProblem, iteration: usize, name: &'static str) -> Result<SdpSolution> {
        solve(problem, &self.options).map_err(|e| Error::SubproblemFailure {
            iteration,
            subproblem: name,
            reason: e.to_string(),
        })
    }
}

fn status_label(s: SdpStatus) -> String {
    format!("{s:?}")
}

fn audit(
    iteration: usize,
    name: &str,
    sol: &SdpSolution,
    sdr_bound: f64,
    recovered: Option<&crate::sdp::Recovered>,
    structure_error: f64,
    recovered_objective: Option<f64>,
    accepted: bool,
) -> SubproblemAudit {
    SubproblemAudit {
        iteration,
        subproblem: name.to_string(),
        status: sol.status,
        residuals: sol.residuals,
        sdp_iterations: sol.iterations,
        sdr_bound,
        recovered_objective,
        eigen_mass: recovered.map(|r| r.eigen_mass).unwrap_or(0.0),
        from_eigenvector: recovered.map(|r| r.from_eigenvector).unwrap_or(false),
        structure_error,
        accepted,
    }
}

/// Beamformer step. Returns the new `f` if it is feasible and does not
/// increase the CRB.
fn f_step(ctx: &mut Context, vars: &DesignVariables, iteration: usize, trace: &mut AoTrace) -> Result<Option<CVector>> {
    let cascades = ctx.channels.cascades(&vars.phase)?;
    let rows = beamformer_rows(ctx.channels, &cascades, vars.alpha, &ctx.budget);
    let problem = p22_from_rows(ctx.channels, &rows)?;
    let sol = ctx.solve(&problem, iteration, "p22")?;
    if sol.status != SdpStatus::Optimal {
        trace.audits.push(audit(iteration, "p22", &sol, sol.objective_value, None, 0.0, None, false));
        trace
            .events
            .push(format!("iteration {iteration}: beamformer relaxation {:?}, keeping f", sol.status));
        return Ok(None);
    }
    let f_relaxed = de_embed(&sol.x)?;
    let a = ctx.channels.a_ap_s.clone();
    let mode = ctx.mode();
    let recovered = rank_one_recover(&f_relaxed, mode, Projection::UnitNorm, &mut ctx.rng, |f| {
        rows.iter()
            .all(|r| r.holds(f))
            .then(|| a.dot(f).map(|d| d.norm_sqr()).unwrap_or(0.0))
    });
    let current = ctx.eval(vars);
    match recovered {
        Ok(rec) => {
            let cand = DesignVariables {
                f: rec.vector.clone(),
                ..vars.clone()
            };
            let e = ctx.eval(&cand);
            let accept = e.feasible && e.crb <= current.crb;
            trace.audits.push(audit(
                iteration,
                "p22",
                &sol,
                sol.objective_value,
                Some(&rec),
                (rec.vector.norm() - 1.0).abs(),
                Some(rec.score),
                accept,
            ));
            if accept {
                Ok(Some(rec.vector))
            } else {
                trace
                    .events
                    .push(format!("iteration {iteration}: recovered f does not improve the CRB, keeping f"));
                Ok(None)
            }
        }
        Err(e) => {
            trace.audits.push(audit(iteration, "p22", &sol, sol.objective_value, None, 0.0, None, false));
            trace.events.push(format!("iteration {iteration}: {e}, keeping f"));
            Ok(None)
        }
    }
}

fn slack_total(rows: &[QuadRow], v: &CVector) -> f64 {
    rows.iter().map(|r| r.value(v) - r.b).sum()
}

/// Phase step. Returns the new phases if they keep every rate row satisfied
/// and do not reduce the total slack.
fn phase_step(
    ctx: &mut Context,
    vars: &DesignVariables,
    iteration: usize,
    trace: &mut AoTrace,
) -> Result<Option<RisPhase>> {
    let rows = phase_rows(ctx.channels, &vars.f, vars.alpha, &ctx.budget)?;
    let (problem, weights) = p43_from_rows(ctx.channels.ris_elements(), &rows)?;
    let sol = ctx.solve(&problem, iteration, "p43")?;
    let bound = sol.objective_value;
    let _ = weights;
    if sol.status != SdpStatus::Optimal {
        trace.audits.push(audit(iteration, "p43", &sol, bound, None, 0.0, None, false));
        trace
            .events
            .push(format!("iteration {iteration}: phase relaxation {:?}, keeping phases", sol.status));
        return Ok(None);
    }
    let v_relaxed = de_embed(&sol.x)?;
    let mode = ctx.mode();
    let recovered = rank_one_recover(&v_relaxed, mode, Projection::UnitModulus, &mut ctx.rng, |v| {
        rows.iter().all(|r| r.holds(v)).then(|| slack_total(&rows, v))
    });
    match recovered {
        Ok(rec) => {
            let phase = RisPhase::new(rec.vector.clone())?;
            let cand = DesignVariables {
                phase: phase.clone(),
                ..vars.clone()
            };
            let e = ctx.eval(&cand);
            let current_slack = slack_total(&rows, vars.phase.v());
            let accept = e.feasible && e.crb <= ctx.eval(vars).crb && rec.score >= current_slack;
            trace.audits.push(audit(
                iteration,
                "p43",
                &sol,
                bound,
                Some(&rec),
                rec.vector.max_modulus_deviation(),
                Some(rec.score),
                accept,
            ));
            if accept {
                Ok(Some(phase))
            } else {
                trace
                    .events
                    .push(format!("iteration {iteration}: recovered phases do not improve the slack, keeping phases"));
                Ok(None)
            }
        }
        Err(e) => {
            trace.audits.push(audit(iteration, "p43", &sol, bound, None, 0.0, None, false));
            trace.events.push(format!("iteration {iteration}: {e}, keeping phases"));
            Ok(None)
        }
    }
}

/// Max-min normalized margin relaxation: maximize `t` subject to
/// `row_i(Z)/n_i − t ≥ b_i/n_i − T₀` plus the structural constraints.
fn margin_problem(dim: usize, rows: &[QuadRow], unit_diagonal: bool) -> Result<SdpProblem> {
    let mut problem = SdpProblem::new(2 * dim, Sense::Maximize, SymMatrix::zeros(2 * dim));
    let t = problem.add_scalar(1.0);
    let trace_bound = if unit_diagonal { dim as f64 } else { 1.0 };
    let t0 = 1.0
        + rows
            .iter()
            .map(|r| {
                let spread: f64 = r.terms.iter().map(|(c, x)| c.abs() * x.norm_squared()).sum();
                (r.b.abs() + spread * trace_bound) / r.scale()
            })
            .fold(0.0, f64::max);
    for row in rows {
        let s = row.scale();
        problem.add_constraint(row.lifted(dim, 1.0 / s)?, vec![(t, -1.0)], row.b / s - t0, ConstraintKind::GreaterEqual);
    }
    if unit_diagonal {
        for i in 0..dim {
            problem.add_eq(diagonal_constraint(dim, i), 1.0);
        }
    } else {
        problem.add_eq(trace_constraint(dim), 1.0);
    }
    Ok(problem)
}

fn min_margin(rows: &[QuadRow], z: &CVector) -> f64 {
    rows.iter().map(|r| r.margin(z)).fold(f64::INFINITY, f64::min)
}

/// One max-min margin step on the beamformer. Returns the recovered `f`
/// when it raises the smallest normalized rate margin.
fn margin_f_step(ctx: &mut Context, vars: &DesignVariables, iteration: usize, trace: &mut AoTrace) -> Result<Option<CVector>> {
    let cascades = ctx.channels.cascades(&vars.phase)?;
    let rows = beamformer_rows(ctx.channels, &cascades, vars.alpha, &ctx.budget);
    if rows.is_empty() {
        return Ok(None);
    }
    let problem = margin_problem(ctx.channels.n_antennas(), &rows, false)?;
    let sol = ctx.solve(&problem, iteration, "feasibility_f")?;
    if sol.status != SdpStatus::Optimal {
        trace.audits.push(audit(iteration, "feasibility_f", &sol, sol.objective_value, None, 0.0, None, false));
        return Ok(None);
    }
    let relaxed = de_embed(&sol.x)?;
    let mode = ctx.mode();
    let Ok(rec) = rank_one_recover(&relaxed, mode, Projection::UnitNorm, &mut ctx.rng, |f| Some(min_margin(&rows, f)))
    else {
        return Ok(None);
    };
    let better = rec.score > min_margin(&rows, &vars.f);
    trace.audits.push(audit(
        iteration,
        "feasibility_f",
        &sol,
        sol.objective_value,
        Some(&rec),
        (rec.vector.norm() - 1.0).abs(),
        Some(rec.score),
        better,
    ));
    Ok(better.then_some(rec.vector))
}

/// One max-min margin step on the RIS phases.
fn margin_phase_step(
    ctx: &mut Context,
    vars: &DesignVariables,
    iteration: usize,
    trace: &mut AoTrace,
) -> Result<Option<RisPhase>> {
    let rows = phase_rows(ctx.channels, &vars.f, vars.alpha, &ctx.budget)?;
    let problem = margin_problem(ctx.channels.ris_elements(), &rows, true)?;
    let sol = ctx.solve(&problem, iteration, "feasibility_phase")?;
    if sol.status != SdpStatus::Optimal {
        trace.audits.push(audit(iteration, "feasibility_phase", &sol, sol.objective_value, None, 0.0, None, false));
        return Ok(None);
    }
    let relaxed = de_embed(&sol.x)?;
    let mode = ctx.mode();
    let Ok(rec) = rank_one_recover(&relaxed, mode, Projection::UnitModulus, &mut ctx.rng, |v| {
        Some(min_margin(&rows, v))
    }) else {
        return Ok(None);
    };
    let better = rec.score > min_margin(&rows, vars.phase.v());
    trace.audits.push(audit(
        iteration,
        "feasibility_phase",
        &sol,
        sol.objective_value,
        Some(&rec),
        rec.vector.max_modulus_deviation(),
        Some(rec.score),
        better,
    ));
    Ok(if better { Some(RisPhase::new(rec.vector)?) } else { None })
}

/// Alternating max-min margin search for a point satisfying every rate
/// constraint at the given ratio.
fn feasibility_search(
    ctx: &mut Context,
    start: &DesignVariables,
    update_phase: bool,
    iteration: usize,
    trace: &mut AoTrace,
) -> Result<Option<DesignVariables>> {
    let mut vars = start.clone();
    if ctx.eval(&vars).feasible {
        return Ok(Some(vars));
    }
    for round in 0..ctx.knobs.feasibility_rounds {
        let mut moved = false;
        if let Some(f) = margin_f_step(ctx, &vars, iteration, trace)? {
            vars.f = f;
            moved = true;
        }
        if !ctx.eval(&vars).feasible && update_phase {
            if let Some(phase) = margin_phase_step(ctx, &vars, iteration, trace)? {
                vars.phase = phase;
                moved = true;
            }
        }
        if ctx.eval(&vars).feasible {
            trace.events.push(format!(
                "feasibility search at alpha = {} succeeded in round {}",
                vars.alpha,
                round + 1
            ));
            return Ok(Some(vars));
        }
        if !moved {
            break;
        }
    }
    Ok(None)
}

/// Re-centres a feasible point: balances the rate margins through the
/// phases, then re-optimizes the beamformer.
fn rebalance(
    ctx: &mut Context,
    vars: &DesignVariables,
    update_phase: bool,
    iteration: usize,
    trace: &mut AoTrace,
) -> Result<DesignVariables> {
    let mut point = vars.clone();
    if update_phase {
        if let Some(phase) = margin_phase_step(ctx, &point, iteration, trace)? {
            point.phase = phase;
        }
    }
    if let Some(f) = f_step(ctx, &point, iteration, trace)? {
        point.f = f;
    }
    Ok(point)
}

/// Escape from a stalled alternation. First re-balances the margins at the
/// current ratio; for an optimized ratio it then bisects over the larger
/// grid ratios with the feasibility search, re-optimizing `f` at every
/// feasible probe. Returns the best probe if it lowers the CRB.
fn escape(
    ctx: &mut Context,
    vars: &DesignVariables,
    current_crb: f64,
    scheme: Scheme,
    iteration: usize,
    trace: &mut AoTrace,
) -> Result<Option<(DesignVariables, Evaluation)>> {
    let update_phase = scheme.optimizes_phase();
    let mut best: Option<(DesignVariables, Evaluation)> = None;
    let mut consider = |ctx: &Context, point: DesignVariables| {
        let e = ctx.eval(&point);
        if e.feasible && e.crb < current_crb && best.as_ref().is_none_or(|(_, b)| e.crb < b.crb) {
            best = Some((point, e));
        }
    };
    if update_phase {
        let point = rebalance(ctx, vars, true, iteration, trace)?;
        consider(ctx, point);
    }
    if scheme.pinned_alpha().is_none() {
        let higher: Vec<f64> = alpha_grid(ctx.knobs.grid_step, !ctx.budget.has_rate_constraints())
            .into_iter()
            .filter(|&a| a > vars.alpha)
            .collect();
        let (mut lo, mut hi) = (0, higher.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            let start = DesignVariables {
                alpha: higher[mid],
                ..vars.clone()
            };
            let Some(point) = feasibility_search(ctx, &start, update_phase, iteration, trace)? else {
                hi = mid;
                continue;
            };
            let point = rebalance(ctx, &point, false, iteration, trace)?;
            consider(ctx, point);
            lo = mid + 1;
        }
    }
    Ok(best)
}

fn record(iteration: usize, vars: &DesignVariables, e: &Evaluation, points: Option<usize>, statuses: Vec<(String, String)>) -> IterationRecord {
    let mut rates = vec![e.rates.rate_s];
    rates.extend(e.rates.rate_k.iter().copied());
    IterationRecord {
        iteration,
        crb: e.crb,
        alpha: vars.alpha,
        rates,
        feasible: e.feasible,
        alpha_feasible_points: points,
        statuses,
    }
}

/// Budget seen by a scheme: rate thresholds are dropped for the
/// sensing-only baseline.
pub fn scheme_budget(scheme: Scheme, budget: &LinkBudget) -> LinkBudget {
    if scheme.rate_constrained() {
        budget.clone()
    } else {
        budget.without_rates()
    }
}

/// Runs the alternating optimization for one scheme on a prepared instance.
pub fn run_ao_on(instance: &Instance, scheme: Scheme) -> Result<(DesignVariables, AoTrace)> {
    // The problem only sees the RIS up to a common phase; running in a fixed
    // gauge keeps the result exactly independent of it.
    let canonical = instance.initial_phase.canonical();
    let gauge = instance.initial_phase.v().iter().next().map_or(0.0, |c| c.arg());
    let mut fixed = instance.clone();
    fixed.initial_phase = canonical.clone();
    let (mut vars, trace) = run_ao_fixed(&fixed, scheme)?;
    vars.phase = if vars.phase == canonical {
        instance.initial_phase.clone()
    } else {
        vars.phase.rotated(gauge)
    };
    Ok((vars, trace))
}

fn run_ao_fixed(instance: &Instance, scheme: Scheme) -> Result<(DesignVariables, AoTrace)> {
    let knobs = &instance.config.algorithm;
    let channels = &instance.channels;
    let budget = scheme_budget(scheme, &instance.budget);
    let mut ctx = Context {
        channels,
        budget: budget.clone(),
        knobs,
        options: SolverOptions {
            tolerance: knobs.sdp_tolerance,
            max_iterations: knobs.sdp_max_iterations,
            max_dim: knobs.sdp_max_dim,
        },
        rng: stream(instance.seed, STREAM_RECOVERY),
    };
    let mut trace = AoTrace::default();
    if budget.interference == InterferenceSum::Coherent && !budget.powers_are_equal() {
        trace
            .events
            .push("device powers differ; the coherent interference term uses the first device's power".into());
    }

    let f0 = channels
        .a_ap_s
        .normalized()
        .ok_or_else(|| Error::DegenerateGeometry("array response is zero".into()))?;
    let mut vars = DesignVariables {
        alpha: scheme.pinned_alpha().unwrap_or(0.0),
        f: f0,
        phase: instance.initial_phase.clone(),
    };
    if scheme.pinned_alpha().is_none() {
        match largest_feasible_alpha(channels, &vars, &budget, knobs.grid_step) {
            Some(a) => vars.alpha = a,
            None => {
                trace
                    .events
                    .push("initial point infeasible on the whole ratio grid; searching at alpha = 0".into());
                vars.alpha = 0.0;
            }
        }
    }
    if !ctx.eval(&vars).feasible {
        match feasibility_search(&mut ctx, &vars, scheme.optimizes_phase(), 0, &mut trace)? {
            Some(found) => {
                vars = found;
                if scheme.pinned_alpha().is_none() {
                    if let Some(a) = largest_feasible_alpha(channels, &vars, &budget, knobs.grid_step) {
                        vars.alpha = a;
                    }
                }
            }
            None => {
                return Err(Error::InfeasibleScenario(format!(
                    "no point satisfying the rate constraints was found at alpha = {}",
                    vars.alpha
                )))
            }
        }
    }

    let mut current = ctx.eval(&vars);
    trace.iterations.push(record(0, &vars, &current, None, Vec::new()));
    for iteration in 1..=knobs.max_iterations {
        let previous = current.crb;
        let mut statuses = Vec::new();

        if let Some(f) = f_step(&mut ctx, &vars, iteration, &mut trace)? {
            vars.f = f;
            current = ctx.eval(&vars);
        }
        if let Some(a) = trace.audits.last().filter(|a| a.iteration == iteration) {
            statuses.push(("p22".to_string(), status_label(a.status)));
        }

        let mut points = None;
        if scheme.pinned_alpha().is_none() {
            match solve_alpha(channels, &vars.f, &vars.phase, &budget, knobs.grid_step) {
                Ok((alpha, count)) => {
                    points = Some(count);
                    let cand = DesignVariables { alpha, ..vars.clone() };
                    let e = ctx.eval(&cand);
                    if e.feasible && e.crb <= current.crb {
                        vars = cand;
                        current = e;
                    }
                    statuses.push(("p3".to_string(), "Optimal".to_string()));
                }
                Err(Error::EmptyFeasibleSet) => {
                    points = Some(0);
                    trace
                        .events
                        .push(format!("iteration {iteration}: ratio grid has no feasible point, keeping alpha"));
                    statuses.push(("p3".to_string(), "EmptyFeasibleSet".to_string()));
                }
                Err(e) => return Err(e),
            }
        }

        if scheme.optimizes_phase() && vars.alpha < 1.0 {
            if let Some(phase) = phase_step(&mut ctx, &vars, iteration, &mut trace)? {
                vars.phase = phase;
                current = ctx.eval(&vars);
            }
            if let Some(a) = trace.audits.last().filter(|a| a.iteration == iteration && a.subproblem == "p43") {
                statuses.push(("p43".to_string(), status_label(a.status)));
            }
        }

        if (previous - current.crb) / previous < knobs.epsilon && scheme != Scheme::FullSo {
            if let Some((next, e)) = escape(&mut ctx, &vars, current.crb, scheme, iteration, &mut trace)? {
                trace.events.push(format!(
                    "iteration {iteration}: left a stalled point, alpha {} -> {}",
                    vars.alpha, next.alpha
                ));
                vars = next;
                current = e;
            }
        }

        trace.iterations.push(record(iteration, &vars, &current, points, statuses));
        let decrease = (previous - current.crb) / previous;
        if decrease < knobs.epsilon {
            trace.converged = true;
            break;
        }
    }
    vars.validate()?;
    Ok((vars, trace))
}

/// Builds the instance for `(config, seed)` and runs one scheme on it.
pub fn run_ao(config: &ScenarioConfig, scheme: Scheme, seed: u64) -> Result<(DesignVariables, AoTrace)> {
    let instance = Instance::build(config, seed)?;
    run_ao_on(&instance, scheme)
}
