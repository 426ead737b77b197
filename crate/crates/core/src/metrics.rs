//! Scalar performance quantities: band and power split, residual echo
//! factor, NOMA SINRs and rates, the delay FIM and its CRB.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, RisPhase};
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::scenario::SPEED_OF_LIGHT;

pub fn dbm_to_watt(x: f64) -> f64 {
    10f64.powf((x - 30.0) / 10.0)
}

/// How the IIoT-(II) interference enters the IIoT-(I) SINR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InterferenceSum {
    /// `|fᴴ Σ_k h̄_k|²·p_1`, a single coherent sum.
    #[default]
    Coherent,
    /// `Σ_k |fᴴ h̄_k|²·p_k`.
    Incoherent,
}

/// Antenna-count scaling of the FIM prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FimScaling {
    /// `8π²|β|²|fᴴa|²TB / (3Nσ²)`.
    #[default]
    #[serde(rename = "per_antenna")]
    PerAntenna,
    /// `8π²N²|β|²|fᴴa|²TB / (3σ²)`.
    #[serde(rename = "array_squared")]
    ArraySquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub p_s: f64,
    pub p_k: Vec<f64>,
    /// Noise power over the full band.
    pub sigma2: f64,
    pub sigma_tau2: f64,
    pub rho_so: f64,
    pub rho_isac: f64,
    pub bandwidth: f64,
    pub band_offset: f64,
    pub observation: f64,
    pub rate_s_th: f64,
    pub rate_k_th: Vec<f64>,
    pub interference: InterferenceSum,
    pub fim_scaling: FimScaling,
}

impl LinkBudget {
    /// Same budget with every power-like quantity multiplied by `factor`.
    pub fn scaled_powers(&self, factor: f64) -> LinkBudget {
        LinkBudget {
            p_s: self.p_s * factor,
            p_k: self.p_k.iter().map(|p| p * factor).collect(),
            sigma2: self.sigma2 * factor,
            rho_so: self.rho_so * factor,
            rho_isac: self.rho_isac * factor,
            ..self.clone()
        }
    }

    /// Without rate requirements.
    pub fn without_rates(&self) -> LinkBudget {
        LinkBudget {
            rate_s_th: 0.0,
            rate_k_th: vec![0.0; self.rate_k_th.len()],
            ..self.clone()
        }
    }

    pub fn has_rate_constraints(&self) -> bool {
        self.rate_s_th > 0.0 || self.rate_k_th.iter().any(|&r| r > 0.0)
    }

    /// Power used for the coherent interference term: the first device's.
    pub fn coherent_power(&self) -> f64 {
        self.p_k.first().copied().unwrap_or(0.0)
    }

    pub fn powers_are_equal(&self) -> bool {
        self.p_k.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSplit {
    pub alpha: f64,
    pub b_so: f64,
    pub b_isac: f64,
    pub p_so: f64,
    pub p_isac: f64,
}

impl BandSplit {
    pub fn new(alpha: f64, budget: &LinkBudget) -> Self {
        let b = budget.bandwidth;
        Self {
            alpha,
            b_so: alpha * b,
            b_isac: (1.0 - alpha) * b,
            p_so: alpha * b * budget.rho_so,
            p_isac: (1.0 - alpha) * b * budget.rho_isac,
        }
    }
}

/// `(2π)²((1−α)B)²σ_τ²/12`.
pub fn eta_isac(alpha: f64, bandwidth: f64, sigma_tau2: f64) -> f64 {
    let b_isac = (1.0 - alpha) * bandwidth;
    (2.0 * PI).powi(2) * b_isac * b_isac * sigma_tau2 / 12.0
}

/// Squared beam gains `|fᴴ·|²` of every channel seen by the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGains {
    /// `|fᴴ h_AP,s|²`.
    pub direct: f64,
    /// `|fᴴ a_AP,s|²`.
    pub echo: f64,
    /// `|fᴴ Σ_k h̄_k|²`.
    pub coherent: f64,
    /// `|fᴴ h̄_k|²` per device.
    pub devices: Vec<f64>,
}

impl BeamGains {
    pub fn from_vectors(f: &CVector, h_ap_s: &CVector, a: &CVector, cascades: &[CVector]) -> Result<Self> {
        let direct = f.dot(h_ap_s)?.norm_sqr();
        let echo = f.dot(a)?.norm_sqr();
        let mut sum = CVector::zeros(f.len());
        let mut devices = Vec::with_capacity(cascades.len());
        for h in cascades {
            devices.push(f.dot(h)?.norm_sqr());
            sum = sum.add(h)?;
        }
        let coherent = f.dot(&sum)?.norm_sqr();
        Ok(Self {
            direct,
            echo,
            coherent,
            devices,
        })
    }

    pub fn new(f: &CVector, channels: &ChannelSet, phase: &RisPhase) -> Result<Self> {
        let cascades = channels.cascades(phase)?;
        Self::from_vectors(f, &channels.h_ap_s, &channels.a_ap_s, &cascades)
    }
}

fn check_comm_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Residual echo plus noise power common to every SINR denominator.
fn echo_and_noise(alpha: f64, gains: &BeamGains, beta_power: f64, budget: &LinkBudget) -> f64 {
    let split = BandSplit::new(alpha, budget);
    let eta = eta_isac(alpha, budget.bandwidth, budget.sigma_tau2);
    gains.echo * beta_power * eta * split.p_isac + (1.0 - alpha) * budget.sigma2
}

/// IIoT-(I) SINR from precomputed beam gains.
pub fn sinr_s_from_gains(alpha: f64, gains: &BeamGains, beta_power: f64, budget: &LinkBudget) -> Result<f64> {
    check_comm_alpha(alpha)?;
    let interference = match budget.interference {
        InterferenceSum::Coherent => gains.coherent * budget.coherent_power(),
        InterferenceSum::Incoherent => gains.devices.iter().zip(&budget.p_k).map(|(g, p)| g * p).sum(),
    };
    let denom = interference + echo_and_noise(alpha, gains, beta_power, budget);
    if !(denom > 0.0) {
        return Err(Error::NonFinite("SINR denominator"));
    }
    Ok(gains.direct * budget.p_s / denom)
}

/// SINR of IIoT-(II) device `k` from precomputed beam gains.
pub fn sinr_k_from_gains(k: usize, alpha: f64, gains: &BeamGains, beta_power: f64, budget: &LinkBudget) -> Result<f64> {
    check_comm_alpha(alpha)?;
    if k >= gains.devices.len() || k >= budget.p_k.len() {
        return Err(Error::DimensionMismatch(format!("device index {k} out of range")));
    }
    let interference: f64 = gains
        .devices
        .iter()
        .zip(&budget.p_k)
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, (g, p))| g * p)
        .sum();
    let denom = interference + echo_and_noise(alpha, gains, beta_power, budget);
    if !(denom > 0.0) {
        return Err(Error::NonFinite("SINR denominator"));
    }
    Ok(gains.devices[k] * budget.p_k[k] / denom)
}

pub fn sinr_s(alpha: f64, f: &CVector, channels: &ChannelSet, phase: &RisPhase, budget: &LinkBudget) -> Result<f64> {
    let gains = BeamGains::new(f, channels, phase)?;
    sinr_s_from_gains(alpha, &gains, channels.beta_power(), budget)
}

pub fn sinr_k(
    k: usize,
    alpha: f64,
    f: &CVector,
    channels: &ChannelSet,
    phase: &RisPhase,
    budget: &LinkBudget,
) -> Result<f64> {
    let gains = BeamGains::new(f, channels, phase)?;
    sinr_k_from_gains(k, alpha, &gains, channels.beta_power(), budget)
}

/// `(1−α)·B·log₂(1+γ)`.
pub fn rate(alpha: f64, bandwidth: f64, sinr: f64) -> f64 {
    if alpha >= 1.0 {
        return 0.0;
    }
    (1.0 - alpha) * bandwidth * (1.0 + sinr).log2()
}

/// SINR needed to carry `rate_th` over the `(1−α)B` band: `2^{R/((1−α)B)} − 1`.
/// Infinite when the band is empty and the rate is positive.
pub fn sinr_threshold(alpha: f64, bandwidth: f64, rate_th: f64) -> f64 {
    if rate_th <= 0.0 {
        return 0.0;
    }
    let b_isac = (1.0 - alpha) * bandwidth;
    if b_isac <= 0.0 {
        return f64::INFINITY;
    }
    (rate_th / b_isac).exp2() - 1.0
}

/// All rates at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rate_s: f64,
    pub rate_k: Vec<f64>,
    pub sinr_s: f64,
    pub sinr_k: Vec<f64>,
}

impl RateReport {
    /// Rates at `alpha`; at `α = 1` every rate and SINR is zero.
    pub fn compute(alpha: f64, gains: &BeamGains, beta_power: f64, budget: &LinkBudget) -> Result<Self> {
        let k = gains.devices.len();
        if alpha >= 1.0 {
            return Ok(Self {
                rate_s: 0.0,
                rate_k: vec![0.0; k],
                sinr_s: 0.0,
                sinr_k: vec![0.0; k],
            });
        }
        let sinr_s = sinr_s_from_gains(alpha, gains, beta_power, budget)?;
        let sinr_k = (0..k)
            .map(|i| sinr_k_from_gains(i, alpha, gains, beta_power, budget))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rate_s: rate(alpha, budget.bandwidth, sinr_s),
            rate_k: sinr_k.iter().map(|&g| rate(alpha, budget.bandwidth, g)).collect(),
            sinr_s,
            sinr_k,
        })
    }

    /// Whether every rate meets its threshold up to `rel_tol` relative slack.
    pub fn meets(&self, budget: &LinkBudget, rel_tol: f64) -> bool {
        self.violations(budget, rel_tol).is_empty()
    }

    /// Names of the rate constraints that are violated.
    pub fn violations(&self, budget: &LinkBudget, rel_tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.rate_s < budget.rate_s_th * (1.0 - rel_tol) {
            out.push("rate_s".to_string());
        }
        for (i, (&r, &th)) in self.rate_k.iter().zip(&budget.rate_k_th).enumerate() {
            if r < th * (1.0 - rel_tol) {
                out.push(format!("rate_k{}", i + 1));
            }
        }
        out
    }
}

/// Band edges and split frequency `(L, u, H)` with `u = L + αB`.
pub fn band_edges(alpha: f64, budget: &LinkBudget) -> (f64, f64, f64) {
    let low = budget.band_offset - budget.bandwidth / 2.0;
    let high = budget.band_offset + budget.bandwidth / 2.0;
    (low, low + alpha * budget.bandwidth, high)
}

/// Bracketed band term
/// `αρ_SO(u³ − L³) − (1−α)ρ_ISAC(u³ − H³)`.
pub fn fim_bracket(alpha: f64, budget: &LinkBudget) -> f64 {
    let (l, u, h) = band_edges(alpha, budget);
    let u3 = u * u * u;
    alpha * budget.rho_so * (u3 - l * l * l) - (1.0 - alpha) * budget.rho_isac * (u3 - h * h * h)
}

/// FIM prefactor in front of the bracket for a beam gain `|fᴴa|²`.
pub fn fim_prefactor(echo_gain: f64, beta_power: f64, n_antennas: usize, budget: &LinkBudget) -> f64 {
    let n = n_antennas as f64;
    let core = 8.0 * PI * PI * beta_power * echo_gain * budget.observation * budget.bandwidth / (3.0 * budget.sigma2);
    match budget.fim_scaling {
        FimScaling::PerAntenna => core / n,
        FimScaling::ArraySquared => core * n * n,
    }
}

/// Closed-form Fisher information of the echo delay.
pub fn fim_from_gain(alpha: f64, echo_gain: f64, beta_power: f64, n_antennas: usize, budget: &LinkBudget) -> f64 {
    fim_prefactor(echo_gain, beta_power, n_antennas, budget) * fim_bracket(alpha, budget)
}

pub fn fim(alpha: f64, f: &CVector, channels: &ChannelSet, budget: &LinkBudget) -> Result<f64> {
    let echo_gain = f.dot(&channels.a_ap_s)?.norm_sqr();
    Ok(fim_from_gain(alpha, echo_gain, channels.beta_power(), channels.n_antennas(), budget))
}

/// Analytic `d²J/dα²`.
pub fn fim_second_derivative(alpha: f64, echo_gain: f64, beta_power: f64, n_antennas: usize, budget: &LinkBudget) -> f64 {
    let (_, u, _) = band_edges(alpha, budget);
    let b = budget.bandwidth;
    let (rs, ri) = (budget.rho_so, budget.rho_isac);
    let g2 = 6.0 * b * rs * u * u + 6.0 * alpha * b * b * rs * u + 6.0 * b * ri * u * u
        - 6.0 * (1.0 - alpha) * b * b * ri * u;
    fim_prefactor(echo_gain, beta_power, n_antennas, budget) * g2
}

/// Gauss–Legendre nodes and weights on [-1, 1], five points.
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn gauss_legendre(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let mid = a + (i as f64 + 0.5) * h;
            GL5.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// FIM obtained by integrating `(2πf)²` weighted by the SO and ISAC echo
/// spectra over the two sub-bands, with unit-power waveforms whose spectral
/// energy density is the observation time.
///
/// The closed form and this integral share no code; the integral is an audit
/// path for the closed form.
pub fn fim_band_integral(alpha: f64, echo_gain: f64, beta_power: f64, n_antennas: usize, budget: &LinkBudget) -> f64 {
    let (l, u, h) = band_edges(alpha, budget);
    let split = BandSplit::new(alpha, budget);
    let t = budget.observation;
    let w2 = |f: f64| (2.0 * PI * f).powi(2);
    let so = gauss_legendre(l, u, 8, |f| split.p_so * t * w2(f));
    let isac = gauss_legendre(u, h, 8, |f| split.p_isac * t * w2(f));
    let n = n_antennas as f64;
    // Echo amplitude |β fᴴa|²/N; the array-squared scaling carries N³ more.
    let amplitude = match budget.fim_scaling {
        FimScaling::PerAntenna => beta_power * echo_gain / n,
        FimScaling::ArraySquared => beta_power * echo_gain * n * n,
    };
    2.0 * amplitude / budget.sigma2 * (so + isac)
}

/// `1/J`.
pub fn crb(j: f64) -> Result<f64> {
    if !(j > 0.0) || !j.is_finite() {
        return Err(Error::SingularFim(j));
    }
    Ok(1.0 / j)
}

/// Round-trip range error `√CRB·c/2` in meters.
pub fn range_error_m(crb: f64) -> f64 {
    crb.sqrt() * SPEED_OF_LIGHT / 2.0
}

pub fn range_error_cm(crb: f64) -> f64 {
    range_error_m(crb) * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::scenario::ScenarioConfig;
    use proptest::prelude::*;

    fn budget() -> LinkBudget {
        ScenarioConfig::default().link_budget()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn dbm_examples() {
        assert!((dbm_to_watt(30.0) - 1.0).abs() < 1e-15);
        assert!(rel(dbm_to_watt(15.0), 0.0316228) < 1e-6);
        assert!(rel(dbm_to_watt(-75.0), 3.1623e-11) < 1e-4);
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta_isac(1.0, 5e7, 1.2e-18), 0.0);
        let expected = (2.0 * PI).powi(2) * 2.5e15 * 1.2e-18 / 12.0;
        assert!(rel(eta_isac(0.0, 5e7, 1.2e-18), expected) < 1e-14);
        assert!(rel(eta_isac(0.0, 5e7, 1.2e-18), 9.8696e-3) < 1e-4);
        let e1 = eta_isac(0.2, 5e7, 1.2e-18);
        let e2 = eta_isac(0.6, 5e7, 1.2e-18);
        assert!(rel(e1 / e2, 4.0) < 1e-12);
    }

    #[test]
    fn band_split_invariants() {
        let b = budget();
        let s = BandSplit::new(0.3, &b);
        assert!(rel(s.b_so + s.b_isac, b.bandwidth) < 1e-15);
        assert!(rel(s.p_so, 0.3 * 5e7 * 1e-9) < 1e-15);
        assert!(rel(s.p_isac, 0.7 * 5e7 * 1e-10) < 1e-15);
    }

    fn gains(direct: f64, echo: f64, coherent: f64, devices: Vec<f64>) -> BeamGains {
        BeamGains {
            direct,
            echo,
            coherent,
            devices,
        }
    }

    #[test]
    fn interference_free_sinr() {
        let mut b = budget();
        b.p_k.clear();
        b.rate_k_th.clear();
        b.sigma_tau2 = 0.0;
        let g = gains(2.0, 5.0, 0.0, vec![]);
        let s = sinr_s_from_gains(0.25, &g, 1.0, &b).unwrap();
        assert!(rel(s, 2.0 * b.p_s / (0.75 * b.sigma2)) < 1e-14);
        let zero = sinr_s_from_gains(0.25, &gains(0.0, 1.0, 0.0, vec![]), 1.0, &b).unwrap();
        assert_eq!(zero, 0.0);
        assert_eq!(
            sinr_s_from_gains(1.0, &g, 1.0, &b),
            Err(Error::InvalidAlpha(1.0))
        );
    }

    /// Scalar N = M = 1, K = 1 channel worked out by hand.
    #[test]
    fn scalar_sinr_by_hand() {
        let b = LinkBudget {
            p_s: 2.0,
            p_k: vec![3.0],
            sigma2: 0.5,
            sigma_tau2: 1.0 / (4.0 * PI * PI),
            rho_so: 1.0,
            rho_isac: 1.0,
            bandwidth: 1.0,
            band_offset: 1.0,
            observation: 1.0,
            rate_s_th: 0.0,
            rate_k_th: vec![0.0],
            interference: InterferenceSum::Coherent,
            fim_scaling: FimScaling::PerAntenna,
        };
        // alpha = 0.5: eta = (0.5)²/12 = 1/48, p_isac = 0.5.
        // f = 1, h = 0.4, a = 1, hbar = 0.2, |β|² = 0.09.
        let g = gains(0.16, 1.0, 0.04, vec![0.04]);
        let echo = 0.09 * (1.0 / 48.0) * 0.5;
        let noise = 0.25;
        let gs = sinr_s_from_gains(0.5, &g, 0.09, &b).unwrap();
        assert!(rel(gs, 0.32 / (0.12 + echo + noise)) < 1e-14);
        let gk = sinr_k_from_gains(0, 0.5, &g, 0.09, &b).unwrap();
        assert!(rel(gk, 0.12 / (echo + noise)) < 1e-14);
    }

    /// N = M = 1, K = 2 by hand, incoherent interference.
    #[test]
    fn two_device_scalar_case() {
        let mut b = budget();
        b.interference = InterferenceSum::Incoherent;
        b.p_k = vec![1.0, 2.0];
        b.rate_k_th = vec![0.0, 0.0];
        b.sigma_tau2 = 0.0;
        b.sigma2 = 1.0;
        let g = gains(1.0, 1.0, 0.0, vec![0.5, 0.25]);
        let g0 = sinr_k_from_gains(0, 0.0, &g, 1.0, &b).unwrap();
        let g1 = sinr_k_from_gains(1, 0.0, &g, 1.0, &b).unwrap();
        assert!(rel(g0, 0.5 / (0.5 + 1.0)) < 1e-14);
        assert!(rel(g1, 0.5 / (0.5 + 1.0)) < 1e-14);
        let gs = sinr_s_from_gains(0.0, &g, 1.0, &b).unwrap();
        assert!(rel(gs, b.p_s / (1.0 + 1.0)) < 1e-14);

        let same = gains(1.0, 1.0, 0.0, vec![0.3, 0.3]);
        b.p_k = vec![1.0, 1.0];
        assert_eq!(
            sinr_k_from_gains(0, 0.1, &same, 1.0, &b).unwrap(),
            sinr_k_from_gains(1, 0.1, &same, 1.0, &b).unwrap()
        );
        let mut single = budget();
        single.p_k = vec![1.0];
        let lone = gains(1.0, 0.0, 0.0, vec![0.3]);
        let s = sinr_k_from_gains(0, 0.0, &lone, 1.0, &single).unwrap();
        assert!(rel(s, 0.3 / single.sigma2) < 1e-14);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(0.2, 5e7, 0.0), 0.0);
        assert_eq!(rate(1.0, 5e7, 3.0), 0.0);
        assert!(rel(rate(0.5, 5e7, 1.0), 2.5e7) < 1e-15);
        assert_eq!(sinr_threshold(1.0, 5e7, 1.0), f64::INFINITY);
        assert_eq!(sinr_threshold(1.0, 5e7, 0.0), 0.0);
        assert!(rel(sinr_threshold(0.5, 5e7, 2.5e7), 1.0) < 1e-15);
    }

    #[test]
    fn fim_bracket_at_zero() {
        let b = budget();
        let bracket = fim_bracket(0.0, &b);
        assert!(rel(bracket / b.rho_isac, 4.0625e23) < 1e-14);
        // H³ − L³ with L = 2.5e7 and H = 7.5e7.
        assert!(rel(bracket / b.rho_isac, 7.5e7f64.powi(3) - 2.5e7f64.powi(3)) < 1e-14);
        assert_eq!(fim_from_gain(0.3, 0.0, 4e-10, 8, &b), 0.0);
    }

    #[test]
    fn fim_matches_band_integral() {
        let b = budget();
        for i in 0..=100 {
            let alpha = i as f64 / 100.0;
            let closed = fim_from_gain(alpha, 8.0, 4e-10, 8, &b);
            let integral = fim_band_integral(alpha, 8.0, 4e-10, 8, &b);
            assert!(rel(closed, integral) < 1e-10, "alpha {alpha}");
        }
        let mut app = b.clone();
        app.fim_scaling = FimScaling::ArraySquared;
        let ratio = fim_from_gain(0.4, 8.0, 4e-10, 8, &app) / fim_from_gain(0.4, 8.0, 4e-10, 8, &b);
        assert!(rel(ratio, 512.0) < 1e-12);
        assert!(rel(fim_band_integral(0.4, 8.0, 4e-10, 8, &app), fim_from_gain(0.4, 8.0, 4e-10, 8, &app)) < 1e-10);
    }

    #[test]
    fn fim_endpoint_ratio() {
        let b = budget();
        let j0 = fim_from_gain(0.0, 8.0, 4e-10, 8, &b);
        let j1 = fim_from_gain(1.0, 8.0, 4e-10, 8, &b);
        assert!(rel(j1 / j0, b.rho_so / b.rho_isac) < 1e-12);
    }

    #[test]
    fn crb_examples() {
        assert_eq!(crb(1.0).unwrap(), 1.0);
        assert_eq!(crb(2.0).unwrap(), 0.5);
        assert!(matches!(crb(0.0), Err(Error::SingularFim(_))));
        assert!(matches!(crb(-1.0), Err(Error::SingularFim(_))));
        let j = fim_from_gain(0.0, 8.0, 4e-10, 8, &budget());
        assert_eq!(crb(j).unwrap(), 1.0 / j);
        assert!(rel(range_error_cm(4.0 / (SPEED_OF_LIGHT * SPEED_OF_LIGHT)), 100.0) < 1e-12);
    }

    #[test]
    fn sinr_is_invariant_to_global_phases() {
        let config = ScenarioConfig::default();
        let layout = crate::geometry::element_positions(&config).unwrap();
        let devices = vec![
            crate::geometry::Position::new(0.0, 80.0, 0.0),
            crate::geometry::Position::new(-80.0, 0.0, 0.0),
            crate::geometry::Position::new(56.0, -57.0, 0.0),
        ];
        let ch = crate::channel::build_channels(&layout, config.target_position(), C64::new(2e-5, 0.0), &devices)
            .unwrap();
        let b = config.link_budget();
        let f = ch.a_ap_s.normalized().unwrap();
        let phase = RisPhase::from_angles(&(0..32).map(|i| 0.37 * i as f64).collect::<Vec<_>>());
        let s0 = sinr_s(0.3, &f, &ch, &phase, &b).unwrap();
        let k0 = sinr_k(1, 0.3, &f, &ch, &phase, &b).unwrap();
        let f_rot = f.scale(C64::from_polar(1.0, 1.1));
        let p_rot = phase.rotated(-2.3);
        let s1 = sinr_s(0.3, &f_rot, &ch, &p_rot, &b).unwrap();
        let k1 = sinr_k(1, 0.3, &f_rot, &ch, &p_rot, &b).unwrap();
        assert!(rel(s1, s0) < 1e-12);
        assert!(rel(k1, k0) < 1e-12);
    }

    proptest! {
        #[test]
        fn rate_decreases_in_alpha(a in 0.0f64..0.99, da in 1e-3f64..0.01, sinr in 1e-3f64..1e3) {
            prop_assert!(rate(a + da, 5e7, sinr) < rate(a, 5e7, sinr));
        }

        #[test]
        fn echo_power_vanishes_near_full_so(eps in 1e-9f64..1e-3) {
            let b = budget();
            let alpha = 1.0 - eps;
            let v = eta_isac(alpha, b.bandwidth, b.sigma_tau2) * BandSplit::new(alpha, &b).p_isac;
            let at_zero = eta_isac(0.0, b.bandwidth, b.sigma_tau2) * BandSplit::new(0.0, &b).p_isac;
            prop_assert!(v <= at_zero * eps.powi(3) * (1.0 + 1e-9));
        }

        #[test]
        fn fim_positive_on_unit_interval(alpha in 0.0f64..=1.0) {
            prop_assert!(fim_from_gain(alpha, 8.0, 4e-10, 8, &budget()) > 0.0);
        }
    }
}
