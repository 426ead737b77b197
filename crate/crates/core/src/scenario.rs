//! Scenario configuration and the per-run link budget derived from it.
//!
//! Every field has a default taken from the reference simulation setting, so
//! an empty configuration file describes the baseline scenario.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ris_grid_shape, Position};
use crate::metrics::{dbm_to_watt, FimScaling, InterferenceSum, LinkBudget};
use crate::optimizer::Scheme;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Which scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SweepVariable {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Number of RIS elements.
    #[serde(rename = "M")]
    RisElements,
    /// IIoT-(II) transmit power in dBm.
    #[serde(rename = "p_k")]
    DevicePower,
    /// IIoT-(II) rate threshold in bit/s.
    #[serde(rename = "R_k_th")]
    DeviceRate,
    /// RIS x-coordinate in meters.
    #[serde(rename = "x_ris")]
    RisX,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::None => "none",
            SweepVariable::RisElements => "M",
            SweepVariable::DevicePower => "p_k",
            SweepVariable::DeviceRate => "R_k_th",
            SweepVariable::RisX => "x_ris",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Knobs of the alternating optimization and its SDP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmKnobs {
    /// Grid step ν of the bandwidth-ratio search.
    pub grid_step: f64,
    /// Stop when the fractional CRB decrease drops below this.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Gaussian randomization draws per rank-one recovery.
    pub randomizations: usize,
    /// Eigenvalue mass above which the principal eigenvector is used directly.
    pub rank_one_threshold: f64,
    pub sdp_tolerance: f64,
    pub sdp_max_iterations: usize,
    pub sdp_max_dim: usize,
    /// Alternations of the initial feasibility search.
    pub feasibility_rounds: usize,
    pub interference: InterferenceSum,
    pub fim_scaling: FimScaling,
    /// Record wall-clock time per run. Off by default so that output is
    /// reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for AlgorithmKnobs {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            epsilon: 1e-3,
            max_iterations: 50,
            randomizations: 200,
            rank_one_threshold: 0.99,
            sdp_tolerance: 1e-8,
            sdp_max_iterations: 200,
            sdp_max_dim: 256,
            feasibility_rounds: 4,
            interference: InterferenceSum::Coherent,
            fim_scaling: FimScaling::PerAntenna,
            record_timing: false,
        }
    }
}

/// Full parameter set of a simulation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// AP antennas N.
    pub n_antennas: usize,
    /// RIS elements M.
    pub ris_elements: usize,
    /// IIoT-(II) devices K.
    pub num_devices: usize,
    pub carrier_hz: f64,
    /// AP aperture D in meters; antenna spacing is D/(N-1).
    pub aperture_m: f64,
    /// RIS element spacing; half a wavelength when absent.
    pub ris_spacing_m: Option<f64>,
    pub p_s_dbm: f64,
    pub p_k_dbm: f64,
    pub bandwidth_hz: f64,
    pub rho_so: f64,
    pub rho_isac: f64,
    /// Total noise power over the whole band.
    pub noise_dbm: f64,
    pub sigma_tau2: f64,
    pub beta_s: f64,
    pub band_offset_hz: f64,
    pub observation_s: f64,
    pub rate_s_bps: f64,
    pub rate_k_bps: f64,
    pub q_ap: [f64; 3],
    pub q_s: [f64; 3],
    pub q_ris: [f64; 3],
    /// Ground distance of the IIoT-(II) devices from the AP.
    pub device_radius_m: f64,
    /// Azimuth arc `[start, end]` in degrees the devices are drawn from.
    pub device_arc_deg: [f64; 2],
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub sweep: SweepSpec,
    pub algorithm: AlgorithmKnobs,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_antennas: 8,
            ris_elements: 32,
            num_devices: 3,
            carrier_hz: 28e9,
            aperture_m: 0.5,
            ris_spacing_m: None,
            p_s_dbm: 15.0,
            p_k_dbm: 15.0,
            bandwidth_hz: 50e6,
            rho_so: 1e-9,
            rho_isac: 1e-10,
            noise_dbm: -75.0,
            sigma_tau2: 1.2e-18,
            beta_s: 2e-5,
            band_offset_hz: 5e7,
            observation_s: 0.1e-6,
            rate_s_bps: 5e6,
            rate_k_bps: 2e6,
            q_ap: [0.0, 0.0, 5.0],
            q_s: [20.0, 10.0, 0.0],
            q_ris: [25.0, 0.0, 10.0],
            device_radius_m: 80.0,
            device_arc_deg: [0.0, 360.0],
            schemes: Scheme::ALL.to_vec(),
            seeds: vec![1],
            sweep: SweepSpec::default(),
            algorithm: AlgorithmKnobs::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                }
                None => "document".to_string(),
            };
            Error::Parse {
                location,
                message: e.message().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn antenna_spacing(&self) -> f64 {
        if self.n_antennas > 1 {
            self.aperture_m / (self.n_antennas - 1) as f64
        } else {
            0.0
        }
    }

    pub fn ris_spacing(&self) -> f64 {
        self.ris_spacing_m.unwrap_or(self.wavelength() / 2.0)
    }

    pub fn ap_position(&self) -> Position {
        Position::from(self.q_ap)
    }

    pub fn target_position(&self) -> Position {
        Position::from(self.q_s)
    }

    pub fn ris_position(&self) -> Position {
        Position::from(self.q_ris)
    }

    pub fn link_budget(&self) -> LinkBudget {
        LinkBudget {
            p_s: dbm_to_watt(self.p_s_dbm),
            p_k: vec![dbm_to_watt(self.p_k_dbm); self.num_devices],
            sigma2: dbm_to_watt(self.noise_dbm),
            sigma_tau2: self.sigma_tau2,
            rho_so: self.rho_so,
            rho_isac: self.rho_isac,
            bandwidth: self.bandwidth_hz,
            band_offset: self.band_offset_hz,
            observation: self.observation_s,
            rate_s_th: self.rate_s_bps,
            rate_k_th: vec![self.rate_k_bps; self.num_devices],
            interference: self.algorithm.interference,
            fim_scaling: self.algorithm.fim_scaling,
        }
    }

    /// Copy of the configuration with one sweep value applied.
    pub fn with_sweep_value(&self, variable: SweepVariable, value: f64) -> Result<Self> {
        let mut out = self.clone();
        match variable {
            SweepVariable::None => {}
            SweepVariable::RisElements => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Validation(format!(
                        "sweep value {value} is not a valid RIS element count"
                    )));
                }
                out.ris_elements = value as usize;
            }
            SweepVariable::DevicePower => out.p_k_dbm = value,
            SweepVariable::DeviceRate => out.rate_k_bps = value,
            SweepVariable::RisX => out.q_ris[0] = value,
        }
        out.sweep = SweepSpec::default();
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        fn invalid(msg: impl Into<String>) -> Result<()> {
            Err(Error::Validation(msg.into()))
        }
        let finite = [
            ("carrier_hz", self.carrier_hz),
            ("aperture_m", self.aperture_m),
            ("p_s_dbm", self.p_s_dbm),
            ("p_k_dbm", self.p_k_dbm),
            ("bandwidth_hz", self.bandwidth_hz),
            ("rho_so", self.rho_so),
            ("rho_isac", self.rho_isac),
            ("noise_dbm", self.noise_dbm),
            ("sigma_tau2", self.sigma_tau2),
            ("beta_s", self.beta_s),
            ("band_offset_hz", self.band_offset_hz),
            ("observation_s", self.observation_s),
            ("rate_s_bps", self.rate_s_bps),
            ("rate_k_bps", self.rate_k_bps),
            ("device_radius_m", self.device_radius_m),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return invalid(format!("{name} must be finite"));
            }
        }
        for (name, q) in [("q_ap", self.q_ap), ("q_s", self.q_s), ("q_ris", self.q_ris)] {
            if q.iter().any(|c| !c.is_finite()) {
                return invalid(format!("{name} must be finite"));
            }
        }
        if self.n_antennas == 0 {
            return invalid("n_antennas must be at least 1");
        }
        if self.ris_elements == 0 {
            return invalid("ris_elements must be at least 1");
        }
        ris_grid_shape(self.ris_elements).map_err(|e| Error::Validation(e.to_string()))?;
        if self.carrier_hz <= 0.0 {
            return invalid("carrier_hz must be positive");
        }
        if self.n_antennas > 1 && self.aperture_m <= 0.0 {
            return invalid("aperture_m must be positive for a multi-antenna AP");
        }
        if let Some(w) = self.ris_spacing_m {
            if !(w.is_finite() && w > 0.0) {
                return invalid("ris_spacing_m must be positive");
            }
        }
        if self.bandwidth_hz <= 0.0 {
            return invalid("bandwidth_hz must be positive");
        }
        for (name, value) in [
            ("rho_so", self.rho_so),
            ("rho_isac", self.rho_isac),
            ("sigma_tau2", self.sigma_tau2),
            ("beta_s", self.beta_s),
            ("observation_s", self.observation_s),
            ("rate_s_bps", self.rate_s_bps),
            ("rate_k_bps", self.rate_k_bps),
        ] {
            if value < 0.0 {
                return invalid(format!("{name} must be nonnegative"));
            }
        }
        if self.band_offset_hz - self.bandwidth_hz / 2.0 < 0.0 {
            return invalid("band_offset_hz must be at least half the bandwidth");
        }
        if self.device_radius_m <= 0.0 {
            return invalid("device_radius_m must be positive");
        }
        let [a0, a1] = self.device_arc_deg;
        if !(a0.is_finite() && a1.is_finite() && a0 < a1 && a1 - a0 <= 360.0) {
            return invalid("device_arc_deg must be [start, end] with start < end spanning at most 360 degrees");
        }
        if self.schemes.is_empty() {
            return invalid("schemes must not be empty");
        }
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty");
        }
        match self.sweep.variable {
            SweepVariable::None => {}
            var => {
                if self.sweep.values.is_empty() {
                    return invalid("sweep.values must not be empty when a sweep variable is set");
                }
                for &v in &self.sweep.values {
                    if !v.is_finite() {
                        return invalid("sweep values must be finite");
                    }
                    if var == SweepVariable::RisElements {
                        if v < 1.0 || v.fract() != 0.0 {
                            return invalid(format!("sweep value {v} is not a valid RIS element count"));
                        }
                        ris_grid_shape(v as usize).map_err(|e| Error::Validation(e.to_string()))?;
                    }
                    if var == SweepVariable::DeviceRate && v < 0.0 {
                        return invalid("rate sweep values must be nonnegative");
                    }
                }
            }
        }
        let k = &self.algorithm;
        if !(k.grid_step > 0.0 && k.grid_step <= 0.25) {
            return invalid("algorithm.grid_step must lie in (0, 0.25]");
        }
        if !(k.epsilon > 0.0 && k.epsilon.is_finite()) {
            return invalid("algorithm.epsilon must be positive");
        }
        if k.max_iterations == 0 {
            return invalid("algorithm.max_iterations must be at least 1");
        }
        if k.randomizations == 0 {
            return invalid("algorithm.randomizations must be at least 1");
        }
        if !(k.rank_one_threshold > 0.0 && k.rank_one_threshold <= 1.0) {
            return invalid("algorithm.rank_one_threshold must lie in (0, 1]");
        }
        if !(k.sdp_tolerance > 0.0 && k.sdp_tolerance < 1e-2) {
            return invalid("algorithm.sdp_tolerance must lie in (0, 1e-2)");
        }
        if k.sdp_max_iterations == 0 {
            return invalid("algorithm.sdp_max_iterations must be at least 1");
        }
        let needed = 2 * self.n_antennas.max(self.max_ris_elements());
        if k.sdp_max_dim < needed {
            return invalid(format!(
                "algorithm.sdp_max_dim = {} is below the embedded problem size {needed}",
                k.sdp_max_dim
            ));
        }
        Ok(())
    }

    fn max_ris_elements(&self) -> usize {
        if self.sweep.variable == SweepVariable::RisElements {
            self.sweep
                .values
                .iter()
                .map(|&v| v as usize)
                .max()
                .unwrap_or(0)
                .max(self.ris_elements)
        } else {
            self.ris_elements
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_reference_defaults() {
        let c = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.n_antennas, 8);
        assert_eq!(c.num_devices, 3);
        assert_eq!(c.carrier_hz, 28e9);
        assert_eq!(c.aperture_m, 0.5);
        assert_eq!(c.p_s_dbm, 15.0);
        assert_eq!(c.p_k_dbm, 15.0);
        assert_eq!(c.bandwidth_hz, 5e7);
        assert_eq!(c.rho_isac, 1e-10);
        assert_eq!(c.rho_so, 1e-9);
        assert_eq!(c.noise_dbm, -75.0);
        assert_eq!(c.sigma_tau2, 1.2e-18);
        assert_eq!(c.beta_s, 2e-5);
        assert_eq!(c.band_offset_hz, 5e7);
        assert_eq!(c.observation_s, 1e-7);
        assert_eq!(c.rate_s_bps, 5e6);
        assert_eq!(c.q_ap, [0.0, 0.0, 5.0]);
        assert_eq!(c.q_s, [20.0, 10.0, 0.0]);
        assert_eq!(c.q_ris, [25.0, 0.0, 10.0]);
        assert!((c.antenna_spacing() - 0.0714286).abs() < 1e-7);
    }

    #[test]
    fn non_grid_ris_count_is_rejected() {
        let err = ScenarioConfig::from_toml_str("ris_elements = 33").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err:?}");
    }

    #[test]
    fn zero_grid_step_is_rejected() {
        let err = ScenarioConfig::from_toml_str("[algorithm]\ngrid_step = 0.0").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("grid_step")));
    }

    #[test]
    fn parse_errors_carry_a_line() {
        let err = ScenarioConfig::from_toml_str("n_antennas = 8\nris_elements = \"many\"\n").unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location, "line 2"),
            other => panic!("unexpected {other:?}"),
        }
        let err = ScenarioConfig::from_toml_str("no_such_key = 1").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn sweep_and_schemes_parse() {
        let c = ScenarioConfig::from_toml_str(
            r#"
schemes = ["proposed", "full_so"]
seeds = [3, 4]
[sweep]
variable = "x_ris"
values = [20.0, 55.0]
[algorithm]
interference = "incoherent"
fim_scaling = "array_squared"
"#,
        )
        .unwrap();
        assert_eq!(c.schemes, vec![Scheme::Proposed, Scheme::FullSo]);
        assert_eq!(c.sweep.variable, SweepVariable::RisX);
        assert_eq!(c.algorithm.interference, InterferenceSum::Incoherent);
        assert_eq!(c.algorithm.fim_scaling, FimScaling::ArraySquared);
        let moved = c.with_sweep_value(SweepVariable::RisX, 55.0).unwrap();
        assert_eq!(moved.q_ris[0], 55.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ScenarioConfig::default();
        let back = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }
}
