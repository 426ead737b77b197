//! Channel construction for the sensing echo, the direct IIoT-(I) link and
//! the RIS-assisted IIoT-(II) links, plus the fixed transmit beamformers.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_link, direction, distance, ArrayLayout, FieldRegime, Position};
use crate::linalg::{CMatrix, CVector, C64};

/// Diagonal RIS reflection coefficients `v_m = e^{jθ_m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhase {
    v: CVector,
}

impl RisPhase {
    pub const UNIT_MODULUS_TOL: f64 = 1e-12;

    pub fn new(v: CVector) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::NonFinite("RIS phase vector"));
        }
        let dev = v.max_modulus_deviation();
        if dev > Self::UNIT_MODULUS_TOL {
            return Err(Error::InvalidConfig(format!(
                "RIS coefficients must be unit modulus (deviation {dev:.3e})"
            )));
        }
        Ok(Self { v })
    }

    pub fn from_angles(theta: &[f64]) -> Self {
        Self {
            v: CVector::from_phases(theta),
        }
    }

    /// All phases zero.
    pub fn identity(m: usize) -> Self {
        Self::from_angles(&vec![0.0; m])
    }

    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        let theta: Vec<f64> = (0..m).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
        Self::from_angles(&theta)
    }

    /// Same surface with every coefficient multiplied by `e^{jψ}`.
    pub fn rotated(&self, psi: f64) -> Self {
        Self {
            v: self.v.scale(C64::from_polar(1.0, psi)).unit_modulus(),
        }
    }

    /// Gauge-fixed representative: the first coefficient is made real and
    /// the relative phases are snapped to a 2π/2⁴⁰ lattice. Surfaces that
    /// differ only by a common phase map to bit-identical representatives
    /// (barring a lattice tie), so everything computed from them agrees
    /// exactly rather than up to rounding.
    pub fn canonical(&self) -> Self {
        const STEPS: f64 = (1u64 << 40) as f64;
        let Some(first) = self.v.iter().next() else { return self.clone() };
        let reference = first.arg();
        let theta: Vec<f64> = self
            .v
            .iter()
            .map(|c| {
                let k = ((c.arg() - reference) / (2.0 * PI) * STEPS).round().rem_euclid(STEPS);
                2.0 * PI * k / STEPS
            })
            .collect();
        Self::from_angles(&theta)
    }

    pub fn v(&self) -> &CVector {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Every channel object of one scenario realisation.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Unit-modulus near-field array response towards the IIoT-(I) device.
    pub a_ap_s: CVector,
    pub g_ap_s: CMatrix,
    pub h_ap_s: CVector,
    /// M×N, rows indexed by RIS element.
    pub h_ap_ris: CMatrix,
    pub h_ris_k: Vec<CVector>,
    pub regime_ap_s: FieldRegime,
    pub regime_ap_ris: FieldRegime,
    pub regime_ris_k: Vec<FieldRegime>,
    pub beta_s: C64,
    pub devices: Vec<Position>,
    pub rayleigh_distance: f64,
}

impl ChannelSet {
    pub fn n_antennas(&self) -> usize {
        self.a_ap_s.len()
    }

    pub fn ris_elements(&self) -> usize {
        self.h_ap_ris.rows()
    }

    pub fn num_devices(&self) -> usize {
        self.h_ris_k.len()
    }

    /// `|β_s|²`, used wherever the echo power appears.
    pub fn beta_power(&self) -> f64 {
        self.beta_s.norm_sqr()
    }

    /// Cascaded channels `h̄_k = Hᴴ Φ h_RIS,k` for all devices.
    pub fn cascades(&self, phase: &RisPhase) -> Result<Vec<CVector>> {
        self.h_ris_k
            .iter()
            .map(|h| cascade(h, phase, &self.h_ap_ris))
            .collect()
    }
}

fn path_gain(d: f64, wavelength: f64) -> f64 {
    (wavelength / (4.0 * PI * d * d)).sqrt()
}

/// `[e^{-j2π d_i/λ}]` over the distances from each element to `point`.
pub fn nf_response(elements: &[Position], point: Position, wavelength: f64) -> Result<CVector> {
    let mut phases = Vec::with_capacity(elements.len());
    for &e in elements {
        let d = distance(e, point);
        if d == 0.0 {
            return Err(Error::DegenerateGeometry("point coincides with an array element".into()));
        }
        phases.push(-2.0 * PI * d / wavelength);
    }
    Ok(CVector::from_phases(&phases))
}

/// Planar-wave steering vector relative to the array centre: entry `i` is
/// `e^{+j2π (p_i − c)·û/λ}` for the unit direction `û` towards the source.
///
/// Together with the common phase `e^{-j2π d_c/λ}` this is the first-order
/// expansion of the spherical response.
pub fn ff_steering(elements: &[Position], center: Position, towards: [f64; 3], wavelength: f64) -> CVector {
    let phases: Vec<f64> = elements
        .iter()
        .map(|p| {
            let r = p.sub(&center);
            2.0 * PI * (r[0] * towards[0] + r[1] * towards[1] + r[2] * towards[2]) / wavelength
        })
        .collect();
    CVector::from_phases(&phases)
}

/// Near-field array response of the AP towards `q_s`.
pub fn array_response(layout: &ArrayLayout, q_s: Position) -> Result<CVector> {
    nf_response(&layout.ap_antennas, q_s, layout.wavelength)
}

/// `G = β a aᵀ` with a plain transpose.
pub fn build_sensing_channel(layout: &ArrayLayout, q_s: Position, beta_s: C64) -> Result<CMatrix> {
    let a = array_response(layout, q_s)?;
    let n = a.len();
    Ok(CMatrix::from_fn(n, n, |i, j| beta_s * (a[i] * a[j])))
}

/// `α·a` with `α = √(λ/(4π d²))` from the centre distance.
pub fn build_comm_channel_nf(elements: &[Position], center: Position, q: Position, wavelength: f64) -> Result<CVector> {
    let d = distance(center, q);
    if d == 0.0 {
        return Err(Error::DegenerateGeometry("link endpoints coincide".into()));
    }
    let response = nf_response(elements, q, wavelength)?;
    Ok(response.scale(C64::new(path_gain(d, wavelength), 0.0)))
}

/// RIS-to-device channel in the requested regime.
pub fn build_ris_device_channel(layout: &ArrayLayout, q: Position, regime: FieldRegime) -> Result<CVector> {
    match regime {
        FieldRegime::NearField => build_comm_channel_nf(&layout.ris_elements, layout.ris_center, q, layout.wavelength),
        FieldRegime::FarField => {
            let d = distance(layout.ris_center, q);
            let u = direction(layout.ris_center, q)?;
            let common = C64::from_polar(path_gain(d, layout.wavelength), -2.0 * PI * d / layout.wavelength);
            Ok(ff_steering(&layout.ris_elements, layout.ris_center, u, layout.wavelength).scale(common))
        }
    }
}

/// M×N channel between the AP antennas and the RIS elements.
pub fn build_ap_ris_channel(layout: &ArrayLayout, regime: FieldRegime) -> Result<CMatrix> {
    let dc = distance(layout.ap_center, layout.ris_center);
    if dc == 0.0 {
        return Err(Error::DegenerateGeometry("AP and RIS centres coincide".into()));
    }
    let lambda = layout.wavelength;
    let gain = path_gain(dc, lambda);
    let m = layout.ris_elements.len();
    let n = layout.ap_antennas.len();
    match regime {
        FieldRegime::NearField => {
            let mut entries = Vec::with_capacity(m * n);
            for &r in &layout.ris_elements {
                for &p in &layout.ap_antennas {
                    let d = distance(r, p);
                    if d == 0.0 {
                        return Err(Error::DegenerateGeometry("RIS element coincides with an antenna".into()));
                    }
                    entries.push(C64::from_polar(gain, -2.0 * PI * d / lambda));
                }
            }
            CMatrix::from_row_slice(m, n, &entries)
        }
        FieldRegime::FarField => {
            let to_ris = direction(layout.ap_center, layout.ris_center)?;
            let to_ap = direction(layout.ris_center, layout.ap_center)?;
            let s_ap = ff_steering(&layout.ap_antennas, layout.ap_center, to_ris, lambda);
            let s_ris = ff_steering(&layout.ris_elements, layout.ris_center, to_ap, lambda);
            let common = C64::from_polar(gain, -2.0 * PI * dc / lambda);
            Ok(CMatrix::from_fn(m, n, |i, j| common * s_ris[i] * s_ap[j]))
        }
    }
}

/// `h̄ = Hᴴ Φ h`.
pub fn cascade(h_ris_k: &CVector, phase: &RisPhase, h_ap_ris: &CMatrix) -> Result<CVector> {
    let m = h_ap_ris.rows();
    if h_ris_k.len() != m || phase.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "cascade expects RIS length {m}, got channel {} and phase {}",
            h_ris_k.len(),
            phase.len()
        )));
    }
    let reflected = CVector::from_vec(
        h_ris_k
            .iter()
            .zip(phase.v().iter())
            .map(|(h, v)| h * v)
            .collect(),
    );
    h_ap_ris.adjoint().mul_vec(&reflected)
}

/// `w = √(p/N)·conj(a)/‖a‖` for the SO and ISAC bands.
pub fn transmit_beamformers(a_ap_s: &CVector, p_so: f64, p_isac: f64) -> (CVector, CVector) {
    let n = a_ap_s.len().max(1) as f64;
    let norm = a_ap_s.norm();
    let dir = if norm > 0.0 {
        a_ap_s.conj().scale(C64::new(1.0 / norm, 0.0))
    } else {
        CVector::zeros(a_ap_s.len())
    };
    let w = |p: f64| dir.scale(C64::new((p.max(0.0) / n).sqrt(), 0.0));
    (w(p_so), w(p_isac))
}

/// Builds the full channel set for a layout, target and device drop.
pub fn build_channels(layout: &ArrayLayout, q_s: Position, beta_s: C64, devices: &[Position]) -> Result<ChannelSet> {
    let rayleigh = layout.rayleigh_distance();
    let a = array_response(layout, q_s)?;
    let g = build_sensing_channel(layout, q_s, beta_s)?;
    let h_ap_s = build_comm_channel_nf(&layout.ap_antennas, layout.ap_center, q_s, layout.wavelength)?;
    let regime_ap_s = classify_link(distance(layout.ap_center, q_s), rayleigh);
    let regime_ap_ris = classify_link(distance(layout.ap_center, layout.ris_center), rayleigh);
    let h_ap_ris = build_ap_ris_channel(layout, regime_ap_ris)?;
    let mut h_ris_k = Vec::with_capacity(devices.len());
    let mut regime_ris_k = Vec::with_capacity(devices.len());
    for &q in devices {
        let regime = classify_link(distance(layout.ris_center, q), rayleigh);
        h_ris_k.push(build_ris_device_channel(layout, q, regime)?);
        regime_ris_k.push(regime);
    }
    Ok(ChannelSet {
        a_ap_s: a,
        g_ap_s: g,
        h_ap_s,
        h_ap_ris,
        h_ris_k,
        regime_ap_s,
        regime_ap_ris,
        regime_ris_k,
        beta_s,
        devices: devices.to_vec(),
        rayleigh_distance: rayleigh,
    })
}

/// Serializable summary of the field regimes of one channel set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub ap_s: FieldRegime,
    pub ap_ris: FieldRegime,
    pub ris_k: Vec<FieldRegime>,
}

impl From<&ChannelSet> for RegimeReport {
    fn from(c: &ChannelSet) -> Self {
        Self {
            ap_s: c.regime_ap_s,
            ap_ris: c.regime_ap_ris,
            ris_k: c.regime_ris_k.clone(),
        }
    }
}
