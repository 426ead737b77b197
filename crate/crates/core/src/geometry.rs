//! Node and element coordinates, distances, and near/far-field
//! classification against the Rayleigh distance.
//!
//! The AP is a ULA along the z axis centred on `q_ap`. The RIS is a planar
//! grid in the x–y plane centred on `q_ris`. Both arrays use exactly as many
//! elements as configured, placed symmetrically about their centre, so the
//! AP aperture is `(N-1)·d`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sub(&self, other: &Position) -> [f64; 3] {
        [self.x - other.x, self.y - other.y, self.z - other.z]
    }

    pub fn offset(&self, dx: f64, dy: f64, dz: f64) -> Position {
        Position::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

impl From<[f64; 3]> for Position {
    fn from(c: [f64; 3]) -> Self {
        Position::new(c[0], c[1], c[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRegime {
    NearField,
    FarField,
}

#[derive(Debug, Clone)]
pub struct ArrayLayout {
    pub ap_center: Position,
    pub ris_center: Position,
    /// N antenna positions, ordered by increasing z.
    pub ap_antennas: Vec<Position>,
    /// M element positions, row-major over (x index, y index).
    pub ris_elements: Vec<Position>,
    /// `(rows, cols)` of the RIS grid along x and y.
    pub ris_grid: (usize, usize),
    pub antenna_spacing: f64,
    pub ris_spacing: f64,
    pub aperture: f64,
    pub wavelength: f64,
}

impl ArrayLayout {
    pub fn rayleigh_distance(&self) -> f64 {
        rayleigh_distance(self.aperture, self.wavelength)
    }
}

/// Grid shape used for `m` RIS elements.
///
/// Perfect squares give a square grid; other counts use the most square
/// factorization `rows × cols` (rows ≤ cols) as long as `cols ≤ 2·rows`.
pub fn ris_grid_shape(m: usize) -> Result<(usize, usize)> {
    if m == 0 {
        return Err(Error::InvalidConfig("RIS must have at least one element".into()));
    }
    let mut rows = (m as f64).sqrt().floor() as usize;
    while rows > 1 && m % rows != 0 {
        rows -= 1;
    }
    let cols = m / rows;
    if cols > 2 * rows {
        return Err(Error::InvalidConfig(format!(
            "{m} RIS elements cannot be arranged as a square or near-square grid"
        )));
    }
    Ok((rows, cols))
}

/// Offsets `(i - (n-1)/2)·spacing` for `i in 0..n`.
fn centered_offsets(n: usize, spacing: f64) -> impl Iterator<Item = f64> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(move |i| (i as f64 - mid) * spacing)
}

pub fn element_positions(config: &ScenarioConfig) -> Result<ArrayLayout> {
    if config.n_antennas == 0 {
        return Err(Error::InvalidConfig("AP needs at least one antenna".into()));
    }
    let (rows, cols) = ris_grid_shape(config.ris_elements)?;
    let d = config.antenna_spacing();
    let w = config.ris_spacing();
    let ap = config.ap_position();
    let ris = config.ris_position();

    let ap_antennas = centered_offsets(config.n_antennas, d)
        .map(|dz| ap.offset(0.0, 0.0, dz))
        .collect();
    let mut ris_elements = Vec::with_capacity(rows * cols);
    for dx in centered_offsets(rows, w) {
        for dy in centered_offsets(cols, w) {
            ris_elements.push(ris.offset(dx, dy, 0.0));
        }
    }
    Ok(ArrayLayout {
        ap_center: ap,
        ris_center: ris,
        ap_antennas,
        ris_elements,
        ris_grid: (rows, cols),
        antenna_spacing: d,
        ris_spacing: w,
        aperture: (config.n_antennas - 1) as f64 * d,
        wavelength: config.wavelength(),
    })
}

pub fn distance(a: Position, b: Position) -> f64 {
    let [dx, dy, dz] = a.sub(&b);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Unit vector pointing from `from` to `to`.
pub fn direction(from: Position, to: Position) -> Result<[f64; 3]> {
    let d = distance(from, to);
    if d == 0.0 {
        return Err(Error::DegenerateGeometry("coincident points have no direction".into()));
    }
    let [x, y, z] = to.sub(&from);
    Ok([x / d, y / d, z / d])
}

/// `2·D²/λ`.
pub fn rayleigh_distance(aperture: f64, wavelength: f64) -> f64 {
    2.0 * aperture * aperture / wavelength
}

/// Near field strictly inside the Rayleigh distance; the boundary itself is
/// far field.
pub fn classify_link(center_distance: f64, rayleigh: f64) -> FieldRegime {
    if center_distance < rayleigh {
        FieldRegime::NearField
    } else {
        FieldRegime::FarField
    }
}

/// Minimum clearance between a drawn device and any other node.
pub const DEVICE_CLEARANCE_M: f64 = 1.0;

/// Draws `config.num_devices` IIoT-(II) positions on the ground plane at
/// `device_radius_m` from the AP, azimuth uniform over `device_arc_deg`.
pub fn place_devices<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Vec<Position>> {
    const MAX_DRAWS: usize = 10_000;
    let [a0, a1] = config.device_arc_deg;
    let ap = config.ap_position();
    let fixed = [ap, config.ris_position(), config.target_position()];
    let mut out: Vec<Position> = Vec::with_capacity(config.num_devices);
    let mut draws = 0;
    while out.len() < config.num_devices {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::DegenerateGeometry(
                "could not place devices with the required clearance".into(),
            ));
        }
        let az = (a0 + (a1 - a0) * rng.random::<f64>()).to_radians();
        let p = Position::new(
            ap.x + config.device_radius_m * az.cos(),
            ap.y + config.device_radius_m * az.sin(),
            0.0,
        );
        let clear = fixed
            .iter()
            .chain(out.iter())
            .all(|&q| distance(p, q) >= DEVICE_CLEARANCE_M);
        if clear {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_antenna_sits_at_ap() {
        let config = ScenarioConfig {
            n_antennas: 1,
            ..Default::default()
        };
        let layout = element_positions(&config).unwrap();
        assert_eq!(layout.ap_antennas, vec![Position::new(0.0, 0.0, 5.0)]);
        assert_eq!(layout.aperture, 0.0);
    }

    #[test]
    fn eight_antenna_extremes() {
        let config = ScenarioConfig::default();
        let layout = element_positions(&config).unwrap();
        let d = 0.5 / 7.0;
        let zs: Vec<f64> = layout.ap_antennas.iter().map(|p| p.z).collect();
        assert!((zs[0] - (5.0 - 3.5 * d)).abs() < 1e-12);
        assert!((zs[7] - (5.0 + 3.5 * d)).abs() < 1e-12);
        assert!((zs[7] - zs[0] - 0.5).abs() < 1e-12);
        let mean: f64 = zs.iter().sum::<f64>() / 8.0;
        assert!((mean - 5.0).abs() < 1e-9);
        for pair in zs.windows(2) {
            assert!((pair[1] - pair[0] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn four_element_ris_grid() {
        let config = ScenarioConfig {
            ris_elements: 4,
            ..Default::default()
        };
        let layout = element_positions(&config).unwrap();
        let w = config.wavelength() / 2.0;
        let expected = [
            (25.0 - w / 2.0, -w / 2.0),
            (25.0 - w / 2.0, w / 2.0),
            (25.0 + w / 2.0, -w / 2.0),
            (25.0 + w / 2.0, w / 2.0),
        ];
        for (p, (x, y)) in layout.ris_elements.iter().zip(expected) {
            assert!((p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12);
            assert_eq!(p.z, 10.0);
        }
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(ris_grid_shape(16).unwrap(), (4, 4));
        assert_eq!(ris_grid_shape(32).unwrap(), (4, 8));
        assert_eq!(ris_grid_shape(48).unwrap(), (6, 8));
        assert_eq!(ris_grid_shape(1).unwrap(), (1, 1));
        assert!(ris_grid_shape(33).is_err());
        assert!(ris_grid_shape(7).is_err());
    }

    #[test]
    fn distance_examples() {
        let o = Position::new(0.0, 0.0, 0.0);
        assert_eq!(distance(o, Position::new(0.0, 0.0, 5.0)), 5.0);
        let d = distance(Position::new(0.0, 0.0, 5.0), Position::new(20.0, 10.0, 0.0));
        assert!((d - 525f64.sqrt()).abs() < 1e-12);
        assert!((d - 22.9129).abs() < 1e-4);
        assert_eq!(distance(o, o), 0.0);
    }

    #[test]
    fn rayleigh_examples() {
        assert_eq!(rayleigh_distance(1.0, 2.0), 1.0);
        assert_eq!(rayleigh_distance(0.0, 0.01), 0.0);
        let lambda = SPEED / 28e9;
        assert!((lambda - 0.0107068).abs() < 1e-7);
        assert!((rayleigh_distance(0.5, lambda) - 46.70).abs() < 5e-3);
    }
    const SPEED: f64 = crate::scenario::SPEED_OF_LIGHT;

    #[test]
    fn classification() {
        let r = rayleigh_distance(0.5, SPEED / 28e9);
        assert_eq!(classify_link(20.0, r), FieldRegime::NearField);
        assert_eq!(classify_link(80.0, r), FieldRegime::FarField);
        assert_eq!(classify_link(r, r), FieldRegime::FarField);
    }

    #[test]
    fn devices_on_the_circle() {
        let config = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let devices = place_devices(&config, &mut rng).unwrap();
        assert_eq!(devices.len(), 3);
        for p in &devices {
            assert!(((p.x * p.x + p.y * p.y).sqrt() - 80.0).abs() < 1e-9);
            assert_eq!(p.z, 0.0);
        }
        let mut again = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(place_devices(&config, &mut again).unwrap(), devices);
    }

    fn pos() -> impl Strategy<Value = Position> {
        (-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0).prop_map(|(x, y, z)| Position::new(x, y, z))
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in pos(), b in pos(), c in pos()) {
            prop_assert!(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9);
            prop_assert_eq!(distance(a, b), distance(b, a));
        }

        #[test]
        fn classification_is_monotone(d1 in 0.0f64..200.0, d2 in 0.0f64..200.0, r in 0.0f64..100.0) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            if classify_link(lo, r) == FieldRegime::FarField {
                prop_assert_eq!(classify_link(hi, r), FieldRegime::FarField);
            }
        }
    }
}
