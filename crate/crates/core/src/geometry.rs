//! Virtual spherical array geometry.
//!
//! Angles are radians internally. Azimuth is measured in the x-y plane from
//! +x toward +y, elevation from the x-y plane toward +z.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::synth::PathParams;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector along `self`, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

/// Wraps an angle in degrees into (−180, 180].
pub fn wrap_degrees(x: f64) -> f64 {
    let mut y = x.rem_euclid(360.0);
    if y > 180.0 {
        y -= 360.0;
    }
    y
}

/// An azimuth/elevation pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    /// Azimuth is normalized into [0, 2π); elevation outside [−π/2, π/2] is rejected.
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return invalid("direction angles must be finite");
        }
        if elevation.abs() > PI / 2.0 + 1e-12 {
            return invalid(format!("elevation {elevation} rad outside [-pi/2, pi/2]"));
        }
        let mut az = azimuth.rem_euclid(TAU);
        if az >= TAU {
            az = 0.0;
        }
        Ok(Self { azimuth: az, elevation: elevation.clamp(-PI / 2.0, PI / 2.0) })
    }

    pub fn from_degrees(az_deg: f64, el_deg: f64) -> Result<Self> {
        Self::new(az_deg.to_radians(), el_deg.to_radians())
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth.to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation.to_degrees()
    }

    /// Direction of a nonzero vector.
    pub fn from_vector(v: Vec3) -> Result<Self> {
        let u = match v.normalized() {
            Some(u) => u,
            None => return invalid("zero-length direction vector"),
        };
        Self::new(u.y.atan2(u.x), u.z.clamp(-1.0, 1.0).asin())
    }
}

pub fn unit_vector(d: Direction) -> Vec3 {
    unit_vector_angles(d.azimuth, d.elevation)
}

/// [`unit_vector`] on raw angles, without validation.
#[inline]
pub fn unit_vector_angles(azimuth: f64, elevation: f64) -> Vec3 {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    Vec3::new(ca * ce, sa * ce, se)
}

/// Rotator arm lengths. The antenna phase centre sits `horizontal_radius`
/// out along the scan azimuth and `vertical_radius` above the rotation axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatorGeometry {
    horizontal_radius: f64,
    vertical_radius: f64,
}

impl RotatorGeometry {
    /// Both radii zero is accepted as the degenerate point array.
    pub fn new(horizontal_radius: f64, vertical_radius: f64) -> Result<Self> {
        if !(horizontal_radius >= 0.0 && vertical_radius >= 0.0)
            || !horizontal_radius.is_finite()
            || !vertical_radius.is_finite()
        {
            return invalid("rotator radii must be finite and non-negative");
        }
        if horizontal_radius == 0.0 && vertical_radius > 0.0 {
            return invalid("horizontal radius is zero while vertical radius is positive");
        }
        Ok(Self { horizontal_radius, vertical_radius })
    }

    pub fn point() -> Self {
        Self { horizontal_radius: 0.0, vertical_radius: 0.0 }
    }

    pub fn horizontal_radius(&self) -> f64 {
        self.horizontal_radius
    }

    pub fn vertical_radius(&self) -> f64 {
        self.vertical_radius
    }

    /// VSA radius.
    pub fn radius(&self) -> f64 {
        self.horizontal_radius.hypot(self.vertical_radius)
    }

    /// Elevation of the antenna position above the scan elevation.
    pub fn tilt(&self) -> f64 {
        if self.horizontal_radius == 0.0 {
            0.0
        } else {
            (self.vertical_radius / self.horizontal_radius).atan()
        }
    }
}

/// Antenna phase-centre position for a scan direction, relative to the rotator centre.
pub fn antenna_position(scan: Direction, g: RotatorGeometry) -> Vec3 {
    unit_vector_angles(scan.azimuth, scan.elevation + g.tilt()) * g.radius()
}

pub fn scatter_position(reference: Vec3, dir: Direction, dist: f64) -> Result<Vec3> {
    if !(dist > 0.0) || !dist.is_finite() {
        return invalid(format!("scatter distance {dist} must be positive and finite"));
    }
    Ok(reference + unit_vector(dir) * dist)
}

/// Extra path length (m) seen by an antenna at `antenna` relative to the
/// reference position, and the unit vector from the antenna toward the source.
///
/// `toward` is the unit direction from the reference to the source; `distance`
/// `None` is the plane-wave limit.
#[inline]
pub fn wavefront_offset(reference: Vec3, toward: Vec3, distance: Option<f64>, antenna: Vec3) -> (f64, Vec3) {
    let w = antenna - reference;
    match distance {
        None => (-toward.dot(w), toward),
        Some(d) => {
            let v = toward * d - w;
            let len = v.norm();
            // |v| - d without cancellation at large d
            let offset = (w.norm_sq() - 2.0 * d * toward.dot(w)) / (len + d);
            (offset, v * (1.0 / len))
        }
    }
}

/// Per-direction observation of one path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservedGeometry {
    /// Seconds.
    pub delay: f64,
    /// Unit vector from the Tx antenna toward the first bounce.
    pub dod: Vec3,
    /// Unit vector from the Rx antenna toward the last bounce.
    pub doa: Vec3,
}

fn observe(
    path: &PathParams,
    tx_pos: Vec3,
    rx_pos: Vec3,
    refs: (Vec3, Vec3),
    d_tx: Option<f64>,
    d_rx: Option<f64>,
) -> Result<ObservedGeometry> {
    let (tx_off, dod) = wavefront_offset(refs.0, unit_vector(path.dod), d_tx, tx_pos);
    let (rx_off, doa) = wavefront_offset(refs.1, unit_vector(path.doa), d_rx, rx_pos);
    if !(dod.is_finite() && doa.is_finite()) {
        return invalid("antenna coincides with a scatter point");
    }
    Ok(ObservedGeometry { delay: path.ref_delay + (tx_off + rx_off) / SPEED_OF_LIGHT, dod, doa })
}

/// Spherical-wavefront observation. Both scatter distances must be finite.
pub fn observed_geometry_swf(path: &PathParams, tx_pos: Vec3, rx_pos: Vec3, refs: (Vec3, Vec3)) -> Result<ObservedGeometry> {
    let (Some(d_tx), Some(d_rx)) = (path.d_tx, path.d_rx) else {
        return invalid("spherical wavefront needs finite scatter distances");
    };
    observe(path, tx_pos, rx_pos, refs, Some(d_tx), Some(d_rx))
}

/// Far-field (plane-wave) observation; scatter distances are ignored.
pub fn observed_geometry_ffa(path: &PathParams, tx_pos: Vec3, rx_pos: Vec3, refs: (Vec3, Vec3)) -> Result<ObservedGeometry> {
    observe(path, tx_pos, rx_pos, refs, None, None)
}

/// Spherical on sides with a finite distance, plane wave on sides at infinity.
pub fn observed_geometry(path: &PathParams, tx_pos: Vec3, rx_pos: Vec3, refs: (Vec3, Vec3)) -> Result<ObservedGeometry> {
    observe(path, tx_pos, rx_pos, refs, path.d_tx, path.d_rx)
}

pub fn rayleigh_distance(aperture: f64, wavelength: f64) -> Result<f64> {
    if !(aperture > 0.0 && wavelength > 0.0) {
        return invalid("aperture and wavelength must be positive");
    }
    Ok(2.0 * aperture * aperture / wavelength)
}

/// Rectangular scan grid. Directions are ordered azimuth-major:
/// index = az_index · n_elevations + el_index.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanGrid {
    azimuths: Vec<f64>,
    elevations: Vec<f64>,
    az_step: f64,
    el_step: f64,
    directions: Vec<Direction>,
}

impl ScanGrid {
    /// `n_az` azimuths from `az_start` in steps of `az_step`, likewise for elevation.
    pub fn rectangular(az_start: f64, az_step: f64, n_az: usize, el_start: f64, el_step: f64, n_el: usize) -> Result<Self> {
        if !(az_step > 0.0 && el_step > 0.0) {
            return invalid("scan steps must be positive");
        }
        if n_az == 0 || n_el == 0 {
            return invalid("scan grid is empty");
        }
        if n_az as f64 * az_step > TAU + 1e-9 {
            return invalid("azimuth scan overlaps itself");
        }
        let azimuths: Vec<f64> = (0..n_az).map(|k| az_start + k as f64 * az_step).collect();
        let elevations: Vec<f64> = (0..n_el).map(|k| el_start + k as f64 * el_step).collect();
        let mut directions = Vec::with_capacity(n_az * n_el);
        for &az in &azimuths {
            for &el in &elevations {
                directions.push(Direction::new(az, el)?);
            }
        }
        Ok(Self { azimuths, elevations, az_step, el_step, directions })
    }

    /// A one-direction grid, used for a non-scanning side.
    pub fn single(dir: Direction, az_step: f64, el_step: f64) -> Result<Self> {
        Self::rectangular(dir.azimuth(), az_step, 1, dir.elevation(), el_step, 1)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn direction(&self, n: usize) -> Direction {
        self.directions[n]
    }

    pub fn az_step(&self) -> f64 {
        self.az_step
    }

    pub fn el_step(&self) -> f64 {
        self.el_step
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn n_azimuths(&self) -> usize {
        self.azimuths.len()
    }

    pub fn n_elevations(&self) -> usize {
        self.elevations.len()
    }

    /// (azimuth index, elevation index) of a direction index.
    pub fn split_index(&self, n: usize) -> (usize, usize) {
        (n / self.elevations.len(), n % self.elevations.len())
    }

    /// True when the azimuth scan closes the full circle.
    pub fn full_circle(&self) -> bool {
        (self.azimuths.len() as f64 * self.az_step - TAU).abs() < 1e-9
    }

    /// Lowest and highest scanned elevation.
    pub fn elevation_span(&self) -> (f64, f64) {
        (self.elevations[0], *self.elevations.last().unwrap())
    }
}
