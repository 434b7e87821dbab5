//! Coordinate conventions, the UE rotation matrix, the forward map from
//! position-space parameters to channel-space parameters, and the per-path
//! inverse maps used for position inference.
//!
//! The BS sits at the origin with its array in the y–z plane. Elevation is
//! measured from the +z axis, azimuth from the +x axis with the standard
//! two-argument arctangent. Direction cosines `(f, g, v)` are the components
//! of a unit propagation direction: `f = sinθ cosφ`, `g = sinθ sinφ`,
//! `v = cosθ`.

use nalgebra::{DVector, Matrix2x3, Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Speed of light in m/s, exact.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Tolerance for clamping a cosine pair onto the unit ball; beyond this the
/// geometry is treated as degenerate rather than silently clamped.
pub const UNIT_BALL_TOL: f64 = 1e-9;

pub type Position3 = Vector3<f64>;

/// Euler angles of the UE array orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerRotation {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl EulerRotation {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Self {
        Self { alpha1, alpha2, alpha3 }
    }

    /// Full 3×3 rotation matrix `M̄_R = −R3(α3)·R2(α2)·R1(α1)`.
    pub fn matrix(&self) -> Matrix3<f64> {
        let (s1, c1) = self.alpha1.sin_cos();
        let (s2, c2) = self.alpha2.sin_cos();
        let (s3, c3) = self.alpha3.sin_cos();
        let r1 = Matrix3::new(c1, s1, 0.0, -s1, c1, 0.0, 0.0, 0.0, 1.0);
        let r2 = Matrix3::new(1.0, 0.0, 0.0, 0.0, c2, s2, 0.0, -s2, c2);
        let r3 = Matrix3::new(c3, s3, 0.0, -s3, c3, 0.0, 0.0, 0.0, 1.0);
        -(r3 * r2 * r1)
    }

    /// Reduced 2×3 matrix `M_R`: rows 2–3 of `M̄_R`, mapping a unit direction
    /// to the UE-side cosine pair `(g, v)`.
    pub fn reduced(&self) -> Matrix2x3<f64> {
        let m = self.matrix();
        Matrix2x3::new(
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        )
    }
}

/// Full rotation matrix for the given Euler angles.
pub fn rotation_matrix(rot: &EulerRotation) -> Matrix3<f64> {
    rot.matrix()
}

/// Delay, elevation and azimuth of a single propagation path, with the
/// derived direction cosines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    pub delay: f64,
    pub elevation: f64,
    pub azimuth: f64,
}

impl PathGeometry {
    /// `f = sinθ cosφ`
    pub fn f(&self) -> f64 {
        self.elevation.sin() * self.azimuth.cos()
    }

    /// `g = sinθ sinφ`
    pub fn g(&self) -> f64 {
        self.elevation.sin() * self.azimuth.sin()
    }

    /// `v = cosθ`
    pub fn v(&self) -> f64 {
        self.elevation.cos()
    }
}

/// Elevation/azimuth of a direction vector, with the azimuth undefined on
/// the z axis.
pub fn elevation_azimuth(dir: &Vector3<f64>) -> Result<(f64, f64)> {
    let norm = dir.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateGeometry("zero direction vector".into()));
    }
    if dir.x == 0.0 && dir.y == 0.0 {
        return Err(Error::DegenerateGeometry(
            "direction on the z axis: azimuth undefined".into(),
        ));
    }
    let elevation = (dir.z / norm).clamp(-1.0, 1.0).acos();
    let azimuth = dir.y.atan2(dir.x);
    Ok((elevation, azimuth))
}

/// Position-space parameters ξ: UE position plus the complex path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionParams {
    pub ue_position: Position3,
    pub direct_gain: Complex64,
    pub reflection_gains: Vec<Complex64>,
}

impl PositionParams {
    pub fn num_reflections(&self) -> usize {
        self.reflection_gains.len()
    }

    /// Flattened real vector `[p_U, Re h_d, Im h_d, Re h_r1, Im h_r1, …]`
    /// of length `5 + 2Q`.
    pub fn to_vec(&self) -> DVector<f64> {
        let q = self.num_reflections();
        let mut v = DVector::zeros(5 + 2 * q);
        v[0] = self.ue_position.x;
        v[1] = self.ue_position.y;
        v[2] = self.ue_position.z;
        v[3] = self.direct_gain.re;
        v[4] = self.direct_gain.im;
        for (i, h) in self.reflection_gains.iter().enumerate() {
            v[5 + 2 * i] = h.re;
            v[6 + 2 * i] = h.im;
        }
        v
    }

    pub fn from_vec(v: &DVector<f64>, num_reflections: usize) -> Result<Self> {
        if v.len() != 5 + 2 * num_reflections {
            return Err(Error::DimensionMismatch(format!(
                "position-parameter vector has length {}, expected {}",
                v.len(),
                5 + 2 * num_reflections
            )));
        }
        Ok(Self {
            ue_position: Vector3::new(v[0], v[1], v[2]),
            direct_gain: Complex64::new(v[3], v[4]),
            reflection_gains: (0..num_reflections)
                .map(|i| Complex64::new(v[5 + 2 * i], v[6 + 2 * i]))
                .collect(),
        })
    }
}

/// Channel-space parameters of the direct (BS–UE) path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectPathParams {
    pub gain: Complex64,
    pub delay: f64,
    /// UE-side AoA cosines `(g_Ud, v_Ud)`.
    pub g_ue: f64,
    pub v_ue: f64,
    /// BS-side AoD cosines `(g_Bd, v_Bd)`.
    pub g_bs: f64,
    pub v_bs: f64,
}

/// Channel-space parameters of one RIS reflection path. The delay is the
/// RIS→UE leg only; the BS→RIS leg is known scenario geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionPathParams {
    pub gain: Complex64,
    pub delay: f64,
    /// UE-side AoA cosines `(g_Ur,q, v_Ur,q)`.
    pub g_ue: f64,
    pub v_ue: f64,
}

/// Channel parameters η for the direct path and each reflection path.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub direct: DirectPathParams,
    pub reflections: Vec<ReflectionPathParams>,
}

impl ChannelParams {
    pub fn num_reflections(&self) -> usize {
        self.reflections.len()
    }

    /// Dimension of the flattened real parameter vector, `7 + 5Q`.
    pub fn dim(&self) -> usize {
        7 + 5 * self.num_reflections()
    }

    /// Flattened real vector
    /// `[Re h_d, Im h_d, τ_d, g_Ud, v_Ud, g_Bd, v_Bd, {Re h_rq, Im h_rq, τ_r2q, g_Urq, v_Urq}]`.
    pub fn to_vec(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = self.direct.gain.re;
        v[1] = self.direct.gain.im;
        v[2] = self.direct.delay;
        v[3] = self.direct.g_ue;
        v[4] = self.direct.v_ue;
        v[5] = self.direct.g_bs;
        v[6] = self.direct.v_bs;
        for (q, r) in self.reflections.iter().enumerate() {
            let o = 7 + 5 * q;
            v[o] = r.gain.re;
            v[o + 1] = r.gain.im;
            v[o + 2] = r.delay;
            v[o + 3] = r.g_ue;
            v[o + 4] = r.v_ue;
        }
        v
    }

    pub fn from_vec(v: &DVector<f64>, num_reflections: usize) -> Result<Self> {
        if v.len() != 7 + 5 * num_reflections {
            return Err(Error::DimensionMismatch(format!(
                "channel-parameter vector has length {}, expected {}",
                v.len(),
                7 + 5 * num_reflections
            )));
        }
        Ok(Self {
            direct: DirectPathParams {
                gain: Complex64::new(v[0], v[1]),
                delay: v[2],
                g_ue: v[3],
                v_ue: v[4],
                g_bs: v[5],
                v_bs: v[6],
            },
            reflections: (0..num_reflections)
                .map(|q| {
                    let o = 7 + 5 * q;
                    ReflectionPathParams {
                        gain: Complex64::new(v[o], v[o + 1]),
                        delay: v[o + 2],
                        g_ue: v[o + 3],
                        v_ue: v[o + 4],
                    }
                })
                .collect(),
        })
    }
}

fn unit_direction(from: &Position3, to: &Position3, what: &str) -> Result<Vector3<f64>> {
    let d = to - from;
    let norm = d.norm();
    if norm < 1e-12 {
        return Err(Error::DegenerateGeometry(format!("{what}: coincident points")));
    }
    Ok(d / norm)
}

/// Forward map F: position-space parameters ξ to channel-space parameters η.
///
/// Delays are path lengths over c; BS-side cosines come from the elevation
/// and azimuth of the BS→UE direction; UE-side cosines are `M_R` applied to
/// the unit direction of the incoming path. Gains pass through unchanged.
pub fn forward_map(xi: &PositionParams, scenario: &Scenario) -> Result<ChannelParams> {
    if xi.num_reflections() != scenario.num_ris() {
        return Err(Error::DimensionMismatch(format!(
            "{} reflection gains for {} RIS",
            xi.num_reflections(),
            scenario.num_ris()
        )));
    }
    let p = xi.ue_position;
    let origin = Position3::zeros();
    let u_direct = unit_direction(&origin, &p, "BS-UE link")?;
    let (theta_bd, phi_bd) = elevation_azimuth(&p)?;
    let m_r = scenario.rotation.reduced();
    let ue_direct = m_r * u_direct;

    let direct = DirectPathParams {
        gain: xi.direct_gain,
        delay: p.norm() / SPEED_OF_LIGHT,
        g_ue: ue_direct[0],
        v_ue: ue_direct[1],
        g_bs: theta_bd.sin() * phi_bd.sin(),
        v_bs: theta_bd.cos(),
    };

    let mut reflections = Vec::with_capacity(scenario.num_ris());
    for (q, p_ris) in scenario.ris_positions.iter().enumerate() {
        let u_refl = unit_direction(p_ris, &p, "RIS-UE link")?;
        // Azimuth of the RIS->UE departure must be defined.
        elevation_azimuth(&(p - p_ris))?;
        let ue_refl = m_r * u_refl;
        reflections.push(ReflectionPathParams {
            gain: xi.reflection_gains[q],
            delay: (p - p_ris).norm() / SPEED_OF_LIGHT,
            g_ue: ue_refl[0],
            v_ue: ue_refl[1],
        });
    }

    Ok(ChannelParams { direct, reflections })
}

/// The squared third cosine `1 − g² − v²`, clamped onto `[0, 1]` within
/// tolerance; an excursion beyond tolerance is a degenerate geometry.
fn third_cosine_sq(g: f64, v: f64) -> Result<f64> {
    let rem = 1.0 - g * g - v * v;
    if rem < -UNIT_BALL_TOL {
        return Err(Error::DegenerateGeometry(format!(
            "cosine pair outside the unit ball: g^2 + v^2 - 1 = {:.3e}",
            -rem
        )));
    }
    Ok(rem.max(0.0))
}

/// UE position from direct-path parameters, using the positive-root
/// convention for the unobserved cosine (UE in the x > 0 half-space).
pub fn invert_direct_path(direct: &DirectPathParams) -> Result<Position3> {
    let d = SPEED_OF_LIGHT * direct.delay;
    let f = third_cosine_sq(direct.g_bs, direct.v_bs)?.sqrt();
    Ok(Vector3::new(d * f, d * direct.g_bs, d * direct.v_bs))
}

/// UE position from one reflection path: reconstruct the UE-side direction
/// with the negative-root convention for `f_Ur,q`, rotate back to the global
/// frame, and offset from the RIS position.
pub fn invert_reflection_path(
    refl: &ReflectionPathParams,
    ris_position: &Position3,
    rot: &EulerRotation,
) -> Result<Position3> {
    let f_ue = -third_cosine_sq(refl.g_ue, refl.v_ue)?.sqrt();
    let ue_dir = Vector3::new(f_ue, refl.g_ue, refl.v_ue);
    let m = rot.matrix();
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("rotation matrix not invertible".into()))?;
    let global_dir = inv * ue_dir;
    let d = SPEED_OF_LIGHT * refl.delay;
    Ok(ris_position + d * global_dir)
}
