//! Physical configuration of a simulation: array sizes, OFDM numerology,
//! RIS placement, UE orientation, fading and path-loss laws.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{elevation_azimuth, EulerRotation, Position3, SPEED_OF_LIGHT};

/// URA sizes; each must be a perfect square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// BS antennas N.
    pub n_bs: usize,
    /// RIS elements M (per RIS).
    pub n_ris: usize,
    /// UE antennas D.
    pub n_ue: usize,
}

/// Side length of a perfect-square URA.
pub fn ura_side(n_elems: usize) -> Result<usize> {
    let side = (n_elems as f64).sqrt().round() as usize;
    if side * side != n_elems || n_elems == 0 {
        return Err(Error::NotPerfectSquare(n_elems));
    }
    Ok(side)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub carrier_hz: f64,
}

/// Known geometry of the BS→RIS leg of one reflection path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsRisLink {
    /// Propagation delay τ_r1,q.
    pub delay: f64,
    /// RIS-side arrival cosines `(f_R1,q, v_R1,q)`.
    pub f_ris: f64,
    pub v_ris: f64,
    /// BS-side departure cosines `(g_Br,q, v_Br,q)`.
    pub g_bs: f64,
    pub v_bs: f64,
    /// Link distance in meters.
    pub distance: f64,
}

/// Full physical configuration of one BS / one-or-more RIS deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub arrays: ArrayConfig,
    pub ofdm: OfdmConfig,
    pub ris_positions: Vec<Position3>,
    pub rotation: EulerRotation,
    /// Rician factor K_d of the BS–UE link.
    pub rician_k: f64,
    /// Pilot slots T; enters the effective noise variance as D/T.
    pub t_slots: usize,
    /// Path-loss exponent of the direct link, L_d.
    pub loss_exp_direct: f64,
    /// Path-loss exponent of each reflection leg, L_r.
    pub loss_exp_reflect: f64,
}

impl Scenario {
    pub fn new(
        arrays: ArrayConfig,
        ofdm: OfdmConfig,
        ris_positions: Vec<Position3>,
        rotation: EulerRotation,
        rician_k: f64,
        t_slots: usize,
        loss_exp_direct: f64,
        loss_exp_reflect: f64,
    ) -> Result<Self> {
        ura_side(arrays.n_bs)?;
        ura_side(arrays.n_ris)?;
        ura_side(arrays.n_ue)?;
        if ofdm.bandwidth_hz <= 0.0 || ofdm.n_subcarriers == 0 {
            return Err(Error::Config("OFDM needs W > 0 and K >= 1".into()));
        }
        Ok(Self {
            arrays,
            ofdm,
            ris_positions,
            rotation,
            rician_k,
            t_slots,
            loss_exp_direct,
            loss_exp_reflect,
        })
    }

    /// The simulation parameters of the reference deployment: N = 100,
    /// D = 64, M = 400, W = 100 MHz, f_c = 30 GHz, K = 32, K_d = 100,
    /// T = 6e5, one RIS at [30, −5, 2], L_d = 4.5, L_r = 2.
    pub fn table_i() -> Self {
        Self::new(
            ArrayConfig { n_bs: 100, n_ris: 400, n_ue: 64 },
            OfdmConfig {
                bandwidth_hz: 100e6,
                n_subcarriers: 32,
                carrier_hz: 30e9,
            },
            vec![Vector3::new(30.0, -5.0, 2.0)],
            EulerRotation::default(),
            100.0,
            600_000,
            4.5,
            2.0,
        )
        .expect("reference scenario is valid")
    }

    pub fn num_ris(&self) -> usize {
        self.ris_positions.len()
    }

    /// Large-scale power gain at the given distance under a log-distance
    /// law with free-space reference at 1 m:
    /// `β(d) = (c / (4π f_c))² · d^{−L}`.
    pub fn path_loss(&self, distance: f64, exponent: f64) -> f64 {
        let beta0 = (SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * self.ofdm.carrier_hz)).powi(2);
        beta0 * distance.powf(-exponent)
    }

    /// Geometry of the BS→RIS leg of reflection path q. This is known to
    /// both the channel builder and the estimator since RIS positions are
    /// known a priori.
    pub fn bs_ris_link(&self, q: usize) -> Result<BsRisLink> {
        let p_ris = self.ris_positions[q];
        let distance = p_ris.norm();
        // BS-side departure toward the RIS.
        let (theta_b, phi_b) = elevation_azimuth(&p_ris)?;
        // RIS-side arrival from the BS: direction RIS -> BS.
        let (theta_r, phi_r) = elevation_azimuth(&(-p_ris))?;
        Ok(BsRisLink {
            delay: distance / SPEED_OF_LIGHT,
            f_ris: theta_r.sin() * phi_r.cos(),
            v_ris: theta_r.cos(),
            g_bs: theta_b.sin() * phi_b.sin(),
            v_bs: theta_b.cos(),
            distance,
        })
    }

    /// RIS-side departure cosines `(f_R2,q, v_R2,q)` toward a UE position.
    pub fn ris_ue_departure(&self, q: usize, p_ue: &Position3) -> Result<(f64, f64)> {
        let d = p_ue - self.ris_positions[q];
        let (theta, phi) = elevation_azimuth(&d)?;
        Ok((theta.sin() * phi.cos(), theta.cos()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_non_square_arrays() {
        let mut s = Scenario::table_i();
        s.arrays.n_bs = 99;
        assert!(Scenario::new(
            s.arrays,
            s.ofdm,
            s.ris_positions.clone(),
            s.rotation,
            s.rician_k,
            s.t_slots,
            s.loss_exp_direct,
            s.loss_exp_reflect,
        )
        .is_err());
    }

    #[test]
    fn path_loss_follows_exponent() {
        let s = Scenario::table_i();
        let b1 = s.path_loss(10.0, 2.0);
        let b2 = s.path_loss(20.0, 2.0);
        assert_relative_eq!(b1 / b2, 4.0, max_relative = 1e-12);
        // Free-space reference at 1 m for a 30 GHz carrier.
        let lambda = SPEED_OF_LIGHT / 30e9;
        assert_relative_eq!(
            s.path_loss(1.0, 2.0),
            (lambda / (4.0 * std::f64::consts::PI)).powi(2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn bs_ris_link_geometry() {
        let s = Scenario::table_i();
        let link = s.bs_ris_link(0).unwrap();
        let p = s.ris_positions[0];
        assert_relative_eq!(link.distance, p.norm(), max_relative = 1e-14);
        assert_relative_eq!(link.delay, p.norm() / SPEED_OF_LIGHT, max_relative = 1e-14);
        // Cosines are components of unit directions.
        assert!(link.g_bs * link.g_bs + link.v_bs * link.v_bs <= 1.0 + 1e-12);
        assert!(link.f_ris * link.f_ris + link.v_ris * link.v_ris <= 1.0 + 1e-12);
        // BS-side departure matches the normalized RIS position directly.
        let u = p / p.norm();
        assert_relative_eq!(link.g_bs, u.y, max_relative = 1e-12);
        assert_relative_eq!(link.v_bs, u.z, max_relative = 1e-12);
    }
}
