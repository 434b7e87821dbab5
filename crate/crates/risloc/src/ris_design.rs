//! RIS phase-shift design: maximize the expected reflection gain over a
//! served angular region via a discretized steering dictionary and its
//! dominant left singular vector.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{steering_ura, RisPhase};
use crate::error::{Error, Result};

/// A served angular region, sampled on a uniform (elevation, azimuth)
/// grid. A degenerate range (lower == upper) with a 1-point grid
/// describes a single direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularRegion {
    pub theta_l: f64,
    pub theta_u: f64,
    pub phi_l: f64,
    pub phi_u: f64,
    /// Grid counts per axis: (elevation, azimuth).
    pub grid: (usize, usize),
}

impl AngularRegion {
    pub fn new(theta_l: f64, theta_u: f64, phi_l: f64, phi_u: f64) -> Result<Self> {
        Self::with_grid(theta_l, theta_u, phi_l, phi_u, (32, 32))
    }

    pub fn with_grid(
        theta_l: f64,
        theta_u: f64,
        phi_l: f64,
        phi_u: f64,
        grid: (usize, usize),
    ) -> Result<Self> {
        if theta_l > theta_u || phi_l > phi_u {
            return Err(Error::Config("angular bounds must satisfy lower <= upper".into()));
        }
        if grid.0 == 0 || grid.1 == 0 {
            return Err(Error::Config("angular grid needs at least one point per axis".into()));
        }
        Ok(Self { theta_l, theta_u, phi_l, phi_u, grid })
    }

    pub fn point(theta: f64, phi: f64) -> Self {
        Self { theta_l: theta, theta_u: theta, phi_l: phi, phi_u: phi, grid: (1, 1) }
    }

    /// All sampled (f, v) direction-cosine pairs, row-major over the
    /// (elevation, azimuth) grid.
    pub fn cosine_grid(&self) -> Vec<(f64, f64)> {
        let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                vec![(lo + hi) / 2.0]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        };
        let thetas = axis(self.theta_l, self.theta_u, self.grid.0);
        let phis = axis(self.phi_l, self.phi_u, self.grid.1);
        let mut out = Vec::with_capacity(thetas.len() * phis.len());
        for &t in &thetas {
            for &p in &phis {
                out.push((t.sin() * p.cos(), t.cos()));
            }
        }
        out
    }
}

/// Stack the RIS steering vectors of every grid direction as columns of
/// an M×Z dictionary (Z = product of grid counts).
pub fn build_dictionary(region: &AngularRegion, m_ris: usize) -> Result<DMatrix<Complex64>> {
    let dirs = region.cosine_grid();
    let mut d = DMatrix::zeros(m_ris, dirs.len());
    for (j, &(f, v)) in dirs.iter().enumerate() {
        d.set_column(j, &steering_ura(f, v, m_ris)?);
    }
    Ok(d)
}

/// Dominant left singular vector of the dictionary, with the global SVD
/// phase fixed so the first entry's angle is zero.
fn dominant_left_singular(d: &DMatrix<Complex64>) -> Result<DVector<Complex64>> {
    let svd = d.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Config("SVD did not produce U".into()))?;
    // Singular values come sorted descending in nalgebra.
    let mut lead: DVector<Complex64> = u.column(0).into();
    let phase = lead[0].arg();
    let fix = Complex64::from_polar(1.0, -phase);
    for x in lead.iter_mut() {
        *x *= fix;
    }
    Ok(lead)
}

/// Design the RIS phase shifts for a served region given the incident
/// direction cosines `(f_r1, v_r1)` of the BS–RIS link: element m gets
/// `−∠a_R(incident)_m + ∠θ̂̃_m`, where θ̂̃ is the dominant left singular
/// vector of the region's steering dictionary. Every Θ entry is
/// unit-modulus by construction.
pub fn design_phases(
    region: &AngularRegion,
    m_ris: usize,
    incident: (f64, f64),
) -> Result<RisPhase> {
    let dict = build_dictionary(region, m_ris)?;
    let theta_tilde = dominant_left_singular(&dict)?;
    let a_in = steering_ura(incident.0, incident.1, m_ris)?;
    let shifts = (0..m_ris)
        .map(|m| -a_in[m].arg() + theta_tilde[m].arg())
        .collect();
    Ok(RisPhase { shifts })
}

/// Reflection gain `√M · |a_Rᴴ(f₂,v₂) Θ a_R(f₁,v₁)|` of a phase profile
/// between an incident and a departing direction, using unit-norm
/// steering vectors. A perfectly aligned profile reaches `√M`.
pub fn reflection_gain(
    phases: &RisPhase,
    m_ris: usize,
    incident: (f64, f64),
    departure: (f64, f64),
) -> Result<f64> {
    let a1 = steering_ura(incident.0, incident.1, m_ris)?;
    let a2 = steering_ura(departure.0, departure.1, m_ris)?;
    let theta = phases.diagonal();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..m_ris {
        acc += a2[m].conj() * theta[m] * a1[m];
    }
    Ok((m_ris as f64).sqrt() * acc.norm())
}
