//! Observation synthesis — the effective noise model, per-subcarrier
//! observation matrices, the raw pilot-slot simulation path — and the
//! reshapes that expose each parameter axis to subspace estimators.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{effective_channel, rician_scatter_variance};
use crate::error::{Error, Result};
use crate::geometry::{ChannelParams, SPEED_OF_LIGHT};
use crate::scenario::{ura_side, Scenario};

/// Thermal noise power σ² at the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma2: f64,
}

impl NoiseModel {
    /// From the SNR-style figure `1/σ²` in dB; `σ² = 10^{−x/10}`.
    pub fn from_inv_sigma2_db(inv_sigma2_db: f64) -> Self {
        Self { sigma2: 10f64.powf(-inv_sigma2_db / 10.0) }
    }

    pub fn noiseless() -> Self {
        Self { sigma2: 0.0 }
    }

    /// Per-entry variance of the effective observation noise after pilot
    /// averaging, `σ̃² = (D/T)σ² + β_d/(1+K_d)`: thermal noise reduced by
    /// the T/D pilot gain plus the scattered direct-link component.
    pub fn effective_variance(&self, scenario: &Scenario, beta_direct: f64) -> f64 {
        let pilot = scenario.arrays.n_ue as f64 / scenario.t_slots as f64;
        pilot * self.sigma2 + rician_scatter_variance(scenario.rician_k, beta_direct)
    }
}

/// Direct-link large-scale gain β_d implied by the direct delay in η.
pub fn beta_direct_from_eta(eta: &ChannelParams, scenario: &Scenario) -> f64 {
    scenario.path_loss(SPEED_OF_LIGHT * eta.direct.delay, scenario.loss_exp_direct)
}

/// Per-subcarrier observations `R̃_k = H̄_k + Ñ_k` (K matrices of D×N) and
/// the per-entry variance of Ñ_k.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub matrices: Vec<DMatrix<Complex64>>,
    pub noise_var: f64,
}

impl ObservationSet {
    pub fn n_subcarriers(&self) -> usize {
        self.matrices.len()
    }
}

fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, var: f64, rng: &mut R) -> DMatrix<Complex64> {
    let s = (var / 2.0).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(
            s * rng.sample::<f64, _>(StandardNormal),
            s * rng.sample::<f64, _>(StandardNormal),
        )
    })
}

/// Simulate post-averaging observations directly: `R̃_k = H̄_k + Ñ_k` with
/// i.i.d. `CN(0, σ̃²)` entries. With σ = 0 and `K_d = ∞` the observations
/// are exact.
pub fn simulate_observations<R: Rng>(
    eta: &ChannelParams,
    scenario: &Scenario,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<ObservationSet> {
    let var = noise.effective_variance(scenario, beta_direct_from_eta(eta, scenario));
    let mut matrices = Vec::with_capacity(scenario.ofdm.n_subcarriers);
    for k in 0..scenario.ofdm.n_subcarriers {
        let mut h = effective_channel(eta, scenario, k)?;
        if var > 0.0 {
            h += gaussian_matrix(h.nrows(), h.ncols(), var, rng);
        }
        matrices.push(h);
    }
    Ok(ObservationSet { matrices, noise_var: var })
}

/// Simulate the raw pilot phase over `t_slots` slots and average:
/// `Y_k = (H̄_k + S_k) X + N_k`, `R̃_k = (D/T) Y_k Xᴴ`, with a unitary-row
/// DFT pilot `X` (D×T, `XXᴴ = (T/D) I`) and `S_k` the scattered direct-link
/// component. The recovered `R̃_k` obeys the same effective noise model as
/// [`simulate_observations`].
pub fn simulate_raw<R: Rng>(
    eta: &ChannelParams,
    scenario: &Scenario,
    noise: &NoiseModel,
    t_slots: usize,
    rng: &mut R,
) -> Result<ObservationSet> {
    let d = scenario.arrays.n_ue;
    if t_slots < d {
        return Err(Error::InvalidPilot { t_slots, n_ue: d });
    }
    let pilot = dft_pilot(d, t_slots);
    let scale = d as f64 / t_slots as f64;
    // The scattered component scales the same way as in the averaged model
    // but the pilot gain applies only to thermal noise, so σ̃² here uses the
    // actual slot count.
    let beta_d = beta_direct_from_eta(eta, scenario);
    let scatter_var = rician_scatter_variance(scenario.rician_k, beta_d);

    let mut matrices = Vec::with_capacity(scenario.ofdm.n_subcarriers);
    let mut noise_var = 0.0;
    for k in 0..scenario.ofdm.n_subcarriers {
        let mut h = effective_channel(eta, scenario, k)?;
        if scatter_var > 0.0 {
            h += gaussian_matrix(h.nrows(), h.ncols(), scatter_var, rng);
        }
        // Uplink pilots: the UE transmits X (D×T), the BS receives
        // Y_k = H̄_kᵀ X + N_k; the transposed correlation recovers H̄_k.
        let mut y = h.transpose() * &pilot;
        if noise.sigma2 > 0.0 {
            y += gaussian_matrix(y.nrows(), t_slots, noise.sigma2, rng);
        }
        let r = (y * pilot.adjoint()).transpose().map(|x| x * scale);
        matrices.push(r);
        noise_var = scale * noise.sigma2 + scatter_var;
    }
    Ok(ObservationSet { matrices, noise_var })
}

/// D×T pilot with orthogonal rows, `XXᴴ = (T/D) I`: truncated DFT,
/// `X[d,t] = D^{-1/2} e^{−i2πdt/T}`.
pub fn dft_pilot(n_ue: usize, t_slots: usize) -> DMatrix<Complex64> {
    let scale = (n_ue as f64).powf(-0.5);
    DMatrix::from_fn(n_ue, t_slots, |d, t| {
        Complex64::from_polar(
            scale,
            -2.0 * std::f64::consts::PI * (d as f64) * (t as f64) / t_slots as f64,
        )
    })
}

/// Which URA axis a reshape exposes: the first (G-type) or second (V-type)
/// Kronecker factor of the steering vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    G,
    V,
}

/// BS-side reshape: √N rows indexed along the chosen BS axis; every column
/// of the result lies (noise aside) in the span of the unconjugated BS
/// steering factors, which the conjugation of the entries guarantees.
pub fn reshape_bs(obs: &ObservationSet, scenario: &Scenario, axis: Axis) -> Result<DMatrix<Complex64>> {
    let side = ura_side(scenario.arrays.n_bs)?;
    let d = scenario.arrays.n_ue;
    let k_sub = obs.n_subcarriers();
    let mut out = DMatrix::zeros(side, side * d * k_sub);
    for (k, r) in obs.matrices.iter().enumerate() {
        if r.nrows() != d || r.ncols() != scenario.arrays.n_bs {
            return Err(Error::DimensionMismatch("observation matrix is not D x N".into()));
        }
        for dd in 0..d {
            for i in 0..side {
                for j in 0..side {
                    let n = match axis {
                        Axis::G => i * side + j,
                        Axis::V => j * side + i,
                    };
                    out[(i, (k * d + dd) * side + j)] = r[(dd, n)].conj();
                }
            }
        }
    }
    Ok(out)
}

/// UE-side reshape: √D rows indexed along the chosen UE axis; columns lie
/// in the span of the UE steering factors (no conjugation needed since the
/// UE vector enters the channel unconjugated).
pub fn reshape_ue(obs: &ObservationSet, scenario: &Scenario, axis: Axis) -> Result<DMatrix<Complex64>> {
    let side = ura_side(scenario.arrays.n_ue)?;
    let n_bs = scenario.arrays.n_bs;
    let k_sub = obs.n_subcarriers();
    let mut out = DMatrix::zeros(side, side * n_bs * k_sub);
    for (k, r) in obs.matrices.iter().enumerate() {
        for n in 0..n_bs {
            for i in 0..side {
                for j in 0..side {
                    let dd = match axis {
                        Axis::G => i * side + j,
                        Axis::V => j * side + i,
                    };
                    out[(i, (k * n_bs + n) * side + j)] = r[(dd, n)];
                }
            }
        }
    }
    Ok(out)
}

/// Delay reshape: K rows indexed by subcarrier, one column per antenna
/// pair; columns lie in the span of the per-path delay vectors.
pub fn reshape_delay(obs: &ObservationSet, scenario: &Scenario) -> Result<DMatrix<Complex64>> {
    let d = scenario.arrays.n_ue;
    let n = scenario.arrays.n_bs;
    let k_sub = obs.n_subcarriers();
    let mut out = DMatrix::zeros(k_sub, d * n);
    for (k, r) in obs.matrices.iter().enumerate() {
        if r.nrows() != d || r.ncols() != n {
            return Err(Error::DimensionMismatch("observation matrix is not D x N".into()));
        }
        for dd in 0..d {
            for nn in 0..n {
                out[(k, dd * n + nn)] = r[(dd, nn)];
            }
        }
    }
    Ok(out)
}
