//! URA steering vectors, per-subcarrier link channels, and assembly of the
//! effective BS–UE channel, in both the cascaded (per-link) and the
//! collapsed (parametric) forms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{elevation_azimuth, ChannelParams, Position3, PositionParams};
use crate::scenario::{ura_side, OfdmConfig, Scenario};

/// Diagonal phase configuration of one RIS: entry m is `e^{iθ_m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhase {
    pub shifts: Vec<f64>,
}

impl RisPhase {
    pub fn zeros(n_ris: usize) -> Self {
        Self { shifts: vec![0.0; n_ris] }
    }

    /// Unit-modulus diagonal entries of Θ.
    pub fn diagonal(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.shifts.len(),
            self.shifts.iter().map(|&t| Complex64::from_polar(1.0, t)),
        )
    }
}

/// 1-D steering factor of a URA axis: `n^{-1/4}·[1, e^{iπc}, …, e^{iπc(√n−1)}]`.
pub fn steering_factor(cosine: f64, n_elems: usize) -> Result<DVector<Complex64>> {
    let side = ura_side(n_elems)?;
    let scale = (n_elems as f64).powf(-0.25);
    Ok(DVector::from_iterator(
        side,
        (0..side).map(|m| Complex64::from_polar(scale, std::f64::consts::PI * cosine * m as f64)),
    ))
}

/// Element-index derivative of [`steering_factor`] with respect to its
/// cosine: entry m is `iπm` times the factor entry.
pub fn steering_factor_derivative(cosine: f64, n_elems: usize) -> Result<DVector<Complex64>> {
    let a = steering_factor(cosine, n_elems)?;
    Ok(DVector::from_iterator(
        a.len(),
        a.iter()
            .enumerate()
            .map(|(m, &e)| Complex64::new(0.0, std::f64::consts::PI * m as f64) * e),
    ))
}

fn kron(a: &DVector<Complex64>, b: &DVector<Complex64>) -> DVector<Complex64> {
    let mut out = DVector::zeros(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[i * b.len() + j] = a[i] * b[j];
        }
    }
    out
}

/// Unit-norm URA response `a(c1, c2) = a~(c1) ⊗ a~(c2)` of length `n_elems`.
pub fn steering_ura(c1: f64, c2: f64, n_elems: usize) -> Result<DVector<Complex64>> {
    Ok(kron(&steering_factor(c1, n_elems)?, &steering_factor(c2, n_elems)?))
}

/// Derivative of [`steering_ura`] with respect to the first cosine.
pub fn steering_ura_d1(c1: f64, c2: f64, n_elems: usize) -> Result<DVector<Complex64>> {
    Ok(kron(&steering_factor_derivative(c1, n_elems)?, &steering_factor(c2, n_elems)?))
}

/// Derivative of [`steering_ura`] with respect to the second cosine.
pub fn steering_ura_d2(c1: f64, c2: f64, n_elems: usize) -> Result<DVector<Complex64>> {
    Ok(kron(&steering_factor(c1, n_elems)?, &steering_factor_derivative(c2, n_elems)?))
}

/// Per-subcarrier delay response: entry k is `e^{−i2π(kW/K)τ}`.
pub fn delay_vector(tau: f64, ofdm: &OfdmConfig) -> DVector<Complex64> {
    let k = ofdm.n_subcarriers;
    let step = ofdm.bandwidth_hz / k as f64;
    DVector::from_iterator(
        k,
        (0..k).map(|i| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * i as f64 * step * tau)),
    )
}

/// Delay phase of subcarrier k, `e^{−i2π(kW/K)τ}`.
pub fn delay_phase(tau: f64, ofdm: &OfdmConfig, k: usize) -> Complex64 {
    let step = ofdm.bandwidth_hz / ofdm.n_subcarriers as f64;
    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 * step * tau)
}

/// Fraction of direct-link power in the deterministic LOS component,
/// `K_d/(1+K_d)`, with the `K_d → ∞` limit handled.
pub fn rician_los_fraction(rician_k: f64) -> f64 {
    if rician_k.is_infinite() {
        1.0
    } else {
        rician_k / (1.0 + rician_k)
    }
}

/// Per-entry variance of the scattered direct-link component, `β_d/(1+K_d)`.
pub fn rician_scatter_variance(rician_k: f64, beta_d: f64) -> f64 {
    if rician_k.is_infinite() {
        0.0
    } else {
        beta_d / (1.0 + rician_k)
    }
}

/// Unit-scale complex coefficients of each physical link, drawn per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCoefficients {
    pub alpha_direct: Complex64,
    pub alpha_bs_ris: Vec<Complex64>,
    pub alpha_ris_ue: Vec<Complex64>,
}

impl PathCoefficients {
    /// All-ones coefficients, useful as a deterministic reference.
    pub fn unit(num_ris: usize) -> Self {
        Self {
            alpha_direct: Complex64::new(1.0, 0.0),
            alpha_bs_ris: vec![Complex64::new(1.0, 0.0); num_ris],
            alpha_ris_ue: vec![Complex64::new(1.0, 0.0); num_ris],
        }
    }
}

/// BS→RIS channel of path q on subcarrier k:
/// `G_{k,q} = h_{R1,q} e^{−i2πkWτ_{r1,q}/K} a_R a_Bᴴ` (M×N, rank 1).
pub fn channel_bs_ris(
    scenario: &Scenario,
    q: usize,
    alpha: Complex64,
    k: usize,
) -> Result<DMatrix<Complex64>> {
    let link = scenario.bs_ris_link(q)?;
    let beta = scenario.path_loss(link.distance, scenario.loss_exp_reflect);
    let h = alpha * (beta * (scenario.arrays.n_ris * scenario.arrays.n_bs) as f64).sqrt();
    let a_r = steering_ura(link.f_ris, link.v_ris, scenario.arrays.n_ris)?;
    let a_b = steering_ura(link.g_bs, link.v_bs, scenario.arrays.n_bs)?;
    let phase = delay_phase(link.delay, &scenario.ofdm, k);
    Ok((a_r * a_b.adjoint()).map(|x| x * h * phase))
}

/// RIS→UE channel of path q on subcarrier k:
/// `H_{r,k,q} = h_{R2,q} e^{−i2πkWτ_{r2,q}/K} a_U a_Rᴴ` (D×M, rank 1).
pub fn channel_ris_ue(
    scenario: &Scenario,
    q: usize,
    p_ue: &Position3,
    alpha: Complex64,
    k: usize,
) -> Result<DMatrix<Complex64>> {
    let d_vec = p_ue - scenario.ris_positions[q];
    let distance = d_vec.norm();
    if distance < 1e-12 {
        return Err(Error::DegenerateGeometry("UE coincides with RIS".into()));
    }
    let beta = scenario.path_loss(distance, scenario.loss_exp_reflect);
    let h = alpha * (beta * (scenario.arrays.n_ris * scenario.arrays.n_ue) as f64).sqrt();
    let (f_r2, v_r2) = scenario.ris_ue_departure(q, p_ue)?;
    let ue = scenario.rotation.reduced() * (d_vec / distance);
    let a_u = steering_ura(ue[0], ue[1], scenario.arrays.n_ue)?;
    let a_r = steering_ura(f_r2, v_r2, scenario.arrays.n_ris)?;
    let tau = distance / crate::geometry::SPEED_OF_LIGHT;
    let phase = delay_phase(tau, &scenario.ofdm, k);
    Ok((a_u * a_r.adjoint()).map(|x| x * h * phase))
}

/// Deterministic (LOS) component of the BS→UE Rician channel on
/// subcarrier k (D×N, rank 1).
pub fn channel_bs_ue_mean(
    scenario: &Scenario,
    p_ue: &Position3,
    alpha: Complex64,
    k: usize,
) -> Result<DMatrix<Complex64>> {
    let distance = p_ue.norm();
    if distance < 1e-12 {
        return Err(Error::DegenerateGeometry("UE coincides with BS".into()));
    }
    let beta = scenario.path_loss(distance, scenario.loss_exp_direct);
    let h = alpha
        * (rician_los_fraction(scenario.rician_k)
            * beta
            * (scenario.arrays.n_bs * scenario.arrays.n_ue) as f64)
            .sqrt();
    let (theta, phi) = elevation_azimuth(p_ue)?;
    let g_b = theta.sin() * phi.sin();
    let v_b = theta.cos();
    let ue = scenario.rotation.reduced() * (p_ue / distance);
    let a_u = steering_ura(ue[0], ue[1], scenario.arrays.n_ue)?;
    let a_b = steering_ura(g_b, v_b, scenario.arrays.n_bs)?;
    let tau = distance / crate::geometry::SPEED_OF_LIGHT;
    let phase = delay_phase(tau, &scenario.ofdm, k);
    Ok((a_u * a_b.adjoint()).map(|x| x * h * phase))
}

/// Lumped complex gains `(h_d, {h_{r,q}})` of the direct and reflection
/// paths, with the reflection gain collapsed through the RIS:
/// `h_{r,q} = h_{R1,q} h_{R2,q} a_Rᴴ(f_{R2},v_{R2}) Θ_q a_R(f_{R1},v_{R1})`.
pub fn link_budget(
    scenario: &Scenario,
    p_ue: &Position3,
    coeffs: &PathCoefficients,
    phases: &[RisPhase],
) -> Result<(Complex64, Vec<Complex64>)> {
    if phases.len() != scenario.num_ris() || coeffs.alpha_bs_ris.len() != scenario.num_ris() {
        return Err(Error::DimensionMismatch("one phase configuration per RIS".into()));
    }
    let d_direct = p_ue.norm();
    let beta_d = scenario.path_loss(d_direct, scenario.loss_exp_direct);
    let h_d = coeffs.alpha_direct
        * (rician_los_fraction(scenario.rician_k)
            * beta_d
            * (scenario.arrays.n_bs * scenario.arrays.n_ue) as f64)
            .sqrt();

    let mut h_r = Vec::with_capacity(scenario.num_ris());
    for q in 0..scenario.num_ris() {
        let link = scenario.bs_ris_link(q)?;
        let beta_r1 = scenario.path_loss(link.distance, scenario.loss_exp_reflect);
        let h_r1 = coeffs.alpha_bs_ris[q]
            * (beta_r1 * (scenario.arrays.n_ris * scenario.arrays.n_bs) as f64).sqrt();
        let d2 = (p_ue - scenario.ris_positions[q]).norm();
        let beta_r2 = scenario.path_loss(d2, scenario.loss_exp_reflect);
        let h_r2 = coeffs.alpha_ris_ue[q]
            * (beta_r2 * (scenario.arrays.n_ris * scenario.arrays.n_ue) as f64).sqrt();
        let (f_r2, v_r2) = scenario.ris_ue_departure(q, p_ue)?;
        let a_out = steering_ura(f_r2, v_r2, scenario.arrays.n_ris)?;
        let a_in = steering_ura(link.f_ris, link.v_ris, scenario.arrays.n_ris)?;
        let theta = phases[q].diagonal();
        let coupling: Complex64 = a_out
            .iter()
            .zip(theta.iter())
            .zip(a_in.iter())
            .map(|((o, t), i)| o.conj() * t * i)
            .sum();
        h_r.push(h_r1 * h_r2 * coupling);
    }
    Ok((h_d, h_r))
}

/// Channel parameters η for a UE at `p_ue` with the given per-trial link
/// coefficients and RIS phases: the link budget supplies the gains and the
/// forward map supplies delays and angles.
pub fn synthesize_params(
    scenario: &Scenario,
    p_ue: &Position3,
    coeffs: &PathCoefficients,
    phases: &[RisPhase],
) -> Result<ChannelParams> {
    let (h_d, h_r) = link_budget(scenario, p_ue, coeffs, phases)?;
    let xi = PositionParams {
        ue_position: *p_ue,
        direct_gain: h_d,
        reflection_gains: h_r,
    };
    crate::geometry::forward_map(&xi, scenario)
}

/// Effective noiseless channel `H̄_k` in the collapsed parametric form,
/// built from η plus the known BS-side reflection geometry:
/// `H̄_k = h_d e^{−iφ_k(τ_d)} a_U a_Bᴴ + Σ_q h_{r,q} e^{−iφ_k(τ_{r1,q}+τ_{r2,q})} a_U a_Bᴴ`.
pub fn effective_channel(
    eta: &ChannelParams,
    scenario: &Scenario,
    k: usize,
) -> Result<DMatrix<Complex64>> {
    if eta.num_reflections() != scenario.num_ris() {
        return Err(Error::DimensionMismatch(format!(
            "η has {} reflection paths for {} RIS",
            eta.num_reflections(),
            scenario.num_ris()
        )));
    }
    let d = eta.direct;
    let a_u = steering_ura(d.g_ue, d.v_ue, scenario.arrays.n_ue)?;
    let a_b = steering_ura(d.g_bs, d.v_bs, scenario.arrays.n_bs)?;
    let scale = d.gain * delay_phase(d.delay, &scenario.ofdm, k);
    let mut h = (a_u * a_b.adjoint()).map(|x| x * scale);

    for (q, r) in eta.reflections.iter().enumerate() {
        let link = scenario.bs_ris_link(q)?;
        let a_u = steering_ura(r.g_ue, r.v_ue, scenario.arrays.n_ue)?;
        let a_b = steering_ura(link.g_bs, link.v_bs, scenario.arrays.n_bs)?;
        let scale = r.gain * delay_phase(link.delay + r.delay, &scenario.ofdm, k);
        h += (a_u * a_b.adjoint()).map(|x| x * scale);
    }
    Ok(h)
}

/// Effective noiseless channel built by cascading the three link matrices:
/// `H̄_k = H̄_{d,k} + Σ_q H_{r,k,q} Θ_q G_{k,q}`.
pub fn effective_channel_cascade(
    scenario: &Scenario,
    p_ue: &Position3,
    coeffs: &PathCoefficients,
    phases: &[RisPhase],
    k: usize,
) -> Result<DMatrix<Complex64>> {
    let mut h = channel_bs_ue_mean(scenario, p_ue, coeffs.alpha_direct, k)?;
    for q in 0..scenario.num_ris() {
        let h_ru = channel_ris_ue(scenario, q, p_ue, coeffs.alpha_ris_ue[q], k)?;
        let g = channel_bs_ris(scenario, q, coeffs.alpha_bs_ris[q], k)?;
        let theta = phases[q].diagonal();
        // H_{r,k,q} Θ_q G_{k,q} with Θ diagonal applied columnwise.
        let mut scaled = g;
        for (m, t) in theta.iter().enumerate() {
            for n in 0..scaled.ncols() {
                scaled[(m, n)] *= t;
            }
        }
        h += h_ru * scaled;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn second_singular_ratio(m: &DMatrix<Complex64>) -> f64 {
        let svd = m.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv[1] / sv[0]
    }

    #[test]
    fn steering_zero_cosines_is_flat() {
        let a = steering_ura(0.0, 0.0, 100).unwrap();
        for e in a.iter() {
            assert_relative_eq!(e.re, 0.1, epsilon = 1e-14);
            assert_relative_eq!(e.im, 0.0, epsilon = 1e-14);
        }
        assert_relative_eq!(a.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_alternating_signs_n4() {
        // Factor(1) = [1, -1]/sqrt(2), factor(0) = [1, 1]/sqrt(2); the
        // Kronecker product is [1, 1, -1, -1]/2.
        let a = steering_ura(1.0, 0.0, 4).unwrap();
        let expect = [0.5, 0.5, -0.5, -0.5];
        for (e, x) in a.iter().zip(expect) {
            assert_relative_eq!(e.re, x, epsilon = 1e-14);
            assert!(e.im.abs() < 1e-14);
        }
    }

    #[test]
    fn steering_rejects_non_square() {
        assert!(matches!(steering_ura(0.1, 0.2, 10), Err(Error::NotPerfectSquare(10))));
    }

    #[test]
    fn delay_vector_trivial_cases() {
        let ofdm = OfdmConfig { bandwidth_hz: 100e6, n_subcarriers: 32, carrier_hz: 30e9 };
        let v0 = delay_vector(0.0, &ofdm);
        let v_alias = delay_vector(ofdm.n_subcarriers as f64 / ofdm.bandwidth_hz, &ofdm);
        for k in 0..32 {
            assert_relative_eq!(v0[k].re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(v_alias[k].re, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn link_channels_are_rank_one_with_gain_norm() {
        let s = Scenario::table_i();
        let alpha = Complex64::from_polar(1.0, 0.7);
        let g = channel_bs_ris(&s, 0, alpha, 3).unwrap();
        assert!(second_singular_ratio(&g) < 1e-10);
        let link = s.bs_ris_link(0).unwrap();
        let beta = s.path_loss(link.distance, s.loss_exp_reflect);
        let h_mag = (beta * (s.arrays.n_ris * s.arrays.n_bs) as f64).sqrt();
        assert_relative_eq!(g.norm(), h_mag, max_relative = 1e-10);

        let p_ue = Vector3::new(50.0, 10.0, 20.0);
        let h_ru = channel_ris_ue(&s, 0, &p_ue, alpha, 0).unwrap();
        assert!(second_singular_ratio(&h_ru) < 1e-10);

        let h_d = channel_bs_ue_mean(&s, &p_ue, alpha, 5).unwrap();
        assert!(second_singular_ratio(&h_d) < 1e-10);
    }

    #[test]
    fn rician_limits() {
        let mut s = Scenario::table_i();
        let p_ue = Vector3::new(50.0, 10.0, 20.0);
        s.rician_k = 0.0;
        let h = channel_bs_ue_mean(&s, &p_ue, Complex64::new(1.0, 0.0), 0).unwrap();
        assert_relative_eq!(h.norm(), 0.0, epsilon = 1e-30);
        s.rician_k = f64::INFINITY;
        let h = channel_bs_ue_mean(&s, &p_ue, Complex64::new(1.0, 0.0), 0).unwrap();
        let beta = s.path_loss(p_ue.norm(), s.loss_exp_direct);
        assert_relative_eq!(
            h.norm(),
            (beta * (s.arrays.n_bs * s.arrays.n_ue) as f64).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn no_reflections_reduces_to_direct() {
        let mut s = Scenario::table_i();
        s.ris_positions.clear();
        let p_ue = Vector3::new(50.0, 10.0, 20.0);
        let coeffs = PathCoefficients::unit(0);
        let eta = synthesize_params(&s, &p_ue, &coeffs, &[]).unwrap();
        let collapsed = effective_channel(&eta, &s, 4).unwrap();
        let direct = channel_bs_ue_mean(&s, &p_ue, coeffs.alpha_direct, 4).unwrap();
        assert_relative_eq!((collapsed - direct).norm(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn cascade_matches_collapsed_form() {
        let s = Scenario::table_i();
        let p_ue = Vector3::new(50.0, 10.0, 20.0);
        let coeffs = PathCoefficients {
            alpha_direct: Complex64::from_polar(1.0, 0.3),
            alpha_bs_ris: vec![Complex64::from_polar(1.0, -1.2)],
            alpha_ris_ue: vec![Complex64::from_polar(1.0, 2.4)],
        };
        let phases = vec![RisPhase {
            shifts: (0..400).map(|m| (m as f64 * 0.37).sin()).collect(),
        }];
        let eta = synthesize_params(&s, &p_ue, &coeffs, &phases).unwrap();
        for k in [0, 7, 31] {
            let cascade = effective_channel_cascade(&s, &p_ue, &coeffs, &phases, k).unwrap();
            let collapsed = effective_channel(&eta, &s, k).unwrap();
            let rel = (&cascade - &collapsed).norm() / cascade.norm();
            assert!(rel < 1e-10, "relative error {rel:.3e} at k = {k}");
        }
    }

    #[test]
    fn effective_rank_is_paths_plus_one() {
        let s = Scenario::table_i();
        let p_ue = Vector3::new(50.0, 10.0, 20.0);
        let coeffs = PathCoefficients::unit(1);
        let phases = vec![RisPhase::zeros(400)];
        let eta = synthesize_params(&s, &p_ue, &coeffs, &phases).unwrap();
        let h = effective_channel(&eta, &s, 2).unwrap();
        let svd = h.svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[1] / sv[0] > 1e-6, "two independent paths expected");
        assert!(sv[2] / sv[0] < 1e-10, "rank must not exceed Q+1");
    }

    proptest! {
        #[test]
        fn steering_is_unit_norm(g in -1.0f64..1.0, v in -1.0f64..1.0) {
            let a = steering_ura(g, v, 64).unwrap();
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn delay_entries_unit_modulus(tau in 0.0f64..3e-7) {
            let ofdm = OfdmConfig { bandwidth_hz: 100e6, n_subcarriers: 32, carrier_hz: 30e9 };
            let v = delay_vector(tau, &ofdm);
            for e in v.iter() {
                prop_assert!((e.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
