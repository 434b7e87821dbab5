//! Fisher information of the channel parameters, the Jacobian of the
//! forward map, and the resulting position-error bounds — both for the
//! full parameter vector and per propagation path.
//!
//! Every derivative of the effective channel with respect to a channel
//! parameter is rank one, so the information matrix is accumulated from
//! (left, right) vector pairs: if `∂H̄_k/∂η_i = l_i r_iᴴ` then
//! `[F_η]_{ij} = (2/σ̃²) Σ_k Re{(l_iᴴ l_j)(r_jᴴ r_i)}`.

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;

use crate::channel::{delay_phase, steering_ura, steering_ura_d1, steering_ura_d2};
use crate::error::{Error, Result};
use crate::geometry::{forward_map, ChannelParams, PositionParams, SPEED_OF_LIGHT};
use crate::scenario::Scenario;

/// One rank-1 channel derivative, `∂H̄_k/∂η_i = left · rightᴴ`.
pub struct Rank1 {
    pub left: DVector<Complex64>,
    pub right: DVector<Complex64>,
}

/// Angular frequency step per subcarrier index, `2πW/K`, times k.
fn omega_k(scenario: &Scenario, k: usize) -> f64 {
    2.0 * std::f64::consts::PI * k as f64 * scenario.ofdm.bandwidth_hz
        / scenario.ofdm.n_subcarriers as f64
}

/// Rank-1 derivative pairs of `H̄_k` with respect to every entry of η, in
/// the canonical parameter order.
pub fn derivative_pairs(
    eta: &ChannelParams,
    scenario: &Scenario,
    k: usize,
) -> Result<Vec<Rank1>> {
    let d_ue = scenario.arrays.n_ue;
    let n_bs = scenario.arrays.n_bs;
    let mut pairs = Vec::with_capacity(eta.dim());
    let w = omega_k(scenario, k);

    let d = eta.direct;
    let a_u = steering_ura(d.g_ue, d.v_ue, d_ue)?;
    let da_u_g = steering_ura_d1(d.g_ue, d.v_ue, d_ue)?;
    let da_u_v = steering_ura_d2(d.g_ue, d.v_ue, d_ue)?;
    let a_b = steering_ura(d.g_bs, d.v_bs, n_bs)?;
    let da_b_g = steering_ura_d1(d.g_bs, d.v_bs, n_bs)?;
    let da_b_v = steering_ura_d2(d.g_bs, d.v_bs, n_bs)?;
    let phi = delay_phase(d.delay, &scenario.ofdm, k);
    let hphi = d.gain * phi;

    pairs.push(Rank1 { left: a_u.map(|x| x * phi), right: a_b.clone() }); // Re h_d
    pairs.push(Rank1 {
        left: a_u.map(|x| x * phi * Complex64::i()),
        right: a_b.clone(),
    }); // Im h_d
    let dtau = hphi * Complex64::new(0.0, -w);
    pairs.push(Rank1 { left: a_u.map(|x| x * dtau), right: a_b.clone() }); // τ_d
    pairs.push(Rank1 { left: da_u_g.map(|x| x * hphi), right: a_b.clone() }); // g_Ud
    pairs.push(Rank1 { left: da_u_v.map(|x| x * hphi), right: a_b.clone() }); // v_Ud
    pairs.push(Rank1 { left: a_u.map(|x| x * hphi), right: da_b_g }); // g_Bd
    pairs.push(Rank1 { left: a_u.map(|x| x * hphi), right: da_b_v }); // v_Bd

    for (q, r) in eta.reflections.iter().enumerate() {
        let link = scenario.bs_ris_link(q)?;
        let a_u = steering_ura(r.g_ue, r.v_ue, d_ue)?;
        let da_u_g = steering_ura_d1(r.g_ue, r.v_ue, d_ue)?;
        let da_u_v = steering_ura_d2(r.g_ue, r.v_ue, d_ue)?;
        let a_b = steering_ura(link.g_bs, link.v_bs, n_bs)?;
        let phi = delay_phase(link.delay + r.delay, &scenario.ofdm, k);
        let hphi = r.gain * phi;

        pairs.push(Rank1 { left: a_u.map(|x| x * phi), right: a_b.clone() }); // Re h_rq
        pairs.push(Rank1 {
            left: a_u.map(|x| x * phi * Complex64::i()),
            right: a_b.clone(),
        }); // Im h_rq
        let dtau = hphi * Complex64::new(0.0, -w);
        pairs.push(Rank1 { left: a_u.map(|x| x * dtau), right: a_b.clone() }); // τ_r2,q
        pairs.push(Rank1 { left: da_u_g.map(|x| x * hphi), right: a_b.clone() }); // g_Ur,q
        pairs.push(Rank1 { left: da_u_v.map(|x| x * hphi), right: a_b }); // v_Ur,q
    }
    Ok(pairs)
}

/// Fisher information of η under i.i.d. `CN(0, σ̃²)` observation noise,
/// summed over subcarriers.
pub fn fim_eta(eta: &ChannelParams, scenario: &Scenario, noise_var: f64) -> Result<DMatrix<f64>> {
    if !(noise_var > 0.0) {
        return Err(Error::Config("Fisher information needs a positive noise variance".into()));
    }
    let dim = eta.dim();
    let mut f = DMatrix::zeros(dim, dim);
    for k in 0..scenario.ofdm.n_subcarriers {
        let pairs = derivative_pairs(eta, scenario, k)?;
        for i in 0..dim {
            for j in i..dim {
                let ll = pairs[i].left.dotc(&pairs[j].left);
                let rr = pairs[j].right.dotc(&pairs[i].right);
                f[(i, j)] += (ll * rr).re;
            }
        }
    }
    let scale = 2.0 / noise_var;
    for i in 0..dim {
        for j in i..dim {
            f[(i, j)] *= scale;
            f[(j, i)] = f[(i, j)];
        }
    }
    Ok(f)
}

/// Jacobian `J = ∂η/∂ξ`, `(7+5Q)×(5+2Q)`, of the forward map. Rows follow
/// the channel-parameter order, columns the position-parameter order.
pub fn jacobian_forward_map(xi: &PositionParams, scenario: &Scenario) -> Result<DMatrix<f64>> {
    let nq = xi.num_reflections();
    if nq != scenario.num_ris() {
        return Err(Error::DimensionMismatch(format!(
            "{} reflection gains for {} RIS",
            nq,
            scenario.num_ris()
        )));
    }
    let mut j = DMatrix::zeros(7 + 5 * nq, 5 + 2 * nq);

    // Gains pass through the map unchanged.
    j[(0, 3)] = 1.0;
    j[(1, 4)] = 1.0;
    for q in 0..nq {
        j[(7 + 5 * q, 5 + 2 * q)] = 1.0;
        j[(8 + 5 * q, 6 + 2 * q)] = 1.0;
    }

    let m_r = scenario.rotation.reduced();
    let p = xi.ue_position;
    let dist = p.norm();
    if dist < 1e-12 {
        return Err(Error::DegenerateGeometry("UE at the BS origin".into()));
    }
    let u = p / dist;
    // d(unit direction)/dp = (I − uuᵀ)/‖p‖.
    let proj = (Matrix3::identity() - u * u.transpose()) / dist;

    for c in 0..3 {
        j[(2, c)] = u[c] / SPEED_OF_LIGHT; // τ_d
    }
    let mp = m_r * proj; // UE-side cosine pair
    for c in 0..3 {
        j[(3, c)] = mp[(0, c)];
        j[(4, c)] = mp[(1, c)];
        // BS cosines are the y and z components of the unit direction.
        j[(5, c)] = proj[(1, c)];
        j[(6, c)] = proj[(2, c)];
    }

    for (q, p_ris) in scenario.ris_positions.iter().enumerate() {
        let d_vec = p - p_ris;
        let dist = d_vec.norm();
        if dist < 1e-12 {
            return Err(Error::DegenerateGeometry("UE at a RIS position".into()));
        }
        let u = d_vec / dist;
        let proj = (Matrix3::identity() - u * u.transpose()) / dist;
        let mp = m_r * proj;
        let row = 7 + 5 * q;
        for c in 0..3 {
            j[(row + 2, c)] = u[c] / SPEED_OF_LIGHT; // τ_r2,q
            j[(row + 3, c)] = mp[(0, c)]; // g_Ur,q
            j[(row + 4, c)] = mp[(1, c)]; // v_Ur,q
        }
    }
    Ok(j)
}

/// Symmetric inverse with a Tikhonov fallback: if plain inversion fails,
/// retry once with `ε = 1e-12·tr(M)` added to the diagonal.
pub(crate) fn invert_symmetric(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(inv) = m.clone().try_inverse() {
        if inv.iter().all(|x| x.is_finite()) {
            return Ok(inv);
        }
    }
    let eps = 1e-12 * m.trace();
    let mut reg = m.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += eps;
    }
    reg.try_inverse()
        .filter(|inv| inv.iter().all(|x| x.is_finite()))
        .ok_or(Error::SingularFim)
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Fisher information assembled in both parameter spaces for one UE.
#[derive(Debug, Clone)]
pub struct FisherInfo {
    /// Information over the channel parameters η.
    pub f_eta: DMatrix<f64>,
    /// Jacobian of the forward map at the evaluation point.
    pub jacobian: DMatrix<f64>,
    /// Information over the position parameters, `F_ξ = Jᵀ F_η J`.
    pub f_xi: DMatrix<f64>,
}

impl FisherInfo {
    /// Evaluate both information matrices at the true position parameters.
    pub fn new(xi: &PositionParams, scenario: &Scenario, noise_var: f64) -> Result<Self> {
        let eta = forward_map(xi, scenario)?;
        let f_eta = fim_eta(&eta, scenario, noise_var)?;
        let jacobian = jacobian_forward_map(xi, scenario)?;
        let f_xi = jacobian.transpose() * &f_eta * &jacobian;
        Ok(Self { f_eta, jacobian, f_xi })
    }

    /// Position-error bound: the 3×3 position block of `F_ξ⁻¹`.
    pub fn crb_position(&self) -> Result<Matrix3<f64>> {
        let inv = invert_symmetric(&self.f_xi)?;
        Ok(Matrix3::from_fn(|i, j| inv[(i, j)]))
    }

    /// Covariance lower bound over all of η, `F_η⁻¹`.
    pub fn eta_covariance(&self) -> Result<DMatrix<f64>> {
        invert_symmetric(&self.f_eta)
    }

    /// Channel-parameter indices of one path: the direct path owns the
    /// first seven entries, reflection q its five-entry block.
    pub fn path_rows(&self, path: usize) -> Vec<usize> {
        if path == 0 {
            (0..7).collect()
        } else {
            let o = 7 + 5 * (path - 1);
            (o..o + 5).collect()
        }
    }

    /// Position-parameter indices of one path: the UE position plus that
    /// path's own complex gain.
    pub fn path_cols(&self, path: usize) -> Vec<usize> {
        if path == 0 {
            vec![0, 1, 2, 3, 4]
        } else {
            vec![0, 1, 2, 5 + 2 * (path - 1), 6 + 2 * (path - 1)]
        }
    }

    pub fn num_paths(&self) -> usize {
        1 + (self.f_eta.nrows() - 7) / 5
    }

    /// Per-path position bounds. Path 0 is the direct path, path q ≥ 1 the
    /// q-th reflection. Each bound is the position block of the inverted
    /// per-path information `(J_pᵀ F_p J_p)⁻¹`, where `J_p` maps the path's
    /// own parameters (position + gain) to its channel-parameter block.
    ///
    /// The loose bound uses the diagonal information block `F_p` directly
    /// (paths treated as independent); the tight bound marginalizes over
    /// all other parameters by using `([F⁻¹]_p)⁻¹` instead. Tight
    /// dominates loose in the positive-semidefinite order.
    pub fn per_path_bounds(&self) -> Result<PerPathBounds> {
        let f_inv = invert_symmetric(&self.f_eta)?;
        let mut loose = Vec::new();
        let mut tight = Vec::new();
        for path in 0..self.num_paths() {
            let rows = self.path_rows(path);
            let cols = self.path_cols(path);
            let j_p = submatrix(&self.jacobian, &rows, &cols);

            let f_block = submatrix(&self.f_eta, &rows, &rows);
            let l = invert_symmetric(&(j_p.transpose() * &f_block * &j_p))?;
            loose.push(Matrix3::from_fn(|i, j| l[(i, j)]));

            let cov_block = submatrix(&f_inv, &rows, &rows);
            let info = invert_symmetric(&cov_block)?;
            let t = invert_symmetric(&(j_p.transpose() * info * &j_p))?;
            tight.push(Matrix3::from_fn(|i, j| t[(i, j)]));
        }
        Ok(PerPathBounds { loose, tight })
    }
}

/// Loose and tight position-error bounds per path; index 0 is the direct
/// path, index q the q-th reflection.
#[derive(Debug, Clone)]
pub struct PerPathBounds {
    pub loose: Vec<Matrix3<f64>>,
    pub tight: Vec<Matrix3<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{effective_channel, synthesize_params, PathCoefficients, RisPhase};
    use crate::signal::{beta_direct_from_eta, NoiseModel};
    use approx::assert_relative_eq;
    use nalgebra::{DVector, Vector3};

    fn setup() -> (Scenario, PositionParams, ChannelParams, f64) {
        let s = Scenario::table_i();
        let p_ue = Vector3::new(50.0, 10.0, 20.0);
        let coeffs = PathCoefficients {
            alpha_direct: Complex64::from_polar(1.0, 0.4),
            alpha_bs_ris: vec![Complex64::from_polar(1.0, -0.9)],
            alpha_ris_ue: vec![Complex64::from_polar(1.0, 1.7)],
        };
        let eta = synthesize_params(&s, &p_ue, &coeffs, &[RisPhase::zeros(400)]).unwrap();
        let xi = PositionParams {
            ue_position: p_ue,
            direct_gain: eta.direct.gain,
            reflection_gains: vec![eta.reflections[0].gain],
        };
        let noise = NoiseModel::from_inv_sigma2_db(100.0);
        let var = noise.effective_variance(&s, beta_direct_from_eta(&eta, &s));
        (s, xi, eta, var)
    }

    /// Central finite difference of H̄_k along one η coordinate.
    fn fd_channel_derivative(
        eta: &ChannelParams,
        s: &Scenario,
        k: usize,
        idx: usize,
        step: f64,
    ) -> DMatrix<Complex64> {
        let q = eta.num_reflections();
        let base = eta.to_vec();
        let mut plus = base.clone();
        plus[idx] += step;
        let mut minus = base;
        minus[idx] -= step;
        let hp = effective_channel(&ChannelParams::from_vec(&plus, q).unwrap(), s, k).unwrap();
        let hm = effective_channel(&ChannelParams::from_vec(&minus, q).unwrap(), s, k).unwrap();
        (hp - hm).map(|x| x / (2.0 * step))
    }

    #[test]
    fn channel_derivatives_match_finite_differences() {
        let (s, _, eta, _) = setup();
        for k in [1usize, 17, 31] {
            let pairs = derivative_pairs(&eta, &s, k).unwrap();
            for idx in 0..eta.dim() {
                // Delay coordinates oscillate at ~2e9 rad/s, so they need a
                // much smaller step than the O(1) angle and gain coordinates.
                let is_delay = idx == 2 || (idx >= 7 && (idx - 7) % 5 == 2);
                let step = if is_delay { 1e-12 } else { 1e-6 };
                let fd = fd_channel_derivative(&eta, &s, k, idx, step);
                let analytic = &pairs[idx].left * pairs[idx].right.adjoint();
                let denom = analytic.norm().max(fd.norm());
                let rel = (&analytic - &fd).norm() / denom;
                assert!(rel < 1e-6, "coordinate {idx} at k = {k}: relative error {rel:.3e}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (s, xi, _, _) = setup();
        let j = jacobian_forward_map(&xi, &s).unwrap();
        let base = xi.to_vec();
        let n_eta = 7 + 5 * xi.num_reflections();
        for col in 0..base.len() {
            // Positions are tens of meters, gains are O(1e-5); scale the
            // step to the coordinate.
            let step = if col < 3 { 1e-5 } else { 1e-9 };
            let mut plus = base.clone();
            plus[col] += step;
            let mut minus = base.clone();
            minus[col] -= step;
            let ep = forward_map(&PositionParams::from_vec(&plus, 1).unwrap(), &s)
                .unwrap()
                .to_vec();
            let em = forward_map(&PositionParams::from_vec(&minus, 1).unwrap(), &s)
                .unwrap()
                .to_vec();
            for row in 0..n_eta {
                let fd = (ep[row] - em[row]) / (2.0 * step);
                let scale = j[(row, col)].abs().max(fd.abs()).max(1e-12);
                assert!(
                    (j[(row, col)] - fd).abs() / scale < 1e-6,
                    "J[{row},{col}] = {} vs fd {}",
                    j[(row, col)],
                    fd
                );
            }
        }
    }

    #[test]
    fn fim_is_symmetric_and_psd() {
        let (s, _, eta, var) = setup();
        let f = fim_eta(&eta, &s, var).unwrap();
        assert_relative_eq!((&f - f.transpose()).norm(), 0.0, epsilon = 1e-12 * f.norm());
        let eig = f.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        for ev in eig.eigenvalues.iter() {
            assert!(*ev > -1e-12 * max, "eigenvalue {ev:.3e} of FIM is negative");
        }
    }

    #[test]
    fn fim_rejects_zero_noise() {
        let (s, _, eta, _) = setup();
        assert!(matches!(fim_eta(&eta, &s, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn crb_scales_with_noise() {
        let (s, xi, _, var) = setup();
        let c1 = FisherInfo::new(&xi, &s, var).unwrap().crb_position().unwrap();
        let c2 = FisherInfo::new(&xi, &s, 2.0 * var).unwrap().crb_position().unwrap();
        assert_relative_eq!(c2.trace(), 2.0 * c1.trace(), max_relative = 1e-9);
    }

    #[test]
    fn crb_position_is_finite_positive() {
        let (s, xi, _, var) = setup();
        let crb = FisherInfo::new(&xi, &s, var).unwrap().crb_position().unwrap();
        for i in 0..3 {
            assert!(crb[(i, i)] > 0.0 && crb[(i, i)].is_finite());
        }
        // Symmetric within numerical error.
        assert!((crb - crb.transpose()).norm() < 1e-9 * crb.norm());
    }

    #[test]
    fn tight_bound_dominates_loose_bound() {
        let (s, xi, _, var) = setup();
        let info = FisherInfo::new(&xi, &s, var).unwrap();
        let bounds = info.per_path_bounds().unwrap();
        assert_eq!(bounds.loose.len(), 2);
        for (l, t) in bounds.loose.iter().zip(bounds.tight.iter()) {
            let diff = t - l;
            let eig = diff.symmetric_eigen();
            let tol = 1e-8 * t.trace();
            for ev in eig.eigenvalues.iter() {
                assert!(*ev > -tol, "tight - loose has eigenvalue {ev:.3e}");
            }
        }
    }

    #[test]
    fn tikhonov_fallback_engages_on_singular_input() {
        // A rank-deficient matrix: plain inversion fails but the
        // regularized inverse is finite.
        let m = DMatrix::from_fn(3, 3, |i, j| ((i + 1) * (j + 1)) as f64);
        let inv = invert_symmetric(&m).unwrap();
        assert!(inv.iter().all(|x| x.is_finite()));
        // And an unambiguously invertible case round-trips.
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0, 9.0]));
        let di = invert_symmetric(&d).unwrap();
        assert_relative_eq!(di[(0, 0)], 0.5, max_relative = 1e-14);
    }
}
