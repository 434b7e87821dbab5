//! UE position inference from estimated channel parameters: per-path
//! position estimates, covariance-weighted linear fusion, the EXIP
//! weighted-least-squares refinement with its one-shot linearized form,
//! and multi-UE / multi-BS fusion.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4x3, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fisher::invert_symmetric;
use crate::geometry::{
    forward_map, invert_direct_path, invert_reflection_path, ChannelParams, DirectPathParams,
    EulerRotation, Position3, PositionParams,
};
use crate::scenario::Scenario;

/// Which measurement produced a position estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    Direct,
    Reflection(usize),
    Fused,
    MultiBs(usize),
}

/// A position estimate with its error covariance (or covariance lower
/// bound, when exact covariances are unavailable at runtime).
#[derive(Debug, Clone)]
pub struct PositionEstimate {
    pub position: Position3,
    pub cov: Matrix3<f64>,
    pub source: EstimateSource,
}

fn invert_cov(c: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    c.try_inverse().ok_or(Error::SingularCovariance)
}

/// Direct-path position: a weighted LS refinement of the BS-side cosines
/// using the UE-side measurements, followed by the closed-form inversion.
///
/// The four measured cosines `f̂ = [ĝ_Ud, v̂_Ud, ĝ_Bd, v̂_Bd]` relate to
/// `z = [f_Bd, g_Bd, v_Bd]` through `Ã = [M_R; 0 I₂]`; the unconstrained
/// WLS solution with weight `C̄_f̂⁻¹` is projected back to the unit sphere
/// before inverting. `eta_cov` is the covariance lower bound `F_η̂⁻¹` from
/// which the marginal cosine covariance `C̄_f̂` is taken.
pub fn position_from_direct(
    eta_hat: &ChannelParams,
    eta_cov: &DMatrix<f64>,
    rot: &EulerRotation,
    cov_bound: Matrix3<f64>,
) -> Result<PositionEstimate> {
    let z = direct_wls_cosines(eta_hat, eta_cov, rot)?;
    let refined = DirectPathParams {
        g_bs: z[1],
        v_bs: z[2],
        ..eta_hat.direct
    };
    let position = invert_direct_path(&refined)?;
    Ok(PositionEstimate { position, cov: cov_bound, source: EstimateSource::Direct })
}

/// The WLS-plus-projection step of [`position_from_direct`]: returns
/// `ẑ = [f_Bd, g_Bd, v_Bd]` projected onto the closed unit ball, so the
/// downstream positive-root reconstruction of `f_Bd` is always defined.
pub fn direct_wls_cosines(
    eta_hat: &ChannelParams,
    eta_cov: &DMatrix<f64>,
    rot: &EulerRotation,
) -> Result<nalgebra::Vector3<f64>> {
    let z = direct_wls_unconstrained(eta_hat, eta_cov, rot)?;
    let n = z.norm();
    Ok(if n > 1.0 { z / n } else { z })
}

/// Unconstrained WLS solution `(ÃᵀWÃ)⁺ÃᵀW f̂` before the unit-ball
/// projection; exposed for sensitivity analysis. A pseudo-inverse is
/// used because `f_Bd` drops out of the measurements for some rotations
/// (e.g. the identity); its minimum-norm value is irrelevant downstream,
/// where `f_Bd` is recomputed from the unit-norm constraint.
pub fn direct_wls_unconstrained(
    eta_hat: &ChannelParams,
    eta_cov: &DMatrix<f64>,
    rot: &EulerRotation,
) -> Result<nalgebra::Vector3<f64>> {
    // Marginal covariance of [g_Ud, v_Ud, g_Bd, v_Bd]: η indices 3..=6.
    let idx = [3usize, 4, 5, 6];
    let c_f = nalgebra::Matrix4::from_fn(|i, j| eta_cov[(idx[i], idx[j])]);
    let w = c_f.try_inverse().ok_or(Error::SingularCovariance)?;

    let m_r = rot.reduced();
    let mut a = Matrix4x3::zeros();
    for c in 0..3 {
        a[(0, c)] = m_r[(0, c)];
        a[(1, c)] = m_r[(1, c)];
    }
    a[(2, 1)] = 1.0;
    a[(3, 2)] = 1.0;

    let f_hat = Vector4::new(
        eta_hat.direct.g_ue,
        eta_hat.direct.v_ue,
        eta_hat.direct.g_bs,
        eta_hat.direct.v_bs,
    );
    let lhs = a.transpose() * w * a;
    let rhs = a.transpose() * w * f_hat;
    let pinv = lhs
        .svd(true, true)
        .pseudo_inverse(1e-12 * lhs.norm())
        .map_err(|_| Error::SingularCovariance)?;
    Ok(pinv * rhs)
}

/// Position from one reflection path: the negative-root direction
/// reconstruction rotated back to the global frame, offset from the RIS.
pub fn position_from_reflection(
    eta_hat: &ChannelParams,
    q: usize,
    ris_position: &Position3,
    rot: &EulerRotation,
    cov_bound: Matrix3<f64>,
) -> Result<PositionEstimate> {
    let position = invert_reflection_path(&eta_hat.reflections[q], ris_position, rot)?;
    Ok(PositionEstimate { position, cov: cov_bound, source: EstimateSource::Reflection(q) })
}

/// Covariance-weighted linear fusion (BLUE): `p̂ = C·Σᵢ Cᵢ⁻¹ p̂ᵢ` with
/// `C = (Σᵢ Cᵢ⁻¹)⁻¹`, which is also the returned covariance.
pub fn fuse_linear(estimates: &[PositionEstimate]) -> Result<PositionEstimate> {
    if estimates.is_empty() {
        return Err(Error::DimensionMismatch("fusion needs at least one estimate".into()));
    }
    let mut info = Matrix3::zeros();
    let mut weighted = Position3::zeros();
    for e in estimates {
        let ci = invert_cov(&e.cov)?;
        info += ci;
        weighted += ci * e.position;
    }
    let cov = info.try_inverse().ok_or(Error::SingularCovariance)?;
    // Symmetrize against accumulated round-off.
    let cov = (cov + cov.transpose()) / 2.0;
    Ok(PositionEstimate { position: cov * weighted, cov, source: EstimateSource::Fused })
}

/// Gauss–Newton / Levenberg–Marquardt settings for the EXIP refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Converged when the accepted step norm drops below this.
    pub step_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iters: 100, step_tol: 1e-9 }
    }
}

/// Outcome of [`exip_refine`]; `converged == false` means the iteration
/// budget ran out and `params` is the best iterate found.
#[derive(Debug, Clone)]
pub struct ExipResult {
    pub params: PositionParams,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// Identity weight of matching size; with it, [`exip_refine`] reduces to
/// the plain geometric-mapping least squares baseline.
pub fn identity_weight(num_reflections: usize) -> DMatrix<f64> {
    let n = 7 + 5 * num_reflections;
    DMatrix::identity(n, n)
}

fn exip_objective(
    target: &DVector<f64>,
    weight: &DMatrix<f64>,
    xi: &PositionParams,
    scenario: &Scenario,
) -> Option<f64> {
    let eta = forward_map(xi, scenario).ok()?;
    let r = target - eta.to_vec();
    Some((r.transpose() * weight * &r)[(0, 0)])
}

/// Minimize `[η̂ − F(ξ)]ᵀ W [η̂ − F(ξ)]` by damped Gauss–Newton with a
/// Levenberg–Marquardt fallback, starting from `initial` (typically the
/// fused linear estimate). `W = F_η̂` gives the EXIP weighting; the
/// identity gives the geometric-mapping baseline. The objective never
/// increases across accepted iterations.
pub fn exip_refine(
    eta_hat: &ChannelParams,
    weight: &DMatrix<f64>,
    initial: &PositionParams,
    scenario: &Scenario,
    solver: &SolverConfig,
) -> Result<ExipResult> {
    let target = eta_hat.to_vec();
    if weight.nrows() != target.len() {
        return Err(Error::DimensionMismatch("weight must be (7+5Q) square".into()));
    }
    let mut xi = initial.clone();
    let mut objective = exip_objective(&target, weight, &xi, scenario)
        .ok_or_else(|| Error::DegenerateGeometry("initial point is degenerate".into()))?;
    let mut lambda = 0.0f64;

    for iter in 0..solver.max_iters {
        let eta = forward_map(&xi, scenario)?;
        let j = crate::fisher::jacobian_forward_map(&xi, scenario)?;
        let r = &target - eta.to_vec();
        let jtw = j.transpose() * weight;
        let h = &jtw * &j;
        let g = &jtw * &r;
        let mean_diag = h.trace() / h.nrows() as f64;

        let mut accepted = None;
        for _ in 0..40 {
            let mut hd = h.clone();
            for i in 0..hd.nrows() {
                hd[(i, i)] += lambda * (h[(i, i)].abs() + 1e-12 * mean_diag);
            }
            if let Some(inv) = hd.try_inverse() {
                let step = inv * &g;
                let cand = PositionParams::from_vec(
                    &(xi.to_vec() + &step),
                    xi.num_reflections(),
                )?;
                if let Some(f_new) = exip_objective(&target, weight, &cand, scenario) {
                    if f_new <= objective {
                        accepted = Some((cand, f_new, step.norm()));
                        lambda = if lambda == 0.0 { 0.0 } else { lambda / 3.0 };
                        if lambda < 1e-12 {
                            lambda = 0.0;
                        }
                        break;
                    }
                }
            }
            lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
            if lambda > 1e12 {
                break;
            }
        }

        match accepted {
            Some((cand, f_new, step_norm)) => {
                xi = cand;
                objective = f_new;
                if step_norm < solver.step_tol {
                    return Ok(ExipResult { params: xi, converged: true, iterations: iter + 1, objective });
                }
            }
            // No decreasing step exists: a (local) minimum within damping
            // limits — treat as converged at the current iterate.
            None => {
                return Ok(ExipResult { params: xi, converged: true, iterations: iter, objective });
            }
        }
    }
    Ok(ExipResult {
        params: xi,
        converged: false,
        iterations: solver.max_iters,
        objective,
    })
}

/// One per-path position-parameter estimate: the UE position implied by
/// that path plus the path's own complex gain.
#[derive(Debug, Clone)]
pub struct PerPathXi {
    pub position: Position3,
    pub gain: Complex64,
}

impl PerPathXi {
    fn to_vec(&self) -> DVector<f64> {
        DVector::from_vec(vec![
            self.position.x,
            self.position.y,
            self.position.z,
            self.gain.re,
            self.gain.im,
        ])
    }
}

/// One-shot linearized EXIP solution
/// `ξ̂ = (Jᵀ F_η̂ J)⁻¹ Jᵀ F_η̂ [J_d ξ̂_d; J_{r,1} ξ̂_{r,1}; …]`,
/// where `J_p` are the per-path blocks of the full Jacobian.
pub fn exip_closed_form(
    direct: &PerPathXi,
    reflections: &[PerPathXi],
    f_eta: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
) -> Result<PositionParams> {
    let nq = reflections.len();
    let n_eta = 7 + 5 * nq;
    if f_eta.nrows() != n_eta || jacobian.nrows() != n_eta {
        return Err(Error::DimensionMismatch("Jacobian/FIM size must match 7+5Q".into()));
    }

    let block = |rows: std::ops::Range<usize>, cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| jacobian[(rows.start + i, cols[j])])
    };
    let mut stacked = DVector::zeros(n_eta);
    let j_d = block(0..7, &[0, 1, 2, 3, 4]);
    stacked.rows_mut(0, 7).copy_from(&(j_d * direct.to_vec()));
    for (q, r) in reflections.iter().enumerate() {
        let o = 7 + 5 * q;
        let j_r = block(o..o + 5, &[0, 1, 2, 5 + 2 * q, 6 + 2 * q]);
        stacked.rows_mut(o, 5).copy_from(&(j_r * r.to_vec()));
    }

    let jtf = jacobian.transpose() * f_eta;
    let lhs = &jtf * jacobian;
    let sol = invert_symmetric(&lhs)? * (jtf * stacked);
    PositionParams::from_vec(&sol, nq)
}

/// Multi-UE fusion with known inter-UE offsets `Δ_l` (reference UE has
/// `Δ_1 = 0`): the reference position is the covariance-weighted mean of
/// the offset-corrected estimates, and every UE inherits it plus its own
/// offset; all fused covariances equal `(Σ C_l⁻¹)⁻¹`.
pub fn fuse_multi_ue(
    estimates: &[PositionEstimate],
    offsets: &[Position3],
) -> Result<Vec<PositionEstimate>> {
    if estimates.len() != offsets.len() || estimates.is_empty() {
        return Err(Error::DimensionMismatch("one offset per UE estimate required".into()));
    }
    let corrected: Vec<PositionEstimate> = estimates
        .iter()
        .zip(offsets)
        .map(|(e, d)| PositionEstimate {
            position: e.position - d,
            cov: e.cov,
            source: e.source,
        })
        .collect();
    let reference = fuse_linear(&corrected)?;
    Ok(offsets
        .iter()
        .map(|d| PositionEstimate {
            position: reference.position + d,
            cov: reference.cov,
            source: EstimateSource::Fused,
        })
        .collect())
}

/// Multi-BS fusion: identical algebra to [`fuse_linear`] over the per-BS
/// estimates (valid when the per-BS pilots are mutually orthogonal, so
/// the per-BS errors are independent).
pub fn fuse_multi_bs(estimates: &[PositionEstimate]) -> Result<PositionEstimate> {
    fuse_linear(estimates)
}
