//! Channel-parameter estimation from the observation set: a projection-
//! residual search for the direct-path AoD, energy-based path ordering,
//! MUSIC for delays and UE-side AoAs, and least-squares gain recovery.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{delay_phase, delay_vector, steering_factor, steering_ura};
use crate::error::{Error, Result};
use crate::geometry::{ChannelParams, DirectPathParams, ReflectionPathParams};
use crate::scenario::{ura_side, Scenario};
use crate::signal::{reshape_bs, reshape_delay, reshape_ue, Axis, ObservationSet};

const COND_LIMIT: f64 = 1e12;

/// Scalar-search configuration shared by all grid-plus-refine stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Points of the coarse uniform grid over the parameter range.
    pub coarse_points: usize,
    /// Refinement tolerance as a fraction of the parameter range.
    pub refine_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { coarse_points: 2048, refine_tol: 1e-6 }
    }
}

/// How unlabeled delay peaks are matched to paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matching {
    /// Match by estimated path energy against the AoD-stage ordering.
    Energy,
    /// Heuristic: the smallest delay is the direct path. Kept as a
    /// baseline; mislabels when the direct path is not the earliest.
    SmallestDelay,
}

/// Permutation of path labels (0 = direct, q ≥ 1 = reflection q) ranked by
/// estimated energy, strongest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathOrdering {
    pub ranking: Vec<usize>,
}

impl PathOrdering {
    pub fn direct_rank(&self) -> usize {
        self.ranking.iter().position(|&l| l == 0).expect("direct label present")
    }
}

/// Descending energy sort with a stable tie-break by original index.
pub fn order_paths(energies: &[f64]) -> PathOrdering {
    let mut idx: Vec<usize> = (0..energies.len()).collect();
    idx.sort_by(|&a, &b| energies[b].partial_cmp(&energies[a]).unwrap().then(a.cmp(&b)));
    PathOrdering { ranking: idx }
}

/// Estimate η̂ plus the ordering and per-path energies used to label paths.
#[derive(Debug, Clone)]
pub struct EstimatedChannelParams {
    pub params: ChannelParams,
    pub ordering: PathOrdering,
    /// AoD-stage path energies, indexed by path label.
    pub path_energies: Vec<f64>,
}

/// Condition number of a Hermitian PSD matrix from its eigenvalues.
fn hermitian_condition(m: &DMatrix<Complex64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthogonal projector onto the span of known steering factors, plus the
/// normalized projection residual of Lemma 1.
struct Projector {
    a_known: Option<DMatrix<Complex64>>,
    gram_inv: Option<DMatrix<Complex64>>,
}

impl Projector {
    fn new(known_cosines: &[f64], n_elems: usize) -> Result<Self> {
        if known_cosines.is_empty() {
            return Ok(Self { a_known: None, gram_inv: None });
        }
        let cols: Vec<DVector<Complex64>> = known_cosines
            .iter()
            .map(|&c| steering_factor(c, n_elems))
            .collect::<Result<_>>()?;
        let a = DMatrix::from_columns(&cols);
        let gram = a.adjoint() * &a;
        let cond = hermitian_condition(&gram);
        if cond > COND_LIMIT {
            return Err(Error::IllConditioned { cond, limit: COND_LIMIT });
        }
        let gram_inv = gram.try_inverse().ok_or(Error::IllConditioned {
            cond: f64::INFINITY,
            limit: COND_LIMIT,
        })?;
        Ok(Self { a_known: Some(a), gram_inv: Some(gram_inv) })
    }

    /// `a − P_r a`, the component of `a` orthogonal to the known columns.
    fn residual(&self, a: &DVector<Complex64>) -> DVector<Complex64> {
        match (&self.a_known, &self.gram_inv) {
            (Some(ak), Some(gi)) => a - ak * (gi * (ak.adjoint() * a)),
            _ => a.clone(),
        }
    }

    /// Normalized residual ã; `None` when `a` is (numerically) inside the
    /// known span, where the direct path cannot be distinguished.
    fn normalized_residual(&self, a: &DVector<Complex64>) -> Option<DVector<Complex64>> {
        let r = self.residual(a);
        let n = r.norm();
        if n < 1e-9 {
            None
        } else {
            Some(r.map(|x| x / n))
        }
    }
}

/// Minimize a unimodal scalar function on `[a, b]` by golden-section search.
fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Result of the direct-path AoD search along one axis.
#[derive(Debug, Clone)]
pub struct AodEstimate {
    pub cosine: f64,
    /// Least-squares path energies, indexed by path label (0 = direct).
    pub energies: Vec<f64>,
}

/// Quadratic form `aᴴ M a` for Hermitian `M`, returned as a real number.
fn quad_form(m: &DMatrix<Complex64>, a: &DVector<Complex64>) -> f64 {
    a.dotc(&(m * a)).re
}

/// Lemma-1 objectives at one candidate cosine, both the residual form
/// `‖R_B − A_B Q̂_B‖²_F` and the equivalent normalized-correlation form
/// `‖ãᴴ R_B‖²`, computed from the observation Gram matrix `G = R_B R_Bᴴ`.
/// Returns `(residual, correlation)`.
pub fn lemma1_objectives(
    gram_obs: &DMatrix<Complex64>,
    known_cosines: &[f64],
    candidate: f64,
    n_elems: usize,
) -> Result<(f64, f64)> {
    let proj = Projector::new(known_cosines, n_elems)?;
    let a = steering_factor(candidate, n_elems)?;

    let correlation = match proj.normalized_residual(&a) {
        Some(at) => quad_form(gram_obs, &at),
        None => 0.0,
    };

    // Residual of the joint LS fit, computed as the energy of G in the
    // orthogonal complement of span([A_known, a]): subtracting a fitted
    // energy from tr(G) would cancel catastrophically near the optimum.
    let mut cols: Vec<DVector<Complex64>> = known_cosines
        .iter()
        .map(|&c| steering_factor(c, n_elems))
        .collect::<Result<_>>()?;
    cols.push(a);
    let ab = DMatrix::from_columns(&cols);
    let qr = ab.clone().qr();
    let qmat = qr.q();
    let rmat = qr.r();
    // Keep only columns with a meaningful pivot; a rank-deficient column
    // contributes an arbitrary complement direction that must not enter
    // the fit.
    let basis: Vec<DVector<Complex64>> = (0..cols.len())
        .filter(|&i| rmat[(i, i)].norm() > 1e-9)
        .map(|i| qmat.column(i).into_owned())
        .collect();
    let eig = gram_obs.clone().symmetric_eigen();
    let mut residual = 0.0;
    for j in 0..eig.eigenvalues.len() {
        let lam = eig.eigenvalues[j].max(0.0);
        if lam == 0.0 {
            continue;
        }
        let mut w: DVector<Complex64> = eig.eigenvectors.column(j).into();
        // Two orthogonalization passes keep the tiny residual accurate
        // even when w lies almost entirely in the fitted span.
        for _ in 0..2 {
            for q in &basis {
                let coef = q.dotc(&w);
                w -= q * coef;
            }
        }
        residual += lam * w.norm_squared();
    }
    Ok((residual, correlation))
}

/// Row energies of the LS coefficient matrix `Q̂ = (AᴴA)⁻¹Aᴴ R`, computed
/// from the observation Gram `G = R Rᴴ` as `diag(M AᴴGA M)`, `M = (AᴴA)⁻¹`.
fn ls_row_energies(
    cols: &[DVector<Complex64>],
    gram_obs: &DMatrix<Complex64>,
) -> Result<Vec<f64>> {
    let a = DMatrix::from_columns(cols);
    let ata = a.adjoint() * &a;
    let cond = hermitian_condition(&ata);
    if cond > COND_LIMIT {
        return Err(Error::IllConditioned { cond, limit: COND_LIMIT });
    }
    let m = ata.try_inverse().ok_or(Error::IllConditioned {
        cond: f64::INFINITY,
        limit: COND_LIMIT,
    })?;
    let mid = a.adjoint() * gram_obs * &a;
    let e = &m * mid * &m;
    Ok((0..cols.len()).map(|i| e[(i, i)].re.max(0.0)).collect())
}

/// Direct-path BS AoD along one axis: maximize the normalized-residual
/// correlation over the cosine, then recover per-path energies from the
/// joint LS fit at the optimum.
pub fn estimate_aod_bs(
    obs: &ObservationSet,
    scenario: &Scenario,
    axis: Axis,
    search: &SearchConfig,
) -> Result<AodEstimate> {
    let n_bs = scenario.arrays.n_bs;
    let known: Vec<f64> = (0..scenario.num_ris())
        .map(|q| {
            let l = scenario.bs_ris_link(q)?;
            Ok(match axis {
                Axis::G => l.g_bs,
                Axis::V => l.v_bs,
            })
        })
        .collect::<Result<_>>()?;

    let rb = reshape_bs(obs, scenario, axis)?;
    let gram = &rb * rb.adjoint();
    let proj = Projector::new(&known, n_bs)?;

    let objective = |c: f64| -> f64 {
        let a = steering_factor(c, n_bs).expect("validated size");
        match proj.normalized_residual(&a) {
            Some(at) => quad_form(&gram, &at),
            None => 0.0,
        }
    };

    // Coarse grid over the cosine range, then golden refinement around the
    // best cell (the steering factor is periodic with period 2, so the
    // bracket may extend past the nominal range).
    let n = search.coarse_points;
    let step = 2.0 / n as f64;
    let mut best = (f64::MIN, 0usize);
    for i in 0..n {
        let c = -1.0 + i as f64 * step;
        let v = objective(c);
        if v > best.0 {
            best = (v, i);
        }
    }
    let center = -1.0 + best.1 as f64 * step;
    let tol = search.refine_tol * 2.0;
    let cosine = golden_min(|c| -objective(c), center - step, center + step, tol);
    let cosine = cosine.clamp(-1.0, 1.0);

    // Joint LS energies at the optimum; rows are [r_1 … r_Q, d].
    let mut cols: Vec<DVector<Complex64>> =
        known.iter().map(|&c| steering_factor(c, n_bs)).collect::<Result<_>>()?;
    cols.push(steering_factor(cosine, n_bs)?);
    let raw = ls_row_energies(&cols, &gram)?;
    let q = known.len();
    let mut energies = vec![0.0; q + 1];
    energies[0] = raw[q];
    energies[1..(q + 1)].copy_from_slice(&raw[..q]);
    Ok(AodEstimate { cosine, energies })
}

/// Locate the `n_peaks` strongest local maxima of a MUSIC pseudospectrum.
///
/// `denom(x) = a(x)ᴴ B a(x)` is the pseudospectrum denominator; the domain
/// `[lo, hi)` is treated as periodic (both the steering factor in its
/// cosine and the delay response over `[0, K/W)` are). Peaks are local
/// minima of the denominator on the coarse grid, refined by golden section.
fn music_peaks<F: Fn(f64) -> f64>(
    denom: F,
    lo: f64,
    hi: f64,
    n_peaks: usize,
    search: &SearchConfig,
) -> Result<Vec<f64>> {
    let n = search.coarse_points;
    let step = (hi - lo) / n as f64;
    let d: Vec<f64> = (0..n).map(|i| denom(lo + i as f64 * step)).collect();

    let mut minima: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let prev = d[(i + n - 1) % n];
        let next = d[(i + 1) % n];
        if d[i] < prev && d[i] <= next {
            minima.push((i, d[i]));
        }
    }
    if minima.len() < n_peaks {
        return Err(Error::PeakDeficit { found: minima.len(), needed: n_peaks });
    }
    minima.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

    let tol = search.refine_tol * (hi - lo);
    let mut peaks = Vec::with_capacity(n_peaks);
    for &(i, _) in minima.iter().take(n_peaks) {
        let c = lo + i as f64 * step;
        peaks.push(golden_min(&denom, c - step, c + step, tol));
    }
    Ok(peaks)
}

/// Noise-subspace quadratic form `B = I − W_s W_sᴴ` of a sample Gram
/// matrix, keeping the `n_signal` leading eigenvectors as signal.
///
/// If the Gram matrix does not carry `n_signal` eigenvalues above the
/// numerical floor, the paths are merged (fewer distinct signatures than
/// expected) and the deficit is reported instead of returning spurious
/// spectrum peaks.
fn noise_projector(gram: &DMatrix<Complex64>, n_signal: usize) -> Result<DMatrix<Complex64>> {
    let dim = gram.nrows();
    let eig = gram.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let floor = 1e-12 * eig.eigenvalues[idx[0]].max(f64::MIN_POSITIVE);
    let significant = idx.iter().take(n_signal).filter(|&&i| eig.eigenvalues[i] > floor).count();
    if significant < n_signal {
        return Err(Error::PeakDeficit { found: significant, needed: n_signal });
    }
    let mut b = DMatrix::identity(dim, dim);
    for &i in idx.iter().take(n_signal) {
        let w = eig.eigenvectors.column(i);
        b -= &w * w.adjoint();
    }
    Ok(b)
}

/// Assign unlabeled estimates to path labels by pairing the energy ranking
/// of the estimates against the ranking in `ordering`.
fn assign_by_energy(values: &[f64], energies: &[f64], ordering: &PathOrdering) -> Vec<f64> {
    let rank = order_paths(energies);
    let mut out = vec![0.0; values.len()];
    for (r, &est_idx) in rank.ranking.iter().enumerate() {
        out[ordering.ranking[r]] = values[est_idx];
    }
    out
}

/// MUSIC delay estimation over `[0, K/W)`: returns `(τ̂_d, {τ̂_{r2,q}})`
/// with the known BS→RIS leg delays already subtracted.
pub fn estimate_delays_music(
    obs: &ObservationSet,
    scenario: &Scenario,
    ordering: &PathOrdering,
    matching: Matching,
    search: &SearchConfig,
) -> Result<(f64, Vec<f64>)> {
    let q = scenario.num_ris();
    let k_sub = scenario.ofdm.n_subcarriers;
    if k_sub <= q + 1 {
        return Err(Error::SubspaceTooSmall { side: k_sub, paths: q + 1 });
    }
    let rd = reshape_delay(obs, scenario)?;
    let gram = &rd * rd.adjoint();
    let b = noise_projector(&gram, q + 1)?;
    let ofdm = scenario.ofdm;
    let denom = |tau: f64| {
        let a = delay_vector(tau, &ofdm);
        quad_form(&b, &a)
    };
    let hi = k_sub as f64 / ofdm.bandwidth_hz;
    let peaks = music_peaks(denom, 0.0, hi, q + 1, search)?;

    let cols: Vec<DVector<Complex64>> =
        peaks.iter().map(|&t| delay_vector(t, &ofdm)).collect();
    let energies = ls_row_energies(&cols, &gram)?;

    let assigned = match matching {
        Matching::Energy => assign_by_energy(&peaks, &energies, ordering),
        Matching::SmallestDelay => {
            // Direct = earliest arrival; remaining peaks matched to the
            // reflection labels by energy against the remaining ranking.
            let mut idx: Vec<usize> = (0..peaks.len()).collect();
            idx.sort_by(|&a, &b| peaks[a].partial_cmp(&peaks[b]).unwrap());
            let direct_idx = idx[0];
            let mut out = vec![0.0; peaks.len()];
            out[0] = peaks[direct_idx];
            let mut rest: Vec<usize> = (0..peaks.len()).filter(|&i| i != direct_idx).collect();
            rest.sort_by(|&a, &b| energies[b].partial_cmp(&energies[a]).unwrap());
            let labels: Vec<usize> =
                ordering.ranking.iter().copied().filter(|&l| l != 0).collect();
            for (&i, &l) in rest.iter().zip(labels.iter()) {
                out[l] = peaks[i];
            }
            out
        }
    };

    let tau_d = assigned[0];
    let mut tau_r2 = Vec::with_capacity(q);
    for qq in 0..q {
        let leg1 = scenario.bs_ris_link(qq)?.delay;
        tau_r2.push((assigned[qq + 1] - leg1).max(0.0));
    }
    Ok((tau_d, tau_r2))
}

/// MUSIC UE-side AoA estimation along one axis: returns the direct-path
/// cosine and the per-reflection cosines, matched via the shared ordering.
pub fn estimate_aoa_music(
    obs: &ObservationSet,
    scenario: &Scenario,
    ordering: &PathOrdering,
    axis: Axis,
    search: &SearchConfig,
) -> Result<(f64, Vec<f64>)> {
    let q = scenario.num_ris();
    let side = ura_side(scenario.arrays.n_ue)?;
    if side <= q + 1 {
        return Err(Error::SubspaceTooSmall { side, paths: q + 1 });
    }
    let ru = reshape_ue(obs, scenario, axis)?;
    let gram = &ru * ru.adjoint();
    let b = noise_projector(&gram, q + 1)?;
    let d_ue = scenario.arrays.n_ue;
    let denom = |c: f64| {
        let a = steering_factor(c, d_ue).expect("validated size");
        quad_form(&b, &a)
    };
    let peaks = music_peaks(denom, -1.0, 1.0, q + 1, search)?;
    let peaks: Vec<f64> = peaks.iter().map(|&c| wrap_cosine(c)).collect();

    let cols: Vec<DVector<Complex64>> =
        peaks.iter().map(|&c| steering_factor(c, d_ue)).collect::<Result<_>>()?;
    let energies = ls_row_energies(&cols, &gram)?;
    let assigned = assign_by_energy(&peaks, &energies, ordering);
    Ok((assigned[0], assigned[1..].to_vec()))
}

/// Fold a cosine refined past the nominal range back into `[-1, 1]` using
/// the period-2 symmetry of the steering factor.
fn wrap_cosine(c: f64) -> f64 {
    let mut c = (c + 1.0).rem_euclid(2.0) - 1.0;
    if c == -1.0 {
        c = 1.0; // representative choice at the wrap point
    }
    c.clamp(-1.0, 1.0)
}

/// Least-squares complex gains given all delays and angles. Only the
/// geometric entries of `geometry` are read; its gain entries are ignored.
pub fn estimate_gains(
    obs: &ObservationSet,
    scenario: &Scenario,
    geometry: &ChannelParams,
) -> Result<Vec<Complex64>> {
    let q = geometry.num_reflections();
    let d_ue = scenario.arrays.n_ue;
    let n_bs = scenario.arrays.n_bs;

    // Unit-gain regressors per path: rank-1 per subcarrier, so all inner
    // products reduce to steering-vector correlations.
    struct Regressor {
        a_u: DVector<Complex64>,
        a_b: DVector<Complex64>,
        tau: f64,
    }
    let mut regs = Vec::with_capacity(q + 1);
    regs.push(Regressor {
        a_u: steering_ura(geometry.direct.g_ue, geometry.direct.v_ue, d_ue)?,
        a_b: steering_ura(geometry.direct.g_bs, geometry.direct.v_bs, n_bs)?,
        tau: geometry.direct.delay,
    });
    for (qq, r) in geometry.reflections.iter().enumerate() {
        let link = scenario.bs_ris_link(qq)?;
        regs.push(Regressor {
            a_u: steering_ura(r.g_ue, r.v_ue, d_ue)?,
            a_b: steering_ura(link.g_bs, link.v_bs, n_bs)?,
            tau: link.delay + r.delay,
        });
    }

    let m = q + 1;
    let mut gram = DMatrix::<Complex64>::zeros(m, m);
    let mut rhs = DVector::<Complex64>::zeros(m);
    for k in 0..scenario.ofdm.n_subcarriers {
        let phis: Vec<Complex64> =
            regs.iter().map(|r| delay_phase(r.tau, &scenario.ofdm, k)).collect();
        for i in 0..m {
            for j in 0..m {
                // ⟨vec(H_i), vec(H_j)⟩ = φ̄_i φ_j (a_Uiᴴ a_Uj)(a_Bjᴴ a_Bi)
                gram[(i, j)] += phis[i].conj()
                    * phis[j]
                    * regs[i].a_u.dotc(&regs[j].a_u)
                    * regs[j].a_b.dotc(&regs[i].a_b);
            }
            // ⟨vec(H_i), vec(R̃_k)⟩ = φ̄_i · a_Uiᴴ R̃_k a_Bi
            let proj = regs[i].a_u.dotc(&(&obs.matrices[k] * &regs[i].a_b));
            rhs[i] += phis[i].conj() * proj;
        }
    }
    let cond = hermitian_condition(&gram);
    if cond > COND_LIMIT {
        return Err(Error::IllConditioned { cond, limit: COND_LIMIT });
    }
    let sol = gram
        .try_inverse()
        .ok_or(Error::IllConditioned { cond: f64::INFINITY, limit: COND_LIMIT })?
        * rhs;
    Ok(sol.iter().copied().collect())
}

/// Full estimation pipeline: AoD (both axes) → ordering → delays → AoAs
/// (both axes) → gains, with energy matching.
pub fn estimate_all(
    obs: &ObservationSet,
    scenario: &Scenario,
    search: &SearchConfig,
) -> Result<EstimatedChannelParams> {
    estimate_all_with(obs, scenario, search, Matching::Energy)
}

/// [`estimate_all`] with an explicit delay-matching rule.
pub fn estimate_all_with(
    obs: &ObservationSet,
    scenario: &Scenario,
    search: &SearchConfig,
    matching: Matching,
) -> Result<EstimatedChannelParams> {
    let q = scenario.num_ris();
    let aod_g = estimate_aod_bs(obs, scenario, Axis::G, search)?;
    let aod_v = estimate_aod_bs(obs, scenario, Axis::V, search)?;
    let ordering = order_paths(&aod_g.energies);

    let (tau_d, tau_r2) = estimate_delays_music(obs, scenario, &ordering, matching, search)?;
    let (g_ud, g_ur) = estimate_aoa_music(obs, scenario, &ordering, Axis::G, search)?;
    let (v_ud, v_ur) = estimate_aoa_music(obs, scenario, &ordering, Axis::V, search)?;

    let mut geometry = ChannelParams {
        direct: DirectPathParams {
            gain: Complex64::new(1.0, 0.0),
            delay: tau_d,
            g_ue: g_ud,
            v_ue: v_ud,
            g_bs: aod_g.cosine,
            v_bs: aod_v.cosine,
        },
        reflections: (0..q)
            .map(|i| ReflectionPathParams {
                gain: Complex64::new(1.0, 0.0),
                delay: tau_r2[i],
                g_ue: g_ur[i],
                v_ue: v_ur[i],
            })
            .collect(),
    };
    let gains = estimate_gains(obs, scenario, &geometry)?;
    geometry.direct.gain = gains[0];
    for (i, r) in geometry.reflections.iter_mut().enumerate() {
        r.gain = gains[i + 1];
    }
    Ok(EstimatedChannelParams {
        params: geometry,
        ordering,
        path_energies: aod_g.energies,
    })
}
