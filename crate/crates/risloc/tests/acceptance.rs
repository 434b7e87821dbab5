//! End-to-end acceptance suite: one pass/fail line per criterion.
//!
//! Each criterion is checked independently; all lines are printed before
//! the test fails so a single regression never hides the others.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risloc::channel::{effective_channel, synthesize_params, PathCoefficients, RisPhase};
use risloc::estimator::lemma1_objectives;
use risloc::experiment::{
    experiment_csv, per_trial_errors, run_experiment, ExperimentConfig, Method, SweepVariable,
};
use risloc::fisher::{derivative_pairs, jacobian_forward_map, FisherInfo};
use risloc::fusion::{
    exip_closed_form, fuse_linear, EstimateSource, PerPathXi, PositionEstimate,
};
use risloc::geometry::{
    forward_map, invert_direct_path, invert_reflection_path, ChannelParams, EulerRotation,
    PositionParams,
};
use risloc::ris_design::{design_phases, reflection_gain, AngularRegion};
use risloc::scenario::{ArrayConfig, OfdmConfig, Scenario};
use risloc::signal::{beta_direct_from_eta, reshape_bs, simulate_observations, Axis, NoiseModel};

/// A random small-array scenario with Q RIS panels and a random rotation.
fn random_scenario(rng: &mut ChaCha8Rng, q: usize) -> Scenario {
    loop {
        let ris: Vec<Vector3<f64>> = (0..q)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(15.0..45.0),
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(1.0..8.0),
                )
            })
            .collect();
        let rot = EulerRotation::new(
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        );
        if let Ok(s) = Scenario::new(
            ArrayConfig { n_bs: 16, n_ris: 16, n_ue: 16 },
            OfdmConfig { bandwidth_hz: 100e6, n_subcarriers: 32, carrier_hz: 30e9 },
            ris,
            rot,
            100.0,
            600_000,
            4.5,
            2.0,
        ) {
            return s;
        }
    }
}

fn random_ue(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(30.0..70.0),
        rng.gen_range(-25.0..25.0),
        rng.gen_range(5.0..30.0),
    )
}

fn random_setup(
    rng: &mut ChaCha8Rng,
    q: usize,
) -> Option<(Scenario, PositionParams, ChannelParams)> {
    let s = random_scenario(rng, q);
    let p_ue = random_ue(rng);
    let phases: Vec<RisPhase> = (0..q).map(|_| RisPhase::zeros(s.arrays.n_ris)).collect();
    let eta = synthesize_params(&s, &p_ue, &PathCoefficients::unit(q), &phases).ok()?;
    let xi = PositionParams {
        ue_position: p_ue,
        direct_gain: eta.direct.gain,
        reflection_gains: eta.reflections.iter().map(|r| r.gain).collect(),
    };
    Some((s, xi, eta))
}

fn rel_err(analytic: &DMatrix<Complex64>, fd: &DMatrix<Complex64>) -> f64 {
    let scale = analytic.norm().max(1e-30);
    (analytic - fd).norm() / scale
}

/// Criterion 1: analytic channel derivatives and forward-map Jacobian
/// match central finite differences within 1e-6 relative error.
fn criterion_1() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0usize;
    while checked < 21 {
        let q = checked % 3;
        let Some((s, xi, eta)) = random_setup(&mut rng, q) else { continue };
        let v0 = eta.to_vec();
        for &k in &[1usize, 16, 31] {
            let pairs = derivative_pairs(&eta, &s, k).map_err(|e| e.to_string())?;
            for (i, pair) in pairs.iter().enumerate() {
                let analytic = &pair.left * pair.right.adjoint();
                // Delays live at 1e-7 s scale, so they need a far smaller
                // step than gains and cosines.
                let is_delay = i == 2 || (i >= 7 && (i - 7) % 5 == 2);
                let h = if is_delay { 1e-12 } else { 1e-6 };
                let mut vp = v0.clone();
                let mut vm = v0.clone();
                vp[i] += h;
                vm[i] -= h;
                let ep = ChannelParams::from_vec(&vp, q).map_err(|e| e.to_string())?;
                let em = ChannelParams::from_vec(&vm, q).map_err(|e| e.to_string())?;
                let fd = (effective_channel(&ep, &s, k).map_err(|e| e.to_string())?
                    - effective_channel(&em, &s, k).map_err(|e| e.to_string())?)
                    / Complex64::new(2.0 * h, 0.0);
                let err = rel_err(&analytic, &fd);
                if err > 1e-6 {
                    return Err(format!(
                        "channel derivative {i} at k={k} (Q={q}): rel err {err:.2e}"
                    ));
                }
            }
        }
        // Forward-map Jacobian against finite differences.
        let j = jacobian_forward_map(&xi, &s).map_err(|e| e.to_string())?;
        let x0 = xi.to_vec();
        for c in 0..x0.len() {
            let h = if c < 3 { 1e-5 } else { 1e-9 };
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[c] += h;
            xm[c] -= h;
            let fp = forward_map(&PositionParams::from_vec(&xp, q).unwrap(), &s)
                .map_err(|e| e.to_string())?
                .to_vec();
            let fm = forward_map(&PositionParams::from_vec(&xm, q).unwrap(), &s)
                .map_err(|e| e.to_string())?
                .to_vec();
            let fd = (fp - fm) / (2.0 * h);
            let col: DVector<f64> = j.column(c).into();
            let err = (&col - &fd).norm() / col.norm().max(1e-30);
            if err > 1e-6 {
                return Err(format!("Jacobian column {c} (Q={q}): rel err {err:.2e}"));
            }
        }
        checked += 1;
    }
    Ok(())
}

/// Criterion 2: forward map followed by per-path inversion recovers the
/// UE position within 1e-9 relative error on 1000 random scenarios.
fn criterion_2() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut checked = 0usize;
    while checked < 1000 {
        let q = 1 + checked % 2;
        let Some((s, xi, eta)) = random_setup(&mut rng, q) else { continue };
        let truth = xi.ue_position;
        // The reflection inversion assumes the negative-root convention
        // (UE on the negative-x side of the rotated RIS frame); resample
        // geometries that land outside that region.
        let valid = s.ris_positions.iter().all(|p_ris| {
            (s.rotation.matrix() * (truth - p_ris).normalize())[0] < -1e-3
        });
        if !valid {
            continue;
        }
        let pd = invert_direct_path(&eta.direct).map_err(|e| e.to_string())?;
        if (pd - truth).norm() > 1e-9 * truth.norm() {
            return Err(format!("direct inversion error {:.2e}", (pd - truth).norm()));
        }
        for (i, r) in eta.reflections.iter().enumerate() {
            let pr = invert_reflection_path(r, &s.ris_positions[i], &s.rotation)
                .map_err(|e| e.to_string())?;
            if (pr - truth).norm() > 1e-9 * truth.norm() {
                return Err(format!("reflection inversion error {:.2e}", (pr - truth).norm()));
            }
        }
        checked += 1;
    }
    Ok(())
}

/// Criterion 3: the residual-minimizing and correlation-maximizing AoD
/// objectives pick the same 2048-point grid index on 50 noisy instances.
fn criterion_3() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut checked = 0usize;
    while checked < 50 {
        let q = 1 + checked % 2;
        let Some((s, _, eta)) = random_setup(&mut rng, q) else { continue };
        let noise = NoiseModel::from_inv_sigma2_db(rng.gen_range(80.0..110.0));
        let obs = simulate_observations(&eta, &s, &noise, &mut rng).map_err(|e| e.to_string())?;
        let axis = if checked % 2 == 0 { Axis::G } else { Axis::V };
        let rb = reshape_bs(&obs, &s, axis).map_err(|e| e.to_string())?;
        let gram = &rb * rb.adjoint();
        let known: Vec<f64> = (0..q)
            .map(|i| {
                let l = s.bs_ris_link(i).unwrap();
                match axis {
                    Axis::G => l.g_bs,
                    Axis::V => l.v_bs,
                }
            })
            .collect();

        let n = 2048;
        let mut argmin_res = (f64::INFINITY, 0usize);
        let mut argmax_cor = (f64::NEG_INFINITY, 0usize);
        for idx in 0..n {
            let c = -1.0 + 2.0 * idx as f64 / n as f64;
            let (res, cor) = lemma1_objectives(&gram, &known, c, s.arrays.n_bs)
                .map_err(|e| e.to_string())?;
            if res < argmin_res.0 {
                argmin_res = (res, idx);
            }
            if cor > argmax_cor.0 {
                argmax_cor = (cor, idx);
            }
        }
        if argmin_res.1 != argmax_cor.1 {
            return Err(format!(
                "objective argmins disagree: residual idx {} vs correlation idx {}",
                argmin_res.1, argmax_cor.1
            ));
        }
        checked += 1;
    }
    Ok(())
}

fn psd_up_to(diff: &Matrix3<f64>, slack: f64) -> bool {
    diff.symmetric_eigen().eigenvalues.iter().all(|&e| e >= -slack)
}

/// Criterion 4: per-path bound orderings — the marginalized (tight)
/// bound dominates the single-path (loose) bound for the direct path and
/// every reflection path, with min eigenvalue slack 1e-8·trace.
fn criterion_4() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checked = 0usize;
    while checked < 20 {
        let q = 1 + checked % 2;
        let Some((s, xi, eta)) = random_setup(&mut rng, q) else { continue };
        let noise = NoiseModel::from_inv_sigma2_db(100.0);
        let var = noise.effective_variance(&s, beta_direct_from_eta(&eta, &s));
        let info = FisherInfo::new(&xi, &s, var).map_err(|e| e.to_string())?;
        let b = info.per_path_bounds().map_err(|e| e.to_string())?;
        for p in 0..=q {
            let diff = b.tight[p] - b.loose[p];
            let slack = 1e-8 * b.tight[p].trace();
            if !psd_up_to(&diff, slack) {
                return Err(format!("path {p}: tight bound does not dominate loose bound"));
            }
            // Both bounds must themselves be PSD.
            if !psd_up_to(&b.loose[p], slack) || !psd_up_to(&b.tight[p], slack) {
                return Err(format!("path {p}: bound not PSD"));
            }
        }
        checked += 1;
    }
    Ok(())
}

/// Criterion 5: with block-diagonal path information, the one-shot
/// linearized refinement equals covariance-weighted linear fusion within
/// 1e-8 on 20 random scenarios.
fn criterion_5() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut checked = 0usize;
    while checked < 20 {
        let Some((s, xi, eta)) = random_setup(&mut rng, 1) else { continue };
        let noise = NoiseModel::from_inv_sigma2_db(100.0);
        let var = noise.effective_variance(&s, beta_direct_from_eta(&eta, &s));
        let full = FisherInfo::new(&xi, &s, var).map_err(|e| e.to_string())?;

        let mut f_bd = DMatrix::zeros(12, 12);
        for i in 0..12 {
            for j in 0..12 {
                if (i < 7) == (j < 7) {
                    f_bd[(i, j)] = full.f_eta[(i, j)];
                }
            }
        }
        let info = FisherInfo {
            f_eta: f_bd.clone(),
            jacobian: full.jacobian.clone(),
            f_xi: full.jacobian.transpose() * &f_bd * &full.jacobian,
        };
        let bounds = info.per_path_bounds().map_err(|e| e.to_string())?;

        let jitter = |rng: &mut ChaCha8Rng| {
            Vector3::new(
                rng.gen_range(-1e-3..1e-3),
                rng.gen_range(-1e-3..1e-3),
                rng.gen_range(-1e-3..1e-3),
            )
        };
        let p_d = xi.ue_position + jitter(&mut rng);
        let p_r = xi.ue_position + jitter(&mut rng);
        let fused = fuse_linear(&[
            PositionEstimate { position: p_d, cov: bounds.loose[0], source: EstimateSource::Direct },
            PositionEstimate {
                position: p_r,
                cov: bounds.loose[1],
                source: EstimateSource::Reflection(0),
            },
        ])
        .map_err(|e| e.to_string())?;
        let closed = exip_closed_form(
            &PerPathXi { position: p_d, gain: eta.direct.gain },
            &[PerPathXi { position: p_r, gain: eta.reflections[0].gain }],
            &f_bd,
            &info.jacobian,
        )
        .map_err(|e| e.to_string())?;
        let err = (closed.ue_position - fused.position).norm();
        let tol = 1e-8 * (1.0 + xi.ue_position.norm());
        if err > tol {
            return Err(format!("closed form vs linear fusion differ by {err:.3e}"));
        }
        checked += 1;
    }
    Ok(())
}

fn random_psd(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    a * a.transpose() * scale + Matrix3::identity() * scale * 0.1
}

/// Criterion 6: fusion optimality — trace reduction, PSD dominance, and
/// the exact equal-covariance two-estimate mean.
fn criterion_6() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..30 {
        let n = rng.gen_range(2..=4);
        let inputs: Vec<PositionEstimate> = (0..n)
            .map(|_| {
                let scale = rng.gen_range(0.1..5.0);
                PositionEstimate {
                    position: Vector3::new(
                        rng.gen_range(-10.0..10.0),
                        rng.gen_range(-10.0..10.0),
                        rng.gen_range(-10.0..10.0),
                    ),
                    cov: random_psd(&mut rng, scale),
                    source: EstimateSource::Direct,
                }
            })
            .collect();
        let fused = fuse_linear(&inputs).map_err(|e| e.to_string())?;
        let min_trace = inputs.iter().map(|e| e.cov.trace()).fold(f64::INFINITY, f64::min);
        if fused.cov.trace() > min_trace * (1.0 + 1e-12) {
            return Err("fused trace exceeds minimum input trace".into());
        }
        for e in &inputs {
            let slack = 1e-10 * e.cov.trace();
            if !psd_up_to(&(e.cov - fused.cov), slack) {
                return Err("fused covariance does not dominate an input in PSD order".into());
            }
        }
    }
    // Equal covariances: arithmetic mean, covariance halved.
    let c = random_psd(&mut rng, 1.0);
    let a = PositionEstimate {
        position: Vector3::new(1.0, -2.0, 3.0),
        cov: c,
        source: EstimateSource::Direct,
    };
    let b = PositionEstimate {
        position: Vector3::new(5.0, 4.0, -1.0),
        cov: c,
        source: EstimateSource::Reflection(0),
    };
    let f = fuse_linear(&[a.clone(), b.clone()]).map_err(|e| e.to_string())?;
    let mean = (a.position + b.position) / 2.0;
    if (f.position - mean).norm() > 1e-12 || (f.cov - c / 2.0).norm() > 1e-12 {
        return Err("equal-covariance fusion is not the exact mean with halved covariance".into());
    }
    Ok(())
}

/// Criterion 7: reference-scenario noise sweep — fused RMSE within 3× the
/// CRB at the two highest SNRs and monotonically decreasing.
fn criterion_7() -> Result<(), String> {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.methods = vec![Method::Proposed];
    cfg.experiment.trials = 200;
    cfg.experiment.seed = 7;
    let rows = run_experiment(&cfg).map_err(|e| e.to_string())?;
    if rows.len() != 4 {
        return Err(format!("expected 4 rows, got {}", rows.len()));
    }
    for w in rows.windows(2) {
        if !(w[1].rmse_position_m < w[0].rmse_position_m) {
            return Err(format!(
                "RMSE not monotone: {:.3e} -> {:.3e}",
                w[0].rmse_position_m, w[1].rmse_position_m
            ));
        }
    }
    for r in &rows[2..] {
        if r.failures > 0 {
            return Err(format!("{} failed trials at {} dB", r.failures, r.sweep_value));
        }
        if r.rmse_position_m > 3.0 * r.crb_rmse_m {
            return Err(format!(
                "RMSE {:.3e} exceeds 3x CRB {:.3e} at {} dB",
                r.rmse_position_m, r.crb_rmse_m, r.sweep_value
            ));
        }
    }
    Ok(())
}

fn rmse_of(errors: &[Option<f64>]) -> f64 {
    let ok: Vec<f64> = errors.iter().flatten().copied().collect();
    (ok.iter().sum::<f64>() / ok.len() as f64).sqrt()
}

fn bootstrap_rmse_ci(errors: &[f64], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = errors.len();
    let mut stats: Vec<f64> = (0..2000)
        .map(|_| {
            let s: f64 = (0..n).map(|_| errors[rng.gen_range(0..n)]).sum();
            (s / n as f64).sqrt()
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (stats[49], stats[1949]) // 2.5% and 97.5% quantiles
}

/// Criterion 8: method ordering at the highest SNR — the fused estimator
/// is at least as accurate as every baseline, and beats the direct-only
/// baseline with non-overlapping 95% bootstrap intervals.
fn criterion_8() -> Result<(), String> {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.sweep_values = vec![110.0];
    cfg.experiment.trials = 200;
    cfg.experiment.seed = 8;
    let methods = [
        Method::Proposed,
        Method::DelayBased,
        Method::GeometricMapping,
        Method::DirectOnly,
    ];
    let mut rmse = std::collections::BTreeMap::new();
    let mut raw = std::collections::BTreeMap::new();
    for m in methods {
        let errs = per_trial_errors(&cfg, 0, m).map_err(|e| e.to_string())?;
        let ok: Vec<f64> = errs.iter().flatten().copied().collect();
        if ok.len() < 190 {
            return Err(format!("{m}: only {} successful trials", ok.len()));
        }
        rmse.insert(m, rmse_of(&errs));
        raw.insert(m, ok);
    }
    let proposed = rmse[&Method::Proposed];
    for m in [Method::DelayBased, Method::GeometricMapping, Method::DirectOnly] {
        if proposed > rmse[&m] * (1.0 + 1e-12) {
            return Err(format!("proposed {proposed:.3e} worse than {m} {:.3e}", rmse[&m]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (_, hi_p) = bootstrap_rmse_ci(&raw[&Method::Proposed], &mut rng);
    let (lo_d, _) = bootstrap_rmse_ci(&raw[&Method::DirectOnly], &mut rng);
    if hi_p >= lo_d {
        return Err(format!(
            "bootstrap intervals overlap: proposed upper {hi_p:.3e} vs direct lower {lo_d:.3e}"
        ));
    }
    Ok(())
}

/// Criterion 9: path-loss sweep — the direct-only error grows with the
/// direct-path loss exponent while the fused error grows by a strictly
/// smaller factor.
fn criterion_9() -> Result<(), String> {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.sweep_variable = SweepVariable::LossExpDirect;
    cfg.experiment.sweep_values = vec![3.0, 4.0, 5.0];
    cfg.experiment.inv_sigma2_db = 95.0;
    cfg.experiment.trials = 100;
    cfg.experiment.methods = vec![Method::Proposed, Method::DirectOnly];
    cfg.experiment.seed = 9;
    let rows = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let get = |m: Method, v: f64| {
        rows.iter()
            .find(|r| r.method == m && r.sweep_value == v)
            .map(|r| r.rmse_position_m)
            .ok_or_else(|| format!("missing row {m} at {v}"))
    };
    let d = [get(Method::DirectOnly, 3.0)?, get(Method::DirectOnly, 4.0)?, get(Method::DirectOnly, 5.0)?];
    let p = [get(Method::Proposed, 3.0)?, get(Method::Proposed, 4.0)?, get(Method::Proposed, 5.0)?];
    if !(d[0] < d[1] && d[1] < d[2]) {
        return Err(format!("direct-only RMSE not increasing: {d:?}"));
    }
    let factor_d = d[2] / d[0];
    let factor_p = p[2] / p[0];
    if !(factor_p < factor_d) {
        return Err(format!(
            "fused growth factor {factor_p:.2} not smaller than direct-only {factor_d:.2}"
        ));
    }
    Ok(())
}

/// Criterion 10: RIS phase design — exact coherent point gain √M = 20 and
/// region-averaged superiority over 1000 random phase draws.
fn criterion_10() -> Result<(), String> {
    const M: usize = 400;
    let incident = (0.3, -0.5);
    let theta = 1.0f64;
    let phi = 0.25f64;
    let departure = (theta.sin() * phi.cos(), theta.cos());
    let phases = design_phases(&AngularRegion::point(theta, phi), M, incident)
        .map_err(|e| e.to_string())?;
    let gain = reflection_gain(&phases, M, incident, departure).map_err(|e| e.to_string())?;
    if (gain - 20.0).abs() > 1e-9 {
        return Err(format!("point gain {gain:.12} differs from 20 by more than 1e-9"));
    }

    let region =
        AngularRegion::with_grid(0.9, 1.3, -0.4, 0.4, (16, 16)).map_err(|e| e.to_string())?;
    let designed = design_phases(&region, M, incident).map_err(|e| e.to_string())?;
    let targets = region.cosine_grid();
    let avg = |p: &RisPhase| -> f64 {
        targets
            .iter()
            .map(|&d| reflection_gain(p, M, incident, d).unwrap().powi(2))
            .sum::<f64>()
            / targets.len() as f64
    };
    let designed_avg = avg(&designed);
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut random_sum = 0.0;
    for _ in 0..1000 {
        let rp = RisPhase {
            shifts: (0..M)
                .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect(),
        };
        random_sum += avg(&rp);
    }
    let random_avg = random_sum / 1000.0;
    if designed_avg < random_avg {
        return Err(format!(
            "designed region gain {designed_avg:.3} below random average {random_avg:.3}"
        ));
    }
    Ok(())
}

/// Criterion 11: two BSs and two UEs with known offsets fuse to a lower
/// RMSE than the single-BS single-UE baseline at every swept SNR.
fn criterion_11() -> Result<(), String> {
    let mut single = ExperimentConfig::default();
    single.experiment.sweep_values = vec![95.0, 110.0];
    single.experiment.trials = 100;
    single.experiment.methods = vec![Method::Proposed];
    single.experiment.seed = 11;
    let rows_single = run_experiment(&single).map_err(|e| e.to_string())?;

    let mut multi = single.clone();
    multi.experiment.bs_positions = vec![[0.0, 0.0, 0.0], [0.0, 10.0, 0.0]];
    multi.experiment.ue_offsets = vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
    let rows_multi = run_experiment(&multi).map_err(|e| e.to_string())?;

    for (s, m) in rows_single.iter().zip(&rows_multi) {
        if m.rmse_position_m > s.rmse_position_m {
            return Err(format!(
                "at {} dB multi RMSE {:.3e} exceeds single RMSE {:.3e}",
                s.sweep_value, m.rmse_position_m, s.rmse_position_m
            ));
        }
    }
    Ok(())
}

/// Criterion 12: byte-identical CSV for identical config and seed,
/// including across different parallel thread counts.
fn criterion_12() -> Result<(), String> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_bs = 16;
    cfg.scenario.n_ris = 16;
    cfg.scenario.n_ue = 16;
    cfg.experiment.sweep_values = vec![105.0, 110.0];
    cfg.experiment.trials = 8;
    cfg.experiment.methods = vec![Method::Proposed, Method::DirectOnly];
    cfg.experiment.seed = 12;

    let run = || -> Result<String, String> {
        let rows = run_experiment(&cfg).map_err(|e| e.to_string())?;
        Ok(experiment_csv(&rows, cfg.scenario.ris_positions.len()))
    };
    let a = run()?;
    let b = run()?;
    if a != b {
        return Err("repeated runs differ".into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let c = pool.install(run)?;
    if a != c {
        return Err("single-threaded run differs from parallel run".into());
    }
    if a.contains('\r') {
        return Err("CSV contains CR characters".into());
    }
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn() -> Result<(), String>)> = vec![
        ("derivative oracle suite (channel + Jacobian vs finite differences)", criterion_1),
        ("geometry round-trip (forward map then per-path inversion)", criterion_2),
        ("AoD objective equivalence (residual vs correlation argmin)", criterion_3),
        ("per-path bound orderings (tight dominates loose, PSD)", criterion_4),
        ("closed-form refinement equals linear fusion for independent paths", criterion_5),
        ("fusion optimality (trace, PSD dominance, exact mean)", criterion_6),
        ("noise sweep: fused RMSE within 3x CRB, monotone", criterion_7),
        ("method ordering at high SNR with bootstrap separation", criterion_8),
        ("path-loss sweep: fused degrades slower than direct-only", criterion_9),
        ("RIS design: exact point gain and region superiority", criterion_10),
        ("multi-BS/multi-UE fusion improves on the single link", criterion_11),
        ("deterministic byte-identical CSV output", criterion_12),
    ];

    let mut failures = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        match f() {
            Ok(()) => println!(
                "criterion {:2} PASS — {name} ({:.1}s)",
                i + 1,
                start.elapsed().as_secs_f64()
            ),
            Err(msg) => {
                println!(
                    "criterion {:2} FAIL — {name}: {msg} ({:.1}s)",
                    i + 1,
                    start.elapsed().as_secs_f64()
                );
                failures.push(format!("criterion {}: {msg}", i + 1));
            }
        }
    }
    assert!(failures.is_empty(), "failed acceptance criteria:\n{}", failures.join("\n"));
}
