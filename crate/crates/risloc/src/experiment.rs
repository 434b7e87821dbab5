//! Seeded Monte Carlo experiment driver: loads a TOML scenario config,
//! sweeps a noise level or path-loss exponent across several positioning
//! methods, and writes deterministic CSV result tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{synthesize_params, PathCoefficients};
use crate::error::{Error, Result};
use crate::estimator::{estimate_all_with, Matching, SearchConfig};
use crate::fisher::{fim_eta, invert_symmetric, FisherInfo};
use crate::fusion::{
    exip_refine, fuse_linear, fuse_multi_bs, fuse_multi_ue, identity_weight, position_from_direct,
    position_from_reflection, EstimateSource, PositionEstimate, SolverConfig,
};
use crate::geometry::{elevation_azimuth, ChannelParams, EulerRotation, Position3, PositionParams};
use crate::ris_design::{design_phases, AngularRegion};
use crate::scenario::{ArrayConfig, OfdmConfig, Scenario};
use crate::signal::{beta_direct_from_eta, simulate_observations, simulate_raw, NoiseModel};

/// Positioning method evaluated per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Per-path estimates fused by covariance-weighted linear combination.
    Proposed,
    /// Same pipeline, but paths matched to delays by smallest delay
    /// instead of energy ordering.
    DelayBased,
    /// EXIP refinement (weight = estimated Fisher information) started
    /// from the fused linear estimate.
    Exip,
    /// EXIP iteration with identity weight: plain geometric-mapping LS.
    GeometricMapping,
    /// Direct-path position only.
    DirectOnly,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Proposed => "proposed",
            Method::DelayBased => "delay_based",
            Method::Exip => "exip",
            Method::GeometricMapping => "geometric_mapping",
            Method::DirectOnly => "direct_only",
        };
        f.write_str(s)
    }
}

/// Which scenario quantity the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// 1/σ² in dB.
    InvSigma2Db,
    /// Direct-path loss exponent L_d.
    LossExpDirect,
}

/// Scenario section of the config file; every default is the reference
/// deployment, so an empty file runs the baseline scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_bs: usize,
    pub n_ris: usize,
    pub n_ue: usize,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub carrier_hz: f64,
    pub ris_positions: Vec<[f64; 3]>,
    /// Euler angles (α₁, α₂, α₃) of the UE array rotation, radians.
    pub rotation: [f64; 3],
    pub rician_k: f64,
    pub t_slots: usize,
    pub loss_exp_direct: f64,
    pub loss_exp_reflect: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = Scenario::table_i();
        Self {
            n_bs: s.arrays.n_bs,
            n_ris: s.arrays.n_ris,
            n_ue: s.arrays.n_ue,
            bandwidth_hz: s.ofdm.bandwidth_hz,
            n_subcarriers: s.ofdm.n_subcarriers,
            carrier_hz: s.ofdm.carrier_hz,
            ris_positions: s.ris_positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            rotation: [0.0, 0.0, 0.0],
            rician_k: s.rician_k,
            t_slots: s.t_slots,
            loss_exp_direct: s.loss_exp_direct,
            loss_exp_reflect: s.loss_exp_reflect,
        }
    }
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario> {
        Scenario::new(
            ArrayConfig { n_bs: self.n_bs, n_ris: self.n_ris, n_ue: self.n_ue },
            OfdmConfig {
                bandwidth_hz: self.bandwidth_hz,
                n_subcarriers: self.n_subcarriers,
                carrier_hz: self.carrier_hz,
            },
            self.ris_positions.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect(),
            EulerRotation::new(self.rotation[0], self.rotation[1], self.rotation[2]),
            self.rician_k,
            self.t_slots,
            self.loss_exp_direct,
            self.loss_exp_reflect,
        )
    }
}

fn default_sweep_values() -> Vec<f64> {
    vec![95.0, 100.0, 105.0, 110.0]
}
fn default_methods() -> Vec<Method> {
    vec![Method::Proposed]
}
fn default_ue_position() -> [f64; 3] {
    [50.0, 10.0, 20.0]
}
fn default_inv_sigma2_db() -> f64 {
    95.0
}
fn default_trials() -> usize {
    200
}
fn default_origin_list() -> Vec<[f64; 3]> {
    vec![[0.0, 0.0, 0.0]]
}
fn default_sweep_variable() -> SweepVariable {
    SweepVariable::InvSigma2Db
}

/// Experiment section of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_ue_position")]
    pub ue_position: [f64; 3],
    #[serde(default = "default_sweep_variable")]
    pub sweep_variable: SweepVariable,
    #[serde(default = "default_sweep_values")]
    pub sweep_values: Vec<f64>,
    /// Fixed noise level used while sweeping the path-loss exponent.
    #[serde(default = "default_inv_sigma2_db")]
    pub inv_sigma2_db: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// BS positions; entries beyond the first enable multi-BS fusion
    /// (RIS and UE coordinates are interpreted relative to the first BS).
    #[serde(default = "default_origin_list")]
    pub bs_positions: Vec<[f64; 3]>,
    /// Known inter-UE offsets Δ_l; entries beyond the first (which must
    /// be zero) enable multi-UE fusion.
    #[serde(default = "default_origin_list")]
    pub ue_offsets: Vec<[f64; 3]>,
    /// Simulate explicit uplink pilot slots instead of the averaged
    /// observation model; small values are for sanity runs only.
    #[serde(default)]
    pub raw_slots: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            ue_position: default_ue_position(),
            sweep_variable: default_sweep_variable(),
            sweep_values: default_sweep_values(),
            inv_sigma2_db: default_inv_sigma2_db(),
            methods: default_methods(),
            trials: default_trials(),
            seed: 0,
            bs_positions: default_origin_list(),
            ue_offsets: default_origin_list(),
            raw_slots: None,
        }
    }
}

/// Full experiment configuration (the parsed config file).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if e.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values must be nonempty".into()));
        }
        if e.methods.is_empty() {
            return Err(Error::Config("methods must be nonempty".into()));
        }
        if e.bs_positions.is_empty() || e.ue_offsets.is_empty() {
            return Err(Error::Config("bs_positions and ue_offsets must be nonempty".into()));
        }
        if e.ue_offsets[0] != [0.0, 0.0, 0.0] {
            return Err(Error::Config("the reference UE offset must be zero".into()));
        }
        self.scenario.build().map(|_| ())
    }
}

/// One CSV output row of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub method: Method,
    pub rmse_position_m: f64,
    /// √tr of the position CRB.
    pub crb_rmse_m: f64,
    /// Per-parameter RMSEs: τ_d, UE-side AoA cosines (d), BS-side AoD
    /// cosines (d), then (τ_r, UE-side AoA cosines) per reflection.
    pub param_rmse: Vec<f64>,
    /// Matching per-parameter CRB root-variances.
    pub param_crb: Vec<f64>,
    pub trials_used: usize,
    pub failures: usize,
}

/// One CSV output row of [`run_crb_table`].
#[derive(Debug, Clone)]
pub struct CrbRow {
    pub sweep_value: f64,
    pub crb_rmse_m: f64,
    pub param_crb: Vec<f64>,
    /// √tr of the per-path loose position bounds (direct first).
    pub bound_loose_m: Vec<f64>,
    /// √tr of the per-path tight position bounds (direct first).
    pub bound_tight_m: Vec<f64>,
}

/// SplitMix64 finalizer used to derive independent per-trial RNG streams.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for (master seed, sweep index, trial index): reproducible
/// per sweep point and independent across trials, so trials can run in
/// parallel without changing output bytes.
pub fn trial_seed(master: u64, sweep_index: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ sweep_index) ^ trial)
}

/// Deterministic ingredients of one sweep point: the scenario with the
/// sweep variable applied, the fixed RIS phases (designed toward the true
/// UE), and the resulting true channel parameters.
struct SweepPoint {
    scenario: Scenario,
    noise: NoiseModel,
    ue_true: Position3,
    eta_true: ChannelParams,
    xi_true: PositionParams,
}

fn build_sweep_point(
    cfg: &ExperimentConfig,
    sweep_value: f64,
    bs: &Position3,
    ue_offset: &Position3,
) -> Result<SweepPoint> {
    let mut sc = cfg.scenario.clone();
    let mut inv_db = cfg.experiment.inv_sigma2_db;
    match cfg.experiment.sweep_variable {
        SweepVariable::InvSigma2Db => inv_db = sweep_value,
        SweepVariable::LossExpDirect => sc.loss_exp_direct = sweep_value,
    }
    // Work in BS-local coordinates (the BS sits at the origin of the
    // channel model); positions shift, the rotation is unchanged.
    sc.ris_positions = sc
        .ris_positions
        .iter()
        .map(|p| [p[0] - bs.x, p[1] - bs.y, p[2] - bs.z])
        .collect();
    let scenario = sc.build()?;
    let p_global =
        Vector3::from_column_slice(&cfg.experiment.ue_position) + ue_offset;
    let ue_true = p_global - bs;

    // RIS phases: point-region design toward the true UE, fixed across
    // trials so the sweep point has a well-defined CRB.
    let mut phases = Vec::with_capacity(scenario.num_ris());
    for q in 0..scenario.num_ris() {
        let link = scenario.bs_ris_link(q)?;
        let (theta, phi) = elevation_azimuth(&(ue_true - scenario.ris_positions[q]))?;
        phases.push(design_phases(
            &AngularRegion::point(theta, phi),
            scenario.arrays.n_ris,
            (link.f_ris, link.v_ris),
        )?);
    }
    let coeffs = PathCoefficients::unit(scenario.num_ris());
    let eta_true = synthesize_params(&scenario, &ue_true, &coeffs, &phases)?;
    let xi_true = PositionParams {
        ue_position: ue_true,
        direct_gain: eta_true.direct.gain,
        reflection_gains: eta_true.reflections.iter().map(|r| r.gain).collect(),
    };
    Ok(SweepPoint {
        scenario,
        noise: NoiseModel::from_inv_sigma2_db(inv_db),
        ue_true,
        eta_true,
        xi_true,
    })
}

/// Per-parameter error layout: τ_d, (g,v) UE-side of d, (g,v) BS-side of
/// d, then per reflection (τ_r, UE-side (g,v)).
pub fn param_column_names(num_reflections: usize) -> Vec<String> {
    let mut names = vec!["tau_d_s".into(), "aoa_ue_d".into(), "aod_bs_d".into()];
    for q in 1..=num_reflections {
        names.push(format!("tau_r{q}_s"));
        names.push(format!("aoa_ue_r{q}"));
    }
    names
}

fn param_errors(est: &ChannelParams, truth: &ChannelParams) -> Vec<f64> {
    let mut e = vec![
        (est.direct.delay - truth.direct.delay).powi(2),
        (est.direct.g_ue - truth.direct.g_ue).powi(2)
            + (est.direct.v_ue - truth.direct.v_ue).powi(2),
        (est.direct.g_bs - truth.direct.g_bs).powi(2)
            + (est.direct.v_bs - truth.direct.v_bs).powi(2),
    ];
    for (a, b) in est.reflections.iter().zip(&truth.reflections) {
        e.push((a.delay - b.delay).powi(2));
        e.push((a.g_ue - b.g_ue).powi(2) + (a.v_ue - b.v_ue).powi(2));
    }
    e
}

fn param_crbs(eta_cov: &DMatrix<f64>, num_reflections: usize) -> Vec<f64> {
    let mut c = vec![
        eta_cov[(2, 2)].max(0.0).sqrt(),
        (eta_cov[(3, 3)] + eta_cov[(4, 4)]).max(0.0).sqrt(),
        (eta_cov[(5, 5)] + eta_cov[(6, 6)]).max(0.0).sqrt(),
    ];
    for q in 0..num_reflections {
        let o = 7 + 5 * q;
        c.push(eta_cov[(o + 2, o + 2)].max(0.0).sqrt());
        c.push((eta_cov[(o + 3, o + 3)] + eta_cov[(o + 4, o + 4)]).max(0.0).sqrt());
    }
    c
}

/// Per-path positions and their Remark-1 covariance bounds for one
/// estimated channel, plus the information pieces the refiners need.
struct PipelineOutput {
    eta_hat: ChannelParams,
    f_eta: DMatrix<f64>,
    direct: PositionEstimate,
    fused: PositionEstimate,
}

fn run_pipeline(
    point: &SweepPoint,
    matching: Matching,
    rng: &mut ChaCha8Rng,
    raw_slots: Option<usize>,
) -> Result<PipelineOutput> {
    let s = &point.scenario;
    let obs = match raw_slots {
        Some(t) => simulate_raw(&point.eta_true, s, &point.noise, t, rng)?,
        None => simulate_observations(&point.eta_true, s, &point.noise, rng)?,
    };
    let est = estimate_all_with(&obs, s, &SearchConfig::default(), matching)?;
    let eta_hat = est.params;

    let var = point
        .noise
        .effective_variance(s, beta_direct_from_eta(&eta_hat, s));
    let f_eta = fim_eta(&eta_hat, s, var)?;
    let eta_cov = invert_symmetric(&f_eta)?;

    // Linearize the Jacobian-dependent covariance bounds at the direct
    // path's own position estimate.
    let direct0 = position_from_direct(&eta_hat, &eta_cov, &s.rotation, Matrix3::identity())?;
    let xi_hat = PositionParams {
        ue_position: direct0.position,
        direct_gain: eta_hat.direct.gain,
        reflection_gains: eta_hat.reflections.iter().map(|r| r.gain).collect(),
    };
    let info = FisherInfo::new(&xi_hat, s, var)?;
    let bounds = info.per_path_bounds()?;

    let direct = PositionEstimate {
        cov: bounds.loose[0],
        ..direct0
    };
    let mut estimates = vec![direct.clone()];
    for q in 0..eta_hat.reflections.len() {
        estimates.push(position_from_reflection(
            &eta_hat,
            q,
            &s.ris_positions[q],
            &s.rotation,
            bounds.loose[q + 1],
        )?);
    }
    let fused = fuse_linear(&estimates)?;
    Ok(PipelineOutput { eta_hat, f_eta, direct, fused })
}

fn method_estimate(
    method: Method,
    point: &SweepPoint,
    pipeline: &PipelineOutput,
) -> Result<PositionEstimate> {
    match method {
        // Proposed and delay-based differ only in the path-matching rule
        // applied inside the pipeline; both fuse all paths.
        Method::Proposed | Method::DelayBased => Ok(pipeline.fused.clone()),
        Method::DirectOnly => Ok(pipeline.direct.clone()),
        Method::Exip | Method::GeometricMapping => {
            let init = PositionParams {
                ue_position: pipeline.fused.position,
                direct_gain: pipeline.eta_hat.direct.gain,
                reflection_gains: pipeline.eta_hat.reflections.iter().map(|r| r.gain).collect(),
            };
            let weight = match method {
                Method::Exip => pipeline.f_eta.clone(),
                _ => identity_weight(pipeline.eta_hat.reflections.len()),
            };
            let res = exip_refine(
                &pipeline.eta_hat,
                &weight,
                &init,
                &point.scenario,
                &SolverConfig::default(),
            )?;
            Ok(PositionEstimate {
                position: res.params.ue_position,
                cov: pipeline.fused.cov,
                source: EstimateSource::Fused,
            })
        }
    }
}

struct TrialRecord {
    /// Squared position error and squared per-parameter errors.
    outcome: Option<(f64, Vec<f64>)>,
}

/// All (BS, UE) pair sweep points share the same sweep value; a trial
/// runs every pair with one RNG stream, fuses across UEs then BSs, and
/// scores the reference UE position.
fn run_trial(
    method: Method,
    points: &[Vec<SweepPoint>], // indexed [bs][ue]
    bs_positions: &[Position3],
    ue_offsets: &[Position3],
    raw_slots: Option<usize>,
    seed: u64,
) -> TrialRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // All methods consume identical noise per seed: only the matching
    // rule and the fusion step differ, so method comparisons are paired.
    let matching = match method {
        Method::DelayBased => Matching::SmallestDelay,
        _ => Matching::Energy,
    };
    let mut per_bs: Vec<PositionEstimate> = Vec::with_capacity(points.len());
    let mut ref_params: Option<(ChannelParams, ChannelParams)> = None;

    for (b, bs_points) in points.iter().enumerate() {
        let mut per_ue: Vec<PositionEstimate> = Vec::with_capacity(bs_points.len());
        for (l, point) in bs_points.iter().enumerate() {
            let pipeline = match run_pipeline(point, matching, &mut rng, raw_slots) {
                Ok(p) => p,
                Err(_) => return TrialRecord { outcome: None },
            };
            let est = match method_estimate(method, point, &pipeline) {
                Ok(x) => x,
                Err(_) => return TrialRecord { outcome: None },
            };
            if b == 0 && l == 0 {
                ref_params = Some((pipeline.eta_hat.clone(), point.eta_true.clone()));
            }
            per_ue.push(est);
        }
        let fused_ue = if per_ue.len() == 1 {
            per_ue.pop().unwrap()
        } else {
            match fuse_multi_ue(&per_ue, ue_offsets) {
                // Keep the reference-UE estimate; others are offsets of it.
                Ok(mut v) => v.swap_remove(0),
                Err(_) => return TrialRecord { outcome: None },
            }
        };
        // Back to global coordinates.
        per_bs.push(PositionEstimate {
            position: fused_ue.position + bs_positions[b],
            cov: fused_ue.cov,
            source: EstimateSource::MultiBs(b),
        });
    }
    let final_est = if per_bs.len() == 1 {
        per_bs.pop().unwrap()
    } else {
        match fuse_multi_bs(&per_bs) {
            Ok(e) => e,
            Err(_) => return TrialRecord { outcome: None },
        }
    };

    let truth = points[0][0].ue_true + bs_positions[0];
    let err2 = (final_est.position - truth).norm_squared();
    let (eta_hat, eta_true) = ref_params.expect("reference pair always runs");
    TrialRecord { outcome: Some((err2, param_errors(&eta_hat, &eta_true))) }
}

/// Position CRB of the fully fused system: per-pair CRBs combined by
/// information addition.
fn fused_crb(points: &[Vec<SweepPoint>]) -> Result<Matrix3<f64>> {
    let mut info = Matrix3::zeros();
    for bs_points in points {
        for point in bs_points {
            let var = point.noise.effective_variance(
                &point.scenario,
                beta_direct_from_eta(&point.eta_true, &point.scenario),
            );
            let fi = FisherInfo::new(&point.xi_true, &point.scenario, var)?;
            let crb = fi.crb_position()?;
            info += crb.try_inverse().ok_or(Error::SingularCovariance)?;
        }
    }
    info.try_inverse().ok_or(Error::SingularCovariance)
}

fn build_all_points(cfg: &ExperimentConfig, sweep_value: f64) -> Result<Vec<Vec<SweepPoint>>> {
    let bs_positions: Vec<Position3> = cfg
        .experiment
        .bs_positions
        .iter()
        .map(|p| Vector3::from_column_slice(p))
        .collect();
    let ue_offsets: Vec<Position3> = cfg
        .experiment
        .ue_offsets
        .iter()
        .map(|p| Vector3::from_column_slice(p))
        .collect();
    bs_positions
        .iter()
        .map(|bs| {
            ue_offsets
                .iter()
                .map(|d| build_sweep_point(cfg, sweep_value, bs, d))
                .collect()
        })
        .collect()
}

/// Per-trial squared position errors for one sweep point and one method;
/// `None` marks a failed trial. Uses the same seeding as
/// [`run_experiment`], so results match its aggregated rows exactly.
pub fn per_trial_errors(
    cfg: &ExperimentConfig,
    sweep_index: usize,
    method: Method,
) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let sweep_value = *e
        .sweep_values
        .get(sweep_index)
        .ok_or_else(|| Error::Config("sweep_index out of range".into()))?;
    let points = build_all_points(cfg, sweep_value)?;
    let bs_positions: Vec<Position3> =
        e.bs_positions.iter().map(|p| Vector3::from_column_slice(p)).collect();
    let ue_offsets: Vec<Position3> =
        e.ue_offsets.iter().map(|p| Vector3::from_column_slice(p)).collect();
    Ok((0..e.trials)
        .into_par_iter()
        .map(|t| {
            run_trial(
                method,
                &points,
                &bs_positions,
                &ue_offsets,
                e.raw_slots,
                trial_seed(e.seed, sweep_index as u64, t as u64),
            )
            .outcome
            .map(|(err2, _)| err2)
        })
        .collect())
}

/// Run the full Monte Carlo experiment and return one row per
/// (sweep value × method), in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let bs_positions: Vec<Position3> =
        e.bs_positions.iter().map(|p| Vector3::from_column_slice(p)).collect();
    let ue_offsets: Vec<Position3> =
        e.ue_offsets.iter().map(|p| Vector3::from_column_slice(p)).collect();

    let mut rows = Vec::new();
    for (si, &sweep_value) in e.sweep_values.iter().enumerate() {
        let points = build_all_points(cfg, sweep_value)?;
        let crb = fused_crb(&points)?;
        let crb_rmse = crb.trace().max(0.0).sqrt();

        // Per-parameter CRBs of the reference (BS 0, UE 0) link.
        let ref_point = &points[0][0];
        let ref_var = ref_point.noise.effective_variance(
            &ref_point.scenario,
            beta_direct_from_eta(&ref_point.eta_true, &ref_point.scenario),
        );
        let ref_cov = invert_symmetric(&fim_eta(&ref_point.eta_true, &ref_point.scenario, ref_var)?)?;
        let p_crb = param_crbs(&ref_cov, ref_point.scenario.num_ris());

        for &method in &e.methods {
            let records: Vec<TrialRecord> = (0..e.trials)
                .into_par_iter()
                .map(|t| {
                    run_trial(
                        method,
                        &points,
                        &bs_positions,
                        &ue_offsets,
                        e.raw_slots,
                        trial_seed(e.seed, si as u64, t as u64),
                    )
                })
                .collect();
            let mut used = 0usize;
            let mut pos_sum = 0.0;
            let mut par_sum = vec![0.0; p_crb.len()];
            for r in &records {
                if let Some((err2, pe)) = &r.outcome {
                    used += 1;
                    pos_sum += err2;
                    for (acc, v) in par_sum.iter_mut().zip(pe) {
                        *acc += v;
                    }
                }
            }
            let rmse = if used > 0 { (pos_sum / used as f64).sqrt() } else { f64::NAN };
            let param_rmse = par_sum
                .iter()
                .map(|&s| if used > 0 { (s / used as f64).sqrt() } else { f64::NAN })
                .collect();
            rows.push(ResultRow {
                sweep_value,
                method,
                rmse_position_m: rmse,
                crb_rmse_m: crb_rmse,
                param_rmse,
                param_crb: p_crb.clone(),
                trials_used: used,
                failures: e.trials - used,
            });
        }
    }
    Ok(rows)
}

/// Evaluate the bounds across the sweep without Monte Carlo.
pub fn run_crb_table(cfg: &ExperimentConfig) -> Result<Vec<CrbRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &sweep_value in &cfg.experiment.sweep_values {
        let points = build_all_points(cfg, sweep_value)?;
        let crb = fused_crb(&points)?;
        let ref_point = &points[0][0];
        let var = ref_point.noise.effective_variance(
            &ref_point.scenario,
            beta_direct_from_eta(&ref_point.eta_true, &ref_point.scenario),
        );
        let info = FisherInfo::new(&ref_point.xi_true, &ref_point.scenario, var)?;
        let eta_cov = info.eta_covariance()?;
        let bounds = info.per_path_bounds()?;
        rows.push(CrbRow {
            sweep_value,
            crb_rmse_m: crb.trace().max(0.0).sqrt(),
            param_crb: param_crbs(&eta_cov, ref_point.scenario.num_ris()),
            bound_loose_m: bounds.loose.iter().map(|b| b.trace().max(0.0).sqrt()).collect(),
            bound_tight_m: bounds.tight.iter().map(|b| b.trace().max(0.0).sqrt()).collect(),
        });
    }
    Ok(rows)
}

fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.12e}")
    }
}

/// Serialize experiment rows as CSV (LF line endings, fixed columns).
pub fn experiment_csv(rows: &[ResultRow], num_reflections: usize) -> String {
    let mut out = String::from("sweep_value,method,rmse_position_m,crb_rmse_m");
    for name in param_column_names(num_reflections) {
        out.push_str(&format!(",rmse_{name},crb_{name}"));
    }
    out.push_str(",trials_used,failures\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}",
            fmt_float(r.sweep_value),
            r.method,
            fmt_float(r.rmse_position_m),
            fmt_float(r.crb_rmse_m)
        ));
        for (rm, cb) in r.param_rmse.iter().zip(&r.param_crb) {
            out.push_str(&format!(",{},{}", fmt_float(*rm), fmt_float(*cb)));
        }
        out.push_str(&format!(",{},{}\n", r.trials_used, r.failures));
    }
    out
}

/// Serialize CRB rows as CSV (LF line endings, fixed columns).
pub fn crb_csv(rows: &[CrbRow], num_reflections: usize) -> String {
    let mut out = String::from("sweep_value,crb_rmse_m");
    for name in param_column_names(num_reflections) {
        out.push_str(&format!(",crb_{name}"));
    }
    for p in 0..=num_reflections {
        let tag = if p == 0 { "d".to_string() } else { format!("r{p}") };
        out.push_str(&format!(",bound_loose_{tag}_m,bound_tight_{tag}_m"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{}", fmt_float(r.sweep_value), fmt_float(r.crb_rmse_m)));
        for c in &r.param_crb {
            out.push_str(&format!(",{}", fmt_float(*c)));
        }
        for (l, t) in r.bound_loose_m.iter().zip(&r.bound_tight_m) {
            out.push_str(&format!(",{},{}", fmt_float(*l), fmt_float(*t)));
        }
        out.push('\n');
    }
    out
}

/// Write CSV text to a path, honoring the `RISLOC_OUTPUT_DIR` directory
/// override (the file name is kept, the directory replaced).
pub fn write_csv(path: &Path, text: &str) -> Result<std::path::PathBuf> {
    let target = match std::env::var_os("RISLOC_OUTPUT_DIR") {
        Some(dir) => {
            let name = path
                .file_name()
                .ok_or_else(|| Error::Config("output path has no file name".into()))?;
            std::path::PathBuf::from(dir).join(name)
        }
        None => path.to_path_buf(),
    };
    if let Some(parent) = target.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&target, text)?;
    Ok(target)
}

/// Group rows by sweep value, preserving method order, for quick lookup
/// in tests and examples.
pub fn rows_by_method(rows: &[ResultRow]) -> BTreeMap<String, Vec<&ResultRow>> {
    let mut map: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        map.entry(r.method.to_string()).or_default().push(r);
    }
    map
}

/// The gain parameters the experiment driver tracks for the EXIP
/// initialization; re-exported for examples.
pub fn gains_of(eta: &ChannelParams) -> (Complex64, Vec<Complex64>) {
    (eta.direct.gain, eta.reflections.iter().map(|r| r.gain).collect())
}
