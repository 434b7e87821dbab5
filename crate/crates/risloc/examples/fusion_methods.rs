//! Compare the positioning methods on a single noisy trial: per-path
//! estimates, covariance-weighted fusion, EXIP refinement, and the
//! identity-weight geometric-mapping baseline.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use risloc::channel::{synthesize_params, PathCoefficients};
use risloc::estimator::{estimate_all, SearchConfig};
use risloc::geometry::elevation_azimuth;
use risloc::ris_design::{design_phases, AngularRegion};
use risloc::fisher::{fim_eta, FisherInfo};
use risloc::fusion::{
    exip_refine, fuse_linear, identity_weight, position_from_direct, position_from_reflection,
    PositionEstimate, SolverConfig,
};
use risloc::geometry::PositionParams;
use risloc::scenario::Scenario;
use risloc::signal::{beta_direct_from_eta, simulate_observations, NoiseModel};

fn main() -> risloc::Result<()> {
    let scenario = Scenario::table_i();
    let p_ue = Vector3::new(50.0, 10.0, 20.0);
    // Point the RIS reflection at the UE so both paths carry useful power.
    let link = scenario.bs_ris_link(0)?;
    let (theta, phi) = elevation_azimuth(&(p_ue - scenario.ris_positions[0]))?;
    let phases = design_phases(
        &AngularRegion::point(theta, phi),
        scenario.arrays.n_ris,
        (link.f_ris, link.v_ris),
    )?;
    let eta = synthesize_params(
        &scenario,
        &p_ue,
        &PathCoefficients::unit(scenario.num_ris()),
        &[phases],
    )?;
    let noise = NoiseModel::from_inv_sigma2_db(110.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let obs = simulate_observations(&eta, &scenario, &noise, &mut rng)?;
    let hat = estimate_all(&obs, &scenario, &SearchConfig::default())?.params;

    // Fisher information at the estimate supplies the WLS weight and the
    // per-path covariance bounds used for fusion.
    let var = noise.effective_variance(&scenario, beta_direct_from_eta(&hat, &scenario));
    let f_eta = fim_eta(&hat, &scenario, var)?;
    let eta_cov = f_eta.clone().try_inverse().expect("FIM invertible");

    let direct = position_from_direct(&hat, &eta_cov, &scenario.rotation, Default::default())?;
    let xi_hat = PositionParams {
        ue_position: direct.position,
        direct_gain: hat.direct.gain,
        reflection_gains: hat.reflections.iter().map(|r| r.gain).collect(),
    };
    let bounds = FisherInfo::new(&xi_hat, &scenario, var)?.per_path_bounds()?;

    let mut estimates = vec![PositionEstimate { cov: bounds.loose[0], ..direct }];
    for q in 0..hat.reflections.len() {
        estimates.push(position_from_reflection(
            &hat,
            q,
            &scenario.ris_positions[q],
            &scenario.rotation,
            bounds.loose[q + 1],
        )?);
    }
    let fused = fuse_linear(&estimates)?;

    let init = PositionParams {
        ue_position: fused.position,
        direct_gain: hat.direct.gain,
        reflection_gains: hat.reflections.iter().map(|r| r.gain).collect(),
    };
    let solver = SolverConfig::default();
    let exip = exip_refine(&hat, &f_eta, &init, &scenario, &solver)?;
    let geo = exip_refine(&hat, &identity_weight(hat.reflections.len()), &init, &scenario, &solver)?;

    let err = |p: &Vector3<f64>| (p - p_ue).norm();
    println!("true position: [{:.3}, {:.3}, {:.3}]", p_ue.x, p_ue.y, p_ue.z);
    println!("{:<26} {:>12}", "method", "error [m]");
    println!("{:<26} {:>12.4e}", "direct path only", err(&estimates[0].position));
    for (q, e) in estimates[1..].iter().enumerate() {
        println!("{:<26} {:>12.4e}", format!("reflection path {}", q + 1), err(&e.position));
    }
    println!("{:<26} {:>12.4e}", "fused (proposed)", err(&fused.position));
    println!(
        "{:<26} {:>12.4e}  ({} iters)",
        "EXIP refinement",
        err(&exip.params.ue_position),
        exip.iterations
    );
    println!(
        "{:<26} {:>12.4e}  ({} iters)",
        "geometric mapping (W=I)",
        err(&geo.params.ue_position),
        geo.iterations
    );
    Ok(())
}
