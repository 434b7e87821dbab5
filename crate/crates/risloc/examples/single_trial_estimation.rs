//! One noisy estimation trial: simulate observations of the reference
//! deployment, estimate every channel parameter, and compare with truth.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use risloc::channel::{synthesize_params, PathCoefficients};
use risloc::estimator::{estimate_all, SearchConfig};
use risloc::geometry::elevation_azimuth;
use risloc::ris_design::{design_phases, AngularRegion};
use risloc::scenario::Scenario;
use risloc::signal::{simulate_observations, NoiseModel};

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
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let obs = simulate_observations(&eta, &scenario, &noise, &mut rng)?;

    let est = estimate_all(&obs, &scenario, &SearchConfig::default())?;
    let hat = &est.params;

    println!("path energies (AoD stage): {:?}", est.path_energies);
    println!("\n{:<22} {:>14} {:>14} {:>10}", "parameter", "true", "estimated", "|error|");
    let row = |name: &str, t: f64, e: f64| {
        println!("{name:<22} {t:>14.6e} {e:>14.6e} {:>10.2e}", (t - e).abs());
    };
    row("tau_d [s]", eta.direct.delay, hat.direct.delay);
    row("g_Ud", eta.direct.g_ue, hat.direct.g_ue);
    row("v_Ud", eta.direct.v_ue, hat.direct.v_ue);
    row("g_Bd", eta.direct.g_bs, hat.direct.g_bs);
    row("v_Bd", eta.direct.v_bs, hat.direct.v_bs);
    for (q, (t, e)) in eta.reflections.iter().zip(&hat.reflections).enumerate() {
        row(&format!("tau_r2,{} [s]", q + 1), t.delay, e.delay);
        row(&format!("g_Ur,{}", q + 1), t.g_ue, e.g_ue);
        row(&format!("v_Ur,{}", q + 1), t.v_ue, e.v_ue);
    }
    println!(
        "\ngain errors: direct {:.2e}, reflection {:.2e}",
        (eta.direct.gain - hat.direct.gain).norm(),
        (eta.reflections[0].gain - hat.reflections[0].gain).norm()
    );
    Ok(())
}
