//! Multi-BS / multi-UE fusion: two base stations and two UEs with a
//! known inter-UE offset versus the single-BS single-UE baseline.

use risloc::experiment::{run_experiment, ExperimentConfig, Method};

fn main() -> risloc::Result<()> {
    // Modest array sizes keep this example quick; the fusion gain is the
    // point, not the absolute accuracy.
    let mut base = ExperimentConfig::default();
    base.scenario.n_bs = 36;
    base.scenario.n_ris = 64;
    base.scenario.n_ue = 16;
    base.experiment.sweep_values = vec![100.0, 110.0];
    base.experiment.trials = 20;
    base.experiment.methods = vec![Method::Proposed];
    base.experiment.seed = 5;

    let single = run_experiment(&base)?;

    let mut multi = base.clone();
    multi.experiment.bs_positions = vec![[0.0, 0.0, 0.0], [0.0, 10.0, 0.0]];
    multi.experiment.ue_offsets = vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
    let fused = run_experiment(&multi)?;

    println!(
        "{:>8} {:>18} {:>18} {:>14} {:>14}",
        "1/s2 dB", "single RMSE [m]", "multi RMSE [m]", "single CRB", "multi CRB"
    );
    for (s, m) in single.iter().zip(&fused) {
        println!(
            "{:>8.1} {:>18.4e} {:>18.4e} {:>14.4e} {:>14.4e}",
            s.sweep_value, s.rmse_position_m, m.rmse_position_m, s.crb_rmse_m, m.crb_rmse_m
        );
    }
    println!("\ntwo BSs x two UEs supply four independent looks at the same geometry,");
    println!("so both the achieved RMSE and the bound improve over the single link.");
    Ok(())
}
