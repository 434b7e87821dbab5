//! Design RIS phase profiles: a point design reaching the full coherent
//! gain of sqrt(M), and a region design compared against random phases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risloc::channel::RisPhase;
use risloc::ris_design::{design_phases, reflection_gain, AngularRegion};

const M: usize = 400;

fn main() -> risloc::Result<()> {
    let incident = (0.3, -0.5); // BS->RIS arrival cosines (f, v)

    // Point design: serve a single known direction.
    let theta = 1.0f64;
    let phi = 0.25f64;
    let departure = (theta.sin() * phi.cos(), theta.cos());
    let phases = design_phases(&AngularRegion::point(theta, phi), M, incident)?;
    let gain = reflection_gain(&phases, M, incident, departure)?;
    println!("point design:  gain = {gain:.9}  (sqrt(M) = {})", (M as f64).sqrt());

    // Region design: serve an elevation/azimuth sector.
    let region = AngularRegion::new(0.9, 1.3, -0.4, 0.4)?;
    let designed = design_phases(&region, M, incident)?;
    let targets = region.cosine_grid();
    let avg = |p: &RisPhase| -> risloc::Result<f64> {
        let mut s = 0.0;
        for &d in &targets {
            s += reflection_gain(p, M, incident, d)?.powi(2);
        }
        Ok(s / targets.len() as f64)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut random_mean = 0.0;
    let draws = 200;
    for _ in 0..draws {
        let rp = RisPhase {
            shifts: (0..M)
                .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect(),
        };
        random_mean += avg(&rp)?;
    }
    random_mean /= draws as f64;

    let designed_avg = avg(&designed)?;
    println!("region design: mean |gain|^2 = {designed_avg:.2}");
    println!("random phases: mean |gain|^2 = {random_mean:.2} (over {draws} draws)");
    println!("improvement:   {:.1}x", designed_avg / random_mean);
    Ok(())
}
