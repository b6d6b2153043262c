//! One descent run on the noisy Rastrigin function.

use tcsf::estimators::{EstimatorConfig, EstimatorKind};
use tcsf::objectives::{make_rastrigin, NoiseModel, NoisyObjective};
use tcsf::optimizer::{run_randomized, ScheduleConfig};
use tcsf::perturbations::PerturbationKind;
use tcsf::Stream;

fn main() -> tcsf::Result<()> {
    let obj = NoisyObjective::new(make_rastrigin(4)?, NoiseModel::Type3)?;
    let sched = ScheduleConfig::benchmark_diminishing(1000);
    let cfg = EstimatorConfig::new(EstimatorKind::TcsfBalanced)
        .with_perturbation(PerturbationKind::TProjectedSphere);
    let rec = run_randomized(
        &obj,
        cfg,
        &[0.4, -0.3, 0.2, 0.1],
        &sched,
        &mut Stream::new(3),
    )?;
    for p in rec.trajectory.iter().step_by(100) {
        println!("k={:5} f={:.5e} |g|={:.3e}", p.k, p.f_true, p.g_norm);
    }
    println!(
        "stop {:?} after {} iterations, f = {:.5e}",
        rec.stop_reason, rec.iterations_used, rec.final_f_true
    );
    println!(
        "x_R = {:?} (R = {:?})",
        rec.selected_x_r.unwrap_or_default(),
        rec.selected_r
    );
    Ok(())
}
