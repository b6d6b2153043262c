//! Bias of the one-sided and balanced estimators as the smoothing radius shrinks.

use tcsf::analysis::{bias_probe, BiasMethod, ProbeBudget};
use tcsf::estimators::EstimatorKind;
use tcsf::objectives::{make_rosenbrock, NoisyObjective};
use tcsf::perturbations::{estimate_constants, PerturbationKind};
use tcsf::Stream;

fn main() -> tcsf::Result<()> {
    let mut rng = Stream::new(4);
    let c2 = estimate_constants(
        PerturbationKind::TruncatedCauchyExact,
        4,
        1_000_000,
        &mut rng,
    )?
    .c2_estimate();
    let obj = NoisyObjective::noiseless(make_rosenbrock(4)?);
    let grid = [0.4, 0.2, 0.1, 0.05];
    for kind in [EstimatorKind::TcsfOneSided, EstimatorKind::TcsfBalanced] {
        let r = bias_probe(
            kind,
            &obj,
            &[0.5; 4],
            &grid,
            ProbeBudget::fixed(200_000),
            c2,
            BiasMethod::ControlVariate,
            &mut rng,
        )?;
        println!(
            "{}: slope {:.3}",
            kind.label(),
            r.fitted_slope.unwrap_or(f64::NAN)
        );
        for p in &r.points {
            println!(
                "  delta={:<5} |bias|={:.4e} ± {:.1e}",
                p.delta, p.norm, p.norm_se
            );
        }
    }
    Ok(())
}
