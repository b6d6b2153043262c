//! Compare the averaged estimates of every estimator with the true gradient.

use tcsf::estimators::{mean_estimate, EstimatorKind};
use tcsf::objectives::{make_rosenbrock, NoisyObjective};
use tcsf::Stream;

fn main() -> tcsf::Result<()> {
    let spec = make_rosenbrock(4)?;
    let obj = NoisyObjective::noiseless(spec.clone());
    let x = [0.5, -0.3, 0.8, 0.1];
    let mut rng = Stream::new(2);
    println!("true gradient  {:?}", spec.gradient(&x));
    let kinds = [
        EstimatorKind::TcsfOneSided,
        EstimatorKind::TcsfBalanced,
        EstimatorKind::TcsfCrn,
        EstimatorKind::Gsf,
        EstimatorKind::Spsa,
        EstimatorKind::RdsaUniform { eta: 5.0 },
    ];
    for kind in kinds {
        let m = mean_estimate(kind, &obj, &x, 0.05, 100_000, &mut rng)?;
        let mean: Vec<String> = m.mean.iter().map(|v| format!("{v:9.4}")).collect();
        println!(
            "{:>8}  [{}]  se {:.1e}",
            kind.label(),
            mean.join(", "),
            m.norm_se()
        );
    }
    println!("truncated Cauchy estimators recover c2 times the gradient; the others recover the gradient");
    Ok(())
}
