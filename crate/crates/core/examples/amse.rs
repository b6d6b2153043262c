//! Asymptotic mean-square error of the balanced estimator against the
//! Gaussian and Rademacher baselines.

use tcsf::analysis::{amse, amse_ratio, AmseBaseline, AmseInputs};
use tcsf::objectives::make_saddle_test;
use tcsf::optimizer::{check_schedule_conditions, ScheduleConfig};
use tcsf::perturbations::{estimate_constants, PerturbationKind};
use tcsf::Stream;

fn main() -> tcsf::Result<()> {
    let spec = make_saddle_test();
    let c = estimate_constants(
        PerturbationKind::TruncatedCauchyExact,
        2,
        1_000_000,
        &mut Stream::new(5),
    )?;
    let ups =
        check_schedule_conditions(&ScheduleConfig::power(1.0, 1.0, 1.0, 1.0 / 6.0, 1)).upsilon;
    let inputs = AmseInputs::at_minimizer(&spec, 1.0, 1.0, 0.5, ups, c.c_bar)?;
    let v = amse(&inputs)?;
    println!("c_bar = {:.4}", c.c_bar);
    println!(
        "amse = {:.4e} (bias {:.4e}, variance {:.4e})",
        v.value, v.bias_part, v.variance_part
    );
    println!(
        "ratio vs gsf  = {:.3}",
        amse_ratio(AmseBaseline::Gsf, &inputs)?
    );
    println!(
        "ratio vs spsa = {:.3}",
        amse_ratio(AmseBaseline::Spsa, &inputs)?
    );
    Ok(())
}
