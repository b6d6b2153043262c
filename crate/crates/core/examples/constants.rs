//! Exact and Monte Carlo constants of the truncated Cauchy perturbation law.

use tcsf::perturbations::{c11, compute_normalization, estimate_constants, PerturbationKind};
use tcsf::Stream;

fn main() -> tcsf::Result<()> {
    let mut rng = Stream::new(1);
    println!(
        "{:>3} {:>12} {:>12} {:>10} {:>10}",
        "d", "c1", "c11", "c2", "c_bar"
    );
    for d in [1, 2, 4, 8] {
        let c = estimate_constants(PerturbationKind::TruncatedCauchyExact, d, 200_000, &mut rng)?;
        println!(
            "{d:>3} {:>12.8} {:>12.6} {:>10.5} {:>10.5}",
            compute_normalization(d),
            c11(d),
            c.c2,
            c.c_bar
        );
    }
    Ok(())
}
