//! Escaping a saddle point under additive observation noise.

use tcsf::verify::{trap_escape_fraction, TRAP_NOISE_SIGMA};
use tcsf::Stream;

fn main() -> tcsf::Result<()> {
    let f = trap_escape_fraction(&Stream::new(6), 200)?;
    println!(
        "noise sigma {TRAP_NOISE_SIGMA}: {:.1}% of runs from the saddle reach a minimum",
        100.0 * f
    );
    Ok(())
}
