//! A reduced benchmark printed as a text table.

use tcsf::bench::{emit_tables, run_bench, BenchConfig, Format};

fn main() -> tcsf::Result<()> {
    let cfg = BenchConfig {
        n_runs: 10,
        noises: vec!["type3".into()],
        ..BenchConfig::default()
    };
    let (report, _) = run_bench(&cfg, 0)?;
    print!("{}", emit_tables(&report, Format::Text)?);
    Ok(())
}
