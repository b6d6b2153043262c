use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use tcsf::bench::{emit_tables, run_bench, write_outputs, BenchConfig, Format, Setting};
use tcsf::estimators::{EstimatorConfig, EstimatorKind};
use tcsf::objectives::{objective_by_name, NoiseModel, NoisyObjective};
use tcsf::optimizer::{run_randomized, ScheduleConfig};
use tcsf::perturbations::{estimate_constants, PerturbationKind};
use tcsf::verify::{verify_suite, Suite};
use tcsf::{Result, Stream};

#[derive(Parser)]
#[command(
    name = "tcsf",
    version,
    about = "Zeroth-order gradient estimation benchmarks and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "./out")]
    out_dir: PathBuf,
    /// Format of the table printed to stdout: text, csv or json.
    #[arg(long, default_value = "text")]
    format: Format,
    /// Worker threads (0 uses every core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark suite and write report.csv, report.json, runs.jsonl.
    Bench {
        #[command(flatten)]
        common: Common,
        /// TOML configuration; defaults to the built-in suite.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        setting: Option<Setting>,
        /// Override the number of runs per cell.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Run a pinned-seed property suite; exits non-zero if any check fails.
    Verify {
        /// moments, bias, amse, trap, rates or all.
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the constants of a perturbation law.
    Constants {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// truncated-cauchy, t-projected-sphere, gaussian, rademacher or uniform:<lo>:<hi>.
        #[arg(long, default_value = "truncated-cauchy", value_parser = parse_kind)]
        kind: PerturbationKind,
    },
    /// Run one optimization trajectory and dump it.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "quadratic")]
        objective: String,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value = "type1")]
        noise: String,
        #[arg(long, default_value = "b-tcsf")]
        estimator: String,
        #[arg(long, default_value = "diminishing")]
        setting: Setting,
        #[arg(long, default_value_t = 3000)]
        horizon: usize,
    },
}

fn parse_kind(s: &str) -> std::result::Result<PerturbationKind, String> {
    PerturbationKind::parse(s).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ResolvedVerify {
    suite: Suite,
    seed: u64,
}

#[derive(Serialize)]
struct ResolvedConstants {
    seed: u64,
    dim: usize,
    samples: usize,
    kind: PerturbationKind,
}

#[derive(Serialize)]
struct ResolvedRun {
    seed: u64,
    objective: String,
    dim: usize,
    noise: NoiseModel,
    estimator: EstimatorKind,
    schedule: ScheduleConfig,
}

const DEFAULT_SEED: u64 = 20_240_501;

fn write_resolved<T: Serialize>(dir: &Path, cfg: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("resolved-config.toml"), toml::to_string(cfg)?)?;
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bench {
            common,
            config,
            setting,
            runs,
        } => {
            let mut cfg = match config {
                Some(p) => BenchConfig::from_toml(&std::fs::read_to_string(p)?)?,
                None => BenchConfig::default(),
            };
            if let Some(s) = common.seed {
                cfg.master_seed = s;
            }
            if let Some(s) = setting {
                cfg.setting = s;
            }
            if let Some(n) = runs {
                cfg.n_runs = n;
            }
            cfg.validate()?;
            if common.print_config {
                print!("{}", cfg.to_toml()?);
                return Ok(true);
            }
            let (report, records) = run_bench(&cfg, common.jobs)?;
            write_outputs(&common.out_dir, &cfg, &report, &records)?;
            print!("{}", emit_tables(&report, common.format)?);
            Ok(true)
        }
        Command::Verify { suite, common } => {
            let resolved = ResolvedVerify {
                suite,
                seed: common.seed.unwrap_or(DEFAULT_SEED),
            };
            if common.print_config {
                print!("{}", toml::to_string(&resolved)?);
                return Ok(true);
            }
            let report = with_pool(common.jobs, || verify_suite(suite, resolved.seed))?;
            write_resolved(&common.out_dir, &resolved)?;
            std::fs::write(
                common.out_dir.join("report.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            let mut csv = String::from("suite,name,measured,bound,margin,pass\n");
            for c in &report.checks {
                csv.push_str(&format!(
                    "{},\"{}\",{:.6e},{:.6e},{:.6e},{}\n",
                    c.suite, c.name, c.measured, c.bound, c.margin, c.pass
                ));
            }
            std::fs::write(common.out_dir.join("report.csv"), &csv)?;
            match common.format {
                Format::Text => print!("{}", report.render()),
                Format::Csv => print!("{csv}"),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(report.all_pass())
        }
        Command::Constants {
            common,
            dim,
            samples,
            kind,
        } => {
            let resolved = ResolvedConstants {
                seed: common.seed.unwrap_or(DEFAULT_SEED),
                dim,
                samples,
                kind,
            };
            if common.print_config {
                print!("{}", toml::to_string(&resolved)?);
                return Ok(true);
            }
            let consts = with_pool(common.jobs, || {
                estimate_constants(kind, dim, samples, &mut Stream::new(resolved.seed))
            })?;
            write_resolved(&common.out_dir, &resolved)?;
            let json = consts.to_json()?;
            std::fs::write(common.out_dir.join("report.json"), &json)?;
            match common.format {
                Format::Json => println!("{json}"),
                Format::Csv => {
                    println!("dim,c1,c11,c2,c2_se,c_bar,c_bar_se,n_samples");
                    let o = |v: Option<f64>| v.map(|v| format!("{v:.10e}")).unwrap_or_default();
                    println!(
                        "{},{},{},{:.10e},{:.3e},{:.10e},{:.3e},{}",
                        dim,
                        o(consts.c1),
                        o(consts.c11),
                        consts.c2,
                        consts.c2_se,
                        consts.c_bar,
                        consts.c_bar_se,
                        samples
                    );
                }
                Format::Text => {
                    println!("kind   {}", kind.label());
                    println!("dim    {dim}");
                    if let (Some(c1), Some(c11)) = (consts.c1, consts.c11) {
                        println!("c1     {c1:.10}");
                        println!("c11    {c11:.10}");
                    }
                    println!("c2     {:.6} ± {:.1e}", consts.c2, consts.c2_se);
                    println!("c_bar  {:.6} ± {:.1e}", consts.c_bar, consts.c_bar_se);
                }
            }
            Ok(true)
        }
        Command::Run {
            common,
            objective,
            dim,
            noise,
            estimator,
            setting,
            horizon,
        } => {
            let seed = common.seed.unwrap_or(DEFAULT_SEED);
            let spec = objective_by_name(&objective, dim)?;
            let noise = NoiseModel::parse(&noise)?;
            let kind = EstimatorKind::parse(&estimator)?;
            let schedule = setting.schedule(horizon, tcsf::optimizer::DEFAULT_EPSILON);
            let resolved = ResolvedRun {
                seed,
                objective,
                dim,
                noise,
                estimator: kind,
                schedule,
            };
            if common.print_config {
                print!("{}", toml::to_string(&resolved)?);
                return Ok(true);
            }
            let obj = NoisyObjective::new(spec.clone(), noise)?;
            let mut rng = Stream::new(seed);
            let x1 = spec.sample_point(None, &mut rng.split_named("init"));
            let cfg =
                EstimatorConfig::new(kind).with_perturbation(PerturbationKind::TProjectedSphere);
            let rec = run_randomized(&obj, cfg, &x1, &resolved.schedule, &mut rng)?;
            write_resolved(&common.out_dir, &resolved)?;
            std::fs::write(
                common.out_dir.join("runs.jsonl"),
                format!("{}\n", rec.to_json_line()?),
            )?;
            std::fs::write(
                common.out_dir.join("trajectory.json"),
                serde_json::to_string(&rec)?,
            )?;
            match common.format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&rec.summary())?),
                Format::Csv => {
                    println!("k,f_true,g_norm");
                    for p in &rec.trajectory {
                        println!("{},{:.6e},{:.6e}", p.k, p.f_true, p.g_norm);
                    }
                }
                Format::Text => {
                    println!("stop        {:?}", rec.stop_reason);
                    println!("iterations  {}", rec.iterations_used);
                    println!("final f     {:.6e}", rec.final_f_true);
                    println!("final x     {:?}", rec.final_x);
                }
            }
            Ok(true)
        }
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| tcsf::Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    pool.install(f)
}
