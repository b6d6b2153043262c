//! End-to-end acceptance criteria, one PASS/FAIL line each. Exits non-zero
//! if any criterion fails.

use std::time::Instant;

use tcsf::analysis::{
    amse_ratio, bias_probe, estimate_sigma_prime_sq, moment_bound_check, second_moment_probe,
    AmseBaseline, AmseInputs, BiasMethod, ProbeBudget,
};
use tcsf::bench::{run_bench, BenchConfig, Setting};
use tcsf::estimators::{mean_estimate, EstimatorKind};
use tcsf::objectives::{
    make_quadratic, make_rosenbrock, make_saddle_test, NoiseModel, NoisyObjective,
};
use tcsf::optimizer::{
    check_schedule_conditions, HorizonSchedule, ProblemConstants, ScheduleConfig,
};
use tcsf::perturbations::{estimate_constants, PerturbationKind};
use tcsf::rng::{derive_seed, label_hash};
use tcsf::verify::{
    gaussian_fourth_marginal, randomized_gradient_norm, rescaled_error, trap_escape_fraction,
};
use tcsf::{Result, Stream};

const SEED: u64 = 20_240_501;

fn stream(name: &str) -> Stream {
    Stream::new(derive_seed(SEED, &[label_hash(name)]))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn moment_bound() -> Result<Outcome> {
    let mut rng = stream("moment-bound");
    let mut worst = f64::INFINITY;
    for d in [2, 4, 8] {
        for r in 1..=3 {
            let m = moment_bound_check(d, r, 1_000_000, &mut rng)?;
            worst = worst.min(m.bound + 3.0 * m.estimate.se - m.estimate.mean);
        }
    }
    outcome(worst >= 0.0, format!("smallest margin {worst:.3e}"))
}

fn scale_recovery() -> Result<Outcome> {
    let mut rng = stream("scale-recovery");
    let c2 = estimate_constants(
        PerturbationKind::TruncatedCauchyExact,
        4,
        1_000_000,
        &mut rng,
    )?
    .c2_estimate();
    let q = make_quadratic()?;
    let obj = NoisyObjective::noiseless(q.clone());
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x = q.sample_point(None, &mut rng);
        let m = mean_estimate(
            EstimatorKind::TcsfBalanced,
            &obj,
            &x,
            0.5,
            1_000_000,
            &mut rng,
        )?;
        for (i, g) in q.gradient(&x).iter().enumerate() {
            let se = (m.se[i].powi(2) + (c2.se * g).powi(2)).sqrt();
            worst = worst.max((m.mean[i] - c2.mean * g).abs() / se);
        }
    }
    outcome(worst <= 4.0, format!("largest z-score {worst:.2}"))
}

fn bias_order() -> Result<Outcome> {
    let mut rng = stream("bias-order");
    let c2 = estimate_constants(
        PerturbationKind::TruncatedCauchyExact,
        4,
        1_000_000,
        &mut rng,
    )?
    .c2_estimate();
    let obj = NoisyObjective::noiseless(make_rosenbrock(4)?);
    let x = [0.5; 4];
    let grid = [0.4, 0.2, 0.1, 0.05];
    let budget = ProbeBudget::adaptive(200_000, 12_800_000);
    let bal = bias_probe(
        EstimatorKind::TcsfBalanced,
        &obj,
        &x,
        &grid,
        budget,
        c2,
        BiasMethod::ControlVariate,
        &mut rng,
    )?;
    let one = bias_probe(
        EstimatorKind::TcsfOneSided,
        &obj,
        &x,
        &grid,
        budget,
        c2,
        BiasMethod::ControlVariate,
        &mut rng,
    )?;
    let slope = bal.fitted_slope.unwrap_or(f64::NAN);
    let ordered = bal
        .points
        .iter()
        .zip(&one.points)
        .all(|(b, o)| b.norm <= o.norm + 2.0 * (b.norm_se.powi(2) + o.norm_se.powi(2)).sqrt());
    outcome(
        slope >= 1.7 && ordered,
        format!("balanced slope {slope:.3}, ordered within SE: {ordered}"),
    )
}

fn second_moment() -> Result<Outcome> {
    let mut rng = stream("second-moment");
    let q = make_quadratic()?;
    let x = q.known_minimizer.clone().expect("minimizer");
    let obj = NoisyObjective::new(q, NoiseModel::Type1 { sigma: 5.0 })?;
    let r = second_moment_probe(
        EstimatorKind::TcsfOneSided,
        &obj,
        &x,
        &[1.0, 0.5, 0.25, 0.125],
        200_000,
        &mut rng,
    )?;
    let s = r.fitted_slope;
    outcome((-2.4..=-1.6).contains(&s), format!("slope {s:.3}"))
}

fn amse_remarks() -> Result<Outcome> {
    let mut rng = stream("amse");
    let consts = estimate_constants(
        PerturbationKind::TruncatedCauchyExact,
        2,
        1_000_000,
        &mut rng,
    )?;
    let g4 = gaussian_fourth_marginal(1_000_000, &mut rng)?;
    let saddle = make_saddle_test();
    let noisy = NoisyObjective::new(saddle.clone(), NoiseModel::Additive { sigma: 0.5 })?;
    let sp2 = estimate_sigma_prime_sq(&noisy, &[1.0, 0.0], 1e-3, 100_000, &mut rng)?;
    let ups =
        check_schedule_conditions(&ScheduleConfig::power(1.0, 1.0, 1.0, 1.0 / 6.0, 1)).upsilon;
    let with_t = AmseInputs::at_minimizer(&saddle, 1.0, 1.0, sp2, ups, consts.c_bar)?;
    let no_t = AmseInputs::at_minimizer(&make_quadratic()?, 1e4, 1.0, sp2, ups, consts.c_bar)?;
    let (rg, rs) = (
        amse_ratio(AmseBaseline::Gsf, &with_t)?,
        amse_ratio(AmseBaseline::Spsa, &with_t)?,
    );
    let (qg, qs) = (
        amse_ratio(AmseBaseline::Gsf, &no_t)?,
        amse_ratio(AmseBaseline::Spsa, &no_t)?,
    );
    let pass = consts.c_bar <= 1.0
        && (g4.mean - 3.0).abs() <= 3.0 * g4.se
        && rg > 1.0
        && rs >= 1.0
        && qg == 1.0
        && qs == 1.0;
    outcome(
        pass,
        format!(
            "c_bar {:.4}, E z^4 {:.4}, T!=0 ratios {rg:.3}/{rs:.3}, T=0 ratios {qg}/{qs}",
            consts.c_bar, g4.mean
        ),
    )
}

fn benchmark() -> Result<(Outcome, Outcome)> {
    let mut ordinal_fail = Vec::new();
    let mut rastrigin_t1 = f64::NAN;
    let mut iter_fail = Vec::new();
    let mut iter_rows = 0;
    for setting in [Setting::Diminishing, Setting::Constant] {
        let cfg = BenchConfig {
            setting,
            master_seed: SEED,
            ..BenchConfig::default()
        };
        let (report, _) = run_bench(&cfg, 0)?;
        for obj in &cfg.objectives {
            for noise in &cfg.noises {
                let model = NoiseModel::parse(noise)?;
                let type1 = matches!(model, NoiseModel::Type1 { .. });
                let noise = tcsf::bench::noise_label(&model);
                let err = |e: &str| {
                    report
                        .cell(obj, &noise, e)
                        .and_then(|c| c.mean_abs_error)
                        .unwrap_or(f64::NAN)
                };
                let best_rival = err("gsf").min(err("rdsa"));
                for e in ["tcsf", "b-tcsf"] {
                    if !(err(e) < best_rival) {
                        ordinal_fail.push(format!("{}/{obj}/{noise}/{e}", setting.label()));
                    }
                }
                if setting == Setting::Diminishing && obj == "rastrigin" && type1 {
                    rastrigin_t1 = err("tcsf");
                }
                if setting == Setting::Constant
                    && type1
                    && (obj == "rastrigin" || obj == "quadratic")
                {
                    let it = |e: &str| {
                        report
                            .cell(obj, &noise, e)
                            .map(|c| c.mean_iterations)
                            .unwrap_or(f64::NAN)
                    };
                    iter_rows += 1;
                    let ok = it("b-tcsf") < it("tcsf")
                        && it("tcsf") < it("gsf")
                        && it("tcsf") < it("rdsa");
                    if !ok {
                        iter_fail.push(format!(
                            "{obj}: b-tcsf {:.1} tcsf {:.1} gsf {:.1} rdsa {:.1}",
                            it("b-tcsf"),
                            it("tcsf"),
                            it("gsf"),
                            it("rdsa")
                        ));
                    }
                }
            }
        }
    }
    let six = Outcome {
        pass: ordinal_fail.is_empty() && rastrigin_t1 <= 0.01,
        detail: format!(
            "rastrigin/type1 tcsf error {rastrigin_t1:.3e}; {} ordinal violations {:?}",
            ordinal_fail.len(),
            ordinal_fail.iter().take(4).collect::<Vec<_>>()
        ),
    };
    let seven = Outcome {
        pass: iter_rows == 2 && iter_fail.is_empty(),
        detail: format!("{iter_rows} rows checked, violations {iter_fail:?}"),
    };
    Ok((six, seven))
}

fn trap() -> Result<Outcome> {
    let f = trap_escape_fraction(&stream("trap"), 200)?;
    outcome(f >= 0.95, format!("fraction {f:.3}"))
}

fn rate() -> Result<Outcome> {
    let q = make_quadratic()?;
    let mut crng = stream("rate-constants");
    let c2 = estimate_constants(
        PerturbationKind::TruncatedCauchyExact,
        4,
        1_000_000,
        &mut crng,
    )?
    .c2;
    let gamma0 = c2 / q.lipschitz_grad.expect("L");
    let a = rescaled_error(&stream("rate"), gamma0, 1.0, &[1000, 10_000], 100)?;
    outcome(
        a[1].mean <= 2.0 * a[0].mean,
        format!(
            "a(1e3) {:.3e}, a(1e4) {:.3e}, gamma0 {gamma0:.4}",
            a[0].mean, a[1].mean
        ),
    )
}

fn trend() -> Result<Outcome> {
    let q = make_quadratic()?;
    let mut crng = stream("trend-constants");
    let c2 = estimate_constants(
        PerturbationKind::TruncatedCauchyExact,
        4,
        1_000_000,
        &mut crng,
    )?
    .c2;
    let tc = ProblemConstants::truncated_cauchy(4, c2, q.lipschitz_grad, None);
    let mut means = Vec::new();
    for (kind, which) in [
        (EstimatorKind::TcsfOneSided, HorizonSchedule::OneSided),
        (EstimatorKind::TcsfBalanced, HorizonSchedule::Balanced),
    ] {
        let v: Vec<f64> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| {
                let root = stream(kind.label()).split(n as u64);
                randomized_gradient_norm(&root, kind, which, &tc, n, 50).map(|e| e.mean)
            })
            .collect::<Result<_>>()?;
        means.push(v);
    }
    let mono = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let pass = mono(&means[0]) && mono(&means[1]) && means[1][2] <= means[0][2];
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|m| format!("{m:.2e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        pass,
        format!(
            "one-sided [{}], balanced [{}]",
            fmt(&means[0]),
            fmt(&means[1])
        ),
    )
}

fn determinism() -> Result<Outcome> {
    let dir = std::env::temp_dir().join(format!("tcsf-acceptance-{}", std::process::id()));
    let cfg = BenchConfig {
        n_runs: 3,
        master_seed: SEED,
        ..BenchConfig::default()
    };
    std::fs::create_dir_all(&dir)?;
    let cfg_path = dir.join("bench.toml");
    std::fs::write(&cfg_path, cfg.to_toml()?)?;
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.join(format!("run{i}"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_tcsf"))
            .args(["bench", "--format", "csv", "--config"])
            .arg(&cfg_path)
            .arg("--out-dir")
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()?;
        if !status.success() {
            return outcome(false, format!("bench exited with {status}"));
        }
        outputs.push(std::fs::read(out.join("report.csv"))?);
    }
    std::fs::remove_dir_all(&dir)?;
    outcome(
        outputs[0] == outputs[1] && !outputs[0].is_empty(),
        format!("{} bytes", outputs[0].len()),
    )
}

fn main() {
    let mut all = true;
    let mut report = |id: usize, name: &str, r: Result<Outcome>, t: Instant| {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= pass;
        println!(
            "{} criterion {id:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    };
    let t = Instant::now();
    report(1, "moment bound", moment_bound(), t);
    let t = Instant::now();
    report(2, "scale recovery", scale_recovery(), t);
    let t = Instant::now();
    report(3, "bias order", bias_order(), t);
    let t = Instant::now();
    report(4, "second-moment scaling", second_moment(), t);
    let t = Instant::now();
    report(5, "amse ratios", amse_remarks(), t);
    let t = Instant::now();
    let (six, seven) = match benchmark() {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(tcsf::Error::InvalidArgument(e.to_string())), Err(e)),
    };
    report(6, "benchmark ordering", six, t);
    report(7, "iteration ordering", seven, t);
    let t = Instant::now();
    report(8, "trap avoidance", trap(), t);
    let t = Instant::now();
    report(9, "rate exponent", rate(), t);
    let t = Instant::now();
    report(10, "non-asymptotic trend", trend(), t);
    let t = Instant::now();
    report(11, "determinism", determinism(), t);
    if !all {
        std::process::exit(1);
    }
}
