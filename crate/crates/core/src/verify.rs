//! Pinned-seed property suites behind the `verify` subcommand. Each check
//! reports its measured value, the bound it is held to, and the margin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    amse_ratio, bias_probe, estimate_sigma_prime_sq, moment_bound_check, second_moment_probe,
    AmseBaseline, AmseInputs, BiasMethod, ProbeBudget,
};
use crate::error::Result;
use crate::estimators::{mean_estimate, EstimatorKind};
use crate::objectives::{
    make_quadratic, make_rosenbrock, make_saddle_test, NoiseModel, NoisyObjective,
};
use crate::optimizer::{
    check_schedule_conditions, horizon_schedule, run, run_observed, run_randomized,
    HorizonSchedule, ProblemConstants, ScheduleConfig,
};
use crate::perturbations::{estimate_constants, PerturbationKind};
use crate::rng::{derive_seed, label_hash, Stream};
use crate::stats::{norm_sq, par_vec_mean, Estimate, Running};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Moments,
    Bias,
    Amse,
    Trap,
    Rates,
    All,
}

impl std::str::FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "moments" => Suite::Moments,
            "bias" => Suite::Bias,
            "amse" => Suite::Amse,
            "trap" => Suite::Trap,
            "rates" => Suite::Rates,
            "all" => Suite::All,
            _ => return Err(crate::error::invalid(format!("unknown suite `{s}`"))),
        })
    }
}

/// One pass/fail line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    /// Signed distance to the bound; non-negative iff the check passes.
    pub margin: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn upper(
        suite: &str,
        name: String,
        measured: f64,
        bound: f64,
        slack: f64,
        detail: String,
    ) -> Self {
        let margin = bound + slack - measured;
        Self {
            suite: suite.into(),
            name,
            measured,
            bound,
            margin,
            pass: margin >= 0.0,
            detail,
        }
    }

    fn lower(suite: &str, name: String, measured: f64, bound: f64, detail: String) -> Self {
        let margin = measured - bound;
        Self {
            suite: suite.into(),
            name,
            measured,
            bound,
            margin,
            pass: margin >= 0.0,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:8} {:44} measured={:.4e} bound={:.4e} margin={:.3e} {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.suite,
                c.name,
                c.measured,
                c.bound,
                c.margin,
                c.detail
            ));
        }
        s
    }
}

/// Run the named suite with all seeds derived from `seed`.
pub fn verify_suite(which: Suite, seed: u64) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let stream = |name: &str| Stream::new(derive_seed(seed, &[label_hash(name)]));
    if matches!(which, Suite::Moments | Suite::All) {
        checks.extend(moments(&mut stream("moments"))?);
    }
    if matches!(which, Suite::Bias | Suite::All) {
        checks.extend(bias(&mut stream("bias"))?);
    }
    if matches!(which, Suite::Amse | Suite::All) {
        checks.extend(amse_checks(&mut stream("amse"))?);
    }
    if matches!(which, Suite::Trap | Suite::All) {
        checks.push(trap(&stream("trap"))?);
    }
    if matches!(which, Suite::Rates | Suite::All) {
        checks.extend(rates(&stream("rates"))?);
    }
    Ok(VerifyReport { seed, checks })
}

fn moments(rng: &mut Stream) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for d in [2usize, 4, 8] {
        for r in 1..=3u32 {
            let m = moment_bound_check(d, r, 1_000_000, rng)?;
            out.push(Check::upper(
                "moments",
                format!("E|u|^{} <= c11/(r+d), d={d}", 2 * r),
                m.estimate.mean,
                m.bound,
                3.0 * m.estimate.se,
                format!("se={:.2e}", m.estimate.se),
            ));
        }
    }
    Ok(out)
}

fn bias(rng: &mut Stream) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let consts = estimate_constants(PerturbationKind::TruncatedCauchyExact, 4, 1_000_000, rng)?;
    let c2 = consts.c2_estimate();

    let q = make_quadratic()?;
    let qobj = NoisyObjective::noiseless(q.clone());
    for p in 0..3 {
        let x = q.sample_point(None, rng);
        let m = mean_estimate(EstimatorKind::TcsfBalanced, &qobj, &x, 0.5, 1_000_000, rng)?;
        let worst = q
            .gradient(&x)
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let se = (m.se[i].powi(2) + (c2.se * g).powi(2)).sqrt();
                (m.mean[i] - c2.mean * g).abs() / se
            })
            .fold(0.0, f64::max);
        out.push(Check::upper(
            "bias",
            format!("quadratic scale recovery, point {p} (z-score)"),
            worst,
            4.0,
            0.0,
            format!("c2={:.5}", c2.mean),
        ));
    }

    let r = make_rosenbrock(4)?;
    let robj = NoisyObjective::noiseless(r);
    let x = [0.5; 4];
    let grid = [0.4, 0.2, 0.1, 0.05];
    let budget = ProbeBudget::adaptive(200_000, 12_800_000);
    let bal = bias_probe(
        EstimatorKind::TcsfBalanced,
        &robj,
        &x,
        &grid,
        budget,
        c2,
        BiasMethod::ControlVariate,
        rng,
    )?;
    let one = bias_probe(
        EstimatorKind::TcsfOneSided,
        &robj,
        &x,
        &grid,
        budget,
        c2,
        BiasMethod::ControlVariate,
        rng,
    )?;
    out.push(Check::lower(
        "bias",
        "balanced bias slope on rosenbrock".into(),
        bal.fitted_slope.unwrap_or(f64::NAN),
        1.7,
        format!(
            "norms={:?}",
            bal.points.iter().map(|p| p.norm).collect::<Vec<_>>()
        ),
    ));
    for (b, o) in bal.points.iter().zip(&one.points) {
        let se = (b.norm_se.powi(2) + o.norm_se.powi(2)).sqrt();
        out.push(Check::upper(
            "bias",
            format!("balanced <= one-sided bias at delta={}", b.delta),
            b.norm,
            o.norm,
            2.0 * se,
            format!("se={se:.2e}"),
        ));
    }

    let q1 = NoisyObjective::new(q.clone(), NoiseModel::Type1 { sigma: 5.0 })?;
    let xs = q.known_minimizer.clone().expect("quadratic minimizer");
    let sm = second_moment_probe(
        EstimatorKind::TcsfOneSided,
        &q1,
        &xs,
        &[1.0, 0.5, 0.25, 0.125],
        200_000,
        rng,
    )?;
    out.push(Check::upper(
        "bias",
        "second-moment slope >= -2.4".into(),
        -sm.fitted_slope,
        2.4,
        0.0,
        format!("slope={:.3}", sm.fitted_slope),
    ));
    out.push(Check::lower(
        "bias",
        "second-moment slope <= -1.6".into(),
        -sm.fitted_slope,
        1.6,
        format!("slope={:.3}", sm.fitted_slope),
    ));
    Ok(out)
}

/// `E[(u^1)^4]` for standard normal directions.
pub fn gaussian_fourth_marginal(n: usize, rng: &mut Stream) -> Result<Estimate> {
    use rand::Rng;
    let acc = par_vec_mean(n, 1, rng.fork_seed(), |rng, out| {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        out.push(z.powi(4));
        Ok(())
    })?;
    Ok(acc.estimate_scalar())
}

fn amse_checks(rng: &mut Stream) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let consts = estimate_constants(PerturbationKind::TruncatedCauchyExact, 2, 1_000_000, rng)?;
    out.push(Check::upper(
        "amse",
        "c_bar <= 1".into(),
        consts.c_bar,
        1.0,
        0.0,
        format!("se={:.2e}", consts.c_bar_se),
    ));
    let g4 = gaussian_fourth_marginal(1_000_000, rng)?;
    out.push(Check::upper(
        "amse",
        "gaussian fourth marginal moment = 3 (|z|)".into(),
        (g4.mean - 3.0).abs() / g4.se,
        3.0,
        0.0,
        format!("mean={:.4} se={:.2e}", g4.mean, g4.se),
    ));

    let saddle = make_saddle_test();
    let noisy = NoisyObjective::new(saddle.clone(), NoiseModel::Additive { sigma: 0.5 })?;
    let sp2 = estimate_sigma_prime_sq(&noisy, &[1.0, 0.0], 1e-3, 100_000, rng)?;
    let upsilon =
        check_schedule_conditions(&ScheduleConfig::power(1.0, 1.0, 1.0, 1.0 / 6.0, 1)).upsilon;
    let inputs = AmseInputs::at_minimizer(&saddle, 1.0, 1.0, sp2, upsilon, consts.c_bar)?;
    let rg = amse_ratio(AmseBaseline::Gsf, &inputs)?;
    let rs = amse_ratio(AmseBaseline::Spsa, &inputs)?;
    out.push(Check::lower(
        "amse",
        "ratio vs gsf > 1 (T != 0)".into(),
        rg,
        1.0 + f64::EPSILON,
        format!("c_bar={:.4}", consts.c_bar),
    ));
    out.push(Check::lower(
        "amse",
        "ratio vs spsa >= 1 (T != 0)".into(),
        rs,
        1.0,
        format!("sigma'^2={sp2:.4}"),
    ));

    let q = make_quadratic()?;
    let qi = AmseInputs::at_minimizer(&q, 1e4, 1.0, sp2, upsilon, consts.c_bar)?;
    for (b, name) in [(AmseBaseline::Gsf, "gsf"), (AmseBaseline::Spsa, "spsa")] {
        let r = amse_ratio(b, &qi)?;
        out.push(Check::upper(
            "amse",
            format!("ratio vs {name} = 1 (T = 0), |r-1|"),
            (r - 1.0).abs(),
            0.0,
            0.0,
            String::new(),
        ));
    }
    Ok(out)
}

/// Trap-avoidance setup: additive noise on the saddle objective.
pub const TRAP_NOISE_SIGMA: f64 = 0.5;
pub const TRAP_HORIZON: usize = 5000;
pub const TRAP_RUNS: usize = 200;

/// Fraction of runs started at the saddle that end within 0.2 of `(±1, 0)`.
pub fn trap_escape_fraction(root: &Stream, runs: usize) -> Result<f64> {
    let obj = NoisyObjective::new(
        make_saddle_test(),
        NoiseModel::Additive {
            sigma: TRAP_NOISE_SIGMA,
        },
    )?;
    let sched = ScheduleConfig::power(1.0, 1.0, 1.0, 1.0 / 6.0, TRAP_HORIZON).with_epsilon(0.0);
    let hits: Vec<bool> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let r = run(
                &obj,
                EstimatorKind::TcsfBalanced,
                &[0.0, 0.0],
                &sched,
                &mut root.split(i as u64),
            )?;
            let x = &r.final_x;
            Ok(((x[0].abs() - 1.0).powi(2) + x[1] * x[1]).sqrt() <= 0.2)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / runs as f64)
}

fn trap(root: &Stream) -> Result<Check> {
    let f = trap_escape_fraction(root, TRAP_RUNS)?;
    Ok(Check::lower(
        "trap",
        "escaped-and-converged fraction".into(),
        f,
        0.95,
        format!("{TRAP_RUNS} runs"),
    ))
}

/// `k^{2/3} E|x_k − x*|²` at the given checkpoints for the one-sided
/// estimator with `γ_k = γ0/k`, `δ_k = δ0/k^{1/6}` on the Type-1 quadratic.
pub fn rescaled_error(
    root: &Stream,
    gamma0: f64,
    delta0: f64,
    checkpoints: &[usize],
    runs: usize,
) -> Result<Vec<Estimate>> {
    let q = make_quadratic()?;
    let xs = q.known_minimizer.clone().expect("quadratic minimizer");
    let obj = NoisyObjective::new(q.clone(), NoiseModel::Type1 { sigma: 5.0 })?;
    let horizon = *checkpoints.iter().max().unwrap_or(&1);
    let sched = ScheduleConfig::power(gamma0, 1.0, delta0, 1.0 / 6.0, horizon).with_epsilon(0.0);
    let per_run: Vec<Vec<f64>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.split(i as u64);
            let x1 = q.sample_point(None, &mut rng);
            let mut errs = vec![f64::NAN; checkpoints.len()];
            let rec = run_observed(
                &obj,
                EstimatorKind::TcsfOneSided,
                &x1,
                &sched,
                &mut rng,
                false,
                |v| {
                    if let Some(j) = checkpoints.iter().position(|&c| c == v.k) {
                        errs[j] = v.x.iter().zip(&xs).map(|(a, b)| (a - b).powi(2)).sum();
                    }
                },
            )?;
            let _ = rec;
            Ok(errs)
        })
        .collect::<Result<_>>()?;
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let r: Running = per_run.iter().map(|e| e[j]).collect();
            let s = (k as f64).powf(2.0 / 3.0);
            Estimate::new(s * r.mean(), s * r.se())
        })
        .collect())
}

/// Mean `|∇f(x_R)|²` over `runs` seeds on the Type-1 quadratic with a
/// fixed-horizon schedule.
pub fn randomized_gradient_norm(
    root: &Stream,
    kind: EstimatorKind,
    which: HorizonSchedule,
    consts: &ProblemConstants,
    horizon: usize,
    runs: usize,
) -> Result<Estimate> {
    let q = make_quadratic()?;
    let obj = NoisyObjective::new(q.clone(), NoiseModel::Type1 { sigma: 5.0 })?;
    let sched = horizon_schedule(which, horizon, consts)?;
    let vals: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut init = root.split_named("init").split(i as u64);
            let x1 = q.sample_point(None, &mut init);
            let mut rng = root.split(i as u64);
            let r = run_randomized(&obj, kind, &x1, &sched, &mut rng)?;
            Ok(norm_sq(&q.gradient(
                r.selected_x_r.as_deref().expect("x_R selected"),
            )))
        })
        .collect::<Result<_>>()?;
    let r: Running = vals.into_iter().collect();
    Ok(r.estimate())
}

fn rates(root: &Stream) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let q = make_quadratic()?;
    let mut crng = root.split_named("constants");
    let c2 = estimate_constants(
        PerturbationKind::TruncatedCauchyExact,
        4,
        1_000_000,
        &mut crng,
    )?
    .c2;
    let l = q.lipschitz_grad.expect("quadratic L");
    let a = rescaled_error(&root.split_named("rate"), c2 / l, 1.0, &[1000, 10_000], 100)?;
    out.push(Check::upper(
        "rates",
        "k^(2/3) E|x_k-x*|^2: a(1e4) <= 2 a(1e3)".into(),
        a[1].mean,
        2.0 * a[0].mean,
        0.0,
        format!("a(1e3)={:.3e} gamma0={:.4}", a[0].mean, c2 / l),
    ));

    let tc = ProblemConstants::truncated_cauchy(4, c2, Some(l), None);
    let mut finals = Vec::new();
    for (kind, which, name) in [
        (
            EstimatorKind::TcsfOneSided,
            HorizonSchedule::OneSided,
            "one-sided",
        ),
        (
            EstimatorKind::TcsfBalanced,
            HorizonSchedule::Balanced,
            "balanced",
        ),
    ] {
        let vals: Vec<Estimate> = [100, 1000, 10_000]
            .iter()
            .map(|&n| {
                randomized_gradient_norm(
                    &root.split_named(name).split(n as u64),
                    kind,
                    which,
                    &tc,
                    n,
                    50,
                )
            })
            .collect::<Result<_>>()?;
        for w in 0..2 {
            out.push(Check::upper(
                "rates",
                format!(
                    "{name} E|grad f(x_R)|^2 non-increasing, N={}",
                    [100, 1000][w] * 10
                ),
                vals[w + 1].mean,
                vals[w].mean,
                0.0,
                format!("se={:.2e}", vals[w + 1].se),
            ));
        }
        finals.push(vals[2].mean);
    }
    out.push(Check::upper(
        "rates",
        "balanced <= one-sided at N=1e4".into(),
        finals[1],
        finals[0],
        0.0,
        String::new(),
    ));
    Ok(out)
}
