//! Stochastic gradient descent driven by any estimator:
//! `x_{k+1} = x_k − γ_k g_k`, with step-size and smoothing schedules,
//! epsilon stopping, and the randomized-iterate output `x_R`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::estimators::{estimate_raw, EstimatorConfig};
use crate::objectives::{NoiseModel, NoisyObjective, ObjectiveSpec};
use crate::perturbations::c11;
use crate::rng::Stream;
use crate::stats::{norm, Running};

/// Step-size rule `γ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepRule {
    /// `gamma0 / k^alpha`.
    Power {
        gamma0: f64,
        alpha: f64,
    },
    Constant {
        gamma: f64,
    },
}

/// Smoothing-radius rule `δ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SmoothingRule {
    /// `delta0 / k^phi`.
    Power {
        delta0: f64,
        phi: f64,
    },
    Constant {
        delta: f64,
    },
}

/// Default stopping threshold on `|g_k|`.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Horizon above which only every 10th iterate is kept in the trajectory.
pub const FULL_TRAJECTORY_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub step: StepRule,
    pub smoothing: SmoothingRule,
    pub horizon: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon_stop: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ScheduleConfig {
    pub fn power(gamma0: f64, alpha: f64, delta0: f64, phi: f64, horizon: usize) -> Self {
        Self {
            step: StepRule::Power { gamma0, alpha },
            smoothing: SmoothingRule::Power { delta0, phi },
            horizon,
            epsilon_stop: DEFAULT_EPSILON,
        }
    }

    pub fn constant(gamma: f64, delta: f64, horizon: usize) -> Self {
        Self {
            step: StepRule::Constant { gamma },
            smoothing: SmoothingRule::Constant { delta },
            horizon,
            epsilon_stop: DEFAULT_EPSILON,
        }
    }

    /// `γ_k = k^{-0.6}`, `δ_k = k^{-0.09}`.
    pub fn benchmark_diminishing(horizon: usize) -> Self {
        Self::power(1.0, 0.6, 1.0, 0.09, horizon)
    }

    /// `γ = 1e-4`, `δ = 1e-3`.
    pub fn benchmark_constant(horizon: usize) -> Self {
        Self::constant(1e-4, 1e-3, horizon)
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon_stop = eps;
        self
    }

    pub fn with_horizon(mut self, n: usize) -> Self {
        self.horizon = n;
        self
    }

    /// `γ_k` for `k ≥ 1`.
    pub fn gamma(&self, k: usize) -> f64 {
        match self.step {
            StepRule::Power { gamma0, alpha } => gamma0 / (k as f64).powf(alpha),
            StepRule::Constant { gamma } => gamma,
        }
    }

    /// `δ_k` for `k ≥ 1`.
    pub fn delta(&self, k: usize) -> f64 {
        match self.smoothing {
            SmoothingRule::Power { delta0, phi } => delta0 / (k as f64).powf(phi),
            SmoothingRule::Constant { delta } => delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        if !(self.epsilon_stop >= 0.0) {
            return Err(invalid("epsilon_stop must be non-negative"));
        }
        let (g, alpha) = match self.step {
            StepRule::Power { gamma0, alpha } => (gamma0, alpha),
            StepRule::Constant { gamma } => (gamma, 0.0),
        };
        let (d, phi) = match self.smoothing {
            SmoothingRule::Power { delta0, phi } => (delta0, phi),
            SmoothingRule::Constant { delta } => (delta, 0.0),
        };
        if !(alpha.is_finite() && phi.is_finite()) {
            return Err(invalid("schedule exponents must be finite"));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(invalid(format!(
                "step size scale must be positive, got {g}"
            )));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(invalid(format!(
                "smoothing scale must be positive, got {d}"
            )));
        }
        Ok(())
    }

    fn exponents(&self) -> (f64, f64) {
        let alpha = match self.step {
            StepRule::Power { alpha, .. } => alpha,
            StepRule::Constant { .. } => 0.0,
        };
        let phi = match self.smoothing {
            SmoothingRule::Power { phi, .. } => phi,
            SmoothingRule::Constant { .. } => 0.0,
        };
        (alpha, phi)
    }
}

/// Summability conditions on the schedule, read off the exponents
/// (a constant rule has exponent 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConditions {
    /// `Σ γ_k = ∞` (`alpha ≤ 1`).
    pub step_sum_diverges: bool,
    /// `Σ (γ_k/δ_k)² < ∞` (`2(alpha − phi) > 1`).
    pub ratio_square_sum_converges: bool,
    /// Both radii vanish (`alpha, phi > 0`).
    pub vanishing: bool,
    pub valid: bool,
    /// `phi ≥ alpha/6` and `alpha − 2 phi > 0`.
    pub rate_admissible: bool,
    /// `alpha − 2 phi`.
    pub upsilon: f64,
}

pub fn check_schedule_conditions(sched: &ScheduleConfig) -> ScheduleConditions {
    let (alpha, phi) = sched.exponents();
    let step_sum_diverges = alpha <= 1.0;
    let ratio_square_sum_converges = 2.0 * (alpha - phi) > 1.0;
    let vanishing = alpha > 0.0 && phi > 0.0;
    let upsilon = alpha - 2.0 * phi;
    ScheduleConditions {
        step_sum_diverges,
        ratio_square_sum_converges,
        vanishing,
        valid: step_sum_diverges && ratio_square_sum_converges && vanishing,
        rate_admissible: phi >= alpha / 6.0 && upsilon > 0.0,
        upsilon,
    }
}

/// Constant schedules prescribed by the non-asymptotic results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HorizonSchedule {
    /// One-sided estimator: `γ = min{c2/L, N^{-2/3}}`, `δ = N^{-1/6}`.
    OneSided,
    /// Balanced estimator: same `γ` and `δ` as `OneSided`.
    Balanced,
    /// Common random numbers: `γ = min{1/(2 L c13), 1/(c13 σ √N)}`,
    /// `δ = 1/(L √(d N c13))`.
    CommonRandomNumbers,
    /// Balanced, smooth sample path: `γ = min{c2/(2 c11² L), N^{-1/2}}`,
    /// `δ = N^{-1/2}`.
    BalancedSmoothPath,
}

/// Problem constants the fixed-horizon schedules are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub dim: usize,
    /// Gradient Lipschitz constant.
    pub lipschitz: Option<f64>,
    /// Noise scale.
    pub sigma: Option<f64>,
    pub c2: Option<f64>,
    pub c11: Option<f64>,
    /// Frobenius norm of the pseudo-inverse of `E[(d+1) u uᵀ/(1+|u|²)]`.
    pub c12: Option<f64>,
    /// `4 c11 c12 / (d+1)`.
    pub c13: Option<f64>,
}

impl ProblemConstants {
    /// Fill `c11`, `c12 = √d / c2` and `c13` for the truncated Cauchy law,
    /// whose weighted second-moment matrix is `c2 I`.
    pub fn truncated_cauchy(
        dim: usize,
        c2: f64,
        lipschitz: Option<f64>,
        sigma: Option<f64>,
    ) -> Self {
        let c11v = c11(dim);
        let c12 = (dim as f64).sqrt() / c2;
        Self {
            dim,
            lipschitz,
            sigma,
            c2: Some(c2),
            c11: Some(c11v),
            c12: Some(c12),
            c13: Some(4.0 * c11v * c12 / (dim as f64 + 1.0)),
        }
    }

    fn c13(&self) -> Result<f64> {
        if let Some(c) = self.c13 {
            return Ok(c);
        }
        let c11 = self.c11.ok_or(Error::MissingConstant("c13"))?;
        let c12 = self.c12.ok_or(Error::MissingConstant("c13"))?;
        Ok(4.0 * c11 * c12 / (self.dim as f64 + 1.0))
    }
}

pub fn horizon_schedule(
    which: HorizonSchedule,
    n: usize,
    c: &ProblemConstants,
) -> Result<ScheduleConfig> {
    if n == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    let nf = n as f64;
    let l = c.lipschitz.ok_or(Error::MissingConstant("L"))?;
    let (gamma, delta) = match which {
        HorizonSchedule::OneSided | HorizonSchedule::Balanced => {
            let c2 = c.c2.ok_or(Error::MissingConstant("c2"))?;
            ((c2 / l).min(nf.powf(-2.0 / 3.0)), nf.powf(-1.0 / 6.0))
        }
        HorizonSchedule::CommonRandomNumbers => {
            let sigma = c.sigma.ok_or(Error::MissingConstant("sigma"))?;
            let c13 = c.c13()?;
            if c.dim == 0 {
                return Err(invalid("dimension must be positive"));
            }
            (
                (1.0 / (2.0 * l * c13)).min(1.0 / (c13 * sigma * nf.sqrt())),
                1.0 / (l * (c.dim as f64 * nf * c13).sqrt()),
            )
        }
        HorizonSchedule::BalancedSmoothPath => {
            let c2 = c.c2.ok_or(Error::MissingConstant("c2"))?;
            let c11 = c.c11.ok_or(Error::MissingConstant("c11"))?;
            (
                (c2 / (2.0 * c11 * c11 * l)).min(nf.powf(-0.5)),
                nf.powf(-0.5),
            )
        }
    };
    let s = ScheduleConfig::constant(gamma, delta, n).with_epsilon(0.0);
    s.validate()?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    EpsilonReached,
    HorizonReached,
    NumericError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub k: usize,
    pub x: Vec<f64>,
    pub f_true: f64,
    pub g_norm: f64,
}

/// Complete record of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub estimator: String,
    pub objective: String,
    pub noise: NoiseModel,
    pub schedule: ScheduleConfig,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Every `thinning`-th iterate `x_k` is stored, plus the last one computed.
    pub thinning: usize,
    pub stop_reason: StopReason,
    pub iterations_used: usize,
    pub final_x: Vec<f64>,
    pub final_f_true: f64,
    #[serde(rename = "selected_x_R", skip_serializing_if = "Option::is_none")]
    pub selected_x_r: Option<Vec<f64>>,
    #[serde(rename = "selected_R", skip_serializing_if = "Option::is_none")]
    pub selected_r: Option<usize>,
    /// Iterations whose observations hit the noise-variance floor.
    pub degenerate_noise_steps: usize,
}

/// The JSON-lines view of a [`RunRecord`] (no trajectory).
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub seed: u64,
    pub estimator: &'a str,
    pub objective: &'a str,
    pub noise: &'a NoiseModel,
    pub schedule: &'a ScheduleConfig,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    pub final_f_true: f64,
    pub final_x: &'a [f64],
    #[serde(rename = "selected_x_R", skip_serializing_if = "Option::is_none")]
    pub selected_x_r: Option<&'a [f64]>,
}

impl RunRecord {
    pub fn summary(&self) -> RunSummary<'_> {
        RunSummary {
            seed: self.seed,
            estimator: &self.estimator,
            objective: &self.objective,
            noise: &self.noise,
            schedule: &self.schedule,
            iterations_used: self.iterations_used,
            stop_reason: self.stop_reason,
            final_f_true: self.final_f_true,
            final_x: &self.final_x,
            selected_x_r: self.selected_x_r.as_deref(),
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.summary())?)
    }
}

/// State passed to a run observer once per iteration, before the update.
#[derive(Debug, Clone, Copy)]
pub struct IterationView<'a> {
    pub k: usize,
    pub x: &'a [f64],
    pub g: &'a [f64],
    pub g_norm: f64,
}

/// Run the descent recursion from `x1` for at most `sched.horizon` iterations.
pub fn run(
    obj: &NoisyObjective,
    cfg: impl Into<EstimatorConfig>,
    x1: &[f64],
    sched: &ScheduleConfig,
    rng: &mut Stream,
) -> Result<RunRecord> {
    run_observed(obj, cfg, x1, sched, rng, false, |_| {})
}

/// As [`run`], additionally selecting `x_R` uniformly among the iterates at
/// which an estimate was computed.
pub fn run_randomized(
    obj: &NoisyObjective,
    cfg: impl Into<EstimatorConfig>,
    x1: &[f64],
    sched: &ScheduleConfig,
    rng: &mut Stream,
) -> Result<RunRecord> {
    run_observed(obj, cfg, x1, sched, rng, true, |_| {})
}

/// Core loop with a per-iteration observer. `select_r` enables the `x_R`
/// draw, which uses a stream split from `rng` so the trajectory is unchanged.
pub fn run_observed(
    obj: &NoisyObjective,
    cfg: impl Into<EstimatorConfig>,
    x1: &[f64],
    sched: &ScheduleConfig,
    rng: &mut Stream,
    select_r: bool,
    mut observer: impl FnMut(IterationView<'_>),
) -> Result<RunRecord> {
    let cfg = cfg.into();
    cfg.validate()?;
    sched.validate()?;
    check_dim(obj.dim(), x1.len())?;
    if x1.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial point must be finite"));
    }
    let seed = rng.seed();
    let mut selector = select_r.then(|| rng.split_named("x_R"));
    let thinning = if sched.horizon <= FULL_TRAJECTORY_LIMIT {
        1
    } else {
        10
    };

    let mut x = x1.to_vec();
    let mut u = Vec::with_capacity(x.len());
    let mut trajectory = Vec::with_capacity(sched.horizon.min(FULL_TRAJECTORY_LIMIT) + 1);
    let mut selected: Option<(usize, Vec<f64>)> = None;
    let mut stop_reason = StopReason::HorizonReached;
    let mut iterations_used = sched.horizon;
    let mut degenerate_noise_steps = 0;

    for k in 1..=sched.horizon {
        let f_true = obj.eval_true(&x);
        let est = estimate_raw(&cfg, obj, &x, sched.delta(k), rng, &mut u);
        let (g, degenerate) = match est {
            Ok((g, _, _, deg)) => (g, deg),
            Err(Error::NumericOverflow(_)) => {
                stop_reason = StopReason::NumericError;
                iterations_used = k;
                trajectory.push(TrajectoryPoint {
                    k,
                    x: x.clone(),
                    f_true,
                    g_norm: f64::INFINITY,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        degenerate_noise_steps += usize::from(degenerate);
        let g_norm = norm(&g);
        observer(IterationView {
            k,
            x: &x,
            g: &g,
            g_norm,
        });
        if let Some(sel) = selector.as_mut() {
            if sel.random_range(0..k) == 0 {
                selected = Some((k, x.clone()));
            }
        }
        let gamma = sched.gamma(k);
        let next: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - gamma * b).collect();
        let stop = if g_norm <= sched.epsilon_stop {
            Some(StopReason::EpsilonReached)
        } else if next.iter().any(|v| !v.is_finite()) || !obj.eval_true(&next).is_finite() {
            Some(StopReason::NumericError)
        } else {
            None
        };
        if (k - 1) % thinning == 0 || k == sched.horizon || stop.is_some() {
            trajectory.push(TrajectoryPoint {
                k,
                x: x.clone(),
                f_true,
                g_norm,
            });
        }
        if let Some(reason) = stop {
            stop_reason = reason;
            iterations_used = k;
            break;
        }
        x = next;
    }

    let final_f_true = obj.eval_true(&x);
    let (selected_r, selected_x_r) = match selected {
        Some((r, xr)) => (Some(r), Some(xr)),
        None => (None, None),
    };
    Ok(RunRecord {
        seed,
        estimator: cfg.kind.label().to_string(),
        objective: obj.spec.name.clone(),
        noise: obj.noise,
        schedule: *sched,
        trajectory,
        thinning,
        stop_reason,
        iterations_used,
        final_x: x,
        final_f_true,
        selected_x_r,
        selected_r,
        degenerate_noise_steps,
    })
}

/// Largest Hessian spectral norm over `n_points` uniform draws from the
/// domain box; an empirical stand-in for the gradient Lipschitz constant.
pub fn estimate_lipschitz(spec: &ObjectiveSpec, n_points: usize, rng: &mut Stream) -> Result<f64> {
    if n_points == 0 {
        return Err(invalid("need at least one point"));
    }
    let mut best: f64 = 0.0;
    for _ in 0..n_points {
        let x = spec.sample_point(None, rng);
        let eig = spec.hessian(&x).symmetric_eigen();
        best = best.max(eig.eigenvalues.amax());
    }
    Ok(best)
}

/// Sample standard deviation of `F(x, ξ) − f(x)` over `n` draws.
pub fn estimate_noise_sigma(
    obj: &NoisyObjective,
    x: &[f64],
    n: usize,
    rng: &mut Stream,
) -> Result<f64> {
    check_dim(obj.dim(), x.len())?;
    if n < 2 {
        return Err(invalid("need at least two observations"));
    }
    let f = obj.eval_true(x);
    let r: Running = (0..n).map(|_| obj.observe(x, rng) - f).collect();
    Ok(r.std_dev())
}
