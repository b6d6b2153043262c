//! Two-observation stochastic gradient estimators.
//!
//! Every estimator draws one perturbation direction, queries the noisy oracle
//! exactly twice, and combines the difference quotient with a direction
//! weight. The truncated Cauchy estimators target `c2 ∇f(x)` rather than
//! `∇f(x)`; the other three target `∇f(x)` directly.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::objectives::NoisyObjective;
use crate::perturbations::{cauchy_weight, sample_into, PerturbationKind, PerturbationSample};
use crate::rng::Stream;
use crate::stats::{par_vec_mean, VecEstimate};

/// Gradient estimation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Forward difference at `x + δu` and `x`, independent noise.
    TcsfOneSided,
    /// Central difference at `x ± δu`, independent noise.
    TcsfBalanced,
    /// Forward difference where both observations share one noise draw.
    TcsfCrn,
    /// Gaussian directions, forward difference.
    Gsf,
    /// Rademacher directions, per-coordinate division.
    Spsa,
    /// Componentwise uniform directions on `[-eta, eta]`, scaled by `3/eta²`.
    RdsaUniform { eta: f64 },
}

/// RDSA half-width used by the benchmark harness.
pub const RDSA_DEFAULT_ETA: f64 = 5.0;

impl EstimatorKind {
    pub const RDSA: EstimatorKind = EstimatorKind::RdsaUniform {
        eta: RDSA_DEFAULT_ETA,
    };

    /// The five benchmark estimators in report column order.
    pub fn benchmark_set() -> Vec<EstimatorKind> {
        vec![
            EstimatorKind::Gsf,
            EstimatorKind::TcsfOneSided,
            EstimatorKind::TcsfBalanced,
            EstimatorKind::Spsa,
            EstimatorKind::RDSA,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorKind::RdsaUniform { eta } if !(eta > 0.0 && eta.is_finite()) => {
                Err(invalid(format!("RDSA eta must be positive, got {eta}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_tcsf(&self) -> bool {
        matches!(
            self,
            EstimatorKind::TcsfOneSided | EstimatorKind::TcsfBalanced | EstimatorKind::TcsfCrn
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::TcsfOneSided => "tcsf",
            EstimatorKind::TcsfBalanced => "b-tcsf",
            EstimatorKind::TcsfCrn => "tcsf-crn",
            EstimatorKind::Gsf => "gsf",
            EstimatorKind::Spsa => "spsa",
            EstimatorKind::RdsaUniform { .. } => "rdsa",
        }
    }

    /// Inverse of [`label`](Self::label); `rdsa:<eta>` sets the half-width.
    pub fn parse(s: &str) -> Result<Self> {
        let k = match s.split_once(':') {
            Some(("rdsa", eta)) => EstimatorKind::RdsaUniform {
                eta: eta
                    .parse()
                    .map_err(|_| invalid(format!("bad RDSA eta in `{s}`")))?,
            },
            Some(_) => return Err(invalid(format!("unknown estimator `{s}`"))),
            None => match s {
                "tcsf" => EstimatorKind::TcsfOneSided,
                "b-tcsf" => EstimatorKind::TcsfBalanced,
                "tcsf-crn" => EstimatorKind::TcsfCrn,
                "gsf" => EstimatorKind::Gsf,
                "spsa" => EstimatorKind::Spsa,
                "rdsa" => EstimatorKind::RDSA,
                _ => return Err(invalid(format!("unknown estimator `{s}`"))),
            },
        };
        k.validate()?;
        Ok(k)
    }

    fn is_central(&self) -> bool {
        matches!(
            self,
            EstimatorKind::TcsfBalanced | EstimatorKind::Spsa | EstimatorKind::RdsaUniform { .. }
        )
    }
}

/// An estimator kind plus the knobs that do not change its family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Direction law for the truncated Cauchy variants; ignored otherwise.
    pub tcsf_perturbation: PerturbationKind,
    /// Divide truncated Cauchy estimates by this `ĉ2` so they target `∇f`.
    pub rescale_c2: Option<f64>,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            tcsf_perturbation: PerturbationKind::TruncatedCauchyExact,
            rescale_c2: None,
        }
    }

    pub fn with_perturbation(mut self, p: PerturbationKind) -> Self {
        self.tcsf_perturbation = p;
        self
    }

    pub fn with_rescale(mut self, c2_hat: f64) -> Self {
        self.rescale_c2 = Some(c2_hat);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.tcsf_perturbation.validate()?;
        match self.rescale_c2 {
            Some(c) if !(c > 0.0 && c.is_finite()) => Err(invalid(format!(
                "rescale constant must be positive, got {c}"
            ))),
            _ => Ok(()),
        }
    }

    /// Law of the direction this configuration draws.
    pub fn direction_kind(&self) -> PerturbationKind {
        match self.kind {
            EstimatorKind::TcsfOneSided | EstimatorKind::TcsfBalanced | EstimatorKind::TcsfCrn => {
                self.tcsf_perturbation
            }
            EstimatorKind::Gsf => PerturbationKind::Gaussian,
            EstimatorKind::Spsa => PerturbationKind::Rademacher,
            EstimatorKind::RdsaUniform { eta } => {
                PerturbationKind::UniformInterval { lo: -eta, hi: eta }
            }
        }
    }
}

impl From<EstimatorKind> for EstimatorConfig {
    fn from(kind: EstimatorKind) -> Self {
        Self::new(kind)
    }
}

/// One gradient estimate with the raw observations that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub u: PerturbationSample,
    /// Observation at `x + δu`.
    pub y_plus: f64,
    /// Observation at `x − δu` (central schemes) or at `x` (forward schemes).
    pub y_minus_or_center: f64,
    pub delta: f64,
    /// A state-dependent noise variance was clamped at its floor.
    pub degenerate_noise: bool,
    /// Oracle calls made; always 2.
    pub observations: u32,
}

/// Combine a direction and two observations into an estimate. Pure; shared by
/// [`estimate`] and the tests.
pub fn assemble(kind: EstimatorKind, u: &[f64], y_plus: f64, y_other: f64, delta: f64) -> Vec<f64> {
    let diff = y_plus - y_other;
    match kind {
        EstimatorKind::TcsfOneSided | EstimatorKind::TcsfCrn => {
            let q = diff / delta;
            cauchy_weight(u).into_iter().map(|w| q * w).collect()
        }
        EstimatorKind::TcsfBalanced => {
            let q = diff / (2.0 * delta);
            cauchy_weight(u).into_iter().map(|w| q * w).collect()
        }
        EstimatorKind::Gsf => u.iter().map(|v| diff / delta * v).collect(),
        EstimatorKind::Spsa => u.iter().map(|v| diff / (2.0 * delta * v)).collect(),
        EstimatorKind::RdsaUniform { eta } => {
            let s = 3.0 / (eta * eta) * diff / (2.0 * delta);
            u.iter().map(|v| s * v).collect()
        }
    }
}

/// Draw one estimate of the (scaled) gradient at `x`.
pub fn estimate(
    cfg: impl Into<EstimatorConfig>,
    obj: &NoisyObjective,
    x: &[f64],
    delta: f64,
    rng: &mut Stream,
) -> Result<GradientEstimate> {
    let cfg = cfg.into();
    cfg.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }
    check_dim(obj.dim(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("non-finite query point".into()));
    }
    let mut u = Vec::with_capacity(x.len());
    let (g, y_plus, y_other, degenerate) = estimate_raw(&cfg, obj, x, delta, rng, &mut u)?;
    Ok(GradientEstimate {
        g,
        u: PerturbationSample {
            u,
            kind: cfg.direction_kind(),
        },
        y_plus,
        y_minus_or_center: y_other,
        delta,
        degenerate_noise: degenerate,
        observations: 2,
    })
}

/// Core of [`estimate`] without validation; the direction is written to `u`.
pub(crate) fn estimate_raw(
    cfg: &EstimatorConfig,
    obj: &NoisyObjective,
    x: &[f64],
    delta: f64,
    rng: &mut Stream,
    u: &mut Vec<f64>,
) -> Result<(Vec<f64>, f64, f64, bool)> {
    sample_into(cfg.direction_kind(), x.len(), rng, u);
    let xp: Vec<f64> = x.iter().zip(u.iter()).map(|(a, b)| a + delta * b).collect();
    let x_other: Vec<f64> = if cfg.kind.is_central() {
        x.iter().zip(u.iter()).map(|(a, b)| a - delta * b).collect()
    } else {
        x.to_vec()
    };
    let (op, oo) = if cfg.kind == EstimatorKind::TcsfCrn {
        let draw = obj.draw_noise(rng);
        (
            obj.observe_with(&xp, &draw),
            obj.observe_with(&x_other, &draw),
        )
    } else {
        let dp = obj.draw_noise(rng);
        let dm = obj.draw_noise(rng);
        (obj.observe_with(&xp, &dp), obj.observe_with(&x_other, &dm))
    };
    if !(op.value.is_finite() && oo.value.is_finite()) {
        return Err(Error::NumericOverflow(format!(
            "observation is not finite ({}, {})",
            op.value, oo.value
        )));
    }
    let mut g = assemble(cfg.kind, u, op.value, oo.value, delta);
    if let (true, Some(c)) = (cfg.kind.is_tcsf(), cfg.rescale_c2) {
        g.iter_mut().for_each(|v| *v /= c);
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow(
            "gradient estimate is not finite".into(),
        ));
    }
    Ok((g, op.value, oo.value, op.degenerate || oo.degenerate))
}

/// Monte Carlo mean of `n_samples` independent estimates at `x`, computed in
/// parallel with a result that depends only on the stream state.
pub fn mean_estimate(
    cfg: impl Into<EstimatorConfig>,
    obj: &NoisyObjective,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<VecEstimate> {
    let cfg = cfg.into();
    cfg.validate()?;
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    check_dim(obj.dim(), x.len())?;
    let seed = rng.fork_seed();
    let acc = par_vec_mean(n_samples, x.len(), seed, |rng, out| {
        let mut u = Vec::with_capacity(x.len());
        let (g, ..) = estimate_raw(&cfg, obj, x, delta, rng, &mut u)?;
        out.extend_from_slice(&g);
        Ok(())
    })?;
    Ok(acc.estimate())
}

/// Minimum sample count for [`smoothed_gradient_mc`].
pub const MIN_SMOOTHED_SAMPLES: usize = 1_000;

/// Monte Carlo reference for the gradient of the truncated-Cauchy smoothed
/// objective at radius `delta` (mean of one-sided estimates).
pub fn smoothed_gradient_mc(
    obj: &NoisyObjective,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<VecEstimate> {
    if n_samples < MIN_SMOOTHED_SAMPLES {
        return Err(invalid(format!(
            "need at least {MIN_SMOOTHED_SAMPLES} samples, got {n_samples}"
        )));
    }
    mean_estimate(EstimatorKind::TcsfOneSided, obj, x, delta, n_samples, rng)
}
