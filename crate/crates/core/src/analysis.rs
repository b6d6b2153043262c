//! Numerical checks of the estimator theory: bias order, second-moment
//! growth, moment bounds, and the asymptotic mean-squared error comparison.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::estimators::{assemble, estimate_raw, EstimatorConfig, EstimatorKind};
use crate::objectives::{NoiseModel, NoisyObjective, ObjectiveSpec};
use crate::perturbations::{c11, moment, PerturbationKind};
use crate::rng::Stream;
use crate::stats::{
    dot, log_log_slope, norm_sq, par_vec_mean, Estimate, Running, RunningVec, VecEstimate,
};

/// How the bias `E[g] − c ∇f(x)` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMethod {
    /// Monte Carlo mean of `g` minus `ĉ2 ∇f(x)`.
    Direct,
    /// Monte Carlo mean of `g − h`, where `h` is the same estimator applied to
    /// the linearization `f(x) + ∇f(x)ᵀ(y − x)` with the same direction.
    /// `E[h] = c ∇f(x)` exactly, so this targets the same quantity with
    /// variance that vanishes with `δ`.
    ControlVariate,
}

/// Sampling controls for a probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeBudget {
    pub n_samples: usize,
    /// Keep quadrupling the sample count up to this cap until the standard
    /// error of the norm is below `target_rel_se` times the norm.
    pub max_samples: usize,
    pub target_rel_se: f64,
}

impl ProbeBudget {
    pub fn fixed(n: usize) -> Self {
        Self {
            n_samples: n,
            max_samples: n,
            target_rel_se: 0.2,
        }
    }

    pub fn adaptive(n: usize, max: usize) -> Self {
        Self {
            n_samples: n,
            max_samples: max.max(n),
            target_rel_se: 0.2,
        }
    }
}

/// One grid point of a bias probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub delta: f64,
    pub bias: VecEstimate,
    pub norm: f64,
    pub norm_se: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasProbeReport {
    pub estimator: EstimatorKind,
    pub method: BiasMethod,
    pub points: Vec<BiasPoint>,
    /// Log-log slope of bias norm against `δ`; absent when degenerate.
    pub fitted_slope: Option<f64>,
    /// Some bias norm is within two standard errors (plus rounding) of zero.
    pub degenerate: bool,
    pub seed: u64,
}

impl BiasProbeReport {
    pub fn delta_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    pub fn bias_norms(&self) -> Vec<Estimate> {
        self.points
            .iter()
            .map(|p| Estimate::new(p.norm, p.norm_se))
            .collect()
    }

    /// The slope, or a degenerate-fit error.
    pub fn slope(&self) -> Result<f64> {
        self.fitted_slope.ok_or_else(|| {
            Error::DegenerateFit("a bias norm is statistically indistinguishable from zero".into())
        })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(invalid("delta grid needs at least two points"));
    }
    if grid.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(invalid("delta grid values must be positive"));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("delta grid must be strictly decreasing"));
    }
    Ok(())
}

/// The estimator evaluated on the linearization of `f` at `x`, for the given
/// direction. Its expectation is the estimator's gradient scale times `∇f`.
fn linearized(cfg: &EstimatorConfig, u: &[f64], grad: &[f64], delta: f64) -> Vec<f64> {
    let s = delta * dot(u, grad);
    let central = matches!(
        cfg.kind,
        EstimatorKind::TcsfBalanced | EstimatorKind::Spsa | EstimatorKind::RdsaUniform { .. }
    );
    let mut h = assemble(cfg.kind, u, s, if central { -s } else { 0.0 }, delta);
    if let (true, Some(c)) = (cfg.kind.is_tcsf(), cfg.rescale_c2) {
        h.iter_mut().for_each(|v| *v /= c);
    }
    h
}

/// Bias of an estimator at `x` over a decreasing grid of radii, with a
/// log-log slope fit. `c2_hat` is the gradient scale the estimator targets
/// (`ĉ2` for truncated Cauchy kinds, exactly 1 otherwise); it is used only by
/// [`BiasMethod::Direct`].
pub fn bias_probe(
    cfg: impl Into<EstimatorConfig>,
    obj: &NoisyObjective,
    x: &[f64],
    delta_grid: &[f64],
    budget: ProbeBudget,
    c2_hat: Estimate,
    method: BiasMethod,
    rng: &mut Stream,
) -> Result<BiasProbeReport> {
    let cfg = cfg.into();
    cfg.validate()?;
    if obj.noise != NoiseModel::None {
        return Err(invalid("bias probe needs a noiseless objective"));
    }
    check_grid(delta_grid)?;
    check_dim(obj.dim(), x.len())?;
    if budget.n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let d = x.len();
    let grad = obj.spec.gradient(x);
    let seed = rng.fork_seed();
    let mut points = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        let draw = |rng: &mut Stream, out: &mut Vec<f64>| -> Result<()> {
            let mut u = Vec::with_capacity(d);
            let (g, ..) = estimate_raw(&cfg, obj, x, delta, rng, &mut u)?;
            match method {
                BiasMethod::Direct => out.extend_from_slice(&g),
                BiasMethod::ControlVariate => {
                    let h = linearized(&cfg, &u, &grad, delta);
                    out.extend(g.iter().zip(&h).map(|(a, b)| a - b));
                }
            }
            Ok(())
        };
        let mut n = budget.n_samples;
        // The same seed at every δ keeps the grid points positively correlated.
        let mut acc = par_vec_mean(n, d, seed, draw)?;
        let mut round = 0u64;
        loop {
            let est = bias_from(&acc, method, &grad, c2_hat);
            let (nm, se) = (est.norm(), est.norm_se());
            if se <= budget.target_rel_se * nm
                || n >= budget.max_samples
                || (nm == 0.0 && se == 0.0)
            {
                points.push(BiasPoint {
                    delta,
                    norm: nm,
                    norm_se: se,
                    bias: est,
                    n_samples: n,
                });
                break;
            }
            round += 1;
            let extra = (3 * n).min(budget.max_samples - n);
            let more: RunningVec =
                par_vec_mean(extra, d, crate::rng::derive_seed(seed, &[round]), draw)?;
            acc.merge(&more);
            n += extra;
        }
    }
    // Floating-point cancellation leaves residuals of order ε |f| / δ.
    let fx = obj.eval_true(x).abs();
    let gscale = crate::stats::norm(&grad);
    let degenerate = points
        .iter()
        .any(|p| p.norm <= 2.0 * p.norm_se + 1e-8 * (1.0 + fx / p.delta + gscale));
    let fitted_slope = if degenerate {
        None
    } else {
        let norms: Vec<f64> = points.iter().map(|p| p.norm).collect();
        Some(log_log_slope(delta_grid, &norms)?)
    };
    Ok(BiasProbeReport {
        estimator: cfg.kind,
        method,
        points,
        fitted_slope,
        degenerate,
        seed,
    })
}

fn bias_from(acc: &RunningVec, method: BiasMethod, grad: &[f64], c2_hat: Estimate) -> VecEstimate {
    let m = acc.estimate();
    match method {
        BiasMethod::ControlVariate => m,
        BiasMethod::Direct => VecEstimate {
            mean: m
                .mean
                .iter()
                .zip(grad)
                .map(|(a, g)| a - c2_hat.mean * g)
                .collect(),
            se: m
                .se
                .iter()
                .zip(grad)
                .map(|(s, g)| (s * s + (c2_hat.se * g).powi(2)).sqrt())
                .collect(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentReport {
    pub estimator: EstimatorKind,
    pub delta_grid: Vec<f64>,
    /// `E|G|²` at each radius.
    pub second_moments: Vec<Estimate>,
    pub fitted_slope: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// `E|G|²` over a decreasing grid of radii with a log-log slope fit. The
/// same stream seed is used at every radius.
pub fn second_moment_probe(
    cfg: impl Into<EstimatorConfig>,
    obj: &NoisyObjective,
    x: &[f64],
    delta_grid: &[f64],
    n_samples: usize,
    rng: &mut Stream,
) -> Result<SecondMomentReport> {
    let cfg = cfg.into();
    cfg.validate()?;
    check_grid(delta_grid)?;
    check_dim(obj.dim(), x.len())?;
    if n_samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let seed = rng.fork_seed();
    let mut second_moments = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        let acc = par_vec_mean(n_samples, 1, seed, |rng, out| {
            let mut u = Vec::with_capacity(x.len());
            let (g, ..) = estimate_raw(&cfg, obj, x, delta, rng, &mut u)?;
            out.push(norm_sq(&g));
            Ok(())
        })?;
        second_moments.push(acc.estimate_scalar());
    }
    let means: Vec<f64> = second_moments.iter().map(|e| e.mean).collect();
    let fitted_slope = log_log_slope(delta_grid, &means)?;
    Ok(SecondMomentReport {
        estimator: cfg.kind,
        delta_grid: delta_grid.to_vec(),
        second_moments,
        fitted_slope,
        n_samples,
        seed,
    })
}

/// Trace of the covariance of single estimates at `x`.
pub fn estimate_covariance_trace(
    cfg: impl Into<EstimatorConfig>,
    obj: &NoisyObjective,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<f64> {
    let cfg = cfg.into();
    cfg.validate()?;
    check_dim(obj.dim(), x.len())?;
    let seed = rng.fork_seed();
    let acc = par_vec_mean(n_samples, x.len(), seed, |rng, out| {
        let mut u = Vec::with_capacity(x.len());
        let (g, ..) = estimate_raw(&cfg, obj, x, delta, rng, &mut u)?;
        out.extend_from_slice(&g);
        Ok(())
    })?;
    Ok(acc.variance().iter().sum())
}

/// One row of the moment-bound check `E|u|^{2r} ≤ c11/(r+d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub dim: usize,
    pub r: u32,
    pub bound: f64,
    pub estimate: Estimate,
    pub pass: bool,
}

/// Monte Carlo check of the truncated Cauchy moment bound at `3 SE`.
pub fn moment_bound_check(
    dim: usize,
    r: u32,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<MomentCheck> {
    let estimate = moment(
        PerturbationKind::TruncatedCauchyExact,
        r,
        dim,
        n_samples,
        rng,
    )?;
    let bound = c11(dim) / (r as f64 + dim as f64);
    Ok(MomentCheck {
        dim,
        r,
        bound,
        estimate,
        pass: estimate.le_within(bound, 3.0),
    })
}

/// Inputs to the asymptotic mean-squared error of the rescaled iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmseInputs {
    pub gamma0: f64,
    pub delta0: f64,
    /// `∇²f(x*)`, symmetric positive definite.
    pub hessian_at_opt: Vec<Vec<f64>>,
    /// `-(1/6)[f_iii + 3 Σ_{j≠i} f_jji]` at `x*`.
    pub t_vector: Vec<f64>,
    /// Limiting variance of the observation-noise difference.
    pub sigma_prime_sq: f64,
    /// `alpha − 2 phi` when `alpha = 1`, else 0.
    pub upsilon_plus: f64,
    /// Fourth moment `E|u|^4` of the perturbation law.
    pub c_bar: f64,
}

impl AmseInputs {
    /// Inputs at the known minimizer of `spec`, with derivatives taken
    /// analytically.
    pub fn at_minimizer(
        spec: &ObjectiveSpec,
        gamma0: f64,
        delta0: f64,
        sigma_prime_sq: f64,
        upsilon_plus: f64,
        c_bar: f64,
    ) -> Result<Self> {
        let xs = spec
            .known_minimizer
            .as_ref()
            .ok_or_else(|| invalid(format!("{} has no known minimizer", spec.name)))?;
        let h = spec.hessian(xs);
        Ok(Self {
            gamma0,
            delta0,
            hessian_at_opt: (0..spec.dim)
                .map(|i| h.row(i).iter().copied().collect())
                .collect(),
            t_vector: spec.t_vector(xs),
            sigma_prime_sq,
            upsilon_plus,
            c_bar,
        })
    }

    pub fn with_c_bar(&self, c_bar: f64) -> Self {
        Self {
            c_bar,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmseValue {
    pub value: f64,
    /// `|μ|²` with `μ = c̄ γ0 δ0² Φ T`.
    pub bias_part: f64,
    /// `trace(Φ P) / δ0²` with `P = (σ'²/4) I`.
    pub variance_part: f64,
}

/// `(c̄ δ0² γ0 |ΦT|)² + trace(ΦP)/δ0²`, `Φ = (γ0 H − ½ υ⁺ I)⁻¹`.
pub fn amse(inputs: &AmseInputs) -> Result<AmseValue> {
    let d = inputs.t_vector.len();
    check_dim(d, inputs.hessian_at_opt.len())?;
    for row in &inputs.hessian_at_opt {
        check_dim(d, row.len())?;
    }
    if !(inputs.gamma0 > 0.0 && inputs.delta0 > 0.0) {
        return Err(invalid("gamma0 and delta0 must be positive"));
    }
    if !(inputs.sigma_prime_sq >= 0.0 && inputs.upsilon_plus >= 0.0 && inputs.c_bar >= 0.0) {
        return Err(invalid("sigma'^2, upsilon+ and c_bar must be non-negative"));
    }
    let h = DMatrix::from_fn(d, d, |i, j| inputs.hessian_at_opt[i][j]);
    if (&h - h.transpose()).abs().max() > 1e-10 {
        return Err(invalid("Hessian must be symmetric"));
    }
    let lam_min = h.clone().symmetric_eigen().eigenvalues.min();
    if lam_min <= 0.0 {
        return Err(invalid(format!(
            "Hessian must be positive definite (λ_min = {lam_min})"
        )));
    }
    if inputs.gamma0 * lam_min <= inputs.upsilon_plus / 2.0 {
        return Err(Error::Singular(format!(
            "γ0 λ_min = {} does not exceed υ⁺/2 = {}",
            inputs.gamma0 * lam_min,
            inputs.upsilon_plus / 2.0
        )));
    }
    let m = h * inputs.gamma0 - DMatrix::identity(d, d) * (inputs.upsilon_plus / 2.0);
    let phi = m
        .try_inverse()
        .ok_or_else(|| Error::Singular("γ0 H − υ⁺/2 I is not invertible".into()))?;
    let t = DVector::from_column_slice(&inputs.t_vector);
    let mu_norm = inputs.c_bar * inputs.delta0.powi(2) * inputs.gamma0 * (&phi * t).norm();
    let bias_part = mu_norm * mu_norm;
    let variance_part = phi.trace() * inputs.sigma_prime_sq / 4.0 / inputs.delta0.powi(2);
    Ok(AmseValue {
        value: bias_part + variance_part,
        bias_part,
        variance_part,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmseBaseline {
    Gsf,
    Spsa,
}

impl AmseBaseline {
    /// Fourth-moment constant of the baseline's perturbations: 3 for a
    /// standard normal marginal, 1 for Rademacher.
    pub fn c_bar(self) -> f64 {
        match self {
            AmseBaseline::Gsf => 3.0,
            AmseBaseline::Spsa => 1.0,
        }
    }
}

/// Baseline AMSE over truncated Cauchy AMSE, with only `c̄` changed.
pub fn amse_ratio(baseline: AmseBaseline, inputs: &AmseInputs) -> Result<f64> {
    let ours = amse(inputs)?;
    let theirs = amse(&inputs.with_c_bar(baseline.c_bar()))?;
    Ok(theirs.value / ours.value)
}

/// Sample variance of `η⁺ − η`, the noise difference entering a one-sided
/// estimate at `x` with radius `delta` (directions from the truncated Cauchy law).
pub fn estimate_sigma_prime_sq(
    obj: &NoisyObjective,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<f64> {
    check_dim(obj.dim(), x.len())?;
    if n_samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let mut acc = Running::new();
    let mut u = Vec::with_capacity(x.len());
    for _ in 0..n_samples {
        crate::perturbations::sample_into(
            PerturbationKind::TruncatedCauchyExact,
            x.len(),
            rng,
            &mut u,
        );
        let xp: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + delta * b).collect();
        let eta_plus = obj.observe(&xp, rng) - obj.eval_true(&xp);
        let eta = obj.observe(x, rng) - obj.eval_true(x);
        acc.push(eta_plus - eta);
    }
    Ok(acc.variance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_linear, make_quadratic};

    fn hand_inputs() -> AmseInputs {
        AmseInputs {
            gamma0: 1.0,
            delta0: 1.0,
            hessian_at_opt: vec![vec![2.0]],
            t_vector: vec![1.0],
            sigma_prime_sq: 4.0,
            upsilon_plus: 2.0 / 3.0,
            c_bar: 1.0,
        }
    }

    #[test]
    fn amse_hand_example() {
        let v = amse(&hand_inputs()).unwrap();
        assert!((v.bias_part - 0.36).abs() < 1e-12);
        assert!((v.variance_part - 0.6).abs() < 1e-12);
        assert!((v.value - 0.96).abs() < 1e-12);
    }

    #[test]
    fn amse_ratio_hand_example() {
        let r = amse_ratio(AmseBaseline::Spsa, &hand_inputs().with_c_bar(0.5)).unwrap();
        assert!((r - 0.96 / 0.69).abs() < 1e-12);
    }

    #[test]
    fn zero_t_gives_unit_ratios() {
        let inp = AmseInputs {
            t_vector: vec![0.0],
            ..hand_inputs()
        };
        let v = amse(&inp).unwrap();
        assert_eq!(v.bias_part, 0.0);
        assert_eq!(amse_ratio(AmseBaseline::Gsf, &inp).unwrap(), 1.0);
        assert_eq!(amse_ratio(AmseBaseline::Spsa, &inp).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_amse_is_variance_only() {
        let q = make_quadratic().unwrap();
        let inp = AmseInputs::at_minimizer(&q, 10_000.0, 0.5, 2.0, 2.0 / 3.0, 0.4).unwrap();
        let v = amse(&inp).unwrap();
        assert_eq!(v.bias_part, 0.0);
        assert_eq!(v.value, v.variance_part);
    }

    #[test]
    fn small_gamma0_is_singular() {
        let inp = AmseInputs {
            gamma0: 1.0 / 6.0,
            ..hand_inputs()
        };
        assert!(matches!(amse(&inp), Err(Error::Singular(_))));
    }

    #[test]
    fn variance_part_linear_in_sigma() {
        let a = amse(&hand_inputs()).unwrap();
        let b = amse(&AmseInputs {
            sigma_prime_sq: 8.0,
            ..hand_inputs()
        })
        .unwrap();
        assert_eq!(b.variance_part, 2.0 * a.variance_part);
        assert_eq!(b.bias_part, a.bias_part);
    }

    #[test]
    fn linear_bias_is_zero_and_degenerate() {
        let obj = NoisyObjective::noiseless(make_linear(vec![1.0, -2.0, 0.5]));
        let mut rng = Stream::new(1);
        let rep = bias_probe(
            EstimatorKind::TcsfBalanced,
            &obj,
            &[0.2, 0.3, 0.4],
            &[0.4, 0.2, 0.1, 0.05],
            ProbeBudget::fixed(20_000),
            Estimate::exact(1.0),
            BiasMethod::ControlVariate,
            &mut rng,
        )
        .unwrap();
        assert!(rep.degenerate);
        assert!(rep.points.iter().all(|p| p.norm < 1e-9));
        assert!(matches!(rep.slope(), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn grid_must_decrease() {
        let obj = NoisyObjective::noiseless(make_linear(vec![1.0]));
        let r = bias_probe(
            EstimatorKind::TcsfBalanced,
            &obj,
            &[0.0],
            &[0.1, 0.2],
            ProbeBudget::fixed(100),
            Estimate::exact(1.0),
            BiasMethod::Direct,
            &mut Stream::new(2),
        );
        assert!(r.is_err());
    }

    #[test]
    fn second_moment_of_linear_balanced_is_flat() {
        let obj = NoisyObjective::noiseless(make_linear(vec![1.0, 2.0]));
        let rep = second_moment_probe(
            EstimatorKind::TcsfBalanced,
            &obj,
            &[0.0, 0.0],
            &[1.0, 0.5, 0.25, 0.125],
            10_000,
            &mut Stream::new(3),
        )
        .unwrap();
        assert!(rep.fitted_slope.abs() < 1e-9, "{}", rep.fitted_slope);
    }

    #[test]
    fn moment_check_passes_for_d2() {
        let c = moment_bound_check(2, 1, 100_000, &mut Stream::new(4)).unwrap();
        assert!(c.pass, "{c:?}");
    }
}
