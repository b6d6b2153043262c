//! Benchmark objectives with analytic derivatives, and the observation noise
//! models used to turn them into noisy oracles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::Stream;
use crate::stats::{dot, norm};

/// Closed-form shape of an objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Form {
    Rastrigin,
    Rosenbrock,
    /// `½ xᵀ A x − bᵀ x` with symmetric `A`.
    Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
    },
    /// `(x² − 1)² + y²`: strict saddle at the origin, minima at `(±1, 0)`.
    SaddleTest,
    Constant {
        value: f64,
    },
    Linear {
        coef: Vec<f64>,
    },
}

/// A deterministic objective with derivative information and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub name: String,
    pub dim: usize,
    pub form: Form,
    pub known_min_value: Option<f64>,
    pub known_minimizer: Option<Vec<f64>>,
    /// Global Lipschitz constant of the gradient, when one exists.
    pub lipschitz_grad: Option<f64>,
    /// Per-coordinate `[lo, hi]` region used for drawing initial points.
    pub domain_box: Vec<(f64, f64)>,
}

impl ObjectiveSpec {
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.form {
            Form::Rastrigin => {
                10.0 * self.dim as f64
                    + x.iter()
                        .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
                        .sum::<f64>()
            }
            Form::Rosenbrock => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum(),
            Form::Quadratic { a, b } => {
                let xv = DVector::from_column_slice(x);
                0.5 * xv.dot(&(a * &xv)) - b.dot(&xv)
            }
            Form::SaddleTest => (x[0] * x[0] - 1.0).powi(2) + x[1] * x[1],
            Form::Constant { value } => *value,
            Form::Linear { coef } => dot(coef, x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        match &self.form {
            Form::Rastrigin => x
                .iter()
                .map(|v| 2.0 * v + 20.0 * PI * (2.0 * PI * v).sin())
                .collect(),
            Form::Rosenbrock => {
                let d = self.dim;
                let mut g = vec![0.0; d];
                for i in 0..d - 1 {
                    let r = x[i + 1] - x[i] * x[i];
                    g[i] += -400.0 * x[i] * r - 2.0 * (1.0 - x[i]);
                    g[i + 1] += 200.0 * r;
                }
                g
            }
            Form::Quadratic { a, b } => {
                let xv = DVector::from_column_slice(x);
                (a * xv - b).iter().copied().collect()
            }
            Form::SaddleTest => vec![4.0 * x[0] * (x[0] * x[0] - 1.0), 2.0 * x[1]],
            Form::Constant { .. } => vec![0.0; self.dim],
            Form::Linear { coef } => coef.clone(),
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.form {
            Form::Rastrigin => DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                x.iter()
                    .map(|v| 2.0 + 40.0 * PI * PI * (2.0 * PI * v).cos()),
            )),
            Form::Rosenbrock => {
                let mut h = DMatrix::zeros(d, d);
                for i in 0..d - 1 {
                    h[(i, i)] += 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
                    h[(i + 1, i + 1)] += 200.0;
                    h[(i, i + 1)] -= 400.0 * x[i];
                    h[(i + 1, i)] -= 400.0 * x[i];
                }
                h
            }
            Form::Quadratic { a, .. } => a.clone(),
            Form::SaddleTest => {
                DMatrix::from_row_slice(2, 2, &[12.0 * x[0] * x[0] - 4.0, 0.0, 0.0, 2.0])
            }
            Form::Constant { .. } | Form::Linear { .. } => DMatrix::zeros(d, d),
        }
    }

    /// Third-derivative tensor, flattened row-major as `t[i*d*d + j*d + k]`.
    pub fn third_derivatives(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut t = vec![0.0; d * d * d];
        let idx = |i: usize, j: usize, k: usize| i * d * d + j * d + k;
        match &self.form {
            Form::Rastrigin => {
                for i in 0..d {
                    t[idx(i, i, i)] = -80.0 * PI.powi(3) * (2.0 * PI * x[i]).sin();
                }
            }
            Form::Rosenbrock => {
                for i in 0..d - 1 {
                    t[idx(i, i, i)] += 2400.0 * x[i];
                    for (a, b, c) in [(i, i, i + 1), (i, i + 1, i), (i + 1, i, i)] {
                        t[idx(a, b, c)] -= 400.0;
                    }
                }
            }
            Form::SaddleTest => t[idx(0, 0, 0)] = 24.0 * x[0],
            Form::Quadratic { .. } | Form::Constant { .. } | Form::Linear { .. } => {}
        }
        t
    }

    /// Vector with entries `-(1/6) [f_iii + 3 Σ_{j≠i} f_jji]`, the leading
    /// bias direction of two-sided smoothed estimators near a minimizer.
    pub fn t_vector(&self, x: &[f64]) -> Vec<f64> {
        t_vector_from_tensor(&self.third_derivatives(x), self.dim)
    }

    /// `true` iff `x` lies in the domain box.
    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.domain_box)
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Draw a point uniformly from `bounds` (defaults to the domain box).
    pub fn sample_point(&self, bounds: Option<&[(f64, f64)]>, rng: &mut Stream) -> Vec<f64> {
        let b = bounds.unwrap_or(&self.domain_box);
        b.iter()
            .map(|&(lo, hi)| {
                if lo < hi {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            })
            .collect()
    }

    /// `f(x) − f*` when the minimum value is known.
    pub fn error(&self, x: &[f64]) -> Option<f64> {
        self.known_min_value.map(|m| self.value(x) - m)
    }
}

pub(crate) fn t_vector_from_tensor(t: &[f64], d: usize) -> Vec<f64> {
    let idx = |i: usize, j: usize, k: usize| i * d * d + j * d + k;
    (0..d)
        .map(|i| {
            let mixed: f64 = (0..d).filter(|&j| j != i).map(|j| t[idx(j, j, i)]).sum();
            -(t[idx(i, i, i)] + 3.0 * mixed) / 6.0
        })
        .collect()
}

/// Third derivatives by central differences of the analytic Hessian.
pub fn third_derivatives_fd(spec: &ObjectiveSpec, x: &[f64], h: f64) -> Vec<f64> {
    let d = spec.dim;
    let mut t = vec![0.0; d * d * d];
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for k in 0..d {
        xp[k] = x[k] + h;
        xm[k] = x[k] - h;
        let dh = (spec.hessian(&xp) - spec.hessian(&xm)) / (2.0 * h);
        xp[k] = x[k];
        xm[k] = x[k];
        for i in 0..d {
            for j in 0..d {
                t[i * d * d + j * d + k] = dh[(i, j)];
            }
        }
    }
    t
}

/// T-vector from finite-difference third derivatives (step `1e-3`).
pub fn t_vector_fd(spec: &ObjectiveSpec, x: &[f64]) -> Vec<f64> {
    t_vector_from_tensor(&third_derivatives_fd(spec, x, 1e-3), spec.dim)
}

pub fn make_rastrigin(dim: usize) -> Result<ObjectiveSpec> {
    if dim == 0 {
        return Err(invalid("Rastrigin needs dim >= 1"));
    }
    Ok(ObjectiveSpec {
        name: "rastrigin".into(),
        dim,
        form: Form::Rastrigin,
        known_min_value: Some(0.0),
        known_minimizer: Some(vec![0.0; dim]),
        lipschitz_grad: Some(2.0 + 40.0 * PI * PI),
        domain_box: vec![(0.0, 10.0); dim],
    })
}

pub fn make_rosenbrock(dim: usize) -> Result<ObjectiveSpec> {
    if dim < 2 {
        return Err(invalid("Rosenbrock needs dim >= 2"));
    }
    Ok(ObjectiveSpec {
        name: "rosenbrock".into(),
        dim,
        form: Form::Rosenbrock,
        known_min_value: Some(0.0),
        known_minimizer: Some(vec![1.0; dim]),
        lipschitz_grad: None,
        domain_box: vec![(0.0, 10.0); dim],
    })
}

/// Benchmark quadratic matrix. The (1,4) entry is printed as `14507` in the
/// source table; the symmetric (4,1) entry `1.4507` is used for both.
pub const QUADRATIC_A: [[f64; 4]; 4] = [
    [2.3346, 1.1384, 2.5606, 1.4507],
    [1.1384, 0.7860, 1.2743, 0.9531],
    [2.5606, 1.2743, 2.8147, 1.6487],
    [1.4507, 0.9531, 1.6487, 1.8123],
];
pub const QUADRATIC_B: [f64; 4] = [0.4218, 0.9157, 0.7922, 0.9595];
/// Minimizer as printed alongside the benchmark; see [`make_quadratic`].
pub const QUADRATIC_PRINTED_MINIMIZER: [f64; 4] = [-135.1150, -4.5224, 130.1168, -5.6879];

/// The four-dimensional benchmark quadratic `½ xᵀAx − bᵀx`.
pub fn make_quadratic() -> Result<ObjectiveSpec> {
    let a = DMatrix::from_fn(4, 4, |i, j| QUADRATIC_A[i][j]);
    let b = DVector::from_column_slice(&QUADRATIC_B);
    let mut spec = quadratic(a, b, vec![(0.0, 150.0); 4])?;
    spec.name = "quadratic".into();
    Ok(spec)
}

/// General quadratic `½ xᵀAx − bᵀx` with symmetric positive definite `A`.
pub fn quadratic(
    a: DMatrix<f64>,
    b: DVector<f64>,
    domain_box: Vec<(f64, f64)>,
) -> Result<ObjectiveSpec> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(invalid("quadratic matrix must be square"));
    }
    check_dim(d, b.len())?;
    check_dim(d, domain_box.len())?;
    if (&a - a.transpose()).abs().max() > 1e-12 {
        return Err(invalid("quadratic matrix must be symmetric"));
    }
    let eig = a.clone().symmetric_eigen();
    let lam_min = eig.eigenvalues.min();
    let lam_max = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|l| l.abs() < 1e-10) {
        return Err(Error::Singular(
            "quadratic matrix is singular within 1e-10".into(),
        ));
    }
    if lam_min <= 0.0 {
        return Err(invalid(format!(
            "quadratic matrix not positive definite (λ_min = {lam_min})"
        )));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))?;
    let xstar = chol.solve(&b);
    let fmin = -0.5 * b.dot(&xstar);
    Ok(ObjectiveSpec {
        name: "quadratic".into(),
        dim: d,
        form: Form::Quadratic { a, b },
        known_min_value: Some(fmin),
        known_minimizer: Some(xstar.iter().copied().collect()),
        lipschitz_grad: Some(lam_max),
        domain_box,
    })
}

pub fn make_saddle_test() -> ObjectiveSpec {
    ObjectiveSpec {
        name: "saddle".into(),
        dim: 2,
        form: Form::SaddleTest,
        known_min_value: Some(0.0),
        known_minimizer: Some(vec![1.0, 0.0]),
        lipschitz_grad: None,
        domain_box: vec![(-2.0, 2.0); 2],
    }
}

pub fn make_constant(dim: usize, value: f64) -> ObjectiveSpec {
    ObjectiveSpec {
        name: "constant".into(),
        dim,
        form: Form::Constant { value },
        known_min_value: Some(value),
        known_minimizer: None,
        lipschitz_grad: Some(0.0),
        domain_box: vec![(-1.0, 1.0); dim],
    }
}

pub fn make_linear(coef: Vec<f64>) -> ObjectiveSpec {
    let dim = coef.len();
    ObjectiveSpec {
        name: "linear".into(),
        dim,
        form: Form::Linear { coef },
        known_min_value: None,
        known_minimizer: None,
        lipschitz_grad: Some(0.0),
        domain_box: vec![(-1.0, 1.0); dim],
    }
}

/// Look up a benchmark objective by identifier.
pub fn objective_by_name(name: &str, dim: usize) -> Result<ObjectiveSpec> {
    match name {
        "rastrigin" => make_rastrigin(dim),
        "rosenbrock" => make_rosenbrock(dim),
        "quadratic" if dim == 4 => make_quadratic(),
        "quadratic" => Err(invalid("the benchmark quadratic is four-dimensional")),
        "saddle" if dim == 2 => Ok(make_saddle_test()),
        "saddle" => Err(invalid("the saddle test objective is two-dimensional")),
        other => Err(invalid(format!("unknown objective `{other}`"))),
    }
}

/// Observation noise `ξ_x` added to `f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum NoiseModel {
    None,
    /// `ξ_x = [xᵀ, 1] η` with `η ~ N(0, σ² I_{d+1})`.
    Type1 {
        sigma: f64,
    },
    /// Gaussian with variance `ln |x|`.
    Type2,
    /// Gaussian with variance `1 / (1 + ln |x|)`.
    Type3,
    /// Homoscedastic Gaussian with standard deviation `sigma`.
    Additive {
        sigma: f64,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Type1 { sigma } | NoiseModel::Additive { sigma } if !(sigma > 0.0) => Err(
                invalid(format!("noise sigma must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::Type1 { .. } => "type1",
            NoiseModel::Type2 => "type2",
            NoiseModel::Type3 => "type3",
            NoiseModel::Additive { .. } => "additive",
        }
    }

    /// Parse `none`, `type1`, `type1:<sigma>`, `type2`, `type3`, `additive:<sigma>`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let sigma = |default: Option<f64>| -> Result<f64> {
            match arg {
                Some(a) => a
                    .parse()
                    .map_err(|_| invalid(format!("bad sigma in `{s}`"))),
                None => default.ok_or_else(|| invalid(format!("`{s}` needs a sigma"))),
            }
        };
        let m = match head {
            "none" => NoiseModel::None,
            "type1" => NoiseModel::Type1 {
                sigma: sigma(Some(5.0))?,
            },
            "type2" => NoiseModel::Type2,
            "type3" => NoiseModel::Type3,
            "additive" => NoiseModel::Additive {
                sigma: sigma(None)?,
            },
            _ => return Err(invalid(format!("unknown noise model `{s}`"))),
        };
        m.validate()?;
        Ok(m)
    }
}

/// One realization of the noise random variable `ξ`, independent of `x`.
/// Reusing a draw at two points gives common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDraw {
    None,
    /// `η` of length `d + 1`.
    Vector(Vec<f64>),
    /// A standard normal variate scaled by the state-dependent deviation.
    Scalar(f64),
}

/// Default floor for state-dependent noise variances.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

/// A noisy observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub value: f64,
    /// The state-dependent variance was non-positive or non-finite and was clamped.
    pub degenerate: bool,
}

/// Objective paired with an observation noise model: `F(x, ξ) = f(x) + ξ_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyObjective {
    pub spec: ObjectiveSpec,
    pub noise: NoiseModel,
    pub variance_floor: f64,
}

impl NoisyObjective {
    pub fn new(spec: ObjectiveSpec, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        Ok(Self {
            spec,
            noise,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        })
    }

    pub fn noiseless(spec: ObjectiveSpec) -> Self {
        Self {
            spec,
            noise: NoiseModel::None,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn eval_true(&self, x: &[f64]) -> f64 {
        self.spec.value(x)
    }

    pub fn draw_noise(&self, rng: &mut Stream) -> NoiseDraw {
        match self.noise {
            NoiseModel::None => NoiseDraw::None,
            NoiseModel::Type1 { sigma } => NoiseDraw::Vector(
                (0..=self.spec.dim)
                    .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
            NoiseModel::Type2 | NoiseModel::Type3 | NoiseModel::Additive { .. } => {
                NoiseDraw::Scalar(rng.sample(StandardNormal))
            }
        }
    }

    /// Standard deviation of `ξ_x`, with the clamp flag.
    pub fn noise_std(&self, x: &[f64]) -> (f64, bool) {
        let clamp = |var: f64| {
            if var.is_finite() && var > self.variance_floor {
                (var.sqrt(), false)
            } else {
                (self.variance_floor.sqrt(), true)
            }
        };
        match self.noise {
            NoiseModel::None => (0.0, false),
            NoiseModel::Type1 { sigma } => (sigma * (dot(x, x) + 1.0).sqrt(), false),
            NoiseModel::Type2 => clamp(norm(x).ln()),
            NoiseModel::Type3 => clamp(1.0 / (1.0 + norm(x).ln())),
            NoiseModel::Additive { sigma } => (sigma, false),
        }
    }

    /// `ξ_x` for a given draw.
    pub fn noise_value(&self, x: &[f64], draw: &NoiseDraw) -> (f64, bool) {
        match draw {
            NoiseDraw::None => (0.0, false),
            NoiseDraw::Vector(eta) => {
                let (head, last) = eta.split_at(eta.len() - 1);
                (dot(x, head) + last[0], false)
            }
            NoiseDraw::Scalar(z) => {
                let (sd, degenerate) = self.noise_std(x);
                (sd * z, degenerate)
            }
        }
    }

    pub fn observe_with(&self, x: &[f64], draw: &NoiseDraw) -> Observation {
        let (xi, degenerate) = self.noise_value(x, draw);
        Observation {
            value: self.spec.value(x) + xi,
            degenerate,
        }
    }

    pub fn observe_detailed(&self, x: &[f64], rng: &mut Stream) -> Observation {
        let draw = self.draw_noise(rng);
        self.observe_with(x, &draw)
    }

    /// `F(x, ξ)` with a fresh noise draw.
    pub fn observe(&self, x: &[f64], rng: &mut Stream) -> f64 {
        self.observe_detailed(x, rng).value
    }
}
