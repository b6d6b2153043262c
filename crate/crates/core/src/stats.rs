//! Monte Carlo bookkeeping: running moments, standard errors, log-log fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(mean: f64, se: f64) -> Self {
        Self { mean, se }
    }

    pub fn exact(mean: f64) -> Self {
        Self { mean, se: 0.0 }
    }

    /// `true` if `bound` is not exceeded by more than `k` standard errors.
    pub fn le_within(&self, bound: f64, k: f64) -> bool {
        self.mean <= bound + k * self.se
    }
}

/// Welford accumulator for a scalar stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Running) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean(), self.se())
    }
}

impl FromIterator<f64> for Running {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut r = Running::new();
        for x in iter {
            r.push(x);
        }
        r
    }
}

/// Componentwise Welford accumulator for vector samples.
#[derive(Debug, Clone, Default)]
pub struct RunningVec {
    parts: Vec<Running>,
}

impl RunningVec {
    pub fn new(dim: usize) -> Self {
        Self {
            parts: vec![Running::new(); dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.parts.len());
        for (p, &v) in self.parts.iter_mut().zip(x) {
            p.push(v);
        }
    }

    pub fn merge(&mut self, other: &RunningVec) {
        for (p, o) in self.parts.iter_mut().zip(&other.parts) {
            p.merge(o);
        }
    }

    pub fn count(&self) -> u64 {
        self.parts.first().map_or(0, Running::count)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.parts.iter().map(Running::mean).collect()
    }

    pub fn se(&self) -> Vec<f64> {
        self.parts.iter().map(Running::se).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.parts.iter().map(Running::variance).collect()
    }

    /// Estimate of the first component; for one-dimensional accumulators.
    pub fn estimate_scalar(&self) -> Estimate {
        self.parts
            .first()
            .map_or(Estimate::exact(0.0), Running::estimate)
    }

    pub fn estimate(&self) -> VecEstimate {
        VecEstimate {
            mean: self.mean(),
            se: self.se(),
        }
    }
}

/// Componentwise Monte Carlo estimate of a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecEstimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

impl VecEstimate {
    pub fn norm(&self) -> f64 {
        norm(&self.mean)
    }

    /// Delta-method standard error of the Euclidean norm of the mean.
    pub fn norm_se(&self) -> f64 {
        let n = self.norm();
        if n == 0.0 {
            return self.se.iter().map(|s| s * s).sum::<f64>().sqrt();
        }
        self.mean
            .iter()
            .zip(&self.se)
            .map(|(m, s)| (m / n * s).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least two paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae identical".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::DegenerateFit(
            "log-log fit needs strictly positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols_fit(&lx, &ly).map(|(s, _)| s)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Samples per parallel chunk. Fixed so results do not depend on thread count.
pub(crate) const CHUNK: usize = 1 << 14;

/// Run `n` Monte Carlo draws in fixed-size chunks, each chunk with its own
/// derived stream, folding vector samples into a [`RunningVec`]. The result
/// is a pure function of `(seed, n)`.
pub(crate) fn par_vec_mean<F>(n: usize, dim: usize, seed: u64, draw: F) -> Result<RunningVec>
where
    F: Fn(&mut Stream, &mut Vec<f64>) -> Result<()> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<RunningVec>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = Stream::new(derive_seed(seed, &[c as u64]));
            let len = CHUNK.min(n - c * CHUNK);
            let mut acc = RunningVec::new(dim);
            let mut buf = Vec::with_capacity(dim);
            for _ in 0..len {
                buf.clear();
                draw(&mut rng, &mut buf)?;
                acc.push(&buf);
            }
            Ok(acc)
        })
        .collect();
    let mut total = RunningVec::new(dim);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}
