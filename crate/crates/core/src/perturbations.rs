//! Perturbation directions for every estimator family, and the distribution
//! constants the convergence theory is stated in terms of.
//!
//! The truncated Cauchy law on the unit ball has density proportional to
//! `(1 + |u|^2)^{-(d+1)/2}` for `|u| <= 1`. Its normalizer `c1` has no closed
//! form for general `d`; it is computed once per dimension by radial
//! quadrature and cached.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::rng::Stream;
use crate::stats::{norm_sq, par_vec_mean, Estimate};

/// Distribution a perturbation direction is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// Rejection sampler for the truncated Cauchy density on the unit ball.
    TruncatedCauchyExact,
    /// Multivariate t (one degree of freedom) projected onto the unit sphere.
    TProjectedSphere,
    /// Standard normal components.
    Gaussian,
    /// Independent symmetric ±1 components.
    Rademacher,
    /// Independent components uniform on `[lo, hi]`.
    UniformInterval { lo: f64, hi: f64 },
}

impl PerturbationKind {
    pub fn uniform_interval(lo: f64, hi: f64) -> Result<Self> {
        let k = PerturbationKind::UniformInterval { lo, hi };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationKind::UniformInterval { lo, hi } if !(lo < hi) => Err(invalid(format!(
                "uniform interval needs lo < hi, got [{lo}, {hi}]"
            ))),
            _ => Ok(()),
        }
    }

    /// Distribution is invariant under `u -> -u`.
    pub fn is_symmetric(&self) -> bool {
        match *self {
            PerturbationKind::UniformInterval { lo, hi } => lo == -hi,
            _ => true,
        }
    }

    /// Samples are supported in the closed unit ball.
    pub fn is_bounded_by_unit_ball(&self) -> bool {
        matches!(
            self,
            PerturbationKind::TruncatedCauchyExact | PerturbationKind::TProjectedSphere
        )
    }

    /// Inverse of [`label`](Self::label); `uniform:<lo>:<hi>` for intervals.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "truncated-cauchy" => Ok(PerturbationKind::TruncatedCauchyExact),
            "t-projected-sphere" => Ok(PerturbationKind::TProjectedSphere),
            "gaussian" => Ok(PerturbationKind::Gaussian),
            "rademacher" => Ok(PerturbationKind::Rademacher),
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["uniform", lo, hi] => {
                        let num = |v: &str| {
                            v.parse::<f64>()
                                .map_err(|_| invalid(format!("bad bound `{v}`")))
                        };
                        Self::uniform_interval(num(lo)?, num(hi)?)
                    }
                    _ => Err(invalid(format!("unknown perturbation kind `{s}`"))),
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            PerturbationKind::TruncatedCauchyExact => "truncated-cauchy".into(),
            PerturbationKind::TProjectedSphere => "t-projected-sphere".into(),
            PerturbationKind::Gaussian => "gaussian".into(),
            PerturbationKind::Rademacher => "rademacher".into(),
            PerturbationKind::UniformInterval { lo, hi } => format!("uniform[{lo},{hi}]"),
        }
    }
}

/// A drawn perturbation direction together with the law it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSample {
    pub u: Vec<f64>,
    pub kind: PerturbationKind,
}

impl PerturbationSample {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `(d+1) u / (1 + |u|^2)`, the weight multiplying the difference quotient
    /// in the truncated Cauchy gradient estimators.
    pub fn cauchy_weight(&self) -> Vec<f64> {
        cauchy_weight(&self.u)
    }
}

pub(crate) fn cauchy_weight(u: &[f64]) -> Vec<f64> {
    let s = (u.len() as f64 + 1.0) / (1.0 + norm_sq(u));
    u.iter().map(|v| s * v).collect()
}

/// Draw one perturbation of dimension `dim`.
pub fn sample(kind: PerturbationKind, dim: usize, rng: &mut Stream) -> Result<PerturbationSample> {
    if dim == 0 {
        return Err(invalid("perturbation dimension must be at least 1"));
    }
    kind.validate()?;
    let mut u = Vec::with_capacity(dim);
    sample_into(kind, dim, rng, &mut u);
    Ok(PerturbationSample { u, kind })
}

/// Allocation-free sampling into `out` (cleared first). Assumes a validated kind.
pub(crate) fn sample_into(
    kind: PerturbationKind,
    dim: usize,
    rng: &mut Stream,
    out: &mut Vec<f64>,
) {
    out.clear();
    match kind {
        PerturbationKind::TruncatedCauchyExact => {
            let e = (dim as f64 + 1.0) / 2.0;
            loop {
                uniform_ball_into(dim, rng, out);
                let accept = (1.0 + norm_sq(out)).powf(-e);
                if rng.random::<f64>() < accept {
                    return;
                }
            }
        }
        PerturbationKind::TProjectedSphere => loop {
            // z / sqrt(w) with w ~ chi^2_1 is multivariate t with one degree
            // of freedom; its projection onto the sphere is then taken.
            let w: f64 = ChiSquared::new(1.0).expect("dof > 0").sample(rng);
            let scale = 1.0 / w.sqrt();
            out.clear();
            out.extend((0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)));
            let n = norm_sq(out).sqrt();
            if n.is_finite() && n > 0.0 {
                out.iter_mut().for_each(|v| *v /= n);
                return;
            }
        },
        PerturbationKind::Gaussian => {
            out.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        PerturbationKind::Rademacher => {
            out.extend((0..dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }));
        }
        PerturbationKind::UniformInterval { lo, hi } => {
            out.extend((0..dim).map(|_| rng.random_range(lo..=hi)));
        }
    }
}

/// Uniform point in the unit ball: normalized Gaussian direction times `U^{1/d}`.
fn uniform_ball_into(dim: usize, rng: &mut Stream, out: &mut Vec<f64>) {
    loop {
        out.clear();
        out.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = norm_sq(out).sqrt();
        if n > 0.0 {
            let r = rng.random::<f64>().powf(1.0 / dim as f64);
            out.iter_mut().for_each(|v| *v *= r / n);
            return;
        }
    }
}

/// Constants of a perturbation law in dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionConstants {
    pub dim: usize,
    /// Normalizer of the truncated Cauchy density (truncated Cauchy only).
    pub c1: Option<f64>,
    /// `E[(d+1) (u^1)^2 / (1 + |u|^2)]`.
    pub c2: f64,
    pub c2_se: f64,
    /// `E|u|^4`.
    pub c_bar: f64,
    pub c_bar_se: f64,
    /// `2 Γ((d+1)/2) / (√π Γ(d/2) c1)` (truncated Cauchy only).
    pub c11: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

impl DistributionConstants {
    /// Exact constants for the truncated Cauchy law without Monte Carlo
    /// quantities; `c2` and `c_bar` are left at zero.
    pub fn truncated_cauchy_exact(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        Ok(Self {
            dim,
            c1: Some(compute_normalization(dim)),
            c2: 0.0,
            c2_se: 0.0,
            c_bar: 0.0,
            c_bar_se: 0.0,
            c11: Some(c11(dim)),
            n_samples: 0,
            seed: 0,
        })
    }

    pub fn c2_estimate(&self) -> Estimate {
        Estimate::new(self.c2, self.c2_se)
    }

    pub fn c_bar_estimate(&self) -> Estimate {
        Estimate::new(self.c_bar, self.c_bar_se)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `∫_0^1 r^{d+2s-1} (1 + r^2)^{-(d+1)/2} dr`, the radial integral behind the
/// normalizer (`s = 0`) and the even moments of the truncated Cauchy law.
fn radial_integral(dim: usize, extra_power: usize) -> f64 {
    let d = dim as f64;
    let p = d - 1.0 + 2.0 * extra_power as f64;
    let e = (d + 1.0) / 2.0;
    let out = quadrature::integrate(|r: f64| r.powf(p) * (1.0 + r * r).powf(-e), 0.0, 1.0, 1e-12);
    out.integral
}

/// `2 Γ((d+1)/2) / (√π Γ(d/2))`, i.e. the surface area of the unit sphere in
/// R^d times the leading factor `Γ((d+1)/2) / π^{(d+1)/2}` of the density.
fn sphere_prefactor(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * (libm::lgamma((d + 1.0) / 2.0) - libm::lgamma(d / 2.0)).exp() / PI.sqrt()
}

/// Normalizer `c1` of the truncated Cauchy density on the unit ball.
pub fn compute_normalization(dim: usize) -> f64 {
    assert!(dim >= 1, "dimension must be at least 1");
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().expect("cache poisoned").get(&dim) {
        return c;
    }
    let c1 = sphere_prefactor(dim) * radial_integral(dim, 0);
    cache.lock().expect("cache poisoned").insert(dim, c1);
    c1
}

/// Moment-bound constant `c11 = 2 Γ((d+1)/2) / (√π Γ(d/2) c1)`.
pub fn c11(dim: usize) -> f64 {
    sphere_prefactor(dim) / compute_normalization(dim)
}

/// Exact `E|u|^{2r}` under the truncated Cauchy law, by quadrature.
pub fn truncated_cauchy_moment_exact(dim: usize, r: usize) -> f64 {
    c11(dim) * radial_integral(dim, r)
}

/// Truncated Cauchy density with radius `delta`; zero outside the ball.
pub fn density_truncated_cauchy(
    u: &[f64],
    delta: f64,
    consts: &DistributionConstants,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    check_dim(consts.dim, u.len())?;
    let c1 = consts
        .c1
        .ok_or_else(|| invalid("constants carry no truncated Cauchy normalizer"))?;
    let r2 = norm_sq(u);
    if r2 > delta * delta {
        return Ok(0.0);
    }
    let d = u.len() as f64;
    let log_lead =
        libm::lgamma((d + 1.0) / 2.0) - (d + 1.0) / 2.0 * PI.ln() - c1.ln() - d * delta.ln();
    Ok((log_lead - (d + 1.0) / 2.0 * (r2 / (delta * delta)).ln_1p()).exp())
}

/// Minimum Monte Carlo sample count for [`estimate_constants`].
pub const MIN_CONSTANT_SAMPLES: usize = 10_000;

/// Monte Carlo estimates of `c2` and `c_bar` (with standard errors); exact
/// `c1`, `c11` for the truncated Cauchy kind.
pub fn estimate_constants(
    kind: PerturbationKind,
    dim: usize,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<DistributionConstants> {
    if dim == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if n_samples < MIN_CONSTANT_SAMPLES {
        return Err(invalid(format!(
            "need at least {MIN_CONSTANT_SAMPLES} samples, got {n_samples}"
        )));
    }
    kind.validate()?;
    let seed = rng.fork_seed();
    let dp1 = dim as f64 + 1.0;
    let acc = par_vec_mean(n_samples, 2, seed, |rng, out| {
        let mut u = Vec::with_capacity(dim);
        sample_into(kind, dim, rng, &mut u);
        let r2 = norm_sq(&u);
        out.push(dp1 * u[0] * u[0] / (1.0 + r2));
        out.push(r2 * r2);
        Ok(())
    })?;
    let (mean, se) = (acc.mean(), acc.se());
    let exact = kind == PerturbationKind::TruncatedCauchyExact;
    Ok(DistributionConstants {
        dim,
        c1: exact.then(|| compute_normalization(dim)),
        c2: mean[0],
        c2_se: se[0],
        c_bar: mean[1],
        c_bar_se: se[1],
        c11: exact.then(|| c11(dim)),
        n_samples,
        seed,
    })
}

/// Monte Carlo estimate of `E|u|^{2r}`.
pub fn moment(
    kind: PerturbationKind,
    r: u32,
    dim: usize,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<Estimate> {
    if r == 0 {
        return Err(invalid("moment order must be at least 1"));
    }
    if dim == 0 || n_samples == 0 {
        return Err(invalid("dimension and sample count must be positive"));
    }
    kind.validate()?;
    let seed = rng.fork_seed();
    let acc = par_vec_mean(n_samples, 1, seed, |rng, out| {
        let mut u = Vec::with_capacity(dim);
        sample_into(kind, dim, rng, &mut u);
        out.push(norm_sq(&u).powi(r as i32));
        Ok(())
    })?;
    Ok(acc.estimate_scalar())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c1_in_one_dimension_is_one_half() {
        // ∫_{-1}^{1} (1/π)(1+r^2)^{-1} dr = (2/π) arctan(1) = 1/2
        assert!((compute_normalization(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn c1_matches_composite_simpson() {
        for d in [2usize, 3, 4, 8] {
            let n = 20_000;
            let h = 1.0 / n as f64;
            let e = (d as f64 + 1.0) / 2.0;
            let f = |r: f64| r.powi(d as i32 - 1) * (1.0 + r * r).powf(-e);
            let mut s = f(0.0) + f(1.0);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            let integral = s * h / 3.0;
            let gamma = |x: f64| libm::tgamma(x);
            let df = d as f64;
            let oracle = 2.0 * gamma((df + 1.0) / 2.0) / (PI.sqrt() * gamma(df / 2.0)) * integral;
            assert!((compute_normalization(d) - oracle).abs() < 1e-10, "d={d}");
        }
    }

    #[test]
    fn density_at_origin_in_one_dimension() {
        let c = DistributionConstants::truncated_cauchy_exact(1).unwrap();
        let p = density_truncated_cauchy(&[0.0], 1.0, &c).unwrap();
        assert!((p - 1.0 / (PI * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn density_vanishes_outside_ball() {
        let c = DistributionConstants::truncated_cauchy_exact(3).unwrap();
        assert_eq!(
            density_truncated_cauchy(&[0.8, 0.8, 0.0], 1.0, &c).unwrap(),
            0.0
        );
        assert!(density_truncated_cauchy(&[0.1, 0.1, 0.0], 0.0, &c).is_err());
        assert!(density_truncated_cauchy(&[0.1, 0.1], 1.0, &c).is_err());
    }

    #[test]
    fn density_integrates_to_one_in_four_dimensions() {
        // Radial oracle: S_3 ∫_0^1 r^3 p(r) dr with S_3 = 2π^2, by Simpson.
        let c = DistributionConstants::truncated_cauchy_exact(4).unwrap();
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f =
            |r: f64| r.powi(3) * density_truncated_cauchy(&[r, 0.0, 0.0, 0.0], 1.0, &c).unwrap();
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let total = 2.0 * PI * PI * s * h / 3.0;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn scaled_density_integrates_to_one() {
        // δ = 0.5 in one dimension: ∫_{-δ}^{δ} p = 1.
        let c = DistributionConstants::truncated_cauchy_exact(1).unwrap();
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |t: f64| density_truncated_cauchy(&[t], 0.5, &c).unwrap();
        let mut s = f(-0.5) + f(0.5);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(-0.5 + i as f64 * h);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rademacher_support() {
        let mut rng = Stream::new(1);
        for _ in 0..200 {
            let s = sample(PerturbationKind::Rademacher, 3, &mut rng).unwrap();
            assert!(s.u.iter().all(|&v| v == 1.0 || v == -1.0));
        }
    }

    #[test]
    fn bounded_kinds_stay_in_ball() {
        let mut rng = Stream::new(2);
        for _ in 0..2000 {
            let a = sample(PerturbationKind::TruncatedCauchyExact, 5, &mut rng).unwrap();
            assert!(norm_sq(&a.u) <= 1.0 + 1e-12);
            let b = sample(PerturbationKind::TProjectedSphere, 5, &mut rng).unwrap();
            assert!((norm_sq(&b.u) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_interval_validation() {
        assert!(PerturbationKind::uniform_interval(1.0, 1.0).is_err());
        assert!(PerturbationKind::uniform_interval(2.0, -1.0).is_err());
        let k = PerturbationKind::uniform_interval(-5.0, 5.0).unwrap();
        let mut rng = Stream::new(3);
        let s = sample(k, 100, &mut rng).unwrap();
        assert!(s.u.iter().all(|v| (-5.0..=5.0).contains(v)));
    }

    #[test]
    fn constants_need_enough_samples() {
        let mut rng = Stream::new(4);
        assert!(estimate_constants(PerturbationKind::Gaussian, 3, 100, &mut rng).is_err());
    }

    #[test]
    fn projected_sphere_moments_are_one() {
        let mut rng = Stream::new(5);
        for r in 1..=3 {
            let m = moment(PerturbationKind::TProjectedSphere, r, 4, 20_000, &mut rng).unwrap();
            assert!((m.mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_moment_below_bound() {
        for d in [1usize, 2, 4, 8] {
            for r in 1..=3 {
                assert!(truncated_cauchy_moment_exact(d, r) <= c11(d) / (r + d) as f64);
            }
        }
    }

    #[test]
    fn parse_inverts_label() {
        for k in [
            PerturbationKind::TruncatedCauchyExact,
            PerturbationKind::TProjectedSphere,
            PerturbationKind::Gaussian,
            PerturbationKind::Rademacher,
        ] {
            assert_eq!(PerturbationKind::parse(&k.label()).unwrap(), k);
        }
        assert_eq!(
            PerturbationKind::parse("uniform:-1:2").unwrap(),
            PerturbationKind::UniformInterval { lo: -1.0, hi: 2.0 }
        );
        assert!(PerturbationKind::parse("uniform:2:1").is_err());
        assert!(PerturbationKind::parse("cauchy").is_err());
    }
}
