//! Random variate generators used by the priors and the sampler.

use rand::Rng;
use rand_distr::{Beta, Binomial, ChiSquared, Distribution, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma with shape `shape` and rate `rate`.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng)
}

/// `log X` for `X ~ Gamma(shape, 1)`, accurate for tiny shapes where `X`
/// itself underflows.
pub fn log_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        gamma(rng, shape, 1.0).ln()
    } else {
        let u: f64 = rng.random::<f64>();
        gamma(rng, shape + 1.0, 1.0).ln() + u.ln() / shape
    }
}

/// Dirichlet draw computed in log space and normalised explicitly.
///
/// Components whose weight underflows come back as exact zeros; the result
/// always sums to one.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = alpha.iter().map(|&a| log_gamma_variate(rng, a)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        // every weight underflowed: the draw is a vertex, picked in proportion to alpha
        let total: f64 = alpha.iter().sum();
        let mut out = vec![0.0; alpha.len()];
        let k = if total > 0.0 {
            categorical(rng, alpha, total)
        } else {
            rng.random_range(0..alpha.len())
        };
        out[k] = 1.0;
        return out;
    }
    let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

/// Index drawn with probability `weights[k] / total`.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], total: f64) -> usize {
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return k;
            }
            u -= w;
            last = k;
        }
    }
    last
}

/// Number of occupied tables after `n` customers in a Chinese restaurant
/// with concentration `c`. The first customer always opens a table.
pub fn crt<R: Rng + ?Sized>(rng: &mut R, n: u64, c: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut tables = 1;
    for i in 1..n {
        if rng.random::<f64>() * (i as f64 + c) < c {
            tables += 1;
        }
    }
    tables
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("positive beta parameters").sample(rng)
}

pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

pub fn mvn<R: Rng + ?Sized>(rng: &mut R, mean: Vec2, chol: &Mat2) -> Vec2 {
    mean + *chol * Vec2::new(std_normal(rng), std_normal(rng))
}

/// Draws from `N(mean, cov)`; `cov` must be SPD.
pub fn mvn_cov<R: Rng + ?Sized>(rng: &mut R, mean: Vec2, cov: &Mat2) -> Result<Vec2> {
    let chol = cov.cholesky().ok_or_else(|| Error::NotSpd(format!("{cov:?}")))?;
    Ok(mvn(rng, mean, &chol))
}

/// Inverse-Wishart draw in two dimensions, density
/// `∝ |Σ|^{-(df+3)/2} exp(-½ tr(scale Σ⁻¹))`.
///
/// Uses the Bartlett decomposition of the Wishart `(df, scale⁻¹)` precision.
pub fn inverse_wishart<R: Rng + ?Sized>(rng: &mut R, df: f64, scale: &Mat2) -> Result<Mat2> {
    if !(df > 1.0) {
        return Err(Error::param(format!("inverse-Wishart degrees of freedom must exceed 1, got {df}")));
    }
    let prec_scale = scale.inverse().ok_or_else(|| Error::NotSpd(format!("{scale:?}")))?;
    let l = prec_scale
        .symmetrize()
        .cholesky()
        .ok_or_else(|| Error::NotSpd(format!("inverse of {scale:?}")))?;
    let c1 = ChiSquared::new(df).expect("df > 0").sample(rng).sqrt();
    let c2 = ChiSquared::new(df - 1.0).expect("df > 1").sample(rng).sqrt();
    let a = Mat2::new(c1, 0.0, std_normal(rng), c2);
    let la = l * a;
    let precision = la * la.transpose();
    precision
        .inverse()
        .map(|m| m.symmetrize())
        .ok_or_else(|| Error::Numeric("singular Wishart draw".into()))
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `N(mean, sd²)` truncated to `(lo, hi)` by inversion of the CDF.
///
/// Bounds are mirrored into the upper tail when both lie above the mean so the
/// complementary CDF keeps its precision; beyond the range where that
/// underflows, the exponential tail limit is inverted instead.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let u: f64 = rng.random::<f64>();
    let z = if a >= 0.0 {
        upper_tail_inverse(a, b, u)
    } else if b <= 0.0 {
        -upper_tail_inverse(-b, -a, u)
    } else {
        let (pa, pb) = (norm_cdf(a), norm_cdf(b));
        norm_quantile(pa + u * (pb - pa))
    };
    (mean + sd * z).clamp(lo, hi)
}

/// Inverse CDF on `(a, b)` with `0 <= a < b`.
fn upper_tail_inverse(a: f64, b: f64, u: f64) -> f64 {
    let qa = 0.5 * erfc(a / SQRT_2);
    let qb = if b.is_finite() { 0.5 * erfc(b / SQRT_2) } else { 0.0 };
    if qa > 1e-300 && qa - qb > 0.0 {
        let q = qa - u * (qa - qb);
        let z = -norm_quantile(q);
        if z.is_finite() {
            return z.clamp(a, b);
        }
    }
    // Far tail: the density is proportional to exp(-a (z - a)) near z = a.
    let width = b - a;
    let e = if width.is_finite() { (-a * width).exp() } else { 0.0 };
    (a - (1.0 - u * (1.0 - e)).ln() / a).min(b)
}
