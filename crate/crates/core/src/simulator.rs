//! Forward simulation of STAP-HMM tracks and of the step-and-turn CRW used
//! to study the effect of the sampling interval on turning-angles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{align_labels, posterior_mean_model};
use crate::dist;
use crate::draws::PosteriorDraws;
use crate::emission::StapKernel;
use crate::emission::StapParams;
use crate::error::{Error, Result};
use crate::geometry::{metrics_to_path, step_bearing, wrap_angle, Path};
use crate::linalg::{Mat2, Vec2};

/// A fully specified STAP-HMM to simulate from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: Vec<StapParams>,
    pub pi: Vec<Vec<f64>>,
    /// Number of locations.
    pub t: usize,
    pub s0: Vec2,
    pub s1: Vec2,
    pub seed: u64,
}

impl SimConfig {
    /// The three-behaviour test configurations, `dataset` in 1..=3.
    ///
    /// All share the attractors, drifts and covariances; they differ in the
    /// attraction strength `tau` and the mixing weight `rho`.
    pub fn benchmark(dataset: usize, t: usize, seed: u64) -> Result<Self> {
        let (tau, rho) = match dataset {
            1 => ([0.5, 0.2, 0.0], [0.0, 0.5, 1.0]),
            2 => ([0.2; 3], [0.2, 0.5, 0.8]),
            3 => ([0.8; 3], [0.2, 0.5, 0.8]),
            _ => return Err(Error::param(format!("dataset must be 1, 2 or 3, got {dataset}"))),
        };
        let mu = [Vec2::new(-10.0, 0.0), Vec2::new(10.0, 10.0), Vec2::new(0.0, 0.0)];
        let eta = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(-2.0, 0.0)];
        let sigma = [Mat2::diag(0.5, 5.0), Mat2::sym(1.0, -0.25, 0.5), Mat2::sym(1.0, 0.25, 1.0)];
        let params = (0..3)
            .map(|j| StapParams::new(mu[j], eta[j], sigma[j], tau[j], rho[j]))
            .collect::<Result<Vec<_>>>()?;
        let pi = (0..3).map(|j| (0..3).map(|k| if j == k { 0.8 } else { 0.1 }).collect()).collect();
        let config = SimConfig { params, pi, t, s0: Vec2::new(-1.0, 0.0), s1: Vec2::ZERO, seed };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.params.len();
        if k == 0 {
            return Err(Error::param("at least one behaviour is required"));
        }
        if self.pi.len() != k || self.pi.iter().any(|row| row.len() != k) {
            return Err(Error::param(format!("transition matrix must be {k} x {k}")));
        }
        for (j, row) in self.pi.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("transition row {} must be a probability vector", j + 1)));
            }
        }
        if self.t < 3 {
            return Err(Error::param(format!("path length must be at least 3, got {}", self.t)));
        }
        if self.s1 == self.s0 || !self.s0.is_finite() || !self.s1.is_finite() {
            return Err(Error::param("s0 and s1 must be finite and distinct"));
        }
        self.params.iter().try_for_each(StapParams::validate)
    }
}

/// Simulates a track and the zero-based state of every step.
///
/// The chain starts from behaviour 0, so the first step's state is drawn from
/// the first row of `pi`.
pub fn simulate_hmm(config: &SimConfig) -> Result<(Path, Vec<usize>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let kernels = config.params.iter().map(StapKernel::new).collect::<Result<Vec<_>>>()?;
    let mut points = Vec::with_capacity(config.t);
    let mut z = Vec::with_capacity(config.t - 1);
    points.push(config.s1);
    let mut phi = step_bearing(config.s1 - config.s0, 0.0);
    let mut state = 0;
    for k in 0..config.t - 1 {
        state = dist::categorical(&mut rng, &config.pi[state], 1.0);
        let next = kernels[state].sample(&mut rng, points[k], phi);
        phi = step_bearing(next - points[k], phi);
        points.push(next);
        z.push(state);
    }
    Ok((Path::observed(points, config.s0)?, z))
}

/// The posterior-mean model over the modal number of behaviours.
pub fn posterior_sim_config(draws: &PosteriorDraws, s0: Vec2, s1: Vec2, t: usize, seed: u64) -> Result<SimConfig> {
    let alignment = align_labels(draws)?;
    let (params, pi) = posterior_mean_model(draws, &alignment)?;
    let config = SimConfig { params, pi, t, s0, s1, seed };
    config.validate()?;
    Ok(config)
}

/// Simulates from the posterior-mean model, starting at `s1` with the
/// initial bearing set by `s0`.
pub fn simulate_from_posterior(
    draws: &PosteriorDraws,
    s0: Vec2,
    s1: Vec2,
    t: usize,
    seed: u64,
) -> Result<(Path, Vec<usize>)> {
    simulate_hmm(&posterior_sim_config(draws, s0, s1, t, seed)?)
}

/// CRW with i.i.d. Weibull step-lengths and wrapped-Cauchy turning-angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcCrwConfig {
    /// Circular mean of the turning-angle.
    pub lambda: f64,
    /// Mean resultant length of the turning-angle, in (0, 1).
    pub eps: f64,
    /// Weibull shape.
    pub a: f64,
    /// Weibull scale.
    pub b: f64,
    /// Number of simulated locations.
    pub t_star: usize,
    /// Subsampling factor of the recorded path.
    pub d: usize,
    pub seed: u64,
}

/// Turning-angle spread of the subsampling presets: a wrapped-Cauchy with
/// Cauchy scale 0.1, strongly concentrated around its mean.
pub const PRESET_EPS: f64 = 0.904_837_418_035_959_6;

impl WcCrwConfig {
    fn preset(lambda: f64, a: f64, b: f64, d: usize, seed: u64) -> Self {
        WcCrwConfig { lambda, eps: PRESET_EPS, a, b, t_star: 100_000, d, seed }
    }

    /// Near-reversal turns with unit-mean exponential steps, recorded every second step.
    pub fn set1(seed: u64) -> Self {
        Self::preset(std::f64::consts::PI - 0.1, 1.0, 1.0, 2, seed)
    }

    pub fn set2(seed: u64) -> Self {
        Self::preset(std::f64::consts::PI - 0.35, 1.7, 5.0, 3, seed)
    }

    pub fn set3(seed: u64) -> Self {
        Self::preset(std::f64::consts::FRAC_PI_4 - 0.2, 15.0, 10.0, 9, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::param(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::param("Weibull shape and scale must be positive"));
        }
        if !self.lambda.is_finite() {
            return Err(Error::param("lambda must be finite"));
        }
        if self.t_star < 2 {
            return Err(Error::param("at least two locations are required"));
        }
        if self.d < 1 {
            return Err(Error::param("subsampling factor must be at least 1"));
        }
        Ok(())
    }
}

/// Wrapped-Cauchy draw with circular mean `lambda` and mean resultant length `eps`.
pub fn sample_wrapped_cauchy<R: Rng + ?Sized>(rng: &mut R, lambda: f64, eps: f64) -> f64 {
    let scale = -eps.ln();
    let u: f64 = rng.random::<f64>();
    wrap_angle(lambda + scale * (std::f64::consts::PI * (u - 0.5)).tan())
}

/// Wrapped-Cauchy density.
pub fn wrapped_cauchy_density(theta: f64, lambda: f64, eps: f64) -> f64 {
    (1.0 - eps * eps) / (2.0 * std::f64::consts::PI * (1.0 + eps * eps - 2.0 * eps * (theta - lambda).cos()))
}

/// Full-resolution path from `s0 = (-1, 0)` and `s1 = (0, 0)`.
pub fn simulate_wc_crw(config: &WcCrwConfig) -> Result<Path> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weibull = Weibull::new(config.b, config.a).map_err(|e| Error::param(e.to_string()))?;
    let n = config.t_star - 1;
    let mut theta = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for _ in 0..n {
        theta.push(sample_wrapped_cauchy(&mut rng, config.lambda, config.eps));
        r.push(weibull.sample(&mut rng));
    }
    metrics_to_path(Vec2::ZERO, 0.0, &theta, &r)
}

/// Keeps locations `d, 2d, ...` (one-based) of the path; `s0` is unchanged.
pub fn subsample_path(path: &Path, d: usize) -> Result<Path> {
    if d < 1 {
        return Err(Error::param("subsampling factor must be at least 1"));
    }
    let keep: Vec<usize> = (1..=path.len() / d).map(|i| i * d - 1).collect();
    Ok(Path {
        points: keep.iter().map(|&i| path.points[i]).collect(),
        missing: keep.iter().map(|&i| path.missing[i]).collect(),
        s0: path.s0,
        timestamps: path.timestamps.as_ref().map(|ts| keep.iter().map(|&i| ts[i]).collect()),
    })
}
