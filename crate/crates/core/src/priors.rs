//! Hyperprior configuration and prior samplers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::emission::StapParams;
use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};

/// Mixture weights of the `rho` prior: atoms at 0 and 1, uniform on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct RhoWeights {
    pub w0: f64,
    pub w1: f64,
    pub w01: f64,
}

impl From<[f64; 3]> for RhoWeights {
    fn from(w: [f64; 3]) -> Self {
        RhoWeights { w0: w[0], w1: w[1], w01: w[2] }
    }
}

impl From<RhoWeights> for [f64; 3] {
    fn from(w: RhoWeights) -> Self {
        [w.w0, w.w1, w.w01]
    }
}

impl Default for RhoWeights {
    fn default() -> Self {
        RhoWeights::uniform()
    }
}

impl RhoWeights {
    pub const fn uniform() -> Self {
        RhoWeights { w0: 1.0 / 3.0, w1: 1.0 / 3.0, w01: 1.0 / 3.0 }
    }

    /// Every behaviour is a correlated random walk.
    pub const fn crw_only() -> Self {
        RhoWeights { w0: 0.0, w1: 1.0, w01: 0.0 }
    }

    /// Every behaviour is a biased random walk.
    pub const fn brw_only() -> Self {
        RhoWeights { w0: 1.0, w1: 0.0, w01: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w0, self.w1, self.w01];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::config(format!("rho weights must be nonnegative, got {w:?}")));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("rho weights must sum to 1, got {w:?}")));
        }
        Ok(())
    }

    /// Log prior mass/density of `rho` with respect to counting measure on
    /// {0, 1} plus Lebesgue measure on (0, 1).
    pub fn ln_density(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            self.w0.ln()
        } else if rho == 1.0 {
            self.w1.ln()
        } else if rho > 0.0 && rho < 1.0 {
            self.w01.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// `P(rho <= d)`.
pub fn rho_prior_cdf(d: f64, w: &RhoWeights) -> f64 {
    if d < 0.0 {
        0.0
    } else if d == 0.0 {
        w.w0
    } else if d < 1.0 {
        w.w0 + w.w01 * d
    } else {
        1.0
    }
}

pub fn sample_rho_prior<R: Rng + ?Sized>(rng: &mut R, w: &RhoWeights) -> f64 {
    let u: f64 = rng.random::<f64>();
    if u < w.w0 {
        0.0
    } else if u < w.w0 + w.w1 {
        1.0
    } else {
        // open interval: resample the (measure-zero) endpoints
        loop {
            let x: f64 = rng.random::<f64>();
            if x > 0.0 {
                return x;
            }
        }
    }
}

/// Axis-aligned rectangle; the support of `s0` and of imputed locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for Domain {
    fn from(a: [f64; 4]) -> Self {
        Domain { x_min: a[0], x_max: a[1], y_min: a[2], y_max: a[3] }
    }
}

impl From<Domain> for [f64; 4] {
    fn from(d: Domain) -> Self {
        [d.x_min, d.x_max, d.y_min, d.y_max]
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::square(5.0)
    }
}

impl Domain {
    /// `[-half, half]²`
    pub fn square(half: f64) -> Self {
        Domain { x_min: -half, x_max: half, y_min: -half, y_max: half }
    }

    /// Bounding box of the finite `points`, widened by `margin` times its extent.
    pub fn bounding(points: &[Vec2], margin: f64) -> Self {
        let mut d = Domain {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for p in points.iter().filter(|p| p.is_finite()) {
            d.x_min = d.x_min.min(p.x);
            d.x_max = d.x_max.max(p.x);
            d.y_min = d.y_min.min(p.y);
            d.y_max = d.y_max.max(p.y);
        }
        let (wx, wy) = ((d.x_max - d.x_min).max(1e-9), (d.y_max - d.y_min).max(1e-9));
        Domain {
            x_min: d.x_min - margin * wx,
            x_max: d.x_max + margin * wx,
            y_min: d.y_min - margin * wy,
            y_max: d.y_max + margin * wy,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(self.y_max - self.y_min)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid domain {self:?}")))
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        Vec2::new(
            rng.random_range(self.x_min..=self.x_max),
            rng.random_range(self.y_min..=self.y_max),
        )
    }
}

/// Every hyperprior constant of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub b_mu: Vec2,
    pub w_mu: Mat2,
    pub b_eta: Vec2,
    pub w_eta: Mat2,
    /// Inverse-Wishart degrees of freedom.
    pub a_sigma: f64,
    /// Inverse-Wishart scale.
    pub c_sigma: Mat2,
    pub rho_weights: RhoWeights,
    /// Gamma(shape, rate) on `alpha + kappa`.
    pub a1: f64,
    pub b1: f64,
    /// Beta on `kappa / (alpha + kappa)`.
    pub a2: f64,
    pub b2: f64,
    /// Gamma(shape, rate) on `gamma`.
    pub a3: f64,
    pub b3: f64,
    pub domain: Domain,
    /// Weak-limit truncation level.
    pub truncation: usize,
    /// Half-width of the uniform window in the `rho` proposal.
    pub mh_c: f64,
    /// Random-walk scale for `s0`; 0.1 × domain width when absent.
    pub mh_s0_sd: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            b_mu: Vec2::ZERO,
            w_mu: Mat2::scaled_identity(1000.0),
            b_eta: Vec2::ZERO,
            w_eta: Mat2::scaled_identity(1000.0),
            a_sigma: 3.0,
            c_sigma: Mat2::IDENTITY,
            rho_weights: RhoWeights::uniform(),
            a1: 0.1,
            b1: 1.0,
            a2: 10.0,
            b2: 1.0,
            a3: 0.1,
            b3: 1.0,
            domain: Domain::default(),
            truncation: 200,
            mh_c: 0.1,
            mh_s0_sd: None,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("w_mu", &self.w_mu), ("w_eta", &self.w_eta), ("c_sigma", &self.c_sigma)] {
            if !m.is_spd() {
                return Err(Error::config(format!("{name} must be symmetric positive definite")));
            }
        }
        if !self.b_mu.is_finite() || !self.b_eta.is_finite() {
            return Err(Error::config("b_mu and b_eta must be finite"));
        }
        if !(self.a_sigma > 1.0) {
            return Err(Error::config("a_sigma must exceed dimension - 1 = 1"));
        }
        self.rho_weights.validate()?;
        for (name, v) in [
            ("a1", self.a1),
            ("b1", self.b1),
            ("a2", self.a2),
            ("b2", self.b2),
            ("a3", self.a3),
            ("b3", self.b3),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        self.domain.validate()?;
        if self.truncation < 2 {
            return Err(Error::config("truncation level must be at least 2"));
        }
        if !(self.mh_c > 0.0) {
            return Err(Error::config("mh_c must be positive"));
        }
        if let Some(sd) = self.mh_s0_sd {
            if !(sd > 0.0) {
                return Err(Error::config("mh_s0_sd must be positive"));
            }
        }
        Ok(())
    }

    pub fn s0_proposal_sd(&self) -> f64 {
        self.mh_s0_sd.unwrap_or(0.1 * self.domain.width())
    }
}

pub fn sample_stap_prior<R: Rng + ?Sized>(rng: &mut R, config: &PriorConfig) -> Result<StapParams> {
    let mu = dist::mvn_cov(rng, config.b_mu, &config.w_mu)?;
    let eta = dist::mvn_cov(rng, config.b_eta, &config.w_eta)?;
    let sigma = dist::inverse_wishart(rng, config.a_sigma, &config.c_sigma)?;
    let tau = loop {
        let t: f64 = rng.random::<f64>();
        if t > 0.0 {
            break t;
        }
    };
    let rho = sample_rho_prior(rng, &config.rho_weights);
    StapParams::new(mu, eta, sigma, tau, rho)
}

/// Concentration parameters of the sticky HDP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdpHyper {
    pub alpha: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl HdpHyper {
    /// `kappa / (alpha + kappa)`
    pub fn self_transition_fraction(&self) -> f64 {
        let s = self.alpha + self.kappa;
        if s > 0.0 {
            self.kappa / s
        } else {
            0.0
        }
    }

    pub fn from_sum_and_fraction(sum: f64, fraction: f64, gamma: f64) -> Self {
        HdpHyper { alpha: sum * (1.0 - fraction), kappa: sum * fraction, gamma }
    }
}

pub fn sample_hdp_hyper_prior<R: Rng + ?Sized>(rng: &mut R, config: &PriorConfig) -> HdpHyper {
    let sum = dist::gamma(rng, config.a1, config.b1);
    let frac = dist::beta(rng, config.a2, config.b2);
    let gamma = dist::gamma(rng, config.a3, config.b3);
    HdpHyper::from_sum_and_fraction(sum, frac, gamma)
}
