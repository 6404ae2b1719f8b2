//! The step-and-turn-with-attractive-point (STAP) emission.
//!
//! Given the current location `s` and the previous bearing `phi`, the next
//! location is bivariate normal with
//!
//! ```text
//! mean increment  M = (1 - rho) * tau * (mu - s) + rho * R(phi) * eta
//! covariance      V = R(rho * phi) * Sigma * R(rho * phi)^T
//! ```
//!
//! `rho = 0` is a biased random walk towards the attractor `mu` (a 2-D AR(1)),
//! `rho = 1` a correlated random walk whose rotated increments are `N(eta, Sigma)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{direction, rotation};
use crate::linalg::{Mat2, Vec2};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameters of one behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StapParams {
    /// Attractor.
    pub mu: Vec2,
    /// Drift in the frame of the previous bearing.
    pub eta: Vec2,
    pub sigma: Mat2,
    /// Strength of attraction.
    pub tau: f64,
    /// Weight of the correlated component.
    pub rho: f64,
}

impl StapParams {
    pub fn new(mu: Vec2, eta: Vec2, sigma: Mat2, tau: f64, rho: f64) -> Result<Self> {
        let p = StapParams { mu, eta, sigma, tau, rho };
        p.validate()?;
        Ok(p)
    }

    /// Pure biased random walk.
    pub fn brw(mu: Vec2, tau: f64, sigma: Mat2) -> Result<Self> {
        StapParams::new(mu, Vec2::ZERO, sigma, tau, 0.0)
    }

    /// Pure correlated random walk.
    pub fn crw(eta: Vec2, sigma: Mat2) -> Result<Self> {
        StapParams::new(Vec2::ZERO, eta, sigma, 0.5, 1.0)
    }

    /// `tau` is accepted on the closed interval so that simulation settings
    /// with an inactive attraction term (`rho = 1`, `tau = 0`) can be expressed.
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || !self.eta.is_finite() {
            return Err(Error::param("mu and eta must be finite"));
        }
        if !self.sigma.is_spd() {
            return Err(Error::NotSpd(format!("Sigma = {:?}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::param(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::param(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        Ok(())
    }
}

/// Conditional moments of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMoments {
    /// Expected increment `M`.
    pub mean: Vec2,
    /// Covariance `V`.
    pub cov: Mat2,
}

impl StepMoments {
    /// Length of the expected-movement vector.
    pub fn length(&self) -> f64 {
        self.mean.norm()
    }

    /// Direction of the expected-movement vector.
    pub fn direction(&self) -> Result<f64> {
        direction(self.mean)
    }
}

pub fn stap_moments(params: &StapParams, s_i: Vec2, phi_prev: f64) -> StepMoments {
    let rho = params.rho;
    let mean = (params.mu - s_i) * ((1.0 - rho) * params.tau) + rotation(phi_prev) * params.eta * rho;
    let rot = rotation(rho * phi_prev);
    StepMoments { mean, cov: rot * params.sigma * rot.transpose() }
}

/// Log-density of `s_next` given the current location and previous bearing.
pub fn stap_logdensity(s_next: Vec2, s_i: Vec2, phi_prev: f64, params: &StapParams) -> f64 {
    match StapKernel::new(params) {
        Ok(k) => k.logdensity(s_next, s_i, phi_prev),
        Err(_) => f64::NAN,
    }
}

/// Log-density of the step expressed as `(r, phi)`: the coordinate density
/// plus the polar Jacobian `log r`.
pub fn metric_loglik(r: f64, phi: f64, s_i: Vec2, phi_prev: f64, params: &StapParams) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::param(format!("step-length must be positive, got {r}")));
    }
    let s_next = s_i + Vec2::from_angle(phi) * r;
    Ok(stap_logdensity(s_next, s_i, phi_prev, params) + r.ln())
}

pub fn sample_step<R: Rng + ?Sized>(rng: &mut R, params: &StapParams, s_i: Vec2, phi_prev: f64) -> Vec2 {
    let kernel = StapKernel::new(params).expect("valid StapParams");
    kernel.sample(rng, s_i, phi_prev)
}

/// A behaviour's parameters with the covariance pre-factored, for repeated
/// density evaluation.
#[derive(Debug, Clone, Copy)]
pub struct StapKernel {
    pub params: StapParams,
    sigma_inv: Mat2,
    chol: Mat2,
    /// `-log(2π) - ½ log|Σ|`
    log_norm: f64,
}

impl StapKernel {
    pub fn new(params: &StapParams) -> Result<Self> {
        let chol = params
            .sigma
            .cholesky()
            .ok_or_else(|| Error::NotSpd(format!("Sigma = {:?}", params.sigma)))?;
        let sigma_inv = params.sigma.inverse().ok_or_else(|| Error::NotSpd("singular Sigma".into()))?;
        let log_det = 2.0 * (chol.a.ln() + chol.d.ln());
        Ok(StapKernel { params: *params, sigma_inv, chol, log_norm: -LN_2PI - 0.5 * log_det })
    }

    pub fn moments(&self, s_i: Vec2, phi_prev: f64) -> StepMoments {
        stap_moments(&self.params, s_i, phi_prev)
    }

    #[inline]
    pub fn mean_increment(&self, s_i: Vec2, phi_prev: f64) -> Vec2 {
        let p = &self.params;
        let brw = (p.mu - s_i) * ((1.0 - p.rho) * p.tau);
        if p.rho == 0.0 {
            brw
        } else {
            brw + rotation(phi_prev) * p.eta * p.rho
        }
    }

    /// Residual `s_next - s_i - M` rotated back by `R(rho * phi)ᵀ`, which is
    /// `N(0, Σ)` distributed.
    #[inline]
    pub fn standardized_residual(&self, s_next: Vec2, s_i: Vec2, phi_prev: f64) -> Vec2 {
        let e = s_next - s_i - self.mean_increment(s_i, phi_prev);
        let rho = self.params.rho;
        if rho == 0.0 {
            e
        } else {
            rotation(rho * phi_prev).transpose() * e
        }
    }

    #[inline]
    pub fn logdensity(&self, s_next: Vec2, s_i: Vec2, phi_prev: f64) -> f64 {
        let u = self.standardized_residual(s_next, s_i, phi_prev);
        self.log_norm - 0.5 * self.sigma_inv.quad_form(u)
    }

    /// Log-density value at the mode, `-log(2π) - ½ log|V|`.
    pub fn log_peak(&self) -> f64 {
        self.log_norm
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, s_i: Vec2, phi_prev: f64) -> Vec2 {
        let z = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let noise = rotation(self.params.rho * phi_prev) * (self.chol * z);
        s_i + self.mean_increment(s_i, phi_prev) + noise
    }

    pub fn sigma_inv(&self) -> Mat2 {
        self.sigma_inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::geometry::{atan_star, wrap_angle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig3(rho: f64) -> StapParams {
        StapParams::new(Vec2::ZERO, Vec2::new(0.0, 6.0), Mat2::diag(0.2, 1.0), 0.25, rho).unwrap()
    }

    #[test]
    fn brw_and_crw_reductions() {
        let s = Vec2::new(4.0, -1.0);
        let phi = 0.7;
        let m = stap_moments(&fig3(0.0), s, phi);
        assert!(m.mean.max_abs_diff((Vec2::ZERO - s) * 0.25) < 1e-15);
        assert_eq!(m.cov, Mat2::diag(0.2, 1.0));
        let m = stap_moments(&fig3(1.0), s, phi);
        let r = rotation(phi);
        assert!(m.mean.max_abs_diff(r * Vec2::new(0.0, 6.0)) < 1e-14);
        assert!(m.cov.max_abs_diff(&(r * Mat2::diag(0.2, 1.0) * r.transpose())) < 1e-14);
    }

    #[test]
    fn bcrw_mean_term_by_term() {
        // (1 - 1/3) * 0.25 * ((0,0) - (4,0)) = (-2/3, 0)
        // 1/3 * R(π/2) (0,6) = 1/3 * (-6, 0) = (-2, 0)
        let m = stap_moments(&fig3(1.0 / 3.0), Vec2::new(4.0, 0.0), PI / 2.0);
        assert!(m.mean.max_abs_diff(Vec2::new(-8.0 / 3.0, 0.0)) < 1e-14);
    }

    #[test]
    fn attraction_and_persistence_directions() {
        let s = Vec2::new(3.0, 2.0);
        let brw = StapParams::brw(Vec2::new(-1.0, 5.0), 0.4, Mat2::IDENTITY).unwrap();
        let m = stap_moments(&brw, s, 1.1);
        assert_eq!(m.direction().unwrap(), atan_star(5.0 - 2.0, -1.0 - 3.0).unwrap());
        assert!((m.length() - 0.4 * (Vec2::new(-1.0, 5.0) - s).norm()).abs() < 1e-14);

        let crw = StapParams::crw(Vec2::new(1.0, 1.0), Mat2::IDENTITY).unwrap();
        let m = stap_moments(&crw, s, 0.3);
        let expected = wrap_angle(0.3 + atan_star(1.0, 1.0).unwrap());
        assert!((m.direction().unwrap() - expected).abs() < 1e-14);
        assert!((m.length() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn peak_value() {
        let p = fig3(0.4);
        let s = Vec2::new(1.0, 2.0);
        let phi = -2.0;
        let m = stap_moments(&p, s, phi);
        let lp = stap_logdensity(s + m.mean, s, phi, &p);
        let expected = -(2.0 * PI).ln() - 0.5 * m.cov.det().ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn determinant_is_rotation_invariant() {
        for &rho in &[0.0, 0.3, 1.0] {
            let m = stap_moments(&fig3(rho), Vec2::new(1.0, 1.0), 2.5);
            assert!((m.cov.det() - 0.2).abs() < 1e-14);
        }
    }

    #[test]
    fn metric_jacobian_at_unit_step() {
        let p = fig3(0.5);
        let s = Vec2::new(0.5, 0.5);
        let l = metric_loglik(1.0, 0.3, s, 1.0, &p).unwrap();
        let c = stap_logdensity(s + Vec2::from_angle(0.3), s, 1.0, &p);
        assert_eq!(l, c);
        assert!(metric_loglik(0.0, 0.3, s, 1.0, &p).is_err());
    }

    #[test]
    fn degenerate_covariance_draw_hits_mean() {
        let p = StapParams::new(Vec2::new(1.0, 1.0), Vec2::new(0.5, 0.0), Mat2::scaled_identity(1e-12), 0.3, 0.6)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Vec2::new(-2.0, 0.5);
        let draw = sample_step(&mut rng, &p, s, 0.9);
        let m = stap_moments(&p, s, 0.9);
        assert!(draw.max_abs_diff(s + m.mean) < 1e-5);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(StapParams::new(Vec2::ZERO, Vec2::ZERO, Mat2::sym(1.0, 2.0, 1.0), 0.5, 0.5).is_err());
        assert!(StapParams::new(Vec2::ZERO, Vec2::ZERO, Mat2::IDENTITY, 1.5, 0.5).is_err());
        assert!(StapParams::new(Vec2::ZERO, Vec2::ZERO, Mat2::IDENTITY, 0.5, -0.1).is_err());
    }

    #[test]
    fn continuity_in_rho() {
        let s = Vec2::new(2.0, -3.0);
        let a = stap_moments(&fig3(1e-9), s, 2.0);
        let b = stap_moments(&fig3(0.0), s, 2.0);
        assert!(a.mean.max_abs_diff(b.mean) < 1e-7 && a.cov.max_abs_diff(&b.cov) < 1e-7);
        let a = stap_moments(&fig3(1.0 - 1e-9), s, 2.0);
        let b = stap_moments(&fig3(1.0), s, 2.0);
        assert!(a.mean.max_abs_diff(b.mean) < 1e-7 && a.cov.max_abs_diff(&b.cov) < 1e-7);
    }
}
