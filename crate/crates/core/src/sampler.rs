//! Blocked Gibbs sampler for the sticky HDP-HMM with STAP emissions.
//!
//! One sweep updates, in order: the state sequence by forward filtering and
//! backward sampling; each behaviour's `Sigma` and `tau` from their
//! conjugate conditionals, then `rho` by Metropolis-Hastings with `mu` and
//! `eta` integrated out, followed by a joint draw of `(mu, eta)`; the
//! transition structure and its concentration parameters; each missing
//! location; and finally `s0`.
//!
//! The transition block draws the Chinese-restaurant auxiliaries with the
//! transition matrix integrated out, then `gamma`, the global weights `beta`,
//! `alpha + kappa` and `kappa / (alpha + kappa)`, and only then the rows of
//! the transition matrix. Drawing the rows last keeps every step an exact
//! conditional of the joint model at a finite truncation level.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist;
use crate::draws::{fmt_rate, AcceptanceStats, Draw, McmcSchedule, PosteriorDraws};
use crate::emission::{StapKernel, StapParams};
use crate::error::{Error, Result};
use crate::geometry::{bearings, direction, rotation, step_bearing, Path};
use crate::linalg::{Mat2, Vec2};
use crate::priors::{sample_rho_prior, sample_stap_prior, HdpHyper, PriorConfig};

/// Conditional updates of each initial behaviour before the first sweep, so
/// that prior draws of `mu` and `eta` do not inflate the first `Sigma`.
const INIT_ROUNDS: usize = 10;

/// Probability the `rho` proposal puts on each atom.
const RHO_ATOM_PROPOSAL: f64 = 0.1;

/// One step of the path as seen by a behaviour's conditional updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub origin: Vec2,
    pub target: Vec2,
    /// Bearing of the previous step.
    pub phi_prev: f64,
}

impl Step {
    fn displacement(&self) -> Vec2 {
        self.target - self.origin
    }
}

/// Options that change what the sampler does rather than its schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SamplerOptions {
    /// Pin every step to state 0 and skip the state-sequence update.
    pub single_state: bool,
    /// Write a progress line to stderr every this many sweeps; 0 is silent.
    pub log_every: usize,
}

/// Occupation and transition counts of a state sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStats {
    /// Steps assigned to each state.
    pub counts: Vec<u64>,
    /// `trans[j][k]`: transitions from `j` to `k`, including the one out of
    /// the fixed initial state 0 into the first step's state.
    pub trans: Vec<Vec<u64>>,
}

impl SufficientStats {
    pub fn from_z(z: &[usize], n_states: usize) -> Self {
        let mut counts = vec![0; n_states];
        let mut trans = vec![vec![0; n_states]; n_states];
        let mut prev = 0;
        for &k in z {
            counts[k] += 1;
            trans[prev][k] += 1;
            prev = k;
        }
        SufficientStats { counts, trans }
    }

    pub fn row_total(&self, j: usize) -> u64 {
        self.trans[j].iter().sum()
    }
}

/// Complete sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmState {
    /// State of each step.
    pub z: Vec<usize>,
    pub pi: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub hyper: HdpHyper,
    pub params: Vec<StapParams>,
    pub s0: Vec2,
    /// Observed and imputed locations.
    pub points: Vec<Vec2>,
}

// ---------------------------------------------------------------------------
// State sequence

/// Log-density of one step under `kernel`, given the cosine and sine of the
/// previous bearing.
#[inline]
fn step_logdensity(kernel: &StapKernel, d: Vec2, origin: Vec2, phi: f64, cos: f64, sin: f64) -> f64 {
    let p = &kernel.params;
    let rho = p.rho;
    let mut m = (p.mu - origin) * ((1.0 - rho) * p.tau);
    if rho != 0.0 {
        m += Vec2::new(cos * p.eta.x - sin * p.eta.y, sin * p.eta.x + cos * p.eta.y) * rho;
    }
    let e = d - m;
    let u = if rho == 0.0 {
        e
    } else if rho == 1.0 {
        Vec2::new(cos * e.x + sin * e.y, -sin * e.x + cos * e.y)
    } else {
        let (s, c) = (rho * phi).sin_cos();
        Vec2::new(c * e.x + s * e.y, -s * e.x + c * e.y)
    };
    kernel.log_peak() - 0.5 * kernel.sigma_inv().quad_form(u)
}

/// Row-major `(T-1) × L` matrix of step log-densities under every state.
pub fn emission_loglik_matrix(points: &[Vec2], phi: &[f64], kernels: &[StapKernel]) -> Vec<f64> {
    let n_steps = points.len() - 1;
    let l = kernels.len();
    let mut out = vec![0.0; n_steps * l];
    for t in 0..n_steps {
        let (sin, cos) = phi[t].sin_cos();
        let d = points[t + 1] - points[t];
        let row = &mut out[t * l..(t + 1) * l];
        for (j, k) in kernels.iter().enumerate() {
            row[j] = step_logdensity(k, d, points[t], phi[t], cos, sin);
        }
    }
    out
}

/// Samples a state sequence given per-step log-likelihoods and the transition
/// matrix. The chain starts from the fixed state 0, so the first step's state
/// is drawn from row 0 of `pi`.
pub fn ffbs_sample_z<R: Rng + ?Sized>(rng: &mut R, loglik: &[f64], pi: &[Vec<f64>]) -> Result<Vec<usize>> {
    let l = pi.len();
    let n = loglik.len() / l;
    let flat: Vec<f64> = pi.iter().flat_map(|r| r.iter().copied()).collect();
    let mut alpha = vec![0.0; n * l];
    let mut pred = vec![0.0; l];
    for t in 0..n {
        let ll = &loglik[t * l..(t + 1) * l];
        if ll.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::NonFiniteLikelihood { index: t, sweep: None });
        }
        let max = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if t == 0 {
            pred.copy_from_slice(&flat[..l]);
        } else {
            pred.iter_mut().for_each(|x| *x = 0.0);
            let prev = &alpha[(t - 1) * l..t * l];
            for (i, &a) in prev.iter().enumerate() {
                if a > 0.0 {
                    let row = &flat[i * l..(i + 1) * l];
                    pred.iter_mut().zip(row).for_each(|(p, &q)| *p += a * q);
                }
            }
        }
        let cur = &mut alpha[t * l..(t + 1) * l];
        let mut total = 0.0;
        for j in 0..l {
            cur[j] = pred[j] * (ll[j] - max).exp();
            total += cur[j];
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NonFiniteLikelihood { index: t, sweep: None });
        }
        cur.iter_mut().for_each(|x| *x /= total);
    }
    let mut z = vec![0; n];
    if n == 0 {
        return Ok(z);
    }
    let last = &alpha[(n - 1) * l..];
    z[n - 1] = dist::categorical(rng, last, last.iter().sum());
    let mut w = vec![0.0; l];
    for t in (0..n - 1).rev() {
        let next = z[t + 1];
        let a = &alpha[t * l..(t + 1) * l];
        let mut total = 0.0;
        for i in 0..l {
            w[i] = a[i] * flat[i * l + next];
            total += w[i];
        }
        if !(total > 0.0) {
            return Err(Error::Numeric(format!("backward pass has no mass at step {t}")));
        }
        z[t] = dist::categorical(rng, &w, total);
    }
    Ok(z)
}

// ---------------------------------------------------------------------------
// Emission parameters

fn sigma_inverse(params: &StapParams) -> Result<Mat2> {
    params.sigma.inverse().ok_or_else(|| Error::NotSpd(format!("Sigma = {:?}", params.sigma)))
}

/// Precision of the step noise, `R(rho phi) Σ⁻¹ R(rho phi)ᵀ`.
fn step_precision(sigma_inv: &Mat2, rho: f64, phi: f64) -> Mat2 {
    if rho == 0.0 {
        *sigma_inv
    } else {
        let r = rotation(rho * phi);
        r * *sigma_inv * r.transpose()
    }
}

fn gaussian_from_natural(precision: Mat2, linear: Vec2) -> Result<(Vec2, Mat2)> {
    let cov = precision
        .symmetrize()
        .inverse()
        .ok_or_else(|| Error::Numeric("singular conditional precision".into()))?
        .symmetrize();
    Ok((cov * linear, cov))
}

/// Mean and covariance of `mu` given the other parameters and the steps.
pub fn mu_conditional(steps: &[Step], params: &StapParams, prior: &PriorConfig) -> Result<(Vec2, Mat2)> {
    let w_inv = prior.w_mu.inverse().ok_or_else(|| Error::NotSpd("w_mu".into()))?;
    let mut precision = w_inv;
    let mut linear = w_inv * prior.b_mu;
    let a = (1.0 - params.rho) * params.tau;
    if a != 0.0 {
        let s_inv = sigma_inverse(params)?;
        for st in steps {
            let v_inv = step_precision(&s_inv, params.rho, st.phi_prev);
            let crw = rotation(st.phi_prev) * params.eta * params.rho;
            precision += v_inv * (a * a);
            linear += v_inv * (st.displacement() - crw + st.origin * a) * a;
        }
    }
    gaussian_from_natural(precision, linear)
}

/// Mean and covariance of `eta` given the other parameters and the steps.
pub fn eta_conditional(steps: &[Step], params: &StapParams, prior: &PriorConfig) -> Result<(Vec2, Mat2)> {
    let w_inv = prior.w_eta.inverse().ok_or_else(|| Error::NotSpd("w_eta".into()))?;
    let mut precision = w_inv;
    let mut linear = w_inv * prior.b_eta;
    let rho = params.rho;
    if rho != 0.0 {
        let s_inv = sigma_inverse(params)?;
        let a = (1.0 - rho) * params.tau;
        for st in steps {
            let v_inv = step_precision(&s_inv, rho, st.phi_prev);
            let r = rotation(st.phi_prev);
            let rt_v = r.transpose() * v_inv;
            precision += rt_v * r * (rho * rho);
            linear += rt_v * (st.displacement() - (params.mu - st.origin) * a) * rho;
        }
    }
    gaussian_from_natural(precision, linear)
}

/// Mean and variance of the untruncated normal conditional of `tau`, or
/// `None` when the steps carry no information and the uniform prior stands.
pub fn tau_conditional(steps: &[Step], params: &StapParams) -> Result<Option<(f64, f64)>> {
    let rho = params.rho;
    if rho == 1.0 || steps.is_empty() {
        return Ok(None);
    }
    let s_inv = sigma_inverse(params)?;
    let (mut precision, mut linear) = (0.0, 0.0);
    for st in steps {
        let v_inv = step_precision(&s_inv, rho, st.phi_prev);
        let g = (params.mu - st.origin) * (1.0 - rho);
        let resid = st.displacement() - rotation(st.phi_prev) * params.eta * rho;
        let vg = v_inv * g;
        precision += g.dot(vg);
        linear += resid.dot(vg);
    }
    if !(precision > 0.0) {
        return Ok(None);
    }
    Ok(Some((linear / precision, 1.0 / precision)))
}

/// Degrees of freedom and scale of the inverse-Wishart conditional of `Sigma`.
pub fn sigma_conditional(steps: &[Step], params: &StapParams, prior: &PriorConfig) -> (f64, Mat2) {
    let kernel_free = |st: &Step| {
        let m = (params.mu - st.origin) * ((1.0 - params.rho) * params.tau)
            + rotation(st.phi_prev) * params.eta * params.rho;
        let e = st.displacement() - m;
        rotation(params.rho * st.phi_prev).transpose() * e
    };
    let mut scale = prior.c_sigma;
    for st in steps {
        scale += kernel_free(st).outer();
    }
    (prior.a_sigma + steps.len() as f64, scale.symmetrize())
}

/// Sum of step log-densities under `params`.
pub fn steps_loglik(steps: &[Step], params: &StapParams) -> Result<f64> {
    let kernel = StapKernel::new(params)?;
    Ok(steps.iter().map(|st| kernel.logdensity(st.target, st.origin, st.phi_prev)).sum())
}

fn rho_window(rho: f64, c: f64) -> (f64, f64) {
    ((rho - c).max(0.0), (rho + c).min(1.0))
}

/// Log proposal density of `to` from `from`, with respect to counting
/// measure on {0, 1} plus Lebesgue measure on (0, 1).
pub fn rho_proposal_ln_density(to: f64, from: f64, c: f64) -> f64 {
    if to == 0.0 || to == 1.0 {
        return RHO_ATOM_PROPOSAL.ln();
    }
    let (lo, hi) = rho_window(from, c);
    if to >= lo && to <= hi {
        (1.0 - 2.0 * RHO_ATOM_PROPOSAL).ln() - (hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub fn propose_rho<R: Rng + ?Sized>(rng: &mut R, from: f64, c: f64) -> f64 {
    let u: f64 = rng.random::<f64>();
    if u < RHO_ATOM_PROPOSAL {
        0.0
    } else if u < 2.0 * RHO_ATOM_PROPOSAL {
        1.0
    } else {
        let (lo, hi) = rho_window(from, c);
        loop {
            let x = rng.random_range(lo..hi);
            if x > 0.0 && x < 1.0 {
                return x;
            }
        }
    }
}

/// One Metropolis-Hastings update of `params.rho`; returns whether the
/// proposal was accepted.
pub fn update_rho_mh<R: Rng + ?Sized>(
    rng: &mut R,
    steps: &[Step],
    params: &mut StapParams,
    prior: &PriorConfig,
) -> Result<bool> {
    let w = &prior.rho_weights;
    let current = params.rho;
    let proposed = propose_rho(rng, current, prior.mh_c);
    let prior_new = w.ln_density(proposed);
    if prior_new == f64::NEG_INFINITY || proposed == current {
        return Ok(false);
    }
    let q_back = rho_proposal_ln_density(current, proposed, prior.mh_c);
    if q_back == f64::NEG_INFINITY {
        return Ok(false);
    }
    let q_fwd = rho_proposal_ln_density(proposed, current, prior.mh_c);
    let mut cand = *params;
    cand.rho = proposed;
    let log_ratio = steps_loglik(steps, &cand)? - steps_loglik(steps, params)? + prior_new
        - w.ln_density(current)
        + q_back
        - q_fwd;
    if log_ratio.is_nan() {
        return Err(Error::Numeric("rho acceptance ratio is NaN".into()));
    }
    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
        params.rho = proposed;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Gaussian conditional of the stacked `(mu, eta)` given `rho`, `tau` and
/// `Sigma`, which the step mean depends on linearly.
struct LocationDrift {
    /// Lower Cholesky factor of the conditional precision.
    chol: [[f64; 4]; 4],
    mean: [f64; 4],
    /// Log-density of the steps with `(mu, eta)` integrated out.
    ln_marginal: f64,
}

fn add_block(p: &mut [[f64; 4]; 4], i: usize, j: usize, m: Mat2) {
    p[i][j] += m.a;
    p[i][j + 1] += m.b;
    p[i + 1][j] += m.c;
    p[i + 1][j + 1] += m.d;
}

fn cholesky4(p: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = p[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (0.5 * (p[i][j] + p[j][i]) - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &[[f64; 4]; 4], b: [f64; 4]) -> [f64; 4] {
    let mut x = [0.0; 4];
    for i in 0..4 {
        let s: f64 = (0..i).map(|k| l[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

fn solve_upper_t(l: &[[f64; 4]; 4], b: [f64; 4]) -> [f64; 4] {
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let s: f64 = (i + 1..4).map(|k| l[k][i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

fn location_drift(steps: &[Step], params: &StapParams, prior: &PriorConfig) -> Result<LocationDrift> {
    let w_mu_inv = prior.w_mu.inverse().ok_or_else(|| Error::NotSpd("w_mu".into()))?;
    let w_eta_inv = prior.w_eta.inverse().ok_or_else(|| Error::NotSpd("w_eta".into()))?;
    let mut p = [[0.0; 4]; 4];
    add_block(&mut p, 0, 0, w_mu_inv);
    add_block(&mut p, 2, 2, w_eta_inv);
    let mut h_mu = w_mu_inv * prior.b_mu;
    let mut h_eta = w_eta_inv * prior.b_eta;
    let mut ln_m = 0.5 * (w_mu_inv.det().ln() + w_eta_inv.det().ln())
        - 0.5 * (prior.b_mu.dot(h_mu) + prior.b_eta.dot(h_eta));

    let s_inv = sigma_inverse(params)?;
    let half_ln_det_q = -0.5 * params.sigma.det().ln();
    let (rho, a) = (params.rho, (1.0 - params.rho) * params.tau);
    let (mut p11, mut p12, mut p22) = (Mat2::ZERO, Mat2::ZERO, Mat2::ZERO);
    for st in steps {
        let q = step_precision(&s_inv, rho, st.phi_prev);
        let r = rotation(st.phi_prev);
        let y = st.displacement() + st.origin * a;
        let qy = q * y;
        ln_m += half_ln_det_q - std::f64::consts::LN_2 - std::f64::consts::PI.ln() - 0.5 * y.dot(qy);
        let qr = q * r;
        p11 += q * (a * a);
        p12 += qr * (a * rho);
        p22 += r.transpose() * qr * (rho * rho);
        h_mu += qy * a;
        h_eta += r.transpose() * qy * rho;
    }
    add_block(&mut p, 0, 0, p11);
    add_block(&mut p, 0, 2, p12);
    add_block(&mut p, 2, 0, p12.transpose());
    add_block(&mut p, 2, 2, p22);
    let chol = cholesky4(&p).ok_or_else(|| Error::Numeric("singular (mu, eta) conditional precision".into()))?;
    let u = solve_lower(&chol, [h_mu.x, h_mu.y, h_eta.x, h_eta.y]);
    let mean = solve_upper_t(&chol, u);
    ln_m += 0.5 * u.iter().map(|v| v * v).sum::<f64>() - (0..4).map(|i| chol[i][i].ln()).sum::<f64>();
    Ok(LocationDrift { chol, mean, ln_marginal: ln_m })
}

/// Log-density of the steps given `rho`, `tau` and `Sigma`, with `mu` and
/// `eta` integrated against their Gaussian priors.
pub fn location_drift_ln_marginal(steps: &[Step], params: &StapParams, prior: &PriorConfig) -> Result<f64> {
    Ok(location_drift(steps, params, prior)?.ln_marginal)
}

/// Mean and covariance of the joint conditional of `(mu, eta)`, stacked in
/// that order.
pub fn location_drift_conditional(
    steps: &[Step],
    params: &StapParams,
    prior: &PriorConfig,
) -> Result<([f64; 4], [[f64; 4]; 4])> {
    let ld = location_drift(steps, params, prior)?;
    let mut cov = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut e = [0.0; 4];
        e[j] = 1.0;
        let col = solve_upper_t(&ld.chol, solve_lower(&ld.chol, e));
        for i in 0..4 {
            cov[i][j] = col[i];
        }
    }
    Ok((ld.mean, cov))
}

/// Draws `mu` and `eta` jointly from their conditional.
pub fn sample_location_drift<R: Rng + ?Sized>(
    rng: &mut R,
    steps: &[Step],
    params: &mut StapParams,
    prior: &PriorConfig,
) -> Result<()> {
    let ld = location_drift(steps, params, prior)?;
    let z = [dist::std_normal(rng), dist::std_normal(rng), dist::std_normal(rng), dist::std_normal(rng)];
    let e = solve_upper_t(&ld.chol, z);
    params.mu = Vec2::new(ld.mean[0] + e[0], ld.mean[1] + e[1]);
    params.eta = Vec2::new(ld.mean[2] + e[2], ld.mean[3] + e[3]);
    Ok(())
}

/// Metropolis-Hastings update of `rho` targeting its conditional with `mu`
/// and `eta` integrated out. Follow it with [`sample_location_drift`] so the
/// pair `(rho, (mu, eta))` is updated as one block.
pub fn update_rho_collapsed<R: Rng + ?Sized>(
    rng: &mut R,
    steps: &[Step],
    params: &mut StapParams,
    prior: &PriorConfig,
) -> Result<bool> {
    let w = &prior.rho_weights;
    let current = params.rho;
    let proposed = propose_rho(rng, current, prior.mh_c);
    let prior_new = w.ln_density(proposed);
    if prior_new == f64::NEG_INFINITY || proposed == current {
        return Ok(false);
    }
    let q_back = rho_proposal_ln_density(current, proposed, prior.mh_c);
    if q_back == f64::NEG_INFINITY {
        return Ok(false);
    }
    let q_fwd = rho_proposal_ln_density(proposed, current, prior.mh_c);
    let mut cand = *params;
    cand.rho = proposed;
    let log_ratio = location_drift_ln_marginal(steps, &cand, prior)? - location_drift_ln_marginal(steps, params, prior)?
        + prior_new
        - w.ln_density(current)
        + q_back
        - q_fwd;
    if log_ratio.is_nan() {
        return Err(Error::Numeric("rho acceptance ratio is NaN".into()));
    }
    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
        params.rho = proposed;
        Ok(true)
    } else {
        Ok(false)
    }
}

fn inverse_wishart_guarded<R: Rng + ?Sized>(rng: &mut R, df: f64, scale: &Mat2) -> Result<Mat2> {
    for _ in 0..2 {
        if let Ok(s) = dist::inverse_wishart(rng, df, scale) {
            if s.is_spd() {
                return Ok(s);
            }
        }
    }
    Err(Error::NotSpd(format!("inverse-Wishart draw with scale {scale:?}")))
}

/// Updates one behaviour's parameters given its steps. An unvisited behaviour
/// is drawn from the prior. Returns the `rho` acceptance flag when a proposal
/// was made.
pub fn update_emission<R: Rng + ?Sized>(
    rng: &mut R,
    steps: &[Step],
    params: &mut StapParams,
    prior: &PriorConfig,
) -> Result<Option<bool>> {
    if steps.is_empty() {
        *params = sample_stap_prior(rng, prior)?;
        return Ok(None);
    }
    let (df, scale) = sigma_conditional(steps, params, prior);
    params.sigma = inverse_wishart_guarded(rng, df, &scale)?;
    params.tau = match tau_conditional(steps, params)? {
        Some((mean, var)) => dist::truncated_normal(rng, mean, var.sqrt(), 0.0, 1.0),
        None => loop {
            let t: f64 = rng.random::<f64>();
            if t > 0.0 {
                break t;
            }
        },
    };
    let w = &prior.rho_weights;
    let accepted = if w.w0 == 1.0 || w.w1 == 1.0 {
        params.rho = sample_rho_prior(rng, w);
        None
    } else {
        Some(update_rho_collapsed(rng, steps, params, prior)?)
    };
    sample_location_drift(rng, steps, params, prior)?;
    Ok(accepted)
}

// ---------------------------------------------------------------------------
// Transition structure

/// Chinese-restaurant auxiliaries of the sticky HDP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HdpAux {
    /// Tables serving dish `k` in restaurant `j`.
    pub m: Vec<Vec<u64>>,
    /// Tables in restaurant `j` whose dish came from the self-transition bonus.
    pub w: Vec<u64>,
    /// Per-dish table counts after removing the override tables.
    pub mbar_cols: Vec<u64>,
}

impl HdpAux {
    pub fn m_total(&self) -> u64 {
        self.m.iter().flatten().sum()
    }

    pub fn w_total(&self) -> u64 {
        self.w.iter().sum()
    }
}

pub fn sample_hdp_aux<R: Rng + ?Sized>(rng: &mut R, stats: &SufficientStats, beta: &[f64], hyper: &HdpHyper) -> HdpAux {
    let l = beta.len();
    let frac = hyper.self_transition_fraction();
    let mut m = vec![vec![0; l]; l];
    let mut w = vec![0; l];
    let mut mbar_cols = vec![0; l];
    for j in 0..l {
        for k in 0..l {
            let n = stats.trans[j][k];
            if n == 0 {
                continue;
            }
            let c = hyper.alpha * beta[k] + if j == k { hyper.kappa } else { 0.0 };
            m[j][k] = dist::crt(rng, n, c);
        }
        let p = if frac > 0.0 { frac / (frac + beta[j] * (1.0 - frac)) } else { 0.0 };
        w[j] = dist::binomial(rng, m[j][j], p);
        for k in 0..l {
            mbar_cols[k] += if j == k { m[j][k] - w[j] } else { m[j][k] };
        }
    }
    HdpAux { m, w, mbar_cols }
}

/// Draws `gamma` with `beta` integrated out.
///
/// The weak-limit top level is a finite Dirichlet-multinomial, so the number
/// of top-level tables is itself a Chinese-restaurant draw at concentration
/// `gamma / L`; given those and the usual beta auxiliary, `gamma` is a
/// two-component gamma mixture.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, mbar_cols: &[u64], gamma: f64, prior: &PriorConfig) -> f64 {
    let total: u64 = mbar_cols.iter().sum();
    if total == 0 {
        return dist::gamma(rng, prior.a3, prior.b3);
    }
    let l = mbar_cols.len() as f64;
    let tables: u64 = mbar_cols.iter().map(|&n| dist::crt(rng, n, gamma / l)).sum();
    let aux = dist::beta(rng, gamma + 1.0, total as f64);
    let rate = prior.b3 - aux.ln();
    let shape = prior.a3 + tables as f64;
    let odds = (shape - 1.0) / (total as f64 * rate);
    let heavy = rng.random::<f64>() < odds / (1.0 + odds);
    dist::gamma(rng, if heavy { shape } else { shape - 1.0 }, rate)
}

pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, mbar_cols: &[u64], gamma: f64) -> Vec<f64> {
    let l = mbar_cols.len() as f64;
    let params: Vec<f64> = mbar_cols.iter().map(|&m| gamma / l + m as f64).collect();
    dist::dirichlet(rng, &params)
}

/// Draws `alpha + kappa` and `kappa / (alpha + kappa)` and returns the pair.
pub fn sample_alpha_kappa<R: Rng + ?Sized>(
    rng: &mut R,
    stats: &SufficientStats,
    aux: &HdpAux,
    hyper: &HdpHyper,
    prior: &PriorConfig,
) -> (f64, f64) {
    let sum = hyper.alpha + hyper.kappa;
    let (mut log_r, mut s) = (0.0, 0.0);
    for j in 0..stats.trans.len() {
        let n = stats.row_total(j) as f64;
        if n == 0.0 {
            continue;
        }
        log_r += dist::beta(rng, sum + 1.0, n).ln();
        if rng.random::<f64>() * (n + sum) < n {
            s += 1.0;
        }
    }
    let m_total = aux.m_total() as f64;
    let new_sum = dist::gamma(rng, prior.a1 + m_total - s, prior.b1 - log_r);
    let w_total = aux.w_total() as f64;
    let frac = dist::beta(rng, prior.a2 + w_total, prior.b2 + m_total - w_total);
    (new_sum, frac)
}

pub fn sample_pi<R: Rng + ?Sized>(rng: &mut R, stats: &SufficientStats, beta: &[f64], hyper: &HdpHyper) -> Vec<Vec<f64>> {
    let l = beta.len();
    (0..l)
        .map(|j| {
            let params: Vec<f64> = (0..l)
                .map(|k| {
                    hyper.alpha * beta[k]
                        + if j == k { hyper.kappa } else { 0.0 }
                        + stats.trans[j][k] as f64
                })
                .collect();
            dist::dirichlet(rng, &params)
        })
        .collect()
}

/// The whole transition block, in the order described in the module docs.
pub fn update_transitions<R: Rng + ?Sized>(rng: &mut R, stats: &SufficientStats, state: &mut HmmState, prior: &PriorConfig) {
    let aux = sample_hdp_aux(rng, stats, &state.beta, &state.hyper);
    let gamma = sample_gamma(rng, &aux.mbar_cols, state.hyper.gamma, prior);
    state.beta = sample_beta(rng, &aux.mbar_cols, gamma);
    let (sum, frac) = sample_alpha_kappa(rng, stats, &aux, &state.hyper, prior);
    state.hyper = HdpHyper::from_sum_and_fraction(sum, frac, gamma);
    state.pi = sample_pi(rng, stats, &state.beta, &state.hyper);
}

// ---------------------------------------------------------------------------
// The chain

/// A running chain bound to a path and a prior.
#[derive(Debug, Clone)]
pub struct Chain<'a> {
    prior: &'a PriorConfig,
    options: SamplerOptions,
    pub state: HmmState,
    /// `phi[k]`: bearing into location `k`; `phi[0]` is the direction from `s0`.
    phi: Vec<f64>,
    kernels: Vec<StapKernel>,
    missing: Vec<usize>,
    pub acceptance: AcceptanceStats,
    last_loglik: f64,
}

impl<'a> Chain<'a> {
    /// Initial state: runs of geometric length (mean 10 steps), each given a
    /// label drawn uniformly from the first `min(L, 10)` behaviours, or every
    /// step in behaviour 0 for a single-state fit; concentration parameters at
    /// their prior means, uniform `beta` and the matching mean transition
    /// matrix; behaviours drawn from the prior and then updated a few times
    /// given their initial steps; missing locations interpolated linearly.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, path: &Path, prior: &'a PriorConfig, options: SamplerOptions) -> Result<Self> {
        path.validate()?;
        prior.validate()?;
        let l = prior.truncation;
        if l > u16::MAX as usize + 1 {
            return Err(Error::config(format!("truncation level {l} exceeds {}", u16::MAX as usize + 1)));
        }
        let points = interpolate_missing(path);
        let s0 = initial_s0(path, prior)?;
        let hyper = HdpHyper::from_sum_and_fraction(
            prior.a1 / prior.b1,
            prior.a2 / (prior.a2 + prior.b2),
            prior.a3 / prior.b3,
        );
        let beta = vec![1.0 / l as f64; l];
        let sum = hyper.alpha + hyper.kappa;
        let pi = (0..l)
            .map(|j| {
                (0..l)
                    .map(|k| (hyper.alpha * beta[k] + if j == k { hyper.kappa } else { 0.0 }) / sum)
                    .collect()
            })
            .collect();
        let params = (0..l).map(|_| sample_stap_prior(rng, prior)).collect::<Result<Vec<_>>>()?;
        let phi = bearings(s0, &points)?;
        let z = if options.single_state { vec![0; points.len() - 1] } else { initial_z(rng, points.len() - 1, l) };
        let state = HmmState { z, pi, beta, hyper, params, s0, points };
        let mut chain = Chain {
            prior,
            options,
            state,
            phi,
            kernels: Vec::new(),
            missing: path.missing_indices(),
            acceptance: AcceptanceStats::default(),
            last_loglik: f64::NAN,
        };
        for j in 0..l {
            let steps = chain.steps_of(j);
            if !steps.is_empty() {
                for _ in 0..INIT_ROUNDS {
                    update_emission(rng, &steps, &mut chain.state.params[j], prior)?;
                }
            }
        }
        chain.rebuild_kernels()?;
        Ok(chain)
    }

    /// Replaces the locations (keeping `s0` and every parameter), for
    /// successive-conditional simulation.
    pub fn set_points(&mut self, points: Vec<Vec2>) -> Result<()> {
        if points.len() != self.state.points.len() {
            return Err(Error::LengthMismatch { left: self.state.points.len(), right: points.len() });
        }
        self.phi = bearings(self.state.s0, &points)?;
        self.state.points = points;
        Ok(())
    }

    /// Replaces every behaviour's parameters.
    pub fn set_params(&mut self, params: Vec<StapParams>) -> Result<()> {
        if params.len() != self.state.params.len() {
            return Err(Error::LengthMismatch { left: self.state.params.len(), right: params.len() });
        }
        self.state.params = params;
        self.rebuild_kernels()
    }

    pub fn kernels(&self) -> &[StapKernel] {
        &self.kernels
    }

    /// Bearings of the current completed path.
    pub fn bearings(&self) -> &[f64] {
        &self.phi
    }

    /// Coordinate log-likelihood of the state sequence at the start of the
    /// latest sweep.
    pub fn last_loglik(&self) -> f64 {
        self.last_loglik
    }

    fn rebuild_kernels(&mut self) -> Result<()> {
        self.kernels = self.state.params.iter().map(StapKernel::new).collect::<Result<_>>()?;
        Ok(())
    }

    fn step(&self, k: usize) -> Step {
        Step { origin: self.state.points[k], target: self.state.points[k + 1], phi_prev: self.phi[k] }
    }

    fn steps_of(&self, j: usize) -> Vec<Step> {
        self.state.z.iter().enumerate().filter(|(_, &s)| s == j).map(|(k, _)| self.step(k)).collect()
    }

    /// One full sweep.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R, index: usize) -> Result<()> {
        let with_sweep = |e: Error| match e {
            Error::NonFiniteLikelihood { index: i, .. } => Error::NonFiniteLikelihood { index: i, sweep: Some(index) },
            other => other,
        };
        let l = self.state.params.len();
        let loglik = emission_loglik_matrix(&self.state.points, &self.phi, &self.kernels);
        if !self.options.single_state {
            self.state.z = ffbs_sample_z(rng, &loglik, &self.state.pi).map_err(with_sweep)?;
        }
        self.last_loglik = self.state.z.iter().enumerate().map(|(t, &j)| loglik[t * l + j]).sum();

        let mut members: Vec<Vec<Step>> = vec![Vec::new(); l];
        for (k, &j) in self.state.z.iter().enumerate() {
            members[j].push(self.step(k));
        }
        for (j, steps) in members.iter().enumerate() {
            if let Some(acc) = update_emission(rng, steps, &mut self.state.params[j], self.prior)? {
                self.acceptance.rho_proposed += 1;
                self.acceptance.rho_accepted += acc as u64;
            }
        }
        self.rebuild_kernels()?;

        let stats = SufficientStats::from_z(&self.state.z, l);
        update_transitions(rng, &stats, &mut self.state, self.prior);

        for i in 0..self.missing.len() {
            let m = self.missing[i];
            let acc = self.update_missing(rng, m)?;
            self.acceptance.missing_proposed += 1;
            self.acceptance.missing_accepted += acc as u64;
        }
        let acc = self.update_s0(rng)?;
        self.acceptance.s0_proposed += 1;
        self.acceptance.s0_accepted += acc as u64;
        Ok(())
    }

    /// Log-density change when `points[m]` is replaced by `value` (for
    /// `changed = Some((m, value))`) and `s0` by `s0`. Bearings are recomputed
    /// from index `first` until they agree with the current ones again; the
    /// new bearings are returned alongside.
    fn local_delta(&self, changed: Option<(usize, Vec2)>, s0: Vec2, first: usize) -> Result<(f64, Vec<f64>)> {
        let points = &self.state.points;
        let n = points.len();
        let pt = |i: usize| match changed {
            Some((m, v)) if m == i => v,
            _ => points[i],
        };
        let mut new_phi: Vec<f64> = Vec::new();
        for k in first..n {
            let phi_k = if k == 0 {
                direction(pt(0) - s0).map_err(|_| Error::UndefinedDirection { index: Some(0) })?
            } else {
                let prev = new_phi.last().copied().unwrap_or(self.phi[k - 1]);
                step_bearing(pt(k) - pt(k - 1), prev)
            };
            if k > first + 1 && phi_k == self.phi[k] {
                break;
            }
            new_phi.push(phi_k);
        }
        let mut delta = 0.0;
        for (i, &phi_k) in new_phi.iter().enumerate() {
            let k = first + i;
            if k + 1 >= n {
                break;
            }
            let kern = &self.kernels[self.state.z[k]];
            let old = kern.logdensity(points[k + 1], points[k], self.phi[k]);
            let new = kern.logdensity(pt(k + 1), pt(k), phi_k);
            delta += new - old;
        }
        Ok((delta, new_phi))
    }

    /// Metropolis-Hastings update of the missing location `m`, proposing from
    /// the step that leads into it. Returns whether the proposal was accepted.
    pub fn update_missing<R: Rng + ?Sized>(&mut self, rng: &mut R, m: usize) -> Result<bool> {
        let j = self.state.z[m - 1];
        let proposal = self.kernels[j].sample(rng, self.state.points[m - 1], self.phi[m - 1]);
        if !self.prior.domain.contains(proposal) {
            return Ok(false);
        }
        let (delta, new_phi) = self.local_delta(Some((m, proposal)), self.state.s0, m)?;
        if delta.is_nan() {
            return Err(Error::Numeric(format!("missing-location ratio at {m} is NaN")));
        }
        if delta >= 0.0 || rng.random::<f64>().ln() < delta {
            self.state.points[m] = proposal;
            self.phi[m..m + new_phi.len()].copy_from_slice(&new_phi);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Random-walk Metropolis update of `s0` within the domain.
    pub fn update_s0<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let sd = self.prior.s0_proposal_sd();
        let proposal = self.state.s0 + Vec2::new(dist::std_normal(rng), dist::std_normal(rng)) * sd;
        if !self.prior.domain.contains(proposal) || proposal == self.state.points[0] {
            return Ok(false);
        }
        let (delta, new_phi) = self.local_delta(None, proposal, 0)?;
        if delta >= 0.0 || rng.random::<f64>().ln() < delta {
            self.state.s0 = proposal;
            self.phi[..new_phi.len()].copy_from_slice(&new_phi);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Snapshot of the state for storage.
    /// Snapshot of the visited states, relabelled `0..K` in ascending order
    /// of their sampler label.
    pub fn draw(&self, sweep: usize) -> Draw {
        let l = self.state.params.len();
        let mut compact = vec![usize::MAX; l];
        let mut labels = Vec::new();
        for &k in &self.state.z {
            compact[k] = 0;
        }
        for (j, slot) in compact.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = labels.len();
                labels.push(j);
            }
        }
        Draw {
            sweep,
            labels: labels.iter().map(|&j| j as u16).collect(),
            params: labels.iter().map(|&j| self.state.params[j]).collect(),
            pi: labels.iter().map(|&j| labels.iter().map(|&k| self.state.pi[j][k]).collect()).collect(),
            beta: labels.iter().map(|&j| self.state.beta[j]).collect(),
            hyper: self.state.hyper,
            z: self.state.z.iter().map(|&k| compact[k] as u16).collect(),
            s0: self.state.s0,
            imputed: self.missing.iter().map(|&m| self.state.points[m]).collect(),
        }
    }
}

fn initial_z<R: Rng + ?Sized>(rng: &mut R, n: usize, l: usize) -> Vec<usize> {
    let labels = l.min(10);
    let mut z = Vec::with_capacity(n);
    let mut label = rng.random_range(0..labels);
    for _ in 0..n {
        if rng.random::<f64>() < 0.1 {
            label = rng.random_range(0..labels);
        }
        z.push(label);
    }
    z
}

fn interpolate_missing(path: &Path) -> Vec<Vec2> {
    let mut points = path.points.clone();
    let n = points.len();
    let mut i = 0;
    while i < n {
        if !path.missing[i] {
            i += 1;
            continue;
        }
        let start = i - 1;
        let mut end = i;
        while end < n && path.missing[end] {
            end += 1;
        }
        let a = points[start];
        let b = if end < n { points[end] } else { a };
        let span = (end - start) as f64;
        for (k, p) in points.iter_mut().enumerate().take(end).skip(i) {
            *p = a + (b - a) * ((k - start) as f64 / span);
        }
        i = end;
    }
    points
}

fn initial_s0(path: &Path, prior: &PriorConfig) -> Result<Vec2> {
    let d = &prior.domain;
    let p0 = path.points[0];
    if d.contains(path.s0) && path.s0 != p0 {
        return Ok(path.s0);
    }
    let centre = Vec2::new(0.5 * (d.x_min + d.x_max), 0.5 * (d.y_min + d.y_max));
    let candidates = [centre, Vec2::new(d.x_min, d.y_min), Vec2::new(d.x_max, d.y_max)];
    candidates
        .into_iter()
        .find(|&c| c != p0)
        .ok_or_else(|| Error::config("cannot place s0 inside the domain"))
}

/// Runs a chain and keeps the thinned post-burn-in sweeps.
pub fn run_mcmc(path: &Path, prior: &PriorConfig, schedule: &McmcSchedule) -> Result<PosteriorDraws> {
    run_mcmc_with(path, prior, schedule, &SamplerOptions::default())
}

pub fn run_mcmc_with(
    path: &Path,
    prior: &PriorConfig,
    schedule: &McmcSchedule,
    options: &SamplerOptions,
) -> Result<PosteriorDraws> {
    if schedule.thin == 0 {
        return Err(Error::config("thin must be at least 1"));
    }
    if schedule.burnin >= schedule.iterations {
        return Err(Error::config(format!(
            "burnin ({}) must be smaller than iterations ({})",
            schedule.burnin, schedule.iterations
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut chain = Chain::new(&mut rng, path, prior, *options)?;
    let mut draws = Vec::with_capacity(schedule.n_kept());
    let start = Instant::now();
    for sweep in 1..=schedule.iterations {
        chain.sweep(&mut rng, sweep)?;
        if schedule.keeps(sweep) {
            draws.push(chain.draw(sweep));
        }
        if options.log_every > 0 && sweep % options.log_every == 0 {
            let k = SufficientStats::from_z(&chain.state.z, prior.truncation).counts.iter().filter(|&&c| c > 0).count();
            let a = &chain.acceptance;
            eprintln!(
                "sweep {sweep}/{} loglik {:.3} K {k} accept rho {} missing {} s0 {} elapsed {:.1}s",
                schedule.iterations,
                chain.last_loglik(),
                fmt_rate(a.rho_rate()),
                fmt_rate(a.missing_rate()),
                fmt_rate(a.s0_rate()),
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(PosteriorDraws {
        schedule: *schedule,
        truncation: prior.truncation,
        path_len: path.len(),
        missing_indices: path.missing_indices(),
        draws,
        acceptance: chain.acceptance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{Domain, RhoWeights};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn bcrw() -> StapParams {
        StapParams::new(Vec2::new(1.0, -2.0), Vec2::new(0.6, 0.3), Mat2::sym(0.4, 0.1, 0.3), 0.3, 0.5).unwrap()
    }

    /// Locations simulated from one behaviour, with their bearings.
    fn simulate(params: &StapParams, n: usize, seed: u64) -> (Vec<Vec2>, Vec<f64>, Vec2) {
        let mut r = rng(seed);
        let kernel = StapKernel::new(params).unwrap();
        let s0 = Vec2::new(-1.0, 0.0);
        let mut points = vec![Vec2::ZERO];
        let mut phi = vec![direction(points[0] - s0).unwrap()];
        for k in 0..n {
            let next = kernel.sample(&mut r, points[k], phi[k]);
            phi.push(step_bearing(next - points[k], phi[k]));
            points.push(next);
        }
        (points, phi, s0)
    }

    fn steps_from(points: &[Vec2], phi: &[f64]) -> Vec<Step> {
        (0..points.len() - 1).map(|k| Step { origin: points[k], target: points[k + 1], phi_prev: phi[k] }).collect()
    }

    fn ln_mvn(x: Vec2, mean: Vec2, cov: &Mat2) -> f64 {
        let inv = cov.inverse().unwrap();
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * cov.det().ln() - 0.5 * inv.quad_form(x - mean)
    }

    fn ln_inverse_wishart(s: &Mat2, df: f64, scale: &Mat2) -> f64 {
        // up to a constant in s
        -0.5 * (df + 3.0) * s.det().ln() - 0.5 * (*scale * s.inverse().unwrap()).trace()
    }

    #[test]
    fn emission_matrix_matches_kernel_density() {
        let (points, phi, _) = simulate(&bcrw(), 20, 1);
        let params = [
            bcrw(),
            StapParams { rho: 0.0, ..bcrw() },
            StapParams { rho: 1.0, ..bcrw() },
        ];
        let kernels: Vec<_> = params.iter().map(|p| StapKernel::new(p).unwrap()).collect();
        let m = emission_loglik_matrix(&points, &phi, &kernels);
        for t in 0..20 {
            for (j, k) in kernels.iter().enumerate() {
                let direct = k.logdensity(points[t + 1], points[t], phi[t]);
                assert!((m[t * 3 + j] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ffbs_matches_enumeration() {
        let mut r = rng(2);
        let (n, l) = (5usize, 3usize);
        let pi: Vec<Vec<f64>> = vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.25, 0.25, 0.5]];
        let loglik: Vec<f64> = (0..n * l).map(|_| dist::std_normal(&mut r)).collect();
        // exact posterior over all L^n sequences
        let mut exact = vec![0.0; l.pow(n as u32)];
        for (code, e) in exact.iter_mut().enumerate() {
            let mut c = code;
            let mut prev = 0;
            let mut lp = 0.0f64;
            for t in 0..n {
                let k = c % l;
                c /= l;
                lp += pi[prev][k].ln() + loglik[t * l + k];
                prev = k;
            }
            *e = lp.exp();
        }
        let total: f64 = exact.iter().sum();
        exact.iter_mut().for_each(|e| *e /= total);
        let draws = 200_000;
        let mut freq = vec![0.0; exact.len()];
        for _ in 0..draws {
            let z = ffbs_sample_z(&mut r, &loglik, &pi).unwrap();
            let code: usize = z.iter().rev().fold(0, |acc, &k| acc * l + k);
            freq[code] += 1.0 / draws as f64;
        }
        for (f, e) in freq.iter().zip(&exact) {
            let se = (e * (1.0 - e) / draws as f64).sqrt();
            assert!((f - e).abs() < 5.0 * se + 1e-4, "{f} vs {e}");
        }
    }

    #[test]
    fn ffbs_reports_non_finite_likelihood() {
        let pi = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let err = ffbs_sample_z(&mut rng(3), &[0.0, 0.0, f64::NAN, 0.0], &pi).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLikelihood { index: 1, .. }));
    }

    /// The conditional of a parameter is exact when prior × likelihood divided
    /// by the claimed conditional density is constant in that parameter.
    fn assert_constant(values: &[f64]) {
        let first = values[0];
        for v in values {
            assert!((v - first).abs() < 1e-8 * first.abs().max(1.0), "{values:?}");
        }
    }

    #[test]
    fn mu_and_eta_conditionals_are_exact() {
        let truth = bcrw();
        let (points, phi, _) = simulate(&truth, 15, 4);
        let steps = steps_from(&points, &phi);
        let prior = PriorConfig { w_mu: Mat2::scaled_identity(4.0), w_eta: Mat2::sym(2.0, 0.3, 1.0), b_eta: Vec2::new(0.5, 0.0), ..Default::default() };
        let mut r = rng(5);
        let (m, c) = mu_conditional(&steps, &truth, &prior).unwrap();
        let vals: Vec<f64> = (0..6)
            .map(|_| {
                let mu = Vec2::new(dist::std_normal(&mut r), dist::std_normal(&mut r)) * 3.0;
                let p = StapParams { mu, ..truth };
                ln_mvn(mu, prior.b_mu, &prior.w_mu) + steps_loglik(&steps, &p).unwrap() - ln_mvn(mu, m, &c)
            })
            .collect();
        assert_constant(&vals);
        let (m, c) = eta_conditional(&steps, &truth, &prior).unwrap();
        let vals: Vec<f64> = (0..6)
            .map(|_| {
                let eta = Vec2::new(dist::std_normal(&mut r), dist::std_normal(&mut r)) * 3.0;
                let p = StapParams { eta, ..truth };
                ln_mvn(eta, prior.b_eta, &prior.w_eta) + steps_loglik(&steps, &p).unwrap() - ln_mvn(eta, m, &c)
            })
            .collect();
        assert_constant(&vals);
    }

    /// Log-density of a 4-variate normal by Gaussian elimination.
    fn ln_mvn4(x: [f64; 4], mean: [f64; 4], cov: &[[f64; 4]; 4]) -> f64 {
        let mut a = *cov;
        let mut b: Vec<f64> = (0..4).map(|i| x[i] - mean[i]).collect();
        let r = b.clone();
        let mut ln_det = 0.0;
        for k in 0..4 {
            ln_det += a[k][k].ln();
            for i in k + 1..4 {
                let f = a[i][k] / a[k][k];
                for j in k..4 {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut sol = [0.0; 4];
        for i in (0..4).rev() {
            let s: f64 = (i + 1..4).map(|j| a[i][j] * sol[j]).sum();
            sol[i] = (b[i] - s) / a[i][i];
        }
        let quad: f64 = (0..4).map(|i| r[i] * sol[i]).sum();
        -2.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * ln_det - 0.5 * quad
    }

    #[test]
    fn joint_location_drift_conditional_and_marginal_are_exact() {
        let truth = bcrw();
        let (points, phi, _) = simulate(&truth, 12, 21);
        let steps = steps_from(&points, &phi);
        let prior = PriorConfig {
            w_mu: Mat2::sym(4.0, 0.5, 2.0),
            b_mu: Vec2::new(0.5, -1.0),
            w_eta: Mat2::sym(2.0, 0.3, 1.0),
            b_eta: Vec2::new(0.5, 0.0),
            ..Default::default()
        };
        for &rho in &[0.0, 0.3, 1.0] {
            let base = StapParams { rho, ..truth };
            let (m, c) = location_drift_conditional(&steps, &base, &prior).unwrap();
            let marginal = location_drift_ln_marginal(&steps, &base, &prior).unwrap();
            let mut r = rng(22);
            for _ in 0..6 {
                let x: [f64; 4] = std::array::from_fn(|_| 3.0 * dist::std_normal(&mut r));
                let (mu, eta) = (Vec2::new(x[0], x[1]), Vec2::new(x[2], x[3]));
                let p = StapParams { mu, eta, ..base };
                let joint = ln_mvn(mu, prior.b_mu, &prior.w_mu)
                    + ln_mvn(eta, prior.b_eta, &prior.w_eta)
                    + steps_loglik(&steps, &p).unwrap();
                let implied = joint - ln_mvn4(x, m, &c);
                assert!((implied - marginal).abs() < 1e-8, "rho {rho}: {implied} vs {marginal}");
            }
        }
    }

    #[test]
    fn collapsed_rho_block_targets_marginal_posterior() {
        let truth = StapParams { rho: 0.6, sigma: Mat2::scaled_identity(4.0), ..bcrw() };
        let (points, phi, _) = simulate(&truth, 3, 8);
        let steps = steps_from(&points, &phi);
        let prior = PriorConfig { mh_c: 0.3, w_mu: Mat2::scaled_identity(2.0), w_eta: Mat2::scaled_identity(2.0), ..Default::default() };
        let w = prior.rho_weights;
        let lm = |rho: f64| location_drift_ln_marginal(&steps, &StapParams { rho, ..truth }, &prior).unwrap();
        let base = lm(0.5);
        let grid = 20_000;
        let (mut cont, mut cont_mean) = (0.0, 0.0);
        for i in 0..grid {
            let x = (i as f64 + 0.5) / grid as f64;
            let d = (lm(x) - base).exp() / grid as f64;
            cont += d;
            cont_mean += x * d;
        }
        let (m0, m1, mc) = (w.w0 * (lm(0.0) - base).exp(), w.w1 * (lm(1.0) - base).exp(), w.w01 * cont);
        let z = m0 + m1 + mc;
        let exact_mean = (m1 + w.w01 * cont_mean) / z;
        let (p0, p1) = (m0 / z, m1 / z);
        assert!(p0 > 0.02 && p1 > 0.02 && mc / z > 0.1, "{p0} {p1} {}", mc / z);

        let mut r = rng(23);
        let mut p = truth;
        let n = 200_000;
        let (mut f0, mut f1, mut mean) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            update_rho_collapsed(&mut r, &steps, &mut p, &prior).unwrap();
            sample_location_drift(&mut r, &steps, &mut p, &prior).unwrap();
            f0 += (p.rho == 0.0) as u8 as f64 / n as f64;
            f1 += (p.rho == 1.0) as u8 as f64 / n as f64;
            mean += p.rho / n as f64;
        }
        assert!((f0 - p0).abs() < 0.015, "P(rho=0) {f0} vs {p0}");
        assert!((f1 - p1).abs() < 0.015, "P(rho=1) {f1} vs {p1}");
        assert!((mean - exact_mean).abs() < 0.015, "E[rho] {mean} vs {exact_mean}");
    }

    #[test]
    fn tau_and_sigma_conditionals_are_exact() {
        let truth = bcrw();
        let (points, phi, _) = simulate(&truth, 15, 6);
        let steps = steps_from(&points, &phi);
        let prior = PriorConfig::default();
        let (mean, var) = tau_conditional(&steps, &truth).unwrap().unwrap();
        let vals: Vec<f64> = [0.05, 0.2, 0.5, 0.9]
            .iter()
            .map(|&tau| {
                let p = StapParams { tau, ..truth };
                steps_loglik(&steps, &p).unwrap() + 0.5 * (tau - mean).powi(2) / var
            })
            .collect();
        assert_constant(&vals);
        let (df, scale) = sigma_conditional(&steps, &truth, &prior);
        assert_eq!(df, 3.0 + 15.0);
        let vals: Vec<f64> = [Mat2::IDENTITY, Mat2::sym(0.3, 0.1, 0.8), Mat2::sym(2.0, -0.5, 0.5)]
            .iter()
            .map(|&sigma| {
                let p = StapParams { sigma, ..truth };
                ln_inverse_wishart(&sigma, prior.a_sigma, &prior.c_sigma) + steps_loglik(&steps, &p).unwrap()
                    - ln_inverse_wishart(&sigma, df, &scale)
            })
            .collect();
        assert_constant(&vals);
    }

    #[test]
    fn uninformative_conditionals_fall_back_to_prior() {
        let p = StapParams { rho: 1.0, ..bcrw() };
        let (points, phi, _) = simulate(&p, 5, 7);
        let steps = steps_from(&points, &phi);
        assert!(tau_conditional(&steps, &p).unwrap().is_none());
        let prior = PriorConfig::default();
        let (m, c) = mu_conditional(&steps, &p, &prior).unwrap();
        assert!(m.max_abs_diff(prior.b_mu) < 1e-12 && c.max_abs_diff(&prior.w_mu) < 1e-9);
    }

    #[test]
    fn rho_proposal_density_integrates_to_one() {
        for &from in &[0.0, 0.03, 0.5, 0.95, 1.0] {
            let c = 0.1;
            let n = 100_000;
            let cont: f64 = (0..n)
                .map(|i| {
                    let x = (i as f64 + 0.5) / n as f64;
                    rho_proposal_ln_density(x, from, c).exp() / n as f64
                })
                .sum();
            let total = cont + rho_proposal_ln_density(0.0, from, c).exp() + rho_proposal_ln_density(1.0, from, c).exp();
            assert!((total - 1.0).abs() < 1e-6, "{from}: {total}");
        }
    }

    #[test]
    fn rho_chain_targets_mixed_posterior() {
        let truth = StapParams { rho: 0.6, sigma: Mat2::scaled_identity(4.0), ..bcrw() };
        let (points, phi, _) = simulate(&truth, 3, 8);
        let steps = steps_from(&points, &phi);
        let prior = PriorConfig { mh_c: 0.3, ..Default::default() };
        let w = prior.rho_weights;
        let ll = |rho: f64| steps_loglik(&steps, &StapParams { rho, ..truth }).unwrap();
        let base = ll(0.5);
        let grid = 20_000;
        let (mut cont, mut cont_mean) = (0.0, 0.0);
        for i in 0..grid {
            let x = (i as f64 + 0.5) / grid as f64;
            let d = (ll(x) - base).exp() / grid as f64;
            cont += d;
            cont_mean += x * d;
        }
        let (m0, m1, mc) = (w.w0 * (ll(0.0) - base).exp(), w.w1 * (ll(1.0) - base).exp(), w.w01 * cont);
        let z = m0 + m1 + mc;
        let exact_mean = (m1 + w.w01 * cont_mean) / z;
        let (p0, p1) = (m0 / z, m1 / z);
        assert!(p0 > 0.02 && p1 > 0.02 && mc / z > 0.1, "{p0} {p1} {}", mc / z);

        let mut r = rng(9);
        let mut p = truth;
        let n = 400_000;
        let (mut f0, mut f1, mut mean) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            update_rho_mh(&mut r, &steps, &mut p, &prior).unwrap();
            f0 += (p.rho == 0.0) as u8 as f64 / n as f64;
            f1 += (p.rho == 1.0) as u8 as f64 / n as f64;
            mean += p.rho / n as f64;
        }
        assert!((f0 - p0).abs() < 0.015, "P(rho=0) {f0} vs {p0}");
        assert!((f1 - p1).abs() < 0.015, "P(rho=1) {f1} vs {p1}");
        assert!((mean - exact_mean).abs() < 0.015, "E[rho] {mean} vs {exact_mean}");
    }

    #[test]
    fn degenerate_rho_prior_pins_rho() {
        let (points, phi, _) = simulate(&bcrw(), 10, 10);
        let steps = steps_from(&points, &phi);
        let prior = PriorConfig { rho_weights: RhoWeights::crw_only(), ..Default::default() };
        let mut r = rng(11);
        let mut p = bcrw();
        for _ in 0..50 {
            update_emission(&mut r, &steps, &mut p, &prior).unwrap();
            assert_eq!(p.rho, 1.0);
        }
    }

    /// Chain over a short path with fixed parameters, for testing the
    /// location updates in isolation.
    fn fixed_chain<'a>(path: &Path, prior: &'a PriorConfig, params: StapParams) -> Chain<'a> {
        let mut r = rng(12);
        let mut chain = Chain::new(&mut r, path, prior, SamplerOptions::default()).unwrap();
        chain.set_params(vec![params; prior.truncation]).unwrap();
        chain
    }

    /// Mean of `exp(f)` over a grid on the domain.
    fn grid_mean(domain: &Domain, n: usize, f: impl Fn(Vec2) -> f64) -> Vec2 {
        let mut vals = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let x = domain.x_min + (i as f64 + 0.5) / n as f64 * (domain.x_max - domain.x_min);
                let y = domain.y_min + (j as f64 + 0.5) / n as f64 * (domain.y_max - domain.y_min);
                let p = Vec2::new(x, y);
                vals.push((p, f(p)));
            }
        }
        let max = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let (mut total, mut acc) = (0.0, Vec2::ZERO);
        for (p, lv) in vals {
            let w = (lv - max).exp();
            total += w;
            acc += p * w;
        }
        acc * (1.0 / total)
    }

    fn full_loglik(points: &[Vec2], s0: Vec2, kernel: &StapKernel) -> f64 {
        let phi = bearings(s0, points).unwrap();
        (0..points.len() - 1).map(|k| kernel.logdensity(points[k + 1], points[k], phi[k])).sum()
    }

    #[test]
    fn missing_location_chain_matches_quadrature() {
        let params = StapParams::new(Vec2::new(1.0, 1.0), Vec2::new(0.8, 0.2), Mat2::sym(0.5, 0.1, 0.4), 0.4, 0.5).unwrap();
        let (mut points, _, s0) = simulate(&params, 5, 13);
        let m = 2;
        let truth = points[m];
        points[m] = Vec2::new(f64::NAN, f64::NAN);
        let mut missing = vec![false; points.len()];
        missing[m] = true;
        let path = Path::new(points.clone(), missing, s0, None).unwrap();
        let domain = Domain::bounding(&[truth, points[0], points[1], points[3], points[4]], 0.5);
        let prior = PriorConfig { domain, truncation: 2, ..Default::default() };
        let mut chain = fixed_chain(&path, &prior, params);
        let kernel = StapKernel::new(&params).unwrap();
        let exact = grid_mean(&domain, 400, |x| {
            let mut pts = chain.state.points.clone();
            pts[m] = x;
            full_loglik(&pts, s0, &kernel)
        });
        let mut r = rng(14);
        let n = 200_000;
        let mut acc = Vec2::ZERO;
        for _ in 0..n {
            chain.update_missing(&mut r, m).unwrap();
            acc += chain.state.points[m] * (1.0 / n as f64);
            assert_eq!(chain.bearings(), bearings(chain.state.s0, &chain.state.points).unwrap().as_slice());
        }
        assert!(acc.max_abs_diff(exact) < 0.02, "{acc:?} vs {exact:?}");
    }

    #[test]
    fn s0_chain_matches_quadrature() {
        let params = StapParams::new(Vec2::ZERO, Vec2::new(1.0, 0.0), Mat2::scaled_identity(0.3), 0.2, 0.9).unwrap();
        let (points, _, s0) = simulate(&params, 4, 15);
        let path = Path::observed(points.clone(), s0).unwrap();
        let domain = Domain::square(3.0);
        let prior = PriorConfig { domain, truncation: 2, ..Default::default() };
        let mut chain = fixed_chain(&path, &prior, params);
        let kernel = StapKernel::new(&params).unwrap();
        let exact = grid_mean(&domain, 600, |x| {
            if x == points[0] { f64::NEG_INFINITY } else { full_loglik(&points, x, &kernel) }
        });
        let mut r = rng(16);
        let n = 300_000;
        let mut acc = Vec2::ZERO;
        for _ in 0..n {
            chain.update_s0(&mut r).unwrap();
            acc += chain.state.s0 * (1.0 / n as f64);
        }
        assert_eq!(chain.bearings(), bearings(chain.state.s0, &chain.state.points).unwrap().as_slice());
        assert!(acc.max_abs_diff(exact) < 0.03, "{acc:?} vs {exact:?}");
    }

    #[test]
    fn zero_steps_carry_bearing_through_updates() {
        let params = bcrw();
        let points = vec![
            Vec2::ZERO,
            Vec2::new(1.0, 0.0),
            Vec2::new(f64::NAN, f64::NAN),
            Vec2::new(1.5, 0.5),
            Vec2::new(1.5, 0.5),
            Vec2::new(1.5, 0.5),
            Vec2::new(2.0, 1.0),
        ];
        let mut missing = vec![false; 7];
        missing[2] = true;
        let path = Path::new(points, missing, Vec2::new(-1.0, 0.0), None).unwrap();
        let prior = PriorConfig { truncation: 2, ..Default::default() };
        let mut chain = fixed_chain(&path, &prior, params);
        let mut r = rng(17);
        for _ in 0..2000 {
            chain.update_missing(&mut r, 2).unwrap();
            chain.update_s0(&mut r).unwrap();
            assert_eq!(chain.bearings(), bearings(chain.state.s0, &chain.state.points).unwrap().as_slice());
        }
    }

    #[test]
    fn interpolation_fills_runs_and_trailing_gaps() {
        let nan = Vec2::new(f64::NAN, f64::NAN);
        let points = vec![Vec2::ZERO, nan, nan, Vec2::new(3.0, 3.0), nan];
        let missing = vec![false, true, true, false, true];
        let path = Path::new(points, missing, Vec2::new(-1.0, 0.0), None).unwrap();
        let filled = interpolate_missing(&path);
        assert_eq!(filled[1], Vec2::new(1.0, 1.0));
        assert_eq!(filled[2], Vec2::new(2.0, 2.0));
        assert_eq!(filled[4], Vec2::new(3.0, 3.0));
    }

    #[test]
    fn sufficient_stats_count_initial_transition() {
        let s = SufficientStats::from_z(&[1, 1, 0, 2], 3);
        assert_eq!(s.counts, vec![1, 2, 1]);
        assert_eq!(s.trans[0][1], 1);
        assert_eq!(s.trans[1][1], 1);
        assert_eq!(s.trans[1][0], 1);
        assert_eq!(s.trans[0][2], 1);
        assert_eq!(s.trans.iter().flatten().sum::<u64>(), 4);
    }

    #[test]
    fn run_is_deterministic_and_thinned() {
        let (points, _, s0) = simulate(&bcrw(), 60, 18);
        let path = Path::observed(points.clone(), s0).unwrap();
        let prior = PriorConfig { domain: Domain::bounding(&points, 0.2), truncation: 5, ..Default::default() };
        let schedule = McmcSchedule::new(40, 20, 5, 99);
        let a = run_mcmc(&path, &prior, &schedule).unwrap();
        let b = run_mcmc(&path, &prior, &schedule).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a.draws.iter().map(|d| d.sweep).collect::<Vec<_>>(), vec![25, 30, 35, 40]);
        let one = run_mcmc(&path, &prior, &McmcSchedule::new(30, 20, 10, 1)).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn single_state_option_pins_labels() {
        let (points, _, s0) = simulate(&bcrw(), 40, 19);
        let path = Path::observed(points.clone(), s0).unwrap();
        let prior = PriorConfig { domain: Domain::bounding(&points, 0.2), truncation: 4, ..Default::default() };
        let opts = SamplerOptions { single_state: true, log_every: 0 };
        let d = run_mcmc_with(&path, &prior, &McmcSchedule::new(20, 10, 1, 3), &opts).unwrap();
        assert!(d.draws.iter().all(|d| d.z.iter().all(|&k| k == 0)));
    }

    #[test]
    fn invalid_schedule_rejected() {
        let (points, _, s0) = simulate(&bcrw(), 10, 20);
        let path = Path::observed(points, s0).unwrap();
        let prior = PriorConfig::default();
        assert!(run_mcmc(&path, &prior, &McmcSchedule::new(10, 10, 1, 0)).is_err());
        assert!(run_mcmc(&path, &prior, &McmcSchedule::new(10, 5, 0, 0)).is_err());
    }
}
