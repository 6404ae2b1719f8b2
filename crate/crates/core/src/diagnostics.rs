//! Posterior post-processing.
//!
//! Everything conditioned on a number of behaviours uses the sweeps whose
//! state sequence visits the modal number of distinct states. Labels are
//! matched across those sweeps by time-point overlap (see [`align_labels`]),
//! which stays well defined for pure CRW or BRW behaviours whose attractor or
//! drift is not identified.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::draws::{Draw, PosteriorDraws};
use crate::emission::{metric_loglik, StapParams};
use crate::error::{Error, Result};
use crate::geometry::{atan_star, bearings, Path};
use crate::linalg::{Mat2, Vec2};

/// Posterior distribution of the number of visited states.
pub fn posterior_k(draws: &PosteriorDraws) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    let n = draws.len() as f64;
    for d in &draws.draws {
        *out.entry(d.n_occupied()).or_insert(0.0) += 1.0 / n;
    }
    out
}

/// Most frequent number of visited states; ties go to the smaller number.
pub fn modal_k(draws: &PosteriorDraws) -> Result<usize> {
    if draws.is_empty() {
        return Err(Error::param("no posterior draws"));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for d in &draws.draws {
        *counts.entry(d.n_occupied()).or_insert(0) += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    Ok(*counts.iter().find(|(_, &c)| c == best).map(|(k, _)| k).unwrap_or(&1))
}

/// Consistent labelling of the modal-K sweeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub k: usize,
    /// Indices into `PosteriorDraws::draws`.
    pub sweeps: Vec<usize>,
    /// `labels[b][a]`: raw state carrying aligned label `a` in sweep `sweeps[b]`.
    pub labels: Vec<Vec<usize>>,
}

impl Alignment {
    /// The sweep's state sequence in aligned labels.
    pub fn aligned_z(&self, draws: &PosteriorDraws, b: usize) -> Vec<usize> {
        let draw = &draws.draws[self.sweeps[b]];
        let mut to_aligned = vec![usize::MAX; draw.params.len()];
        for (a, &raw) in self.labels[b].iter().enumerate() {
            to_aligned[raw] = a;
        }
        draw.z.iter().map(|&s| to_aligned[s as usize]).collect()
    }

    pub fn params(&self, draws: &PosteriorDraws, b: usize, a: usize) -> StapParams {
        draws.draws[self.sweeps[b]].params[self.labels[b][a]]
    }
}

/// Greedy matching of a sweep's visited states to the reference labels,
/// largest time-point overlap first.
fn match_to_reference(reference: &[usize], k: usize, draw: &Draw) -> Vec<usize> {
    let occupied = draw.occupied_states();
    let mut index = vec![usize::MAX; draw.params.len()];
    for (i, &s) in occupied.iter().enumerate() {
        index[s] = i;
    }
    let mut overlap = vec![vec![0usize; occupied.len()]; k];
    for (&a, &s) in reference.iter().zip(&draw.z) {
        overlap[a][index[s as usize]] += 1;
    }
    let mut labels = vec![usize::MAX; k];
    let mut used = vec![false; occupied.len()];
    for _ in 0..k.min(occupied.len()) {
        let mut best: Option<(usize, usize, usize)> = None;
        for (a, row) in overlap.iter().enumerate() {
            if labels[a] != usize::MAX {
                continue;
            }
            for (i, &c) in row.iter().enumerate() {
                if !used[i] && best.is_none_or(|(_, _, bc)| c > bc) {
                    best = Some((a, i, c));
                }
            }
        }
        let (a, i, _) = best.expect("unmatched pair remains");
        labels[a] = occupied[i];
        used[i] = true;
    }
    labels
}

fn vote(counts: &[Vec<u32>]) -> Vec<usize> {
    counts
        .iter()
        .map(|row| {
            let mut best = 0;
            for (a, &c) in row.iter().enumerate() {
                if c > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Aligns the modal-K sweeps.
///
/// The first modal-K sweep is the initial reference. Every sweep is matched
/// to it, the per-time majority labelling becomes the new reference, and the
/// matching is repeated once against it. Aligned labels are finally ordered
/// by their first appearance in the majority labelling.
pub fn align_labels(draws: &PosteriorDraws) -> Result<Alignment> {
    let k = modal_k(draws)?;
    let sweeps: Vec<usize> = (0..draws.len()).filter(|&b| draws.draws[b].n_occupied() == k).collect();
    let first = &draws.draws[sweeps[0]];
    let occ = first.occupied_states();
    let mut to_ref = vec![usize::MAX; first.params.len()];
    for (a, &s) in occ.iter().enumerate() {
        to_ref[s] = a;
    }
    let mut reference: Vec<usize> = first.z.iter().map(|&s| to_ref[s as usize]).collect();
    let mut alignment = Alignment { k, sweeps, labels: Vec::new() };
    for _ in 0..2 {
        alignment.labels = alignment.sweeps.iter().map(|&b| match_to_reference(&reference, k, &draws.draws[b])).collect();
        reference = vote(&label_counts(draws, &alignment));
    }
    let mut order = Vec::with_capacity(k);
    for &a in &reference {
        if !order.contains(&a) {
            order.push(a);
        }
    }
    (0..k).for_each(|a| {
        if !order.contains(&a) {
            order.push(a);
        }
    });
    for labels in alignment.labels.iter_mut() {
        *labels = order.iter().map(|&a| labels[a]).collect();
    }
    Ok(alignment)
}

fn label_counts(draws: &PosteriorDraws, alignment: &Alignment) -> Vec<Vec<u32>> {
    let n = draws.draws[alignment.sweeps[0]].z.len();
    let mut counts = vec![vec![0u32; alignment.k]; n];
    for b in 0..alignment.sweeps.len() {
        for (t, a) in alignment.aligned_z(draws, b).into_iter().enumerate() {
            counts[t][a] += 1;
        }
    }
    counts
}

/// Per-time posterior mode of the aligned state, ties to the lower label.
pub fn map_states_aligned(draws: &PosteriorDraws, alignment: &Alignment) -> Vec<usize> {
    vote(&label_counts(draws, alignment))
}

/// Per-time posterior mode of the state over the modal-K sweeps.
pub fn map_states(draws: &PosteriorDraws) -> Result<Vec<usize>> {
    let alignment = align_labels(draws)?;
    Ok(map_states_aligned(draws, &alignment))
}

/// Posterior mean and equal-tailed 95% credible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Quantile of sorted values by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn interval(values: &[f64]) -> Interval {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Interval { mean, lower: quantile(&sorted, 0.025), upper: quantile(&sorted, 0.975) }
}

/// Summary of the mixed discrete-continuous `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSummary {
    pub p0: f64,
    pub p1: f64,
    pub p_cont: f64,
    /// Mean and interval over all draws, atoms included.
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Whether some draw lies strictly below `lower` / above `upper`.
    pub open_lower: bool,
    pub open_upper: bool,
    /// Mean of the draws in (0, 1), when there are any.
    pub cont_mean: Option<f64>,
}

impl RhoSummary {
    /// Interval in the notation `[0 0)`: a closed bracket means no draw lies
    /// beyond that end.
    pub fn bracket(&self) -> String {
        format!(
            "{}{} {}{}",
            if self.open_lower { '(' } else { '[' },
            fmt_short(self.lower),
            fmt_short(self.upper),
            if self.open_upper { ')' } else { ']' }
        )
    }
}

/// Rounds to three decimals and drops trailing zeros.
pub fn fmt_short(x: f64) -> String {
    let r = (x * 1000.0).round() / 1000.0;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

pub fn rho_summary(values: &[f64]) -> RhoSummary {
    let n = values.len() as f64;
    let iv = interval(values);
    let cont: Vec<f64> = values.iter().copied().filter(|&r| r > 0.0 && r < 1.0).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    RhoSummary {
        p0: values.iter().filter(|&&r| r == 0.0).count() as f64 / n,
        p1: values.iter().filter(|&&r| r == 1.0).count() as f64 / n,
        p_cont: cont.len() as f64 / n,
        mean: iv.mean,
        lower: iv.lower,
        upper: iv.upper,
        open_lower: min < iv.lower,
        open_upper: max > iv.upper,
        cont_mean: (!cont.is_empty()).then(|| cont.iter().sum::<f64>() / cont.len() as f64),
    }
}

/// Posterior summary of one aligned behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub mu: [Interval; 2],
    pub eta: [Interval; 2],
    pub tau: Interval,
    pub rho: RhoSummary,
    /// `Sigma` entries (1,1), (1,2), (2,2).
    pub sigma: [Interval; 3],
    /// Transition probabilities to every aligned behaviour.
    pub pi: Vec<Interval>,
    pub beta: Interval,
    /// Fraction of time-points whose MAP state is this behaviour.
    pub occupancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_draws: usize,
    pub k_distribution: BTreeMap<usize, f64>,
    pub modal_k: usize,
    /// Number of sweeps with the modal number of states.
    pub n_modal: usize,
    pub states: Vec<StateSummary>,
    pub alpha: Interval,
    pub kappa: Interval,
    pub gamma: Interval,
    /// Aligned MAP state of every step.
    pub map_z: Vec<usize>,
}

pub fn summarize(draws: &PosteriorDraws) -> Result<Summary> {
    let alignment = align_labels(draws)?;
    summarize_aligned(draws, &alignment)
}

pub fn summarize_aligned(draws: &PosteriorDraws, alignment: &Alignment) -> Result<Summary> {
    let k = alignment.k;
    let nb = alignment.sweeps.len();
    let map_z = map_states_aligned(draws, alignment);
    let collect = |f: &dyn Fn(&Draw, &[usize]) -> f64| -> Vec<f64> {
        (0..nb).map(|b| f(&draws.draws[alignment.sweeps[b]], &alignment.labels[b])).collect()
    };
    let mut states = Vec::with_capacity(k);
    for a in 0..k {
        let p = |f: fn(&StapParams) -> f64| interval(&collect(&|d, l| f(&d.params[l[a]])));
        let pi = (0..k).map(|c| interval(&collect(&|d, l| d.pi[l[a]][l[c]]))).collect();
        states.push(StateSummary {
            mu: [p(|s| s.mu.x), p(|s| s.mu.y)],
            eta: [p(|s| s.eta.x), p(|s| s.eta.y)],
            tau: p(|s| s.tau),
            rho: rho_summary(&collect(&|d, l| d.params[l[a]].rho)),
            sigma: [p(|s| s.sigma.a), p(|s| s.sigma.b), p(|s| s.sigma.d)],
            pi,
            beta: interval(&collect(&|d, l| d.beta[l[a]])),
            occupancy: map_z.iter().filter(|&&s| s == a).count() as f64 / map_z.len() as f64,
        });
    }
    let hyper = |f: fn(&Draw) -> f64| interval(&collect(&|d, _| f(d)));
    Ok(Summary {
        n_draws: draws.len(),
        k_distribution: posterior_k(draws),
        modal_k: k,
        n_modal: nb,
        states,
        alpha: hyper(|d| d.hyper.alpha),
        kappa: hyper(|d| d.hyper.kappa),
        gamma: hyper(|d| d.hyper.gamma),
        map_z,
    })
}

/// Posterior-mean behaviours and row-normalised transition matrix over the
/// aligned modal-K sweeps.
pub fn posterior_mean_model(draws: &PosteriorDraws, alignment: &Alignment) -> Result<(Vec<StapParams>, Vec<Vec<f64>>)> {
    let k = alignment.k;
    let nb = alignment.sweeps.len() as f64;
    let mut params = Vec::with_capacity(k);
    let mut pi = vec![vec![0.0; k]; k];
    for a in 0..k {
        let (mut mu, mut eta, mut sigma, mut tau, mut rho) = (Vec2::ZERO, Vec2::ZERO, Mat2::ZERO, 0.0, 0.0);
        for b in 0..alignment.sweeps.len() {
            let p = alignment.params(draws, b, a);
            mu += p.mu * (1.0 / nb);
            eta += p.eta * (1.0 / nb);
            sigma += p.sigma * (1.0 / nb);
            tau += p.tau / nb;
            rho += p.rho / nb;
            let d = &draws.draws[alignment.sweeps[b]];
            for (c, slot) in pi[a].iter_mut().enumerate() {
                *slot += d.pi[alignment.labels[b][a]][alignment.labels[b][c]] / nb;
            }
        }
        params.push(StapParams::new(mu, eta, sigma.symmetrize(), tau.clamp(0.0, 1.0), rho.clamp(0.0, 1.0))?);
        let total: f64 = pi[a].iter().sum();
        if total > 0.0 {
            pi[a].iter_mut().for_each(|x| *x /= total);
        } else {
            pi[a] = vec![1.0 / k as f64; k];
        }
    }
    Ok((params, pi))
}

/// Locations with a sweep's imputed values substituted.
pub fn completed_points(path: &Path, missing_indices: &[usize], imputed: &[Vec2]) -> Result<Vec<Vec2>> {
    if missing_indices.len() != imputed.len() {
        return Err(Error::LengthMismatch { left: missing_indices.len(), right: imputed.len() });
    }
    let mut points = path.points.clone();
    for (&m, &v) in missing_indices.iter().zip(imputed) {
        points[m] = v;
    }
    Ok(points)
}

/// Log-likelihood of the steps expressed as step-length and bearing, given
/// a state for every step.
pub fn metric_loglik_path(points: &[Vec2], s0: Vec2, z: &[usize], params: &[StapParams]) -> Result<f64> {
    if z.len() + 1 != points.len() {
        return Err(Error::LengthMismatch { left: points.len() - 1, right: z.len() });
    }
    let phi = bearings(s0, points)?;
    let mut total = 0.0;
    for (k, &j) in z.iter().enumerate() {
        let r = (points[k + 1] - points[k]).norm();
        total += metric_loglik(r, phi[k + 1], points[k], phi[k], &params[j])
            .map_err(|_| Error::data(format!("zero-length step {k} has no step-length density")))?;
    }
    Ok(total)
}

/// Per-sweep complete-data log-likelihood in movement-metric form.
pub fn loglik_metrics(draws: &PosteriorDraws, path: &Path) -> Result<Vec<f64>> {
    draws
        .draws
        .iter()
        .map(|d| {
            let points = completed_points(path, &draws.missing_indices, &d.imputed)?;
            let z: Vec<usize> = d.z.iter().map(|&s| s as usize).collect();
            metric_loglik_path(&points, d.s0, &z, &d.params)
        })
        .collect()
}

/// Complete-data log-likelihood at the plug-in estimate: the retained
/// modal-K sweep with the highest complete-data log-likelihood, taken whole
/// (its behaviours, states, `s0` and imputed locations).
///
/// Averaging parameters across sweeps is avoided on purpose. When a
/// behaviour's posterior spreads along the ridge where `rho * eta` is nearly
/// constant, the averaged `rho` and `eta` describe no sweep at all and the
/// resulting likelihood can fall far below every sampled value.
pub fn plugin_loglik(draws: &PosteriorDraws, path: &Path) -> Result<f64> {
    let k = modal_k(draws)?;
    let ll = loglik_metrics(draws, path)?;
    draws
        .draws
        .iter()
        .zip(&ll)
        .filter(|(d, _)| d.n_occupied() == k)
        .map(|(_, &l)| l)
        .reduce(f64::max)
        .ok_or_else(|| Error::Numeric("no sweep has the modal number of behaviours".into()))
}

/// Complete-data DIC: `-4 E[log L] + 2 log L(plug-in)`; lower is better.
pub fn dic5(draws: &PosteriorDraws, path: &Path) -> Result<f64> {
    let ll = loglik_metrics(draws, path)?;
    let mean = ll.iter().sum::<f64>() / ll.len() as f64;
    Ok(-4.0 * mean + 2.0 * plugin_loglik(draws, path)?)
}

/// Free parameters of a `k`-behaviour model: nine per behaviour plus the
/// free transition probabilities.
pub fn n_free_params(k: usize) -> usize {
    9 * k + k * (k - 1)
}

/// Plug-in log-likelihood penalised by `½ ν log(T-1)`; higher is better.
pub fn icl(draws: &PosteriorDraws, path: &Path) -> Result<f64> {
    let k = modal_k(draws)?;
    let n = path.n_steps() as f64;
    Ok(plugin_loglik(draws, path)? - 0.5 * n_free_params(k) as f64 * n.ln())
}

/// Turning-angle and log step-length samples implied by the CRW component
/// of aligned behaviour `a`: per modal-K sweep, `y ~ N(eta, Sigma)`.
pub fn predictive_metrics(
    draws: &PosteriorDraws,
    a: usize,
    n_samples: usize,
    seed: u64,
    force: bool,
) -> Result<Vec<(f64, f64)>> {
    let alignment = align_labels(draws)?;
    if a >= alignment.k {
        return Err(Error::param(format!("behaviour {} does not exist (K = {})", a + 1, alignment.k)));
    }
    let nb = alignment.sweeps.len();
    if !force {
        let p1 = (0..nb).filter(|&b| alignment.params(draws, b, a).rho == 1.0).count() as f64 / nb as f64;
        if p1 <= 0.5 {
            return Err(Error::param(format!(
                "behaviour {} is not CRW-dominant (P(rho = 1) = {p1:.3})",
                a + 1
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let p = alignment.params(draws, i % nb, a);
        let y = dist::mvn_cov(&mut rng, p.eta, &p.sigma)?;
        let theta = atan_star(y.y, y.x)?;
        out.push((theta, y.norm().ln()));
    }
    Ok(out)
}

/// Fraction of agreeing entries after the best relabelling of `predicted`.
///
/// Up to eight labels per side are matched exhaustively; beyond that the
/// matching is greedy on the confusion counts.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    if predicted.is_empty() {
        return Ok(1.0);
    }
    let relabel = |z: &[usize]| {
        let mut map = BTreeMap::new();
        let out: Vec<usize> = z
            .iter()
            .map(|s| {
                let n = map.len();
                *map.entry(*s).or_insert(n)
            })
            .collect();
        (out, map.len())
    };
    let (p, kp) = relabel(predicted);
    let (t, kt) = relabel(truth);
    let mut confusion = vec![vec![0usize; kt]; kp];
    for (&a, &b) in p.iter().zip(&t) {
        confusion[a][b] += 1;
    }
    let matched = if kp <= 8 && kt <= 8 {
        best_assignment(&confusion, 0, &mut vec![false; kt])
    } else {
        let mut used_p = vec![false; kp];
        let mut used_t = vec![false; kt];
        let mut cells: Vec<(usize, usize, usize)> =
            (0..kp).flat_map(|a| (0..kt).map(move |b| (a, b))).map(|(a, b)| (confusion[a][b], a, b)).collect();
        cells.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut total = 0;
        for (c, a, b) in cells {
            if !used_p[a] && !used_t[b] {
                used_p[a] = true;
                used_t[b] = true;
                total += c;
            }
        }
        total
    };
    Ok(matched as f64 / predicted.len() as f64)
}

fn best_assignment(confusion: &[Vec<usize>], row: usize, used: &mut Vec<bool>) -> usize {
    if row == confusion.len() {
        return 0;
    }
    // leaving this predicted label unmatched
    let mut best = best_assignment(confusion, row + 1, used);
    for b in 0..used.len() {
        if !used[b] {
            used[b] = true;
            best = best.max(confusion[row][b] + best_assignment(confusion, row + 1, used));
            used[b] = false;
        }
    }
    best
}

/// Counts of `values` in `bins` equal-width bins over `[lo, hi)`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if v >= lo && v < hi {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    counts
}

/// Bins of a circular histogram that exceed both neighbours, treating a
/// plateau as one maximum at its first bin.
pub fn circular_local_maxima(counts: &[usize]) -> Vec<usize> {
    let n = counts.len();
    let mut out = Vec::new();
    for i in 0..n {
        let c = counts[i];
        let prev = counts[(i + n - 1) % n];
        if c <= prev {
            continue;
        }
        // walk across an equal plateau
        let mut j = (i + 1) % n;
        let mut steps = 0;
        while counts[j] == c && steps < n {
            j = (j + 1) % n;
            steps += 1;
        }
        if counts[j] < c {
            out.push(i);
        }
    }
    out
}

/// Sample skewness `g1`.
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    (d, kolmogorov_q(d, ne))
}

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value against `cdf`.
pub fn ks_one_sample(values: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    (d, kolmogorov_q(d, n))
}

fn kolmogorov_q(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
