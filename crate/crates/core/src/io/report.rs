//! Summary report and plotting tables.
//!
//! Parameter tables are in the fitted coordinates. Everything positioned in
//! space (locations, arrows, ellipses) and the predictive log step-lengths
//! are mapped back to the input coordinates.

use std::fs;
use std::path::Path as FsPath;

use serde::Serialize;

use super::{format_time, DataInfo};
use crate::diagnostics::{self, fmt_short, Interval, Summary};
use crate::draws::PosteriorDraws;
use crate::emission::StapKernel;
use crate::error::Result;
use crate::geometry::{bearings, chi2_2_quantile, Path};
use crate::linalg::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// Predictive samples per CRW-dominant behaviour.
    pub predictive_samples: usize,
    pub seed: u64,
    /// Probability mass inside the plotted ellipses.
    pub ellipse_level: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { predictive_samples: 10_000, seed: 1, ellipse_level: 0.95 }
    }
}

#[derive(Serialize)]
struct KRow {
    k: usize,
    probability: f64,
}

#[derive(Serialize)]
struct Rates {
    rho: f64,
    missing: f64,
    s0: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    n_draws: usize,
    modal_k: usize,
    n_modal: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    dic5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    icl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loglik_note: Option<String>,
    alpha: Interval,
    kappa: Interval,
    gamma: Interval,
    acceptance: Rates,
    k_distribution: Vec<KRow>,
    state: &'a [diagnostics::StateSummary],
}

fn cell(iv: &Interval) -> String {
    format!("{} ({}, {})", fmt_short(iv.mean), fmt_short(iv.lower), fmt_short(iv.upper))
}

/// Writes the report and tables into `out`, returning the summary.
///
/// `data` is the fitted path with its metadata; without it only the
/// parameter summaries, state labels and predictive samples are written.
pub fn write_summary_outputs(
    out: impl AsRef<FsPath>,
    draws: &PosteriorDraws,
    data: Option<(&Path, &DataInfo)>,
    options: &ReportOptions,
) -> Result<Summary> {
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    let alignment = diagnostics::align_labels(draws)?;
    let summary = diagnostics::summarize_aligned(draws, &alignment)?;
    let k = summary.modal_k;

    let (mut dic5, mut icl, mut note) = (None, None, None);
    if let Some((path, _)) = data {
        match (diagnostics::dic5(draws, path), diagnostics::icl(draws, path)) {
            (Ok(d), Ok(i)) => (dic5, icl) = (Some(d), Some(i)),
            (Err(e), _) | (_, Err(e)) => note = Some(format!("model-comparison scores unavailable: {e}")),
        }
    }
    let report = Report {
        n_draws: summary.n_draws,
        modal_k: k,
        n_modal: summary.n_modal,
        dic5,
        icl,
        loglik_note: note,
        alpha: summary.alpha,
        kappa: summary.kappa,
        gamma: summary.gamma,
        acceptance: Rates {
            rho: draws.acceptance.rho_rate(),
            missing: draws.acceptance.missing_rate(),
            s0: draws.acceptance.s0_rate(),
        },
        k_distribution: summary.k_distribution.iter().map(|(&k, &p)| KRow { k, probability: p }).collect(),
        state: &summary.states,
    };
    fs::write(out.join("report.toml"), toml::to_string(&report).map_err(|e| crate::Error::Numeric(e.to_string()))?)?;

    // parameters by row, behaviours by column
    let mut w = csv::Writer::from_path(out.join("table.csv"))?;
    w.write_record(std::iter::once("parameter".to_string()).chain((1..=k).map(|j| format!("state_{j}"))))?;
    let mut row = |name: String, f: &dyn Fn(&diagnostics::StateSummary) -> String| -> Result<()> {
        w.write_record(std::iter::once(name).chain(summary.states.iter().map(f)))?;
        Ok(())
    };
    row("mu_1".into(), &|s| cell(&s.mu[0]))?;
    row("mu_2".into(), &|s| cell(&s.mu[1]))?;
    row("eta_1".into(), &|s| cell(&s.eta[0]))?;
    row("eta_2".into(), &|s| cell(&s.eta[1]))?;
    row("tau".into(), &|s| cell(&s.tau))?;
    row("rho".into(), &|s| format!("{} {}", fmt_short(s.rho.mean), s.rho.bracket()))?;
    row("P(rho=0)".into(), &|s| fmt_short(s.rho.p0))?;
    row("P(rho=1)".into(), &|s| fmt_short(s.rho.p1))?;
    row("sigma_11".into(), &|s| cell(&s.sigma[0]))?;
    row("sigma_12".into(), &|s| cell(&s.sigma[1]))?;
    row("sigma_22".into(), &|s| cell(&s.sigma[2]))?;
    for c in 0..k {
        row(format!("pi_to_{}", c + 1), &|s| cell(&s.pi[c]))?;
    }
    row("beta".into(), &|s| cell(&s.beta))?;
    row("occupancy".into(), &|s| fmt_short(s.occupancy))?;
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("parameters.csv"))?;
    w.write_record(["state", "parameter", "mean", "lower", "upper"])?;
    for (j, s) in summary.states.iter().enumerate() {
        let mut put = |name: &str, iv: &Interval| {
            w.write_record([(j + 1).to_string(), name.to_string(), iv.mean.to_string(), iv.lower.to_string(), iv.upper.to_string()])
        };
        put("mu_1", &s.mu[0])?;
        put("mu_2", &s.mu[1])?;
        put("eta_1", &s.eta[0])?;
        put("eta_2", &s.eta[1])?;
        put("tau", &s.tau)?;
        put("rho", &Interval { mean: s.rho.mean, lower: s.rho.lower, upper: s.rho.upper })?;
        put("sigma_11", &s.sigma[0])?;
        put("sigma_12", &s.sigma[1])?;
        put("sigma_22", &s.sigma[2])?;
        for (c, iv) in s.pi.iter().enumerate() {
            put(&format!("pi_to_{}", c + 1), iv)?;
        }
        put("beta", &s.beta)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("k_distribution.csv"))?;
    w.write_record(["k", "probability"])?;
    for (k, p) in &summary.k_distribution {
        w.write_record([k.to_string(), p.to_string()])?;
    }
    w.flush()?;

    let log_scale = data.map_or(0.0, |(_, info)| info.transform.scale.ln());
    let mut w = csv::Writer::from_path(out.join("predictive.csv"))?;
    w.write_record(["state", "theta", "log_r"])?;
    for (j, s) in summary.states.iter().enumerate() {
        if s.rho.p1 <= 0.5 {
            continue;
        }
        for (theta, log_r) in diagnostics::predictive_metrics(draws, j, options.predictive_samples, options.seed, false)? {
            w.write_record([(j + 1).to_string(), theta.to_string(), (log_r + log_scale).to_string()])?;
        }
    }
    w.flush()?;

    match data {
        Some((path, info)) => write_geometry(out, draws, &alignment, &summary, path, info, options)?,
        None => {
            let mut w = csv::Writer::from_path(out.join("map_states.csv"))?;
            w.write_record(["step", "state"])?;
            for (i, s) in summary.map_z.iter().enumerate() {
                w.write_record([(i + 1).to_string(), (s + 1).to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(summary)
}

fn write_geometry(
    out: &FsPath,
    draws: &PosteriorDraws,
    alignment: &diagnostics::Alignment,
    summary: &Summary,
    path: &Path,
    info: &DataInfo,
    options: &ReportOptions,
) -> Result<()> {
    let t = info.transform;
    let nb = alignment.sweeps.len() as f64;
    let mut imputed = vec![Vec2::ZERO; draws.missing_indices.len()];
    let mut s0 = Vec2::ZERO;
    for &b in &alignment.sweeps {
        let d = &draws.draws[b];
        s0 += d.s0 * (1.0 / nb);
        imputed.iter_mut().zip(&d.imputed).for_each(|(a, &v)| *a += v * (1.0 / nb));
    }
    let points = diagnostics::completed_points(path, &draws.missing_indices, &imputed)?;

    let mut w = csv::Writer::from_path(out.join("map_states.csv"))?;
    w.write_record(["index", "time", "x", "y", "missing", "state"])?;
    for (i, p) in points.iter().enumerate() {
        let time = match &path.timestamps {
            Some(ts) if info.iso_time => format_time(ts[i]),
            Some(ts) => ts[i].to_string(),
            None => i.to_string(),
        };
        let q = t.inverse(*p);
        // the state of location i is that of the step arriving at it
        let state = if i == 0 { String::new() } else { (summary.map_z[i - 1] + 1).to_string() };
        w.write_record([
            (i + 1).to_string(),
            time,
            q.x.to_string(),
            q.y.to_string(),
            u8::from(path.missing[i]).to_string(),
            state,
        ])?;
    }
    w.flush()?;

    let (params, _) = diagnostics::posterior_mean_model(draws, alignment)?;
    let kernels = params.iter().map(StapKernel::new).collect::<Result<Vec<_>>>()?;
    let phi = bearings(s0, &points)?;
    let scale2 = t.scale * t.scale;
    let radius_sq = chi2_2_quantile(options.ellipse_level);
    let mut arrows = csv::Writer::from_path(out.join("arrows.csv"))?;
    arrows.write_record(["step", "state", "tail_x", "tail_y", "head_x", "head_y"])?;
    let mut ellipses = csv::Writer::from_path(out.join("ellipses.csv"))?;
    ellipses.write_record(["step", "state", "center_x", "center_y", "s11", "s12", "s22", "level", "radius_sq"])?;
    for (k, &j) in summary.map_z.iter().enumerate() {
        let m = kernels[j].moments(points[k], phi[k]);
        let tail = t.inverse(points[k]);
        let head = t.inverse(points[k] + m.mean);
        let (step, state) = ((k + 1).to_string(), (j + 1).to_string());
        arrows.write_record([step.clone(), state.clone(), tail.x.to_string(), tail.y.to_string(), head.x.to_string(), head.y.to_string()])?;
        let v = m.cov * scale2;
        ellipses.write_record([
            step,
            state,
            head.x.to_string(),
            head.y.to_string(),
            v.a.to_string(),
            v.b.to_string(),
            v.d.to_string(),
            options.ellipse_level.to_string(),
            radius_sq.to_string(),
        ])?;
    }
    arrows.flush()?;
    ellipses.flush()?;
    Ok(())
}
