//! On-disk layout of posterior draws.
//!
//! A draws directory holds `manifest.toml` and one CSV per parameter family.
//! State labels are one-based in every CSV. Floats are written in their
//! shortest round-tripping form, so reading a directory back reproduces the
//! draws bit for bit. The manifest records each file's SHA-256 and reading
//! fails if any of them differ.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sha256_file, Transform};
use crate::draws::{AcceptanceStats, Draw, McmcSchedule, PosteriorDraws};
use crate::emission::StapParams;
use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::priors::HdpHyper;

pub const SCHEMA_VERSION: u32 = 1;

const FAMILIES: [&str; 5] = ["params", "transitions", "hyper", "states", "imputed"];

/// Where a run came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Canonical text of the run configuration.
    pub config: Option<String>,
    pub config_hash: Option<String>,
    pub input_hash: Option<String>,
}

/// The fitted coordinates stored next to the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    /// File name of the fitted path inside the draws directory.
    pub file: String,
    pub transform: Transform,
    pub s0: Vec2,
    pub iso_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub truncation: usize,
    pub path_len: usize,
    pub n_draws: usize,
    pub missing_indices: Vec<usize>,
    pub acceptance: AcceptanceStats,
    #[serde(default)]
    pub provenance: Provenance,
    pub data: Option<DataInfo>,
    /// SHA-256 of every file, keyed by file name.
    pub files: BTreeMap<String, String>,
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn draws_error(dir: &FsPath, msg: impl Into<String>) -> Error {
    Error::Draws { dir: dir.to_path_buf(), msg: msg.into() }
}

/// Writes `draws` into `dir`, creating it if needed.
///
/// `data` describes a fitted-path file already written into `dir`; its hash
/// is recorded with the others.
pub fn write_draws(
    draws: &PosteriorDraws,
    dir: impl AsRef<FsPath>,
    provenance: &Provenance,
    data: Option<DataInfo>,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let file = |name: &str| dir.join(format!("{name}.csv"));

    let mut w = csv::Writer::from_path(file("params"))?;
    w.write_record([
        "sweep", "state", "label", "mu_x", "mu_y", "eta_x", "eta_y", "sigma_11", "sigma_12", "sigma_22", "tau", "rho", "beta",
    ])?;
    for d in &draws.draws {
        for (j, p) in d.params.iter().enumerate() {
            w.write_record([
                d.sweep.to_string(),
                (j + 1).to_string(),
                (d.labels[j] as usize + 1).to_string(),
                fmt(p.mu.x),
                fmt(p.mu.y),
                fmt(p.eta.x),
                fmt(p.eta.y),
                fmt(p.sigma.a),
                fmt(p.sigma.b),
                fmt(p.sigma.d),
                fmt(p.tau),
                fmt(p.rho),
                fmt(d.beta[j]),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(file("transitions"))?;
    w.write_record(["sweep", "from", "to", "pi"])?;
    for d in &draws.draws {
        for (j, row) in d.pi.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                w.write_record([d.sweep.to_string(), (j + 1).to_string(), (k + 1).to_string(), fmt(p)])?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(file("hyper"))?;
    w.write_record(["sweep", "alpha", "kappa", "gamma", "s0_x", "s0_y"])?;
    for d in &draws.draws {
        w.write_record([
            d.sweep.to_string(),
            fmt(d.hyper.alpha),
            fmt(d.hyper.kappa),
            fmt(d.hyper.gamma),
            fmt(d.s0.x),
            fmt(d.s0.y),
        ])?;
    }
    w.flush()?;

    let n_steps = draws.path_len.saturating_sub(1);
    let mut w = csv::Writer::from_path(file("states"))?;
    w.write_record(std::iter::once("sweep".to_string()).chain((1..=n_steps).map(|k| format!("z_{k}"))))?;
    for d in &draws.draws {
        w.write_record(std::iter::once(d.sweep.to_string()).chain(d.z.iter().map(|&s| (s + 1).to_string())))?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(file("imputed"))?;
    w.write_record(
        std::iter::once("sweep".to_string())
            .chain(draws.missing_indices.iter().flat_map(|m| [format!("x_{}", m + 1), format!("y_{}", m + 1)])),
    )?;
    for d in &draws.draws {
        w.write_record(std::iter::once(d.sweep.to_string()).chain(d.imputed.iter().flat_map(|p| [fmt(p.x), fmt(p.y)])))?;
    }
    w.flush()?;

    let mut files = BTreeMap::new();
    for name in FAMILIES {
        let f = format!("{name}.csv");
        files.insert(f.clone(), sha256_file(dir.join(&f))?);
    }
    if let Some(info) = &data {
        files.insert(info.file.clone(), sha256_file(dir.join(&info.file))?);
    }
    let s = &draws.schedule;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: s.seed,
        iterations: s.iterations,
        burnin: s.burnin,
        thin: s.thin,
        truncation: draws.truncation,
        path_len: draws.path_len,
        n_draws: draws.len(),
        missing_indices: draws.missing_indices.clone(),
        acceptance: draws.acceptance,
        provenance: provenance.clone(),
        data,
        files,
    };
    let text = toml::to_string(&manifest).map_err(|e| draws_error(dir, e.to_string()))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(manifest)
}

/// Reads and checks the manifest, including every recorded file hash.
pub fn read_manifest(dir: impl AsRef<FsPath>) -> Result<Manifest> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.toml");
    if !path.exists() {
        return Err(draws_error(dir, "manifest.toml is missing"));
    }
    let manifest: Manifest =
        toml::from_str(&fs::read_to_string(&path)?).map_err(|e| draws_error(dir, format!("unreadable manifest: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(draws_error(
            dir,
            format!("schema version {} is not supported (expected {SCHEMA_VERSION})", manifest.schema_version),
        ));
    }
    for name in FAMILIES {
        let f = format!("{name}.csv");
        if !manifest.files.contains_key(&f) {
            return Err(draws_error(dir, format!("manifest lists no `{name}` family")));
        }
    }
    for (f, hash) in &manifest.files {
        let p = dir.join(f);
        if !p.exists() {
            return Err(draws_error(dir, format!("`{f}` is missing")));
        }
        if &sha256_file(&p)? != hash {
            return Err(draws_error(dir, format!("`{f}` does not match the hash in the manifest")));
        }
    }
    Ok(manifest)
}

struct Table {
    file: PathBuf,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(dir: &FsPath, name: &str, header: Option<&[&str]>) -> Result<Table> {
    let file = dir.join(format!("{name}.csv"));
    let mut r = csv::Reader::from_path(&file)?;
    if let Some(h) = header {
        if r.headers()?.iter().collect::<Vec<_>>() != h {
            return Err(draws_error(dir, format!("`{name}.csv` has an unexpected header")));
        }
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { file, rows })
}

impl Table {
    fn parse<T: std::str::FromStr>(&self, line: usize, cell: &str) -> Result<T> {
        cell.parse().map_err(|_| Error::Data {
            line: Some(line),
            msg: format!("unreadable value `{cell}` in {}", self.file.display()),
        })
    }
}

/// Reads a draws directory written by [`write_draws`].
pub fn read_draws(dir: impl AsRef<FsPath>) -> Result<PosteriorDraws> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let n_steps = m.path_len.saturating_sub(1);

    let hyper = read_table(dir, "hyper", Some(&["sweep", "alpha", "kappa", "gamma", "s0_x", "s0_y"]))?;
    let mut draws: Vec<Draw> = Vec::with_capacity(hyper.rows.len());
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    for (line, row) in &hyper.rows {
        let f = |i: usize| hyper.parse::<f64>(*line, &row[i]);
        let sweep: usize = hyper.parse(*line, &row[0])?;
        index.insert(sweep, draws.len());
        draws.push(Draw {
            sweep,
            labels: Vec::new(),
            params: Vec::new(),
            pi: Vec::new(),
            beta: Vec::new(),
            hyper: HdpHyper { alpha: f(1)?, kappa: f(2)?, gamma: f(3)? },
            z: Vec::new(),
            s0: Vec2::new(f(4)?, f(5)?),
            imputed: Vec::new(),
        });
    }
    if draws.len() != m.n_draws {
        return Err(draws_error(dir, format!("manifest lists {} draws but hyper.csv has {}", m.n_draws, draws.len())));
    }
    let lookup = |t: &Table, line: usize, cell: &str| -> Result<usize> {
        let sweep: usize = t.parse(line, cell)?;
        index.get(&sweep).copied().ok_or_else(|| draws_error(dir, format!("sweep {sweep} in {} has no hyper row", t.file.display())))
    };

    let params = read_table(dir, "params", None)?;
    for (line, row) in &params.rows {
        let b = lookup(&params, *line, &row[0])?;
        let f = |i: usize| params.parse::<f64>(*line, &row[i]);
        let state: usize = params.parse(*line, &row[1])?;
        let d = &mut draws[b];
        if state != d.params.len() + 1 {
            return Err(Error::Data { line: Some(*line), msg: "params.csv states are out of order".into() });
        }
        let label: usize = params.parse(*line, &row[2])?;
        d.labels.push((label - 1) as u16);
        d.params.push(StapParams {
            mu: Vec2::new(f(3)?, f(4)?),
            eta: Vec2::new(f(5)?, f(6)?),
            sigma: Mat2::sym(f(7)?, f(8)?, f(9)?),
            tau: f(10)?,
            rho: f(11)?,
        });
        d.beta.push(f(12)?);
    }
    for d in draws.iter_mut() {
        d.pi = vec![vec![0.0; d.params.len()]; d.params.len()];
    }

    let trans = read_table(dir, "transitions", Some(&["sweep", "from", "to", "pi"]))?;
    for (line, row) in &trans.rows {
        let b = lookup(&trans, *line, &row[0])?;
        let (j, k): (usize, usize) = (trans.parse(*line, &row[1])?, trans.parse(*line, &row[2])?);
        let slot = draws[b]
            .pi
            .get_mut(j.wrapping_sub(1))
            .and_then(|r| r.get_mut(k.wrapping_sub(1)))
            .ok_or_else(|| Error::Data { line: Some(*line), msg: format!("transition {j} -> {k} refers to an unknown state") })?;
        *slot = trans.parse(*line, &row[3])?;
    }

    let states = read_table(dir, "states", None)?;
    for (line, row) in &states.rows {
        let b = lookup(&states, *line, &row[0])?;
        if row.len() != n_steps + 1 {
            return Err(Error::Data { line: Some(*line), msg: format!("expected {n_steps} states") });
        }
        draws[b].z = row[1..].iter().map(|c| states.parse::<u16>(*line, c).map(|s| s - 1)).collect::<Result<_>>()?;
    }

    let imputed = read_table(dir, "imputed", None)?;
    for (line, row) in &imputed.rows {
        let b = lookup(&imputed, *line, &row[0])?;
        if row.len() != 2 * m.missing_indices.len() + 1 {
            return Err(Error::Data { line: Some(*line), msg: "wrong number of imputed coordinates".into() });
        }
        let v: Vec<f64> = row[1..].iter().map(|c| imputed.parse(*line, c)).collect::<Result<_>>()?;
        draws[b].imputed = v.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect();
    }

    if let Some(d) = draws.iter().find(|d| d.params.is_empty() || d.z.len() != n_steps) {
        return Err(draws_error(dir, format!("sweep {} is incomplete", d.sweep)));
    }
    Ok(PosteriorDraws {
        schedule: McmcSchedule::new(m.iterations, m.burnin, m.thin, m.seed),
        truncation: m.truncation,
        path_len: m.path_len,
        missing_indices: m.missing_indices,
        draws,
        acceptance: m.acceptance,
    })
}
