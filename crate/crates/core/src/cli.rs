//! The `stap` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or file
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::draws::fmt_rate;
use crate::error::{Error, Result};
use crate::io::{self, DataInfo, Provenance, ReportOptions, RunConfig, SimSpec, Transform, Variant};
use crate::sampler::{run_mcmc_with, SamplerOptions};
use crate::simulator::{simulate_hmm, simulate_wc_crw, subsample_path, SimConfig, WcCrwConfig};

#[derive(Debug, Parser)]
#[command(name = "stap", version, about = "STAP hidden Markov models for 2-D movement tracks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a track from a model file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the model to a `time,x,y` track and store the posterior draws.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict every behaviour to a pure CRW or BRW.
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Suppress progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Summarise stored draws into a report and plotting tables.
    Summarize {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Predictive samples per CRW-dominant behaviour.
        #[arg(long, default_value_t = 10_000)]
        predictive_samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Keep every d-th location of a track.
    Subsample {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct SimulationRecord<'a> {
    hmm: Option<&'a SimConfig>,
    wc_crw: Option<&'a WcCrwConfig>,
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out } => {
            let spec = SimSpec::load(&config)?;
            fs::create_dir_all(&out)?;
            let record = match &spec {
                SimSpec::Hmm(c) => {
                    let (path, z) = simulate_hmm(c)?;
                    io::save_path_csv(out.join("path.csv"), &path, &Transform::IDENTITY, false)?;
                    io::save_states_csv(out.join("states.csv"), &z)?;
                    eprintln!("simulated {} locations from {} behaviours", path.len(), c.params.len());
                    SimulationRecord { hmm: Some(c), wc_crw: None }
                }
                SimSpec::WcCrw(c) => {
                    let path = simulate_wc_crw(c)?;
                    io::save_path_csv(out.join("path.csv"), &path, &Transform::IDENTITY, false)?;
                    let recorded = subsample_path(&path, c.d)?;
                    io::save_path_csv(out.join("recorded.csv"), &recorded, &Transform::IDENTITY, false)?;
                    eprintln!("simulated {} locations, {} recorded every {} steps", path.len(), recorded.len(), c.d);
                    SimulationRecord { hmm: None, wc_crw: Some(c) }
                }
            };
            let text = toml::to_string(&record).map_err(|e| Error::config(e.to_string()))?;
            fs::write(out.join("simulation.toml"), text)?;
            Ok(())
        }
        Command::Fit { data, config, variant, out, iterations, burnin, thin, seed, quiet } => {
            let mut run = match &config {
                Some(f) => RunConfig::load(f)?,
                None => RunConfig::default(),
            };
            if let Some(v) = variant {
                run.variant = v;
            }
            let s = &mut run.schedule;
            s.iterations = iterations.unwrap_or(s.iterations);
            s.burnin = burnin.unwrap_or(s.burnin);
            s.thin = thin.unwrap_or(s.thin);
            s.seed = seed.unwrap_or(s.seed);
            run.validate()?;

            let track = io::load_track(&data)?;
            let pre = io::preprocess(&track, run.center_scale)?;
            let prior = run.effective_prior();
            let outside = pre.path.points.iter().zip(&pre.path.missing).filter(|(p, &m)| !m && !prior.domain.contains(**p)).count();
            if outside > 0 {
                eprintln!("warning: {outside} observed locations lie outside the domain {:?}", prior.domain);
            }
            let options = SamplerOptions {
                single_state: run.force_single_state,
                log_every: if quiet { 0 } else { (run.schedule.iterations / 20).max(1) },
            };
            let draws = run_mcmc_with(&pre.path, &prior, &run.schedule, &options)?;

            fs::create_dir_all(&out)?;
            io::save_path_csv(out.join("data.csv"), &pre.path, &Transform::IDENTITY, pre.iso_time)?;
            let canonical = run.to_toml_string()?;
            let provenance = Provenance {
                config_hash: Some(io::sha256_hex(canonical.as_bytes())),
                config: Some(canonical),
                input_hash: Some(io::sha256_file(&data)?),
            };
            let info = DataInfo { file: "data.csv".into(), transform: pre.transform, s0: pre.path.s0, iso_time: pre.iso_time };
            io::write_draws(&draws, &out, &provenance, Some(info))?;
            let a = draws.acceptance;
            eprintln!(
                "kept {} draws; acceptance rho {}, missing {}, s0 {}",
                draws.len(),
                fmt_rate(a.rho_rate()),
                fmt_rate(a.missing_rate()),
                fmt_rate(a.s0_rate())
            );
            Ok(())
        }
        Command::Summarize { draws, out, predictive_samples, seed } => {
            let manifest = io::read_manifest(&draws)?;
            let posterior = io::read_draws(&draws)?;
            let path = manifest.data.as_ref().map(|info| io::load_fitted_path(&draws, info)).transpose()?;
            let data = path.as_ref().zip(manifest.data.as_ref());
            let options = ReportOptions { predictive_samples, seed, ..ReportOptions::default() };
            let summary = io::write_summary_outputs(&out, &posterior, data, &options)?;
            let k_prob = summary.k_distribution.get(&summary.modal_k).copied().unwrap_or(0.0);
            eprintln!("modal number of behaviours {} (posterior probability {k_prob:.3})", summary.modal_k);
            Ok(())
        }
        Command::Subsample { data, d, out } => {
            let track = io::load_track(&data)?;
            let pre = io::preprocess(&track, false)?;
            let sub = subsample_path(&pre.path, d)?;
            io::save_path_csv(&out, &sub, &Transform::IDENTITY, pre.iso_time)?;
            Ok(())
        }
    }
}
