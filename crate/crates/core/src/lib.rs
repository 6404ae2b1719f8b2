//! Step-and-turn-with-attractive-point (STAP) movement models.
//!
//! A STAP step blends a biased random walk towards an attractor with a
//! correlated random walk that persists in the previous bearing. Behaviours
//! switch according to a sticky hierarchical-Dirichlet-process hidden Markov
//! model, fitted by blocked Gibbs sampling with Metropolis steps for the
//! mixing weight `rho`, missing locations and the initial bearing.
//!
//! The modules follow the workflow:
//!
//! - [`geometry`]: paths, bearings, turning-angles and probability ellipses.
//! - [`emission`]: the STAP step distribution and its polar form.
//! - [`priors`]: prior constants and samplers, including the mixed prior on `rho`.
//! - [`sampler`]: the Gibbs sampler and its individual conditional updates.
//! - [`simulator`]: synthetic tracks from a fitted or hand-specified model,
//!   and the wrapped-Cauchy random walk used to study the sampling interval.
//! - [`diagnostics`]: label alignment, posterior summaries, DIC and ICL.
//! - [`io`]: track files, run configuration, stored draws and report tables.
//! - [`cli`]: the `stap` command.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod cli;
pub mod diagnostics;
pub mod dist;
pub mod draws;
pub mod emission;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod priors;
pub mod sampler;
pub mod simulator;

pub use diagnostics::{summarize, Summary};
pub use draws::{Draw, McmcSchedule, PosteriorDraws};
pub use emission::{StapKernel, StapParams, StepMoments};
pub use error::{Error, Result};
pub use geometry::{Ellipse, MovementMetrics, Path};
pub use io::{RunConfig, Variant};
pub use linalg::{Mat2, Vec2};
pub use priors::{Domain, HdpHyper, PriorConfig, RhoWeights};
pub use sampler::{run_mcmc, run_mcmc_with, SamplerOptions};
pub use simulator::{simulate_hmm, simulate_wc_crw, subsample_path, SimConfig, WcCrwConfig};
