//! Stored posterior samples.

use serde::{Deserialize, Serialize};

use crate::emission::StapParams;
use crate::linalg::Vec2;
use crate::priors::HdpHyper;

/// Length and thinning of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcSchedule {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for McmcSchedule {
    fn default() -> Self {
        McmcSchedule { iterations: 125_000, burnin: 75_000, thin: 10, seed: 1 }
    }
}

impl McmcSchedule {
    pub fn new(iterations: usize, burnin: usize, thin: usize, seed: u64) -> Self {
        McmcSchedule { iterations, burnin, thin, seed }
    }

    /// Whether the 1-based `sweep` is retained.
    pub fn keeps(&self, sweep: usize) -> bool {
        sweep > self.burnin && (sweep - self.burnin).is_multiple_of(self.thin)
    }

    pub fn n_kept(&self) -> usize {
        self.iterations.saturating_sub(self.burnin) / self.thin.max(1)
    }
}

/// One retained sweep, restricted to the states its state sequence visits.
///
/// Unvisited states carry no information beyond their prior, so they are not
/// stored. Rows of `pi` therefore sum to less than one by the mass that
/// leads to unvisited states.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub sweep: usize,
    /// Sampler label of each stored state.
    pub labels: Vec<u16>,
    pub params: Vec<StapParams>,
    pub pi: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub hyper: HdpHyper,
    /// Zero-based state of each step, indexing `params`.
    pub z: Vec<u16>,
    pub s0: Vec2,
    /// Imputed locations, in the order of [`PosteriorDraws::missing_indices`].
    pub imputed: Vec<Vec2>,
}

impl Draw {
    /// Number of distinct states visited by `z`.
    pub fn n_occupied(&self) -> usize {
        let mut seen = vec![false; self.params.len()];
        let mut k = 0;
        for &s in &self.z {
            if !std::mem::replace(&mut seen[s as usize], true) {
                k += 1;
            }
        }
        k
    }

    /// Sorted labels of the states visited by `z`.
    pub fn occupied_states(&self) -> Vec<usize> {
        let mut seen = vec![false; self.params.len()];
        for &s in &self.z {
            seen[s as usize] = true;
        }
        seen.iter().enumerate().filter_map(|(j, &b)| b.then_some(j)).collect()
    }
}

/// Metropolis acceptance counts accumulated over a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub rho_accepted: u64,
    pub rho_proposed: u64,
    pub missing_accepted: u64,
    pub missing_proposed: u64,
    pub s0_accepted: u64,
    pub s0_proposed: u64,
}

impl AcceptanceStats {
    fn rate(a: u64, p: u64) -> f64 {
        if p == 0 {
            f64::NAN
        } else {
            a as f64 / p as f64
        }
    }

    pub fn rho_rate(&self) -> f64 {
        Self::rate(self.rho_accepted, self.rho_proposed)
    }

    pub fn missing_rate(&self) -> f64 {
        Self::rate(self.missing_accepted, self.missing_proposed)
    }

    pub fn s0_rate(&self) -> f64 {
        Self::rate(self.s0_accepted, self.s0_proposed)
    }
}

/// An acceptance rate with three decimals, or `n/a` when nothing was proposed.
pub fn fmt_rate(rate: f64) -> String {
    if rate.is_nan() {
        "n/a".to_string()
    } else {
        format!("{rate:.3}")
    }
}

/// Thinned post-burn-in output of [`crate::sampler::run_mcmc`].
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub schedule: McmcSchedule,
    pub truncation: usize,
    /// Number of locations in the fitted path.
    pub path_len: usize,
    pub missing_indices: Vec<usize>,
    pub draws: Vec<Draw>,
    pub acceptance: AcceptanceStats,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}
