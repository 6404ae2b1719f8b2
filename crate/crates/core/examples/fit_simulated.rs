//! Fits a simulated track and compares the recovered behaviours with the
//! truth.
//!
//! Pass the number of sweeps as the first argument (default 4000).

use stap_hmm::diagnostics::{accuracy, fmt_short};
use stap_hmm::{run_mcmc, simulate_hmm, summarize, Domain, McmcSchedule, PriorConfig, SimConfig};

fn main() -> stap_hmm::Result<()> {
    let sweeps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let config = SimConfig::benchmark(1, 800, 3)?;
    let (path, truth) = simulate_hmm(&config)?;

    let prior = PriorConfig { truncation: 20, domain: Domain::bounding(&path.points, 0.1), ..PriorConfig::default() };
    let draws = run_mcmc(&path, &prior, &McmcSchedule::new(sweeps, sweeps / 2, 5, 11))?;
    let summary = summarize(&draws)?;

    println!("posterior number of behaviours: {:?}", summary.k_distribution);
    println!("state accuracy {:.3}", accuracy(&summary.map_z, &truth)?);
    for (j, s) in summary.states.iter().enumerate() {
        println!(
            "behaviour {}: mu ({}, {}) eta ({}, {}) tau {} rho {} {} occupancy {}",
            j + 1,
            fmt_short(s.mu[0].mean),
            fmt_short(s.mu[1].mean),
            fmt_short(s.eta[0].mean),
            fmt_short(s.eta[1].mean),
            fmt_short(s.tau.mean),
            fmt_short(s.rho.mean),
            s.rho.bracket(),
            fmt_short(s.occupancy)
        );
    }
    println!("truth (behaviour labels are arbitrary):");
    for (j, p) in config.params.iter().enumerate() {
        println!("behaviour {}: mu ({}, {}) eta ({}, {}) tau {} rho {}", j + 1, p.mu.x, p.mu.y, p.eta.x, p.eta.y, p.tau, p.rho);
    }
    Ok(())
}
