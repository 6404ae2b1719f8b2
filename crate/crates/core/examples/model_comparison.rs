//! Scores a multi-behaviour fit against a single-behaviour fit of the same
//! track with DIC5 (lower is better) and ICL (higher is better).

use stap_hmm::diagnostics::{dic5, icl, modal_k};
use stap_hmm::{run_mcmc_with, simulate_hmm, Domain, McmcSchedule, PriorConfig, SamplerOptions, SimConfig};

fn main() -> stap_hmm::Result<()> {
    let (path, _) = simulate_hmm(&SimConfig::benchmark(1, 500, 5)?)?;
    let prior = PriorConfig { truncation: 20, domain: Domain::bounding(&path.points, 0.1), ..PriorConfig::default() };
    let schedule = McmcSchedule::new(3000, 1500, 5, 21);
    for (name, single_state) in [("switching", false), ("single behaviour", true)] {
        let options = SamplerOptions { single_state, ..SamplerOptions::default() };
        let draws = run_mcmc_with(&path, &prior, &schedule, &options)?;
        println!(
            "{name:>16}: modal K {}, DIC5 {:.1}, ICL {:.1}",
            modal_k(&draws)?,
            dic5(&draws, &path)?,
            icl(&draws, &path)?
        );
    }
    Ok(())
}
