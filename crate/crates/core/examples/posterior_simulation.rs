//! Simulating new tracks from a fitted model and checking that the
//! behaviour occupancy matches the fitted one.

use stap_hmm::simulator::simulate_from_posterior;
use stap_hmm::{run_mcmc, simulate_hmm, summarize, Domain, McmcSchedule, PriorConfig, SimConfig};

fn main() -> stap_hmm::Result<()> {
    let (path, _) = simulate_hmm(&SimConfig::benchmark(3, 600, 4)?)?;
    let prior = PriorConfig { truncation: 20, domain: Domain::bounding(&path.points, 0.1), ..PriorConfig::default() };
    let draws = run_mcmc(&path, &prior, &McmcSchedule::new(3000, 1500, 5, 41))?;
    let summary = summarize(&draws)?;
    let fitted: Vec<String> = summary.states.iter().map(|s| format!("{:.2}", s.occupancy)).collect();

    let (sim, z) = simulate_from_posterior(&draws, path.s0, path.points[0], 5000, 42)?;
    let mut visits = vec![0usize; summary.modal_k];
    z.iter().for_each(|&j| visits[j] += 1);
    let simulated: Vec<String> = visits.iter().map(|&v| format!("{:.2}", v as f64 / z.len() as f64)).collect();
    println!("fitted occupancy    [{}]", fitted.join(", "));
    println!("simulated occupancy [{}] over {} locations", simulated.join(", "), sim.len());
    Ok(())
}
