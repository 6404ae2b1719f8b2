//! Restricting every behaviour to a pure correlated or pure biased random
//! walk by overriding the prior weights on `rho`.

use stap_hmm::diagnostics::dic5;
use stap_hmm::{run_mcmc, simulate_hmm, summarize, Domain, McmcSchedule, PriorConfig, SimConfig, Variant};

fn main() -> stap_hmm::Result<()> {
    let (path, _) = simulate_hmm(&SimConfig::benchmark(1, 500, 8)?)?;
    let base = PriorConfig { truncation: 20, domain: Domain::bounding(&path.points, 0.1), ..PriorConfig::default() };
    for variant in [Variant::Full, Variant::CrwOnly, Variant::BrwOnly] {
        let prior = PriorConfig { rho_weights: variant.rho_weights(), ..base.clone() };
        let draws = run_mcmc(&path, &prior, &McmcSchedule::new(2000, 1000, 5, 31))?;
        let summary = summarize(&draws)?;
        let rhos: Vec<String> = summary.states.iter().map(|s| format!("{:.2} {}", s.rho.mean, s.rho.bracket())).collect();
        println!("{variant:?}: modal K {}, DIC5 {:.1}, rho per behaviour [{}]", summary.modal_k, dic5(&draws, &path)?, rhos.join(", "));
    }
    Ok(())
}
