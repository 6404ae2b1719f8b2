//! Simulates the three benchmark configurations and reports how often each
//! behaviour is visited and how far the track travels.

use stap_hmm::{simulate_hmm, SimConfig};

fn main() -> stap_hmm::Result<()> {
    for dataset in 1..=3 {
        let config = SimConfig::benchmark(dataset, 2000, 1)?;
        let (path, z) = simulate_hmm(&config)?;
        let mut visits = vec![0usize; config.params.len()];
        z.iter().for_each(|&j| visits[j] += 1);
        let last = path.points[path.len() - 1];
        let span = path.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
        println!(
            "dataset {dataset}: {} locations, visits per behaviour {:?}, x range [{:.1}, {:.1}], ends at ({:.2}, {:.2})",
            path.len(),
            visits,
            span.0,
            span.1,
            last.x,
            last.y
        );
    }
    Ok(())
}
