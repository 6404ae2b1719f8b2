//! A correlated random walk with wrapped-Cauchy turns and Weibull steps,
//! recorded at a coarser interval. Prints text histograms of the recorded
//! turning-angles for the three preset configurations.

use std::f64::consts::PI;

use stap_hmm::diagnostics::{histogram, skewness};
use stap_hmm::geometry::path_to_metrics;
use stap_hmm::{simulate_wc_crw, subsample_path, WcCrwConfig};

fn main() -> stap_hmm::Result<()> {
    for (name, config) in [("set1", WcCrwConfig::set1(1)), ("set2", WcCrwConfig::set2(1)), ("set3", WcCrwConfig::set3(1))] {
        let full = simulate_wc_crw(&config)?;
        let recorded = subsample_path(&full, config.d)?;
        let theta = path_to_metrics(&recorded)?.theta;
        let bins = 18;
        let counts = histogram(&theta, -PI, PI, bins);
        let top = *counts.iter().max().unwrap_or(&1) as f64;
        println!("{name}: lambda {:.3}, d = {} from {} locations, skewness {:.3}", config.lambda, config.d, config.t_star, skewness(&theta));
        for (i, c) in counts.iter().enumerate() {
            let centre = -PI + (i as f64 + 0.5) * 2.0 * PI / bins as f64;
            println!("  {centre:+.2} {}", "#".repeat((50.0 * *c as f64 / top).round() as usize));
        }
    }
    Ok(())
}
