//! The STAP step distribution: expected movement and covariance for a biased
//! random walk, a correlated random walk and a blend of the two, with the
//! coordinate and polar log-densities of one step.

use stap_hmm::emission::{metric_loglik, stap_logdensity};
use stap_hmm::{Mat2, StapKernel, StapParams, Vec2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> stap_hmm::Result<()> {
    let sigma = Mat2::sym(0.5, 0.1, 0.3);
    let behaviours = [
        ("BRW", StapParams::brw(Vec2::new(5.0, 5.0), 0.3, sigma)?),
        ("CRW", StapParams::crw(Vec2::new(1.0, 0.2), sigma)?),
        ("BCRW", StapParams::new(Vec2::new(5.0, 5.0), Vec2::new(1.0, 0.2), sigma, 0.3, 0.5)?),
    ];
    let here = Vec2::new(1.0, 1.0);
    let heading = std::f64::consts::FRAC_PI_2;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, p) in &behaviours {
        let kernel = StapKernel::new(p)?;
        let m = kernel.moments(here, heading);
        let next = kernel.sample(&mut rng, here, heading);
        let step = next - here;
        let (r, phi) = (step.norm(), step.y.atan2(step.x));
        println!(
            "{name:>4}: mean ({:+.3}, {:+.3}) length {:.3}; cov [{:.3} {:.3}; {:.3} {:.3}]",
            m.mean.x, m.mean.y, m.length(), m.cov.a, m.cov.b, m.cov.c, m.cov.d
        );
        println!(
            "      sampled step r {r:.3} phi {phi:+.3}: log-density {:.4}, polar {:.4}",
            stap_logdensity(next, here, heading, p),
            metric_loglik(r, phi, here, heading, p)?
        );
    }
    Ok(())
}
