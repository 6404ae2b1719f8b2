//! Bearings, turning-angles and step-lengths of a short path, the inverse
//! reconstruction, and a 95% probability ellipse.

use stap_hmm::geometry::{ellipse_contour, metrics_to_path, path_to_metrics};
use stap_hmm::{Mat2, Path, Vec2};

fn main() -> stap_hmm::Result<()> {
    let points = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.5, 0.8),
        Vec2::new(1.2, 1.9),
        Vec2::new(0.1, 2.2),
    ];
    // s0 fixes the bearing of the first step
    let path = Path::observed(points, Vec2::new(-1.0, 0.0))?;
    let m = path_to_metrics(&path)?;
    println!("step  r       phi      theta");
    for k in 0..m.r.len() {
        println!("{:>4}  {:.4}  {:+.4}  {:+.4}", k + 1, m.r[k], m.phi[k], m.theta[k]);
    }

    let rebuilt = metrics_to_path(path.points[0], m.phi0, &m.theta, &m.r)?;
    let err = rebuilt.points.iter().zip(&path.points).map(|(a, b)| a.max_abs_diff(*b)).fold(0.0, f64::max);
    println!("reconstruction error {err:.2e}");

    let e = ellipse_contour(Vec2::new(1.0, 2.0), Mat2::sym(2.0, 0.6, 0.5), 0.95)?;
    let (major, minor, incl) = e.axes();
    println!("95% ellipse: semi-axes {major:.3} and {minor:.3}, inclination {incl:.3} rad, radius^2 {:.4}", e.radius_sq);
    println!("(1, 2.5) inside: {}", e.contains(Vec2::new(1.0, 2.5)));
    Ok(())
}
