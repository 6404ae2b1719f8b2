//! Planar path representations: locations, displacement coordinates and
//! movement metrics (step-length, bearing-angle, turning-angle).
//!
//! Indexing is zero-based throughout. A path of `T` locations `p[0..T]` has
//! `T-1` steps; step `k` goes from `p[k]` to `p[k+1]` and its "previous
//! bearing" is `phi[k]`, where `phi[0]` is the direction from `s0` to `p[0]`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};

/// Angle of the vector `(x, y)` in the half-open range `[-π, π)`.
///
/// Argument order follows the usual two-argument tangent: `atan_star(y, x)`.
pub fn atan_star(y: f64, x: f64) -> Result<f64> {
    if x == 0.0 && y == 0.0 {
        return Err(Error::UndefinedDirection { index: None });
    }
    let a = y.atan2(x);
    Ok(if a >= PI { -PI } else { a })
}

/// Direction of `v`; see [`atan_star`].
pub fn direction(v: Vec2) -> Result<f64> {
    atan_star(v.y, v.x)
}

/// Wraps any finite angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Anticlockwise rotation by `omega`.
pub fn rotation(omega: f64) -> Mat2 {
    let (s, c) = omega.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// An observed (or simulated) track.
///
/// Missing locations hold `NaN` coordinates and are flagged in `missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub points: Vec<Vec2>,
    pub missing: Vec<bool>,
    /// The location preceding `points[0]`; only its direction to `points[0]` matters.
    pub s0: Vec2,
    /// Seconds since the Unix epoch, equally spaced when present.
    pub timestamps: Option<Vec<i64>>,
}

impl Path {
    pub fn new(
        points: Vec<Vec2>,
        missing: Vec<bool>,
        s0: Vec2,
        timestamps: Option<Vec<i64>>,
    ) -> Result<Self> {
        let path = Path { points, missing, s0, timestamps };
        path.validate()?;
        Ok(path)
    }

    /// A fully observed path without timestamps.
    pub fn observed(points: Vec<Vec2>, s0: Vec2) -> Result<Self> {
        let n = points.len();
        Path::new(points, vec![false; n], s0, None)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n < 3 {
            return Err(Error::data(format!("a path needs at least 3 locations, got {n}")));
        }
        if self.missing.len() != n {
            return Err(Error::LengthMismatch { left: n, right: self.missing.len() });
        }
        if self.missing[0] {
            return Err(Error::data("the first location of a path cannot be missing"));
        }
        if !self.s0.is_finite() {
            return Err(Error::data("s0 must be finite"));
        }
        for (i, (p, &m)) in self.points.iter().zip(&self.missing).enumerate() {
            if !m && !p.is_finite() {
                return Err(Error::data(format!("observed location {i} is not finite")));
            }
        }
        if let Some(ts) = &self.timestamps {
            if ts.len() != n {
                return Err(Error::LengthMismatch { left: n, right: ts.len() });
            }
            let dt = ts[1] - ts[0];
            if dt <= 0 {
                return Err(Error::data("timestamps must be strictly increasing"));
            }
            if let Some(i) = ts.windows(2).position(|w| w[1] - w[0] != dt) {
                return Err(Error::data(format!(
                    "timestamps are not equally spaced between rows {i} and {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        self.missing
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }
}

/// Bearings `phi[0..T]` of a complete set of locations.
///
/// `phi[0]` is the direction from `s0` to `points[0]` and `phi[k]` the
/// direction of step `k-1`. A zero-length step carries the previous bearing
/// forward; `s0 == points[0]` is an error.
pub fn bearings(s0: Vec2, points: &[Vec2]) -> Result<Vec<f64>> {
    let mut phi = Vec::with_capacity(points.len());
    if points.is_empty() {
        return Ok(phi);
    }
    let first = direction(points[0] - s0).map_err(|_| Error::UndefinedDirection { index: Some(0) })?;
    phi.push(first);
    for k in 1..points.len() {
        let prev = phi[k - 1];
        phi.push(step_bearing(points[k] - points[k - 1], prev));
    }
    Ok(phi)
}

/// Bearing of a displacement, falling back to `prev` for a zero-length step.
#[inline]
pub fn step_bearing(v: Vec2, prev: f64) -> f64 {
    direction(v).unwrap_or(prev)
}

/// The movement-metric view of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementMetrics {
    /// Displacements `p[k+1] - p[k]`.
    pub v: Vec<Vec2>,
    /// Displacements rotated into the frame of the previous bearing.
    pub y: Vec<Vec2>,
    pub r: Vec<f64>,
    /// Bearing of each step.
    pub phi: Vec<f64>,
    /// Turning-angles, the change of bearing at each step.
    pub theta: Vec<f64>,
    pub phi0: f64,
}

pub fn path_to_metrics(path: &Path) -> Result<MovementMetrics> {
    if let Some(i) = path.points.iter().position(|p| !p.is_finite()) {
        return Err(Error::data(format!(
            "location {i} is missing; impute it before computing movement metrics"
        )));
    }
    let phis = bearings(path.s0, &path.points)?;
    let n = path.n_steps();
    let mut m = MovementMetrics {
        v: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        phi0: phis[0],
    };
    for k in 0..n {
        let v = path.points[k + 1] - path.points[k];
        let y = rotation(phis[k]).transpose() * v;
        m.v.push(v);
        m.y.push(y);
        m.r.push(v.norm());
        m.phi.push(phis[k + 1]);
        // a zero step has no turning; keep the carried bearing's difference
        m.theta.push(direction(y).unwrap_or_else(|_| wrap_angle(phis[k + 1] - phis[k])));
    }
    Ok(m)
}

/// Rebuilds locations from `s1`, the initial bearing and the step-and-turn sequence.
///
/// The returned path has `theta.len() + 1` locations and `s0` one unit behind
/// `s1` along `phi0`.
pub fn metrics_to_path(s1: Vec2, phi0: f64, theta: &[f64], r: &[f64]) -> Result<Path> {
    if theta.len() != r.len() {
        return Err(Error::LengthMismatch { left: theta.len(), right: r.len() });
    }
    if let Some(i) = r.iter().position(|&ri| !(ri >= 0.0)) {
        return Err(Error::param(format!("step-length {i} must be nonnegative")));
    }
    let mut points = Vec::with_capacity(r.len() + 1);
    points.push(s1);
    let mut bearing = phi0;
    let mut cur = s1;
    for (&t, &ri) in theta.iter().zip(r) {
        bearing += t;
        cur += Vec2::from_angle(bearing) * ri;
        points.push(cur);
    }
    let s0 = s1 - Vec2::from_angle(phi0);
    let n = points.len();
    Ok(Path { points, missing: vec![false; n], s0, timestamps: None })
}

/// Probability-mass contour of a bivariate normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Vec2,
    pub shape: Mat2,
    pub level: f64,
    pub radius_sq: f64,
}

/// Quantile of the χ² distribution with two degrees of freedom.
pub fn chi2_2_quantile(level: f64) -> f64 {
    -2.0 * (-level).ln_1p()
}

pub fn ellipse_contour(mean: Vec2, cov: Mat2, level: f64) -> Result<Ellipse> {
    if !cov.is_spd() {
        return Err(Error::NotSpd(format!("ellipse shape {cov:?}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param(format!("contour level must lie in (0, 1), got {level}")));
    }
    Ok(Ellipse { center: mean, shape: cov, level, radius_sq: chi2_2_quantile(level) })
}

impl Ellipse {
    /// Squared Mahalanobis distance of `p` from the centre.
    pub fn mahalanobis_sq(&self, p: Vec2) -> f64 {
        let inv = self.shape.inverse().expect("ellipse shape is SPD");
        inv.quad_form(p - self.center)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.mahalanobis_sq(p) <= self.radius_sq
    }

    /// Semi-axis lengths (major, minor) and the inclination of the major axis
    /// in `(-π/2, π/2]`.
    pub fn axes(&self) -> (f64, f64, f64) {
        let (l1, l2) = self.shape.sym_eigenvalues();
        let s = self.shape;
        let incl = if s.b.abs() < f64::EPSILON * (s.a.abs() + s.d.abs()) {
            if s.a >= s.d {
                0.0
            } else {
                PI / 2.0
            }
        } else {
            (l1 - s.a).atan2(s.b)
        };
        let incl = if incl <= -PI / 2.0 {
            incl + PI
        } else if incl > PI / 2.0 {
            incl - PI
        } else {
            incl
        };
        ((self.radius_sq * l1).sqrt(), (self.radius_sq * l2).sqrt(), incl)
    }

    /// Largest first and second coordinate reached by the contour.
    pub fn extremes(&self) -> (f64, f64) {
        (
            self.center.x + (self.radius_sq * self.shape.a).sqrt(),
            self.center.y + (self.radius_sq * self.shape.d).sqrt(),
        )
    }

    /// `n` points evenly spaced in parameter along the contour.
    pub fn boundary(&self, n: usize) -> Vec<Vec2> {
        let l = self.shape.cholesky().expect("ellipse shape is SPD");
        let rad = self.radius_sq.sqrt();
        (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                self.center + l * (Vec2::from_angle(t) * rad)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn atan_star_cardinal_directions() {
        assert_eq!(atan_star(0.0, 1.0).unwrap(), 0.0);
        assert!((atan_star(1.0, 0.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert_eq!(atan_star(0.0, -1.0).unwrap(), -PI);
        assert_eq!(atan_star(-0.0, -1.0).unwrap(), -PI);
        assert!(matches!(atan_star(0.0, 0.0), Err(Error::UndefinedDirection { .. })));
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation(0.0), Mat2::IDENTITY);
        let v = rotation(PI / 2.0) * Vec2::new(1.0, 0.0);
        assert!(v.max_abs_diff(Vec2::new(0.0, 1.0)) < 1e-15);
        let prod = rotation(0.3) * rotation(0.5);
        assert!(prod.max_abs_diff(&rotation(0.8)) < 1e-12);
        assert!((rotation(1.234).det() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_geometry_metrics() {
        let p = Path::observed(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)],
            Vec2::new(-1.0, 0.0),
        )
        .unwrap();
        let m = path_to_metrics(&p).unwrap();
        assert_eq!(m.v, vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]);
        assert_eq!(m.phi0, 0.0);
        assert_eq!(m.phi[0], 0.0);
        assert!((m.phi[1] - PI / 2.0).abs() < 1e-15);
        assert_eq!(m.theta[0], 0.0);
        assert!((m.theta[1] - PI / 2.0).abs() < 1e-15);
        assert!(m.y[0].max_abs_diff(Vec2::new(1.0, 0.0)) < 1e-15);
        assert!(m.y[1].max_abs_diff(Vec2::new(0.0, 1.0)) < 1e-15);
    }

    #[test]
    fn reconstruct_straight_and_turn() {
        let p = metrics_to_path(Vec2::ZERO, 0.0, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p.points, vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)]);
        let p = metrics_to_path(Vec2::ZERO, 0.0, &[PI / 2.0], &[1.0]).unwrap();
        assert!(p.points[1].max_abs_diff(Vec2::new(0.0, 1.0)) < 1e-15);
        assert!(metrics_to_path(Vec2::ZERO, 0.0, &[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn zero_step_carries_bearing() {
        let pts = vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0)];
        let phi = bearings(Vec2::new(-1.0, 0.0), &pts).unwrap();
        assert!((phi[2] - PI / 2.0).abs() < 1e-15);
        assert!(matches!(
            bearings(Vec2::ZERO, &pts),
            Err(Error::UndefinedDirection { index: Some(0) })
        ));
    }

    #[test]
    fn path_validation() {
        let pts = vec![Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        assert!(Path::new(pts.clone(), vec![true, false, false], Vec2::ZERO, None).is_err());
        assert!(Path::new(pts.clone(), vec![false; 3], Vec2::ZERO, Some(vec![0, 30, 70])).is_err());
        assert!(Path::new(pts.clone(), vec![false; 3], Vec2::ZERO, Some(vec![0, 30, 60])).is_ok());
        assert!(Path::observed(pts[..2].to_vec(), Vec2::ZERO).is_err());
    }

    #[test]
    fn ellipse_radius_and_orientation() {
        let e = ellipse_contour(Vec2::ZERO, Mat2::IDENTITY, 0.95).unwrap();
        assert!((e.radius_sq - (-2.0 * 0.05f64.ln())).abs() < 1e-14);
        assert!((e.radius_sq - 5.9915).abs() < 1e-4);
        let e = ellipse_contour(Vec2::ZERO, Mat2::diag(0.2, 1.0), 0.95).unwrap();
        let (major, minor, incl) = e.axes();
        assert!(major > minor);
        assert!((incl - PI / 2.0).abs() < 1e-12);
        assert!(ellipse_contour(Vec2::ZERO, Mat2::sym(1.0, 2.0, 1.0), 0.95).is_err());
        assert!(ellipse_contour(Vec2::ZERO, Mat2::IDENTITY, 1.0).is_err());
    }

    #[test]
    fn ellipse_boundary_lies_on_contour() {
        let e = ellipse_contour(Vec2::new(1.0, -2.0), Mat2::sym(1.0, 0.25, 0.5), 0.9).unwrap();
        for p in e.boundary(16) {
            assert!((e.mahalanobis_sq(p) - e.radius_sq).abs() < 1e-10);
        }
        let (x1, x2) = e.extremes();
        let far = e.boundary(20000).iter().fold((f64::MIN, f64::MIN), |acc, p| (acc.0.max(p.x), acc.1.max(p.y)));
        assert!((far.0 - x1).abs() < 1e-6 && (far.1 - x2).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn rotation_inverse_is_transpose(w in -50.0f64..50.0) {
            let r = rotation(w);
            let inv = r.inverse().unwrap();
            prop_assert!(inv.max_abs_diff(&r.transpose()) < 1e-12);
            prop_assert!(inv.max_abs_diff(&rotation(-w)) < 1e-12);
        }

        #[test]
        fn atan_star_wraps(a in -10.0 * PI..10.0 * PI) {
            let got = atan_star(a.sin(), a.cos()).unwrap();
            prop_assert!((-PI..PI).contains(&got));
            let diff = wrap_angle(got - a);
            prop_assert!(diff.abs() < 1e-9 || (diff.abs() - 2.0 * PI).abs() < 1e-9);
        }

        #[test]
        fn rotated_displacement_keeps_length(pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..20)) {
            let points: Vec<Vec2> = pts.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let path = Path::observed(points, Vec2::new(-20.0, -20.0)).unwrap();
            let m = path_to_metrics(&path).unwrap();
            for k in 0..m.r.len() {
                prop_assert!((m.y[k].norm() - m.r[k]).abs() < 1e-12 * (1.0 + m.r[k]));
                prop_assert!((m.v[k].norm() - m.r[k]).abs() < 1e-15 * (1.0 + m.r[k]));
            }
        }
    }
}
