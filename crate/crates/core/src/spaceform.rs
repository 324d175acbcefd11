//! Geometry of the simply connected space forms of curvature +1, 0 and -1.
//!
//! Everything here is expressed in geodesic polar coordinates about a fixed
//! base point `p`: the metric is `dr^2 + sin_M(r)^2 g_round`, where `sin_M` is
//! `sin`, the identity, or `sinh` depending on the curvature.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;
use crate::special::sphere_area;

/// Curvature family of the ambient space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceForm {
    Spherical,
    Euclidean,
    Hyperbolic,
}

impl SpaceForm {
    pub const ALL: [SpaceForm; 3] = [
        SpaceForm::Spherical,
        SpaceForm::Euclidean,
        SpaceForm::Hyperbolic,
    ];

    /// Generalized sine: `sin r`, `r` or `sinh r`.
    pub fn sin_m(self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::Domain(format!("sin_M needs r >= 0, got {r}")));
        }
        if self == SpaceForm::Spherical && r > PI {
            return Err(Error::Domain(format!(
                "spherical sin_M needs r <= pi, got {r}"
            )));
        }
        Ok(self.sin_unchecked(r))
    }

    /// `sin_M` without range checks; callers guarantee `r` is admissible.
    #[inline]
    pub fn sin_unchecked(self, r: f64) -> f64 {
        match self {
            SpaceForm::Spherical => r.sin(),
            SpaceForm::Euclidean => r,
            SpaceForm::Hyperbolic => r.sinh(),
        }
    }

    /// Derivative of `sin_M`: `cos r`, `1` or `cosh r`.
    #[inline]
    pub fn cos_m(self, r: f64) -> f64 {
        match self {
            SpaceForm::Spherical => r.cos(),
            SpaceForm::Euclidean => 1.0,
            SpaceForm::Hyperbolic => r.cosh(),
        }
    }

    /// `(h, h', h'')` for the warping function `h = sin_M`.
    pub fn warping_derivatives(self, r: f64) -> (f64, f64, f64) {
        match self {
            SpaceForm::Spherical => (r.sin(), r.cos(), -r.sin()),
            SpaceForm::Euclidean => (r, 1.0, 0.0),
            SpaceForm::Hyperbolic => (r.sinh(), r.cosh(), r.sinh()),
        }
    }

    /// Radial volume density `sin_M(r)^(n-1)`.
    #[inline]
    pub fn density(self, n: usize, r: f64) -> f64 {
        self.sin_unchecked(r).powi(n as i32 - 1)
    }

    /// Largest radius admitted by domain-level operations (the closed hemisphere for S^n).
    pub fn max_domain_radius(self) -> f64 {
        match self {
            SpaceForm::Spherical => FRAC_PI_2,
            _ => f64::INFINITY,
        }
    }

    /// Checks the hemisphere bound for domain-level radii.
    pub fn check_domain_radius(self, r: f64) -> Result<()> {
        if self == SpaceForm::Spherical && r > FRAC_PI_2 * (1.0 + 1e-14) {
            return Err(Error::Hemisphere(format!("radius {r} exceeds pi/2")));
        }
        Ok(())
    }

    /// Volume of the annulus `B_{r2} \ B_{r1}` in the `n`-dimensional space form.
    pub fn annulus_volume(self, n: usize, r1: f64, r2: f64) -> Result<f64> {
        check_dimension(n)?;
        if !(r1 >= 0.0 && r2 > r1) || !r2.is_finite() {
            return Err(Error::Domain(format!(
                "annulus radii must satisfy 0 <= r1 < r2, got r1 = {r1}, r2 = {r2}"
            )));
        }
        self.check_domain_radius(r2)?;
        Ok(self.annulus_volume_unchecked(n, r1, r2))
    }

    fn annulus_volume_unchecked(self, n: usize, r1: f64, r2: f64) -> f64 {
        let omega = sphere_area(n - 1);
        match (self, n) {
            // closed forms keep the common planar cases exact
            (SpaceForm::Euclidean, _) => omega * (r2.powi(n as i32) - r1.powi(n as i32)) / n as f64,
            (SpaceForm::Spherical, 2) => omega * (r1.cos() - r2.cos()),
            (SpaceForm::Hyperbolic, 2) => omega * (r2.cosh() - r1.cosh()),
            _ => omega * integrate_adaptive(|r| self.density(n, r), r1, r2, 1e-13),
        }
    }

    /// Outer radius `R2` with `vol(B_{R2} \ B_{r1}) = target_volume`, by bisection.
    pub fn match_outer_radius(self, n: usize, r1: f64, target_volume: f64) -> Result<f64> {
        check_dimension(n)?;
        if !(target_volume > 0.0) || !target_volume.is_finite() {
            return Err(Error::Domain(format!(
                "target volume must be positive, got {target_volume}"
            )));
        }
        if !(r1 >= 0.0) {
            return Err(Error::Domain(format!(
                "inner radius must be >= 0, got {r1}"
            )));
        }
        let mut lo = r1;
        let mut hi = match self {
            SpaceForm::Spherical => {
                if r1 >= FRAC_PI_2 {
                    return Err(Error::Hemisphere(format!("inner radius {r1} >= pi/2")));
                }
                let max = self.annulus_volume_unchecked(n, r1, FRAC_PI_2);
                if target_volume > max * (1.0 + 1e-12) {
                    return Err(Error::UnattainableVolume {
                        target: target_volume,
                        max,
                    });
                }
                FRAC_PI_2
            }
            _ => {
                let mut hi = r1 + 1.0;
                while self.annulus_volume_unchecked(n, r1, hi) < target_volume {
                    lo = hi;
                    hi = r1 + 2.0 * (hi - r1);
                    if hi > 1e6 {
                        return Err(Error::UnattainableVolume {
                            target: target_volume,
                            max: f64::INFINITY,
                        });
                    }
                }
                hi
            }
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.annulus_volume_unchecked(n, r1, mid) < target_volume {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

impl fmt::Display for SpaceForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpaceForm::Spherical => "spherical",
            SpaceForm::Euclidean => "euclidean",
            SpaceForm::Hyperbolic => "hyperbolic",
        })
    }
}

impl FromStr for SpaceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spherical" | "sphere" | "s" => Ok(SpaceForm::Spherical),
            "euclidean" | "flat" | "r" => Ok(SpaceForm::Euclidean),
            "hyperbolic" | "h" => Ok(SpaceForm::Hyperbolic),
            other => Err(Error::InvalidInput(format!("unknown space form '{other}'"))),
        }
    }
}

pub(crate) fn check_dimension(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension must be >= 2, got {n}")));
    }
    Ok(())
}

/// Residual `h h'' - h'^2 + 1` of a warping function given as `(h, h', h'')`.
///
/// It vanishes identically exactly for `h = r`, `sin r` and `sinh r`.
pub fn warped_product_residual(derivs: (f64, f64, f64)) -> f64 {
    let (h, dh, d2h) = derivs;
    h * d2h - dh * dh + 1.0
}

/// A point in geodesic polar coordinates `(r, phi_2, ..., phi_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPoint {
    pub r: f64,
    pub theta: Vec<f64>,
}

const ANGLE_SLACK: f64 = 1e-12;

impl GeodesicPoint {
    /// Validates ranges: interior angles in [0, pi], the last angle in [0, 2pi).
    pub fn new(r: f64, theta: Vec<f64>) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!(
                "geodesic distance must be >= 0, got {r}"
            )));
        }
        if theta.is_empty() {
            return Err(Error::Domain("need at least one angle (n >= 2)".into()));
        }
        let last = theta.len() - 1;
        for (i, &a) in theta.iter().enumerate() {
            let ok = if i == last {
                (-ANGLE_SLACK..2.0 * PI + ANGLE_SLACK).contains(&a)
            } else {
                (-ANGLE_SLACK..=PI + ANGLE_SLACK).contains(&a)
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "angle phi_{} = {a} out of range",
                    i + 2
                )));
            }
        }
        Ok(Self { r, theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.len() + 1
    }

    /// Unit direction `X / r` determined by the angles alone.
    pub fn direction(&self) -> Vec<f64> {
        direction_from_angles(&self.theta)
    }
}

/// Unit vector with spherical angles `(phi_2, ..., phi_n)`.
pub fn direction_from_angles(theta: &[f64]) -> Vec<f64> {
    let n = theta.len() + 1;
    let mut out = Vec::with_capacity(n);
    let mut sin_prod = 1.0;
    for &a in theta {
        out.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    out.push(sin_prod);
    out
}

/// Geodesic normal coordinates `(X_1, ..., X_n)` about the base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalCoords(pub Vec<f64>);

impl NormalCoords {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Forward chart: `X_1 = r cos phi_2`, ..., `X_n = r sin phi_2 ... sin phi_n`.
pub fn to_normal_coords(point: &GeodesicPoint) -> NormalCoords {
    NormalCoords(point.direction().into_iter().map(|d| point.r * d).collect())
}

/// Inverse chart. The last angle is reduced to [0, 2pi); interior angles lie in [0, pi].
pub fn from_normal_coords(form: SpaceForm, x: &NormalCoords) -> Result<GeodesicPoint> {
    let n = x.dim();
    check_dimension(n)?;
    let r = x.norm();
    if form == SpaceForm::Spherical && r >= PI {
        return Err(Error::Domain(format!(
            "normal coordinates of norm {r} lie outside the spherical chart (|X| < pi)"
        )));
    }
    let v = &x.0;
    let mut theta = Vec::with_capacity(n - 1);
    for i in 0..n - 2 {
        let tail = v[i + 1..].iter().map(|t| t * t).sum::<f64>().sqrt();
        theta.push(tail.atan2(v[i]).clamp(0.0, PI));
    }
    let mut last = v[n - 1].atan2(v[n - 2]);
    if last < 0.0 {
        last += 2.0 * PI;
    }
    if last >= 2.0 * PI {
        last -= 2.0 * PI;
    }
    theta.push(last);
    Ok(GeodesicPoint { r, theta })
}

/// Rotation by `quarter_turns * pi/2` in the `(i, j)` coordinate plane (1-based axes).
///
/// One quarter turn maps `(X_i, X_j)` to `(-X_j, X_i)`.
pub fn rotate(x: &NormalCoords, i: usize, j: usize, quarter_turns: i64) -> Result<NormalCoords> {
    let n = x.dim();
    if !(1 <= i && i < j && j <= n) {
        return Err(Error::Index(format!(
            "rotation axes must satisfy 1 <= i < j <= n = {n}, got ({i}, {j})"
        )));
    }
    let mut out = x.0.clone();
    let (a, b) = (x.0[i - 1], x.0[j - 1]);
    let (ni, nj) = match quarter_turns.rem_euclid(4) {
        0 => (a, b),
        1 => (-b, a),
        2 => (-a, -b),
        _ => (b, -a),
    };
    out[i - 1] = ni;
    out[j - 1] = nj;
    Ok(NormalCoords(out))
}

/// Markdown table of the constants used by the library (pi and unit-sphere areas).
pub fn constants_reference() -> String {
    let mut s = String::from(
        "# Reference constants\n\n\
         Generated by `sfs_core::spaceform::constants_reference`.\n\n",
    );
    s.push_str(&format!("pi = {:.17e}\n\n", PI));
    s.push_str("| n | omega_{n-1} = area of S^{n-1} |\n|---|---|\n");
    for n in 2..=10 {
        s.push_str(&format!("| {n} | {:.17e} |\n", sphere_area(n - 1)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn sin_m_examples() {
        assert_eq!(SpaceForm::Spherical.sin_m(FRAC_PI_2).unwrap(), 1.0);
        assert_eq!(SpaceForm::Hyperbolic.sin_m(0.0).unwrap(), 0.0);
        assert_eq!(SpaceForm::Euclidean.sin_m(2.5).unwrap(), 2.5);
        for form in SpaceForm::ALL {
            assert_eq!(form.sin_m(0.0).unwrap(), 0.0);
            assert_eq!(form.cos_m(0.0), 1.0);
        }
    }

    #[test]
    fn sin_m_rejects_bad_radii() {
        assert!(matches!(
            SpaceForm::Euclidean.sin_m(-1e-3),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            SpaceForm::Spherical.sin_m(3.2),
            Err(Error::Domain(_))
        ));
        assert!(SpaceForm::Hyperbolic.sin_m(30.0).is_ok());
    }

    #[test]
    fn annulus_volume_examples() {
        let v = SpaceForm::Euclidean.annulus_volume(2, 0.0, 1.0).unwrap();
        assert!(close(v, PI, 1e-14));
        let v = SpaceForm::Spherical
            .annulus_volume(2, 0.0, FRAC_PI_2)
            .unwrap();
        assert!(close(v, 2.0 * PI, 1e-14));
        let v = SpaceForm::Hyperbolic.annulus_volume(2, 0.5, 1.0).unwrap();
        assert!(close(v, 2.0 * PI * (1f64.cosh() - 0.5f64.cosh()), 1e-13));
    }

    #[test]
    fn quadrature_path_matches_closed_forms() {
        // n = 3: S^3-analog shell volume 4pi * (r/2 - sin(2r)/4) and H^3 analog
        let (r1, r2) = (0.2, 1.3);
        let s = SpaceForm::Spherical.annulus_volume(3, r1, r2).unwrap();
        let f = |r: f64| 4.0 * PI * (r / 2.0 - (2.0 * r).sin() / 4.0);
        assert!(close(s, f(r2) - f(r1), 1e-12));
        let h = SpaceForm::Hyperbolic.annulus_volume(3, r1, r2).unwrap();
        let g = |r: f64| 4.0 * PI * ((2.0 * r).sinh() / 4.0 - r / 2.0);
        assert!(close(h, g(r2) - g(r1), 1e-12));
    }

    #[test]
    fn annulus_volume_errors() {
        assert!(SpaceForm::Euclidean.annulus_volume(2, 1.0, 1.0).is_err());
        assert!(SpaceForm::Euclidean.annulus_volume(1, 0.0, 1.0).is_err());
        assert!(matches!(
            SpaceForm::Spherical.annulus_volume(2, 0.0, 1.7),
            Err(Error::Hemisphere(_))
        ));
    }

    #[test]
    fn match_outer_radius_examples() {
        let r = SpaceForm::Euclidean.match_outer_radius(2, 0.0, PI).unwrap();
        assert!(close(r, 1.0, 1e-12));
        let r = SpaceForm::Euclidean
            .match_outer_radius(2, 1.0, 3.0 * PI)
            .unwrap();
        assert!(close(r, 2.0, 1e-12));
        let r = SpaceForm::Spherical
            .match_outer_radius(2, 0.0, 2.0 * PI)
            .unwrap();
        assert!(close(r, FRAC_PI_2, 1e-10));
        assert!(matches!(
            SpaceForm::Spherical.match_outer_radius(2, 0.0, 2.5 * PI),
            Err(Error::UnattainableVolume { .. })
        ));
    }

    #[test]
    fn chart_examples() {
        let p = GeodesicPoint::new(1.0, vec![0.0]).unwrap();
        assert_eq!(to_normal_coords(&p).0, vec![1.0, 0.0]);
        let p = GeodesicPoint::new(2.0, vec![FRAC_PI_2]).unwrap();
        let x = to_normal_coords(&p).0;
        assert!(x[0].abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        let p = GeodesicPoint::new(1.0, vec![FRAC_PI_2, FRAC_PI_2]).unwrap();
        let x = to_normal_coords(&p).0;
        assert!(x[0].abs() < 1e-15 && x[1].abs() < 1e-15 && (x[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_chart_examples() {
        let form = SpaceForm::Euclidean;
        let p = from_normal_coords(form, &NormalCoords(vec![1.0, 0.0])).unwrap();
        assert_eq!(p.r, 1.0);
        assert_eq!(p.theta, vec![0.0]);
        let p = from_normal_coords(form, &NormalCoords(vec![0.0, -2.0])).unwrap();
        assert_eq!(p.r, 2.0);
        assert!((p.theta[0] - 1.5 * PI).abs() < 1e-15);
        let p = from_normal_coords(form, &NormalCoords(vec![3.0, 4.0])).unwrap();
        assert_eq!(p.r, 5.0);
        assert!(from_normal_coords(SpaceForm::Spherical, &NormalCoords(vec![3.0, 1.0])).is_err());
        assert!(GeodesicPoint::new(1.0, vec![3.5, 0.0]).is_err());
    }

    #[test]
    fn rotation_examples() {
        let x = NormalCoords(vec![1.0, 2.0]);
        assert_eq!(rotate(&x, 1, 2, 1).unwrap().0, vec![-2.0, 1.0]);
        assert_eq!(rotate(&x, 1, 2, 2).unwrap().0, vec![-1.0, -2.0]);
        let y = NormalCoords(vec![5.0, 0.0, 0.0]);
        let r = rotate(&y, 2, 3, 1).unwrap().0;
        assert_eq!(r[0], 5.0);
        assert!(r[1] == 0.0 && r[2] == 0.0);
        assert!(matches!(rotate(&x, 2, 1, 1), Err(Error::Index(_))));
        assert!(matches!(rotate(&x, 1, 3, 1), Err(Error::Index(_))));
    }

    #[test]
    fn warped_residual_vanishes_for_space_forms() {
        for form in SpaceForm::ALL {
            for i in 1..=1000 {
                let r = 1.5 * i as f64 / 1000.0;
                assert!(warped_product_residual(form.warping_derivatives(r)).abs() <= 1e-9);
            }
        }
        let worst = (1..=1000)
            .map(|i| {
                let r = 1.5 * i as f64 / 1000.0;
                warped_product_residual((r + r.powi(3), 1.0 + 3.0 * r * r, 6.0 * r)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst > 0.1);
    }
}
