//! Star-shaped symmetric domains `Omega = Omega_out \ closure(Omega_in)` in
//! geodesic polar coordinates, tensor quadrature over them, and the test-function
//! integrals behind the orthogonality and Rayleigh-bound arguments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, pairwise_sum, GaussRule};
use crate::slsolver::{
    extend_gk, solve, BoundaryCondition, GkProfile, SLEigenpair, SLProblem, SolverConfig,
};
use crate::spaceform::{direction_from_angles, rotate, NormalCoords, SpaceForm};

/// One term `a Re(z^m) + b Im(z^m)` with `z = u_{n-1} + i u_n` built from the
/// unit direction `u`; for `n = 2` this is `a cos(m theta) + b sin(m theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub m: u32,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

/// `coeff * prod_i u_i^{powers[i]}` in the unit direction `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub powers: Vec<u32>,
    pub coeff: f64,
}

/// Boundary radius as a function of direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub base: f64,
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monomials: Vec<Monomial>,
}

impl RadialProfile {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            harmonics: Vec::new(),
            monomials: Vec::new(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.harmonics.iter().all(|h| h.a == 0.0 && h.b == 0.0)
            && self.monomials.iter().all(|m| m.coeff == 0.0)
    }

    /// Radius along the unit direction `u`.
    pub fn at(&self, u: &[f64]) -> f64 {
        let n = u.len();
        let mut rho = self.base;
        if !self.harmonics.is_empty() {
            let (x, y) = (u[n - 2], u[n - 1]);
            for h in &self.harmonics {
                let (mut re, mut im) = (1.0, 0.0);
                for _ in 0..h.m {
                    (re, im) = (re * x - im * y, re * y + im * x);
                }
                rho += h.a * re + h.b * im;
            }
        }
        for term in &self.monomials {
            rho += term.coeff
                * term
                    .powers
                    .iter()
                    .zip(u)
                    .map(|(&p, &c)| c.powi(p as i32))
                    .product::<f64>();
        }
        rho
    }
}

/// Declared symmetry of a domain about the base point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    None,
    Central,
    Order2,
    Order4,
}

impl Symmetry {
    pub const ALL: [Symmetry; 4] = [
        Symmetry::None,
        Symmetry::Central,
        Symmetry::Order2,
        Symmetry::Order4,
    ];

    /// Images of `x` under the generators of the symmetry group.
    pub fn generator_images(self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = x.len();
        let coords = NormalCoords(x.to_vec());
        let plane_turns = |turns: i64| {
            let mut out = Vec::new();
            for i in 1..=n {
                for j in i + 1..=n {
                    out.push(rotate(&coords, i, j, turns).expect("valid axes").0);
                }
            }
            out
        };
        match self {
            Symmetry::None => Vec::new(),
            Symmetry::Central => vec![x.iter().map(|v| -v).collect()],
            Symmetry::Order2 => plane_turns(2),
            Symmetry::Order4 => plane_turns(1),
        }
    }

    /// Smallest harmonic frequency step compatible with the symmetry when `n = 2`.
    fn planar_step(self) -> u32 {
        match self {
            Symmetry::None => 1,
            Symmetry::Central | Symmetry::Order2 => 2,
            Symmetry::Order4 => 4,
        }
    }
}

impl std::fmt::Display for Symmetry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Symmetry::None => "none",
            Symmetry::Central => "central",
            Symmetry::Order2 => "order2",
            Symmetry::Order4 => "order4",
        })
    }
}

impl std::str::FromStr for Symmetry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Symmetry::None),
            "central" => Ok(Symmetry::Central),
            "order2" | "2" => Ok(Symmetry::Order2),
            "order4" | "4" => Ok(Symmetry::Order4),
            other => Err(Error::InvalidInput(format!("unknown symmetry '{other}'"))),
        }
    }
}

/// Default tolerance of the numeric symmetry validation.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A domain `{ rho_in(u) < r < rho_out(u) }` (or `r < rho_out(u)` when ball-like).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub form: SpaceForm,
    pub n: usize,
    pub symmetry_order: Symmetry,
    pub rho_out: RadialProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_in: Option<RadialProfile>,
    /// Overrides [`SYMMETRY_TOL`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry_tolerance: Option<f64>,
}

impl DomainSpec {
    /// Concentric annulus `B_{r2} \ B_{r1}`.
    pub fn annulus(form: SpaceForm, n: usize, r1: f64, r2: f64) -> Self {
        Self {
            form,
            n,
            symmetry_order: Symmetry::Order4,
            rho_out: RadialProfile::constant(r2),
            rho_in: Some(RadialProfile::constant(r1)),
            symmetry_tolerance: None,
        }
    }

    /// Geodesic ball `B_r`.
    pub fn ball(form: SpaceForm, n: usize, r: f64) -> Self {
        Self {
            form,
            n,
            symmetry_order: Symmetry::Order4,
            rho_out: RadialProfile::constant(r),
            rho_in: None,
            symmetry_tolerance: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("domain spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("domain spec serializes")
    }

    /// FNV-1a hash of the canonical JSON form.
    pub fn spec_hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.to_json().bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Checks dimension, radii ordering, the hemisphere bound and the declared symmetry.
    pub fn validate(&self) -> Result<()> {
        if !(self.n == 2 || self.n == 3) {
            return Err(Error::InvalidInput(format!(
                "domain quadrature supports n in {{2, 3}}, got {}",
                self.n
            )));
        }
        for (name, profile) in self.profiles() {
            for term in &profile.monomials {
                if term.powers.len() != self.n {
                    return Err(Error::InvalidInput(format!(
                        "{name}: monomial exponent list must have length {}",
                        self.n
                    )));
                }
            }
            if self.n == 2 {
                let step = self.symmetry_order.planar_step();
                if let Some(h) = profile.harmonics.iter().find(|h| h.m % step != 0) {
                    return Err(Error::Symmetry(format!(
                        "{name}: harmonic m = {} is incompatible with {} symmetry",
                        h.m, self.symmetry_order
                    )));
                }
            }
        }
        let samples = sample_directions(self.n);
        let tol = self.symmetry_tolerance.unwrap_or(SYMMETRY_TOL);
        let mut sup_out = 0.0f64;
        for u in &samples {
            let out = self.rho_out.at(u);
            sup_out = sup_out.max(out);
            let inner = self.rho_in.as_ref().map(|p| p.at(u));
            match inner {
                Some(i) if !(i > 0.0 && i < out) => {
                    return Err(Error::Domain(format!(
                        "need 0 < rho_in < rho_out, got rho_in = {i}, rho_out = {out}"
                    )))
                }
                None if !(out > 0.0) => {
                    return Err(Error::Domain(format!("need rho_out > 0, got {out}")))
                }
                _ => {}
            }
        }
        if self.form == SpaceForm::Spherical && sup_out > PI / 2.0 + 1e-12 {
            return Err(Error::Hemisphere(format!(
                "sup rho_out = {sup_out} exceeds pi/2"
            )));
        }
        for (name, profile) in self.profiles() {
            for u in &samples {
                let here = profile.at(u);
                for image in self.symmetry_order.generator_images(u) {
                    let there = profile.at(&image);
                    if (there - here).abs() > tol * here.abs().max(1.0) {
                        return Err(Error::Symmetry(format!(
                            "{name} is not {} symmetric: {here} vs {there}",
                            self.symmetry_order
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn profiles(&self) -> Vec<(&'static str, &RadialProfile)> {
        let mut out = vec![("rho_out", &self.rho_out)];
        if let Some(p) = &self.rho_in {
            out.push(("rho_in", p));
        }
        out
    }

    /// Radial extent `(rho_in, rho_out)` along `u`.
    pub fn extent(&self, u: &[f64]) -> (f64, f64) {
        (
            self.rho_in.as_ref().map_or(0.0, |p| p.at(u)),
            self.rho_out.at(u),
        )
    }

    /// Sampled infimum of `rho_in` (0 when ball-like).
    pub fn inf_rho_in(&self) -> f64 {
        match &self.rho_in {
            None => 0.0,
            Some(p) if p.is_constant() => p.base,
            Some(p) => dense_directions(self.n)
                .iter()
                .map(|u| p.at(u))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Sampled supremum of `rho_out`.
    pub fn sup_rho_out(&self) -> f64 {
        if self.rho_out.is_constant() {
            return self.rho_out.base;
        }
        dense_directions(self.n)
            .iter()
            .map(|u| self.rho_out.at(u))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn sample_directions(n: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        (0..997)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 + 0.123) / 997.0;
                vec![t.cos(), t.sin()]
            })
            .collect()
    } else {
        fibonacci_sphere(1500)
    }
}

fn dense_directions(n: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        (0..8192)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 8192.0;
                vec![t.cos(), t.sin()]
            })
            .collect()
    } else {
        fibonacci_sphere(40_000)
    }
}

fn fibonacci_sphere(count: usize) -> Vec<Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            vec![z, rho * t.cos(), rho * t.sin()]
        })
        .collect()
}

/// Tensor quadrature: Gauss–Legendre along each ray, trapezoid in the periodic
/// angle and (for `n = 3`) Gauss–Legendre in `cos phi_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub radial: usize,
    pub azimuthal: usize,
    pub polar: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            radial: 64,
            azimuthal: 256,
            polar: 64,
        }
    }
}

impl QuadratureGrid {
    /// Every count doubled.
    pub fn refined(self) -> Self {
        Self {
            radial: 2 * self.radial,
            azimuthal: 2 * self.azimuthal,
            polar: 2 * self.polar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radial < 2
            || self.polar < 2
            || self.azimuthal < 8
            || !self.azimuthal.is_multiple_of(8)
        {
            return Err(Error::InvalidInput(format!(
                "quadrature counts too small or azimuthal count not divisible by 8: {self:?}"
            )));
        }
        Ok(())
    }

    /// Angular nodes `(angles, weight)` covering the unit sphere `S^{n-1}`.
    pub fn angular_nodes(&self, n: usize) -> Vec<(Vec<f64>, f64)> {
        let dphi = 2.0 * PI / self.azimuthal as f64;
        let azimuths: Vec<f64> = (0..self.azimuthal).map(|i| i as f64 * dphi).collect();
        if n == 2 {
            return azimuths.into_iter().map(|t| (vec![t], dphi)).collect();
        }
        let (t, w) = gauss_legendre(self.polar);
        let mut out = Vec::with_capacity(self.polar * self.azimuthal);
        for (ti, wi) in t.iter().zip(&w) {
            let polar = ti.clamp(-1.0, 1.0).acos();
            for &az in &azimuths {
                out.push((vec![polar, az], wi * dphi));
            }
        }
        out
    }

    pub fn point_count(&self, n: usize) -> usize {
        self.radial * self.azimuthal * if n == 2 { 1 } else { self.polar }
    }
}

/// A quadrature sum and the matching sum of absolute values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    /// `int |integrand| dV`, the scale for relative vanishing checks.
    pub abs: f64,
}

impl Integral {
    pub fn relative(&self) -> f64 {
        if self.abs == 0.0 {
            0.0
        } else {
            self.value.abs() / self.abs
        }
    }
}

/// Integrates `count` integrands at once. `f(r, u, out)` writes the integrand
/// values (without the volume density) at distance `r` along direction `u`.
///
/// Rays are split at every point of `breaks` strictly inside the radial extent.
/// Rays run in parallel; the reduction is a fixed pairwise tree.
pub fn integrate_many<F>(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    breaks: &[f64],
    count: usize,
    f: F,
) -> Vec<Integral>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    integrate_about(spec, grid, breaks, count, 0, f)
}

/// [`integrate_many`] in polar coordinates whose pole is the coordinate axis `axis`.
pub fn integrate_about<F>(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    breaks: &[f64],
    count: usize,
    axis: usize,
    f: F,
) -> Vec<Integral>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    let n = spec.n;
    let rule = GaussRule::new(grid.radial);
    let rays = grid.angular_nodes(n);
    let per_ray: Vec<Vec<(f64, f64)>> = rays
        .par_iter()
        .map(|(angles, weight)| {
            let polar = direction_from_angles(angles);
            let mut u = vec![0.0; n];
            for (k, c) in polar.into_iter().enumerate() {
                u[(k + axis) % n] = c;
            }
            let (lo, hi) = spec.extent(&u);
            let mut cuts = vec![lo];
            cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
            cuts.push(hi);
            let mut sums = vec![(0.0, 0.0); count];
            let mut buf = vec![0.0; count];
            for panel in cuts.windows(2) {
                for (r, w) in rule.mapped(panel[0], panel[1]) {
                    f(r, &u, &mut buf);
                    let dv = w * spec.form.density(spec.n, r);
                    for (s, v) in sums.iter_mut().zip(&buf) {
                        s.0 += v * dv;
                        s.1 += v.abs() * dv;
                    }
                }
            }
            sums.into_iter()
                .map(|(v, a)| (v * weight, a * weight))
                .collect()
        })
        .collect();
    (0..count)
        .map(|c| {
            let values: Vec<f64> = per_ray.iter().map(|s| s[c].0).collect();
            let abs: Vec<f64> = per_ray.iter().map(|s| s[c].1).collect();
            Integral {
                value: pairwise_sum(&values),
                abs: pairwise_sum(&abs),
            }
        })
        .collect()
}

/// `Vol(Omega)`.
pub fn volume(spec: &DomainSpec, grid: &QuadratureGrid) -> f64 {
    integrate_many(spec, grid, &[], 1, |_, _, out| out[0] = 1.0)[0].value
}

/// A radial function with its derivative.
pub trait Radial: Sync {
    fn value(&self, r: f64) -> f64;
    fn derivative(&self, r: f64) -> f64;
}

impl Radial for GkProfile {
    fn value(&self, r: f64) -> f64 {
        self.value_unchecked(r)
    }

    fn derivative(&self, r: f64) -> f64 {
        self.derivative_unchecked(r)
    }
}

/// A radial function given by two closures.
pub struct FnRadial<F, D>(pub F, pub D);

impl<F, D> Radial for FnRadial<F, D>
where
    F: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64 + Sync,
{
    fn value(&self, r: f64) -> f64 {
        (self.0)(r)
    }

    fn derivative(&self, r: f64) -> f64 {
        (self.1)(r)
    }
}

/// `g = 1`.
pub fn unit_radial() -> impl Radial {
    FnRadial(|_| 1.0, |_| 0.0)
}

fn monomial(x: &[f64], powers: &[u32]) -> f64 {
    powers
        .iter()
        .zip(x)
        .map(|(&p, &c)| c.powi(p as i32))
        .product()
}

/// `int_Omega g(r) prod_i X_i^{powers[i]} dV` in normal coordinates `X = r u`.
pub fn integrate_moment(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    g: &dyn Radial,
    powers: &[u32],
) -> Integral {
    assert_eq!(powers.len(), spec.n, "one exponent per coordinate");
    integrate_many(spec, grid, &[], 1, |r, u, out| {
        let x: Vec<f64> = u.iter().map(|c| r * c).collect();
        out[0] = g.value(r) * monomial(&x, powers);
    })[0]
}

/// Closed-form `<grad(g X_i), grad(g X_j)>` for `i != j`.
pub fn grad_pair_integrand(form: SpaceForm, r: f64, g: f64, dg: f64, xi: f64, xj: f64) -> f64 {
    let s = form.sin_unchecked(r);
    let lead = r * dg + g;
    (lead * lead / (r * r) - g * g / (s * s)) * xi * xj
}

/// Closed-form `|grad(g X_i / r)|^2` given `c = X_i / r`.
pub fn grad_norm_integrand(form: SpaceForm, r: f64, g: f64, dg: f64, c: f64) -> f64 {
    let s = form.sin_unchecked(r);
    dg * dg * c * c + g * g / (s * s) * (1.0 - c * c)
}

/// `int_Omega <grad(g X_i), grad(g X_j)> dV` (1-based `i != j`).
pub fn grad_pair_integral(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    g: &dyn Radial,
    i: usize,
    j: usize,
) -> Result<Integral> {
    check_pair(spec.n, i, j)?;
    Ok(integrate_many(spec, grid, &[], 1, |r, u, out| {
        out[0] = grad_pair_integrand(
            spec.form,
            r,
            g.value(r),
            g.derivative(r),
            r * u[i - 1],
            r * u[j - 1],
        );
    })[0])
}

fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    if i == j || i == 0 || j == 0 || i > n || j > n {
        return Err(Error::Index(format!(
            "need distinct coordinate indices in 1..={n}, got ({i}, {j})"
        )));
    }
    Ok(())
}

/// The comparison annulus `[r1, r2]`: `r1` defaults to `inf rho_in` and `r2`
/// matches the volume of the domain.
pub fn matched_annulus(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    r1: Option<f64>,
) -> Result<(f64, f64)> {
    spec.validate()?;
    let inf_in = spec.inf_rho_in();
    let r1 = r1.unwrap_or(inf_in);
    if !(r1 >= 0.0) || r1 > inf_in {
        return Err(Error::Precondition(format!(
            "inner radius {r1} must lie in [0, inf rho_in = {inf_in}]"
        )));
    }
    let r2 = spec
        .form
        .match_outer_radius(spec.n, r1, volume(spec, grid))?;
    Ok((r1, r2))
}

/// First Neumann eigenpair of mode `k` on the matched annulus.
pub fn matched_first_pair(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    k: usize,
    r1: Option<f64>,
    config: &SolverConfig,
) -> Result<SLEigenpair> {
    let (r1, r2) = matched_annulus(spec, grid, r1)?;
    let problem = SLProblem::neumann(spec.form, spec.n, k, r1, r2)?;
    let mut pairs = solve(&problem, &config.with_max_j(1))?;
    Ok(pairs.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighBound {
    pub k: usize,
    pub quotient: f64,
    pub mu: f64,
    pub numerator: f64,
    pub denominator: f64,
}

impl RayleighBound {
    /// `(mu - quotient) / mu`, positive when the bound is strict.
    pub fn relative_margin(&self) -> f64 {
        (self.mu - self.quotient) / self.mu
    }
}

/// `int (G_k'^2 + k(k+n-2) G_k^2 / sin_M^2) dV / int G_k^2 dV` over the domain,
/// with `G_k` extended from the first Neumann eigenfunction of the matched annulus.
pub fn rayleigh_gk(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    pair: &SLEigenpair,
) -> Result<RayleighBound> {
    let p = &pair.problem;
    if p.bc != BoundaryCondition::Neumann || pair.j != 1 || p.k == 0 {
        return Err(Error::Precondition(
            "the bound uses the first Neumann eigenpair of a mode k >= 1".into(),
        ));
    }
    if p.form != spec.form || p.n != spec.n {
        return Err(Error::Precondition(
            "pair and domain live in different spaces".into(),
        ));
    }
    let vol = volume(spec, grid);
    let annulus = spec.form.annulus_volume(spec.n, p.r1, p.r2)?;
    if (vol - annulus).abs() > 1e-8 * annulus {
        return Err(Error::Precondition(format!(
            "domain volume {vol} does not match annulus volume {annulus}"
        )));
    }
    let inf_in = spec.inf_rho_in();
    if p.r1 > inf_in * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "B_R1 with R1 = {} is not inside the inner domain (inf rho_in = {inf_in})",
            p.r1
        )));
    }
    let g = extend_gk(pair, spec.sup_rho_out().max(p.r2))?;
    let c = p.angular_eigenvalue();
    let form = spec.form;
    let sums = integrate_many(spec, grid, &[p.r1, p.r2], 2, |r, _, out| {
        let v = g.value_unchecked(r);
        let d = g.derivative_unchecked(r);
        let s = form.sin_unchecked(r);
        out[0] = d * d + if v == 0.0 { 0.0 } else { c * v * v / (s * s) };
        out[1] = v * v;
    });
    Ok(RayleighBound {
        k: p.k,
        quotient: sums[0].value / sums[1].value,
        mu: pair.eigenvalue,
        numerator: sums[0].value,
        denominator: sums[1].value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub max_residual: f64,
    pub nodes: usize,
}

/// Evaluates `sum_i |grad(G X_i / r)|^2 = G'^2 + (n-1) G^2 / sin_M^2` at every
/// quadrature node; the residual is relative to the local size of the right side.
pub fn sum_gradient_identity_check(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    g: &dyn Radial,
) -> IdentityReport {
    let form = spec.form;
    let n = spec.n;
    let rule = GaussRule::new(grid.radial);
    let rays = grid.angular_nodes(n);
    let worst: Vec<f64> = rays
        .par_iter()
        .map(|(angles, _)| {
            let u = direction_from_angles(angles);
            let (lo, hi) = spec.extent(&u);
            rule.mapped(lo, hi)
                .map(|(r, _)| {
                    let (v, d) = (g.value(r), g.derivative(r));
                    let s = form.sin_unchecked(r);
                    let lhs: f64 = u
                        .iter()
                        .map(|&c| grad_norm_integrand(form, r, v, d, c))
                        .sum();
                    let rhs = d * d + (n - 1) as f64 * v * v / (s * s);
                    (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE)
                })
                .fold(0.0f64, f64::max)
        })
        .collect();
    IdentityReport {
        max_residual: worst.into_iter().fold(0.0, f64::max),
        nodes: grid.point_count(n),
    }
}

/// One integral that the declared symmetry may force to vanish (or to agree
/// across coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralCheck {
    pub name: String,
    pub i: usize,
    pub j: usize,
    pub m: u32,
    pub value: f64,
    pub scale: f64,
    pub relative: f64,
    /// Whether the declared symmetry implies the value is zero.
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub symmetry: Symmetry,
    pub checks: Vec<IntegralCheck>,
}

impl OrthogonalityReport {
    pub fn max_required(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.required)
            .map(|c| c.relative)
            .fold(0.0, f64::max)
    }

    pub fn max_any(&self) -> f64 {
        self.checks.iter().map(|c| c.relative).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_required() <= tol
    }
}

/// Test-function integrals for all ordered pairs `i != j` and `m <= max_m`.
///
/// Central symmetry (or any symmetry when `n = 2`) kills `X_i X_j^{2m}` and
/// `X_i^{2m+1}`; order 2 with `n >= 3` kills `X_i X_j^m`; order 4 also kills
/// the gradient pairing and equalizes `X_i^2` and `X_i^4` across `i`.
pub fn orthogonality_report(
    spec: &DomainSpec,
    grid: &QuadratureGrid,
    g: &dyn Radial,
    max_m: u32,
) -> OrthogonalityReport {
    let n = spec.n;
    let sym = spec.symmetry_order;
    let order2 = n >= 3 && matches!(sym, Symmetry::Order2 | Symmetry::Order4);
    let central = sym == Symmetry::Central || (n == 2 && sym != Symmetry::None);
    let order4 = sym == Symmetry::Order4;

    // (name, i, j, m, powers or gradient, required)
    type Item = (&'static str, usize, usize, u32, Option<Vec<u32>>, bool);
    let mut items: Vec<Item> = Vec::new();
    for i in 1..=n {
        for m in 0..=max_m {
            let mut p = vec![0; n];
            p[i - 1] = 2 * m + 1;
            items.push(("odd_power", i, i, m, Some(p), central || order2));
        }
        for j in 1..=n {
            if i == j {
                continue;
            }
            for m in 0..=2 * max_m {
                let mut p = vec![0; n];
                p[i - 1] = 1;
                p[j - 1] = m;
                let required = (m % 2 == 0 && central) || order2 || (m == 1 && order4);
                items.push(("odd_times_power", i, j, m, Some(p), required));
            }
            if i < j {
                items.push(("gradient_pair", i, j, 1, None, order4));
            }
        }
    }
    let form = spec.form;
    let values = integrate_many(spec, grid, &[], items.len(), |r, u, out| {
        let x: Vec<f64> = u.iter().map(|c| r * c).collect();
        let (v, d) = (g.value(r), g.derivative(r));
        for (slot, item) in out.iter_mut().zip(&items) {
            *slot = match &item.4 {
                Some(p) => v * monomial(&x, p),
                None => grad_pair_integrand(form, r, v, d, x[item.1 - 1], x[item.2 - 1]),
            };
        }
    });

    let mut checks = Vec::new();
    for (item, integral) in items.iter().zip(&values) {
        checks.push(IntegralCheck {
            name: item.0.into(),
            i: item.1,
            j: item.2,
            m: item.3,
            value: integral.value,
            scale: integral.abs,
            relative: integral.relative(),
            required: item.5,
        });
    }
    // each axis moment uses nodes polar about that axis, so symmetric domains agree exactly
    let axis_moments: Vec<Vec<Integral>> = (0..n)
        .map(|i| {
            integrate_about(spec, grid, &[], 2, i, |r, u, out| {
                let (v, x) = (g.value(r), r * u[i]);
                out[0] = v * x.powi(2);
                out[1] = v * x.powi(4);
            })
        })
        .collect();
    for (slot, name) in ["second_moment", "fourth_moment"].into_iter().enumerate() {
        let moments: Vec<(f64, f64)> = axis_moments
            .iter()
            .map(|m| (m[slot].value, m[slot].abs))
            .collect();
        let hi = moments
            .iter()
            .map(|m| m.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = moments.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
        let scale = moments.iter().map(|m| m.1).fold(0.0, f64::max);
        checks.push(IntegralCheck {
            name: format!("{name}_spread"),
            i: 1,
            j: n,
            m: if name == "second_moment" { 2 } else { 4 },
            value: hi - lo,
            scale,
            relative: if scale == 0.0 { 0.0 } else { (hi - lo) / scale },
            required: order4,
        });
    }
    OrthogonalityReport {
        symmetry: sym,
        checks,
    }
}

/// Parameters of a random family of perturbed annuli (or balls when `base_in` is `None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub form: SpaceForm,
    pub n: usize,
    pub symmetry: Symmetry,
    pub base_in: Option<f64>,
    pub base_out: f64,
    /// Bound on the boundary perturbation of each profile (radius units).
    pub amplitude: f64,
}

/// `count` random smooth specs of the given symmetry class.
pub fn sample_family(params: &FamilyParams, count: usize, seed: u64) -> Result<Vec<DomainSpec>> {
    let p = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let spec = DomainSpec {
                form: p.form,
                n: p.n,
                symmetry_order: p.symmetry,
                rho_out: random_profile(&mut rng, p.n, p.symmetry, p.base_out, p.amplitude),
                rho_in: p
                    .base_in
                    .map(|b| random_profile(&mut rng, p.n, p.symmetry, b, p.amplitude)),
                symmetry_tolerance: None,
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

fn random_profile(
    rng: &mut ChaCha8Rng,
    n: usize,
    symmetry: Symmetry,
    base: f64,
    amplitude: f64,
) -> RadialProfile {
    let budget = amplitude;
    let mut coeff = |terms: usize| budget / terms as f64 * rng.gen_range(-1.0..1.0);
    if n == 2 {
        let step = symmetry.planar_step();
        let harmonics = (1..=3)
            .map(|t| Harmonic {
                m: step * t,
                a: coeff(6),
                b: coeff(6),
            })
            .collect();
        return RadialProfile {
            base,
            harmonics,
            monomials: Vec::new(),
        };
    }
    let mono = |powers: [u32; 3], c: f64| Monomial {
        powers: powers.to_vec(),
        coeff: c,
    };
    let monomials = match symmetry {
        Symmetry::None => vec![
            mono([1, 0, 0], coeff(4)),
            mono([0, 1, 1], coeff(4)),
            mono([2, 1, 0], coeff(4)),
            mono([0, 0, 3], coeff(4)),
        ],
        Symmetry::Central => vec![
            mono([1, 1, 0], coeff(4)),
            mono([0, 1, 1], coeff(4)),
            mono([3, 1, 0], coeff(4)),
            mono([0, 0, 2], coeff(4)),
        ],
        Symmetry::Order2 => vec![
            mono([2, 0, 0], coeff(4)),
            mono([0, 2, 0], coeff(4)),
            mono([2, 2, 0], coeff(4)),
            mono([0, 2, 4], coeff(4)),
        ],
        Symmetry::Order4 => {
            let (quartic, mixed, triple) = (coeff(3), coeff(3), coeff(3));
            let mut terms = Vec::new();
            for k in 0..3 {
                let mut p = [0u32; 3];
                p[k] = 4;
                terms.push(mono(p, quartic));
                let mut q = [2u32; 3];
                q[k] = 0;
                terms.push(mono(q, mixed));
            }
            terms.push(mono([2, 2, 2], triple));
            terms
        }
    };
    RadialProfile {
        base,
        harmonics: Vec::new(),
        monomials,
    }
}

/// Quadrature node table: `ray, r, angles..., weight` with the weight including
/// the angular weight and the volume density.
pub fn quadrature_csv(spec: &DomainSpec, grid: &QuadratureGrid) -> String {
    let rule = GaussRule::new(grid.radial);
    let angle_cols: Vec<String> = (2..=spec.n).map(|i| format!("phi_{i}")).collect();
    let mut out = format!("ray,r,{},weight\n", angle_cols.join(","));
    for (ray, (angles, weight)) in grid.angular_nodes(spec.n).iter().enumerate() {
        let u = direction_from_angles(angles);
        let (lo, hi) = spec.extent(&u);
        let angles: Vec<String> = angles.iter().map(|a| format!("{a:.17e}")).collect();
        for (r, w) in rule.mapped(lo, hi) {
            out.push_str(&format!(
                "{ray},{r:.17e},{},{:.17e}\n",
                angles.join(","),
                w * weight * spec.form.density(spec.n, r)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order4_planar() -> DomainSpec {
        DomainSpec {
            form: SpaceForm::Euclidean,
            n: 2,
            symmetry_order: Symmetry::Order4,
            rho_out: RadialProfile {
                base: 2.0,
                harmonics: vec![Harmonic {
                    m: 4,
                    a: 0.1,
                    b: 0.03,
                }],
                monomials: Vec::new(),
            },
            rho_in: Some(RadialProfile {
                base: 0.8,
                harmonics: vec![Harmonic {
                    m: 8,
                    a: -0.02,
                    b: 0.0,
                }],
                monomials: Vec::new(),
            }),
            symmetry_tolerance: None,
        }
    }

    #[test]
    fn unit_disk_volume_is_pi() {
        let v = volume(
            &DomainSpec::ball(SpaceForm::Euclidean, 2, 1.0),
            &QuadratureGrid::default(),
        );
        assert!((v - PI).abs() < 1e-13);
    }

    #[test]
    fn annulus_volume_matches_closed_form() {
        let grid = QuadratureGrid::default();
        for form in SpaceForm::ALL {
            for n in [2, 3] {
                let spec = DomainSpec::annulus(form, n, 0.3, 1.2);
                let exact = form.annulus_volume(n, 0.3, 1.2).unwrap();
                assert!(
                    (volume(&spec, &grid) - exact).abs() < 1e-10 * exact,
                    "{form} {n}"
                );
            }
        }
    }

    #[test]
    fn harmonic_term_is_cosine_in_the_plane() {
        let p = RadialProfile {
            base: 1.0,
            harmonics: vec![Harmonic {
                m: 3,
                a: 0.5,
                b: 0.25,
            }],
            monomials: Vec::new(),
        };
        let t = 0.7f64;
        let expect = 1.0 + 0.5 * (3.0 * t).cos() + 0.25 * (3.0 * t).sin();
        assert!((p.at(&[t.cos(), t.sin()]) - expect).abs() < 1e-14);
    }

    #[test]
    fn loader_rejects_incompatible_harmonics() {
        let mut spec = order4_planar();
        spec.rho_out.harmonics.push(Harmonic {
            m: 2,
            a: 0.01,
            b: 0.0,
        });
        assert!(matches!(spec.validate(), Err(Error::Symmetry(_))));
        spec.symmetry_order = Symmetry::Central;
        spec.validate().unwrap();
    }

    #[test]
    fn numeric_symmetry_check_catches_broken_monomials() {
        let mut spec = DomainSpec::annulus(SpaceForm::Hyperbolic, 3, 0.5, 1.0);
        spec.rho_out.monomials.push(Monomial {
            powers: vec![4, 0, 0],
            coeff: 0.05,
        });
        assert!(matches!(spec.validate(), Err(Error::Symmetry(_))));
        spec.symmetry_order = Symmetry::Order2;
        spec.validate().unwrap();
    }

    #[test]
    fn invalid_radii_are_rejected() {
        let spec = DomainSpec::annulus(SpaceForm::Euclidean, 2, 1.5, 1.0);
        assert!(matches!(spec.validate(), Err(Error::Domain(_))));
        let spec = DomainSpec::annulus(SpaceForm::Spherical, 2, 0.5, 1.7);
        assert!(matches!(spec.validate(), Err(Error::Hemisphere(_))));
        let spec = DomainSpec::annulus(SpaceForm::Euclidean, 4, 0.5, 1.0);
        assert!(matches!(spec.validate(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn json_round_trip_and_stable_hash() {
        let spec = order4_planar();
        let text = spec.to_json();
        let back = DomainSpec::from_json(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.spec_hash(), spec.spec_hash());
        let minimal =
            r#"{"form":"spherical","n":2,"symmetry_order":"central","rho_out":{"base":1.0}}"#;
        let ball = DomainSpec::from_json(minimal).unwrap();
        assert!(ball.rho_in.is_none());
        assert_ne!(ball.spec_hash(), spec.spec_hash());
    }

    #[test]
    fn order4_cross_moment_vanishes() {
        let spec = order4_planar();
        let grid = QuadratureGrid::default();
        let g = unit_radial();
        let cross = integrate_moment(&spec, &grid, &g, &[1, 1]);
        assert!(cross.relative() < 1e-10, "{cross:?}");
        let a = integrate_moment(&spec, &grid, &g, &[2, 0]).value;
        let b = integrate_moment(&spec, &grid, &g, &[0, 2]).value;
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn asymmetric_spec_has_nonzero_first_moment() {
        let mut spec = DomainSpec::annulus(SpaceForm::Euclidean, 2, 0.5, 1.5);
        spec.symmetry_order = Symmetry::None;
        spec.rho_out.harmonics.push(Harmonic {
            m: 1,
            a: 0.1,
            b: 0.0,
        });
        let m = integrate_moment(&spec, &QuadratureGrid::default(), &unit_radial(), &[1, 0]);
        assert!(m.relative() > 1e-3);
    }

    #[test]
    fn identity_holds_for_coordinate_functions() {
        let spec = order4_planar();
        let g = FnRadial(|r: f64| r, |_| 1.0);
        let report = sum_gradient_identity_check(&spec, &QuadratureGrid::default(), &g);
        assert!(report.max_residual < 1e-12);
    }

    #[test]
    fn sampled_families_validate() {
        for sym in Symmetry::ALL {
            for n in [2, 3] {
                let params = FamilyParams {
                    form: SpaceForm::Spherical,
                    n,
                    symmetry: sym,
                    base_in: Some(0.4),
                    base_out: 1.2,
                    amplitude: 0.04,
                };
                let fam = sample_family(&params, 3, 7).unwrap();
                assert_eq!(fam.len(), 3);
            }
        }
    }

    #[test]
    fn quadrature_csv_rows() {
        let spec = DomainSpec::annulus(SpaceForm::Euclidean, 2, 1.0, 2.0);
        let grid = QuadratureGrid {
            radial: 4,
            azimuthal: 8,
            polar: 2,
        };
        let csv = quadrature_csv(&spec, &grid);
        assert_eq!(csv.lines().count(), 1 + 32);
        assert!(csv.starts_with("ray,r,phi_2,weight"));
    }
}
