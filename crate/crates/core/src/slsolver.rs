//! Radial Sturm–Liouville eigenproblems obtained by separating variables on
//! geodesic balls and annuli:
//!
//! ```text
//! -(w u')' + k(k+n-2) sin_M^{-2} w u = mu w u,   w = sin_M^{n-1}
//! ```
//!
//! on `[r1, r2]` with Neumann or Dirichlet conditions. The operator is
//! discretized in flux form on a uniform grid (half-node weights for the flux,
//! cell-integrated weights for mass and potential), which gives a symmetric
//! tridiagonal pencil. Eigenvalues come from Sturm bisection, eigenvectors from
//! inverse iteration, and eigenvalues are Richardson-extrapolated across the
//! grids `N` and `2N`.
//!
//! When `r1 = 0` the origin is a regular singular point: the `k = 0` mode
//! keeps a natural zero-flux condition there and modes `k >= 1` use `u(0) = 0`
//! (Frobenius exponent `k`). The boundary condition `bc` then applies only at `r2`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;
use crate::spaceform::{check_dimension, SpaceForm};
use crate::spline::UniformSpline;
use crate::tridiag::TridiagPencil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Dirichlet => "dirichlet",
        })
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "neumann" | "n" => Ok(BoundaryCondition::Neumann),
            "dirichlet" | "d" => Ok(BoundaryCondition::Dirichlet),
            other => Err(Error::InvalidInput(format!(
                "unknown boundary condition '{other}'"
            ))),
        }
    }
}

/// One radial problem: mode `k` on `[r1, r2]` in dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SLProblem {
    pub form: SpaceForm,
    pub n: usize,
    pub k: usize,
    pub r1: f64,
    pub r2: f64,
    pub bc: BoundaryCondition,
}

impl SLProblem {
    pub fn new(
        form: SpaceForm,
        n: usize,
        k: usize,
        r1: f64,
        r2: f64,
        bc: BoundaryCondition,
    ) -> Result<Self> {
        let problem = Self {
            form,
            n,
            k,
            r1,
            r2,
            bc,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn neumann(form: SpaceForm, n: usize, k: usize, r1: f64, r2: f64) -> Result<Self> {
        Self::new(form, n, k, r1, r2, BoundaryCondition::Neumann)
    }

    pub fn dirichlet(form: SpaceForm, n: usize, k: usize, r1: f64, r2: f64) -> Result<Self> {
        Self::new(form, n, k, r1, r2, BoundaryCondition::Dirichlet)
    }

    pub fn validate(&self) -> Result<()> {
        check_dimension(self.n)?;
        if !(self.r1 >= 0.0 && self.r2 > self.r1) || !self.r2.is_finite() {
            return Err(Error::Domain(format!(
                "radii must satisfy 0 <= r1 < r2, got r1 = {}, r2 = {}",
                self.r1, self.r2
            )));
        }
        self.form.check_domain_radius(self.r2)
    }

    /// Angular eigenvalue `k(k+n-2)` of the degree-`k` spherical harmonics.
    pub fn angular_eigenvalue(&self) -> f64 {
        (self.k * (self.k + self.n - 2)) as f64
    }

    /// Same problem with another mode index or boundary condition.
    pub fn with_mode(&self, k: usize, bc: BoundaryCondition) -> Self {
        Self { k, bc, ..*self }
    }

    fn weight(&self, r: f64) -> f64 {
        self.form.density(self.n, r)
    }

    fn potential_density(&self, r: f64) -> f64 {
        let c = self.angular_eigenvalue();
        if c == 0.0 {
            0.0
        } else {
            c * self.form.sin_unchecked(r).powi(self.n as i32 - 3)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Number of grid intervals on `[r1, r2]`; the grid has `grid_points + 1` nodes.
    pub grid_points: usize,
    pub richardson: bool,
    pub eig_tol: f64,
    pub max_j: usize,
    /// Impose `u(0) = 0` for `k >= 1` when `r1 = 0`.
    pub regular_origin: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_points: 2048,
            richardson: true,
            eig_tol: 1e-12,
            max_j: 5,
            regular_origin: true,
        }
    }
}

impl SolverConfig {
    pub fn with_max_j(self, max_j: usize) -> Self {
        Self { max_j, ..self }
    }

    pub fn with_grid(self, grid_points: usize) -> Self {
        Self {
            grid_points,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 64 {
            return Err(Error::InvalidInput(format!(
                "grid_points must be >= 64, got {}",
                self.grid_points
            )));
        }
        if self.max_j == 0 {
            return Err(Error::InvalidInput("max_j must be >= 1".into()));
        }
        if !(self.eig_tol > 0.0) {
            return Err(Error::InvalidInput("eig_tol must be positive".into()));
        }
        Ok(())
    }
}

/// The tridiagonal pencil of one problem on one grid.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub pencil: TridiagPencil,
    /// All grid nodes `r1 + i h`, `i = 0..=N`.
    pub nodes: Vec<f64>,
    /// Index into `nodes` of the first unknown (1 if the left end is pinned).
    pub first_unknown: usize,
    pub step: f64,
}

impl Discretization {
    /// Expands a vector of unknowns to all nodes (pinned ends are zero).
    pub fn expand(&self, unknowns: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        out[self.first_unknown..self.first_unknown + unknowns.len()].copy_from_slice(unknowns);
        out
    }

    /// Restricts nodal values to the unknowns.
    pub fn restrict<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.first_unknown..self.first_unknown + self.pencil.len()]
    }
}

/// Builds the flux-form pencil `K u = mu M u`.
pub fn discretize(problem: &SLProblem, config: &SolverConfig) -> Result<Discretization> {
    problem.validate()?;
    if config.grid_points < 2 {
        return Err(Error::InvalidInput(
            "grid needs at least two intervals".into(),
        ));
    }
    let at_origin = problem.r1 == 0.0;
    if at_origin && problem.k >= 1 && !config.regular_origin {
        return Err(Error::SingularWeight { k: problem.k });
    }
    let n_int = config.grid_points;
    let h = (problem.r2 - problem.r1) / n_int as f64;
    let nodes: Vec<f64> = (0..=n_int).map(|i| problem.r1 + i as f64 * h).collect();

    let pin_left = if at_origin {
        problem.k >= 1
    } else {
        problem.bc == BoundaryCondition::Dirichlet
    };
    let pin_right = problem.bc == BoundaryCondition::Dirichlet;

    let rule = GaussRule::new(8);
    let cell_integral = |f: &dyn Fn(f64) -> f64, i: usize| -> f64 {
        let r = nodes[i];
        let mut total = 0.0;
        if i > 0 {
            total += rule.integrate(f, r - 0.5 * h, r);
        }
        if i < n_int {
            total += rule.integrate(f, r, r + 0.5 * h);
        }
        total
    };

    let flux: Vec<f64> = (0..n_int)
        .map(|i| problem.weight(problem.r1 + (i as f64 + 0.5) * h) / h)
        .collect();

    let first = usize::from(pin_left);
    let last = if pin_right { n_int - 1 } else { n_int };
    let mut diag = Vec::with_capacity(last - first + 1);
    let mut mass = Vec::with_capacity(last - first + 1);
    let mut off = Vec::with_capacity(last - first);
    for i in first..=last {
        let mut d = 0.0;
        if i > 0 {
            d += flux[i - 1];
        }
        if i < n_int {
            d += flux[i];
        }
        let pot = if problem.k == 0 {
            0.0
        } else {
            cell_integral(&|r| problem.potential_density(r), i)
        };
        diag.push(d + pot);
        mass.push(cell_integral(&|r| problem.weight(r), i));
        if i < last {
            off.push(-flux[i]);
        }
    }
    if let Some(i) = mass.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::SingularMass(format!(
            "radial mass vanishes at node {}",
            i + first
        )));
    }
    Ok(Discretization {
        pencil: TridiagPencil { diag, off, mass },
        nodes,
        first_unknown: first,
        step: h,
    })
}

/// A computed radial eigenpair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SLEigenpair {
    pub problem: SLProblem,
    /// Position in the increasing sequence, starting at 1.
    pub j: usize,
    /// Best eigenvalue estimate (Richardson-extrapolated when enabled).
    pub eigenvalue: f64,
    /// Eigenvalue of the discrete pencil on `grid`.
    pub grid_eigenvalue: f64,
    pub grid: Vec<f64>,
    /// Samples of the eigenfunction, normalized in the discrete weighted
    /// L2 norm and signed so that the last nonzero sample is positive.
    pub values: Vec<f64>,
    /// Set when the gap to a neighbouring eigenvalue is below `1e3 * eig_tol`.
    pub near_degenerate: bool,
}

impl SLEigenpair {
    /// Interior sign changes of the sampled eigenfunction.
    pub fn sign_changes(&self) -> usize {
        sign_changes(&self.values)
    }
}

pub fn sign_changes(values: &[f64]) -> usize {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut last = 0.0;
    let mut count = 0;
    for &v in values {
        if v.abs() <= 1e-13 * scale {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// First `config.max_j` eigenpairs in increasing order.
pub fn solve(problem: &SLProblem, config: &SolverConfig) -> Result<Vec<SLEigenpair>> {
    config.validate()?;
    let coarse = discretize(problem, config)?;
    let count = config.max_j.min(coarse.pencil.len());
    let coarse_values = coarse.pencil.lowest_eigenvalues(count, config.eig_tol);

    let (grid, grid_values, coarse) = if config.richardson {
        let fine = discretize(problem, &config.with_grid(2 * config.grid_points))?;
        let fine_values = fine.pencil.lowest_eigenvalues(count, config.eig_tol);
        (fine, fine_values, Some(coarse))
    } else {
        (coarse, coarse_values.clone(), None)
    };

    let gap_floor = 1e3 * config.eig_tol;
    (0..count)
        .into_par_iter()
        .map(|idx| {
            let lambda = grid_values[idx];
            let vector = grid.pencil.eigenvector(lambda, 3);
            let ku = grid.pencil.apply_stiffness(&vector);
            let residual = ku
                .iter()
                .zip(vector.iter().zip(&grid.pencil.mass))
                .map(|(a, (u, m))| (a - lambda * m * u).abs())
                .fold(0.0f64, f64::max);
            let scale =
                operator_scale(&grid.pencil) * vector.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(residual <= 1e-8 * scale) {
                return Err(Error::Convergence {
                    context: format!("inverse iteration for j = {}", idx + 1),
                    grid: grid.nodes.len() - 1,
                    mode: problem.k,
                    residual: residual / scale,
                });
            }
            // the Rayleigh quotient of the converged vector beats bisection near zero
            let refined = grid.pencil.rayleigh_quotient(&vector);
            let estimate = match &coarse {
                Some(c) => {
                    let coarse_vector = c.pencil.eigenvector(coarse_values[idx], 3);
                    (4.0 * refined - c.pencil.rayleigh_quotient(&coarse_vector)) / 3.0
                }
                None => refined,
            };
            let mut values = grid.expand(&vector);
            if let Some(&last) = values.iter().rev().find(|v| v.abs() > 1e-300) {
                if last < 0.0 {
                    values.iter_mut().for_each(|v| *v = -*v);
                }
            }
            let rel_gap = |other: f64| (other - lambda).abs() / lambda.abs().max(1.0);
            let near_degenerate = (idx > 0 && rel_gap(grid_values[idx - 1]) <= gap_floor)
                || (idx + 1 < count && rel_gap(grid_values[idx + 1]) <= gap_floor);
            Ok(SLEigenpair {
                problem: *problem,
                j: idx + 1,
                eigenvalue: estimate,
                grid_eigenvalue: refined,
                grid: grid.nodes.clone(),
                values,
                near_degenerate,
            })
        })
        .collect()
}

fn operator_scale(pencil: &TridiagPencil) -> f64 {
    let d = pencil.diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let o = pencil.off.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (d + 2.0 * o).max(1e-300)
}

/// Eigenvalue estimates only (no eigenvectors).
pub fn eigenvalues(problem: &SLProblem, config: &SolverConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let coarse = discretize(problem, config)?;
    let count = config.max_j.min(coarse.pencil.len());
    let coarse_values = coarse.pencil.lowest_eigenvalues(count, config.eig_tol);
    if !config.richardson {
        return Ok(coarse_values);
    }
    let fine = discretize(problem, &config.with_grid(2 * config.grid_points))?;
    let fine_values = fine.pencil.lowest_eigenvalues(count, config.eig_tol);
    Ok(coarse_values
        .iter()
        .zip(&fine_values)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect())
}

/// Discrete Rayleigh quotient `u^T K u / u^T M u` of the pair's samples on its own grid.
pub fn discrete_rayleigh_quotient(pair: &SLEigenpair) -> Result<f64> {
    let config = SolverConfig {
        grid_points: pair.grid.len() - 1,
        ..SolverConfig::default()
    };
    let disc = discretize(&pair.problem, &config)?;
    Ok(disc.pencil.rayleigh_quotient(disc.restrict(&pair.values)))
}

/// The radius `b` with `mu_{k,1} = k(k+n-2) / sin_M(b)^2`.
pub fn locate_b(pair: &SLEigenpair) -> Result<f64> {
    let p = &pair.problem;
    if p.k == 0 || pair.j != 1 || p.bc != BoundaryCondition::Neumann {
        return Err(Error::Precondition(format!(
            "locate_b needs the (k >= 1, j = 1) Neumann pair, got k = {}, j = {}, bc = {}",
            p.k, pair.j, p.bc
        )));
    }
    let mu = pair.eigenvalue;
    let target = p.angular_eigenvalue() / mu;
    if !(target > 0.0) {
        return Err(Error::NoRoot(format!("non-positive ratio {target}")));
    }
    let s = target.sqrt();
    let b = match p.form {
        SpaceForm::Euclidean => s,
        SpaceForm::Hyperbolic => s.asinh(),
        SpaceForm::Spherical => {
            if s > 1.0 {
                return Err(Error::NoRoot(format!("sin(b) = {s} > 1")));
            }
            s.asin()
        }
    };
    let residual = (mu - p.angular_eigenvalue() / p.form.sin_unchecked(b).powi(2)).abs();
    if !(b > p.r1 && b < p.r2) || residual > 1e-9 * mu {
        return Err(Error::NoRoot(format!(
            "b = {b} not interior to ({}, {}) or residual {residual:e} too large",
            p.r1, p.r2
        )));
    }
    Ok(b)
}

/// `G_k`: the first Neumann eigenfunction on `[R1, R2]`, extended by the
/// constant `u(R2)` beyond `R2`.
#[derive(Debug, Clone)]
pub struct GkProfile {
    r1: f64,
    r2: f64,
    r_max: f64,
    spline: UniformSpline,
    tail: f64,
}

impl GkProfile {
    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    fn check(&self, r: f64) -> Result<()> {
        let slack = 1e-12 * self.r2.max(1.0);
        if r < self.r1 - slack || r > self.r_max + slack || r.is_nan() {
            return Err(Error::Domain(format!(
                "G_k queried at r = {r} outside [{}, {}]",
                self.r1, self.r_max
            )));
        }
        Ok(())
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.value_unchecked(r))
    }

    pub fn derivative(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.derivative_unchecked(r))
    }

    pub fn value_unchecked(&self, r: f64) -> f64 {
        if r >= self.r2 {
            self.tail
        } else {
            self.spline.value(r.max(self.r1))
        }
    }

    pub fn derivative_unchecked(&self, r: f64) -> f64 {
        if r >= self.r2 {
            0.0
        } else {
            self.spline.derivative(r.max(self.r1))
        }
    }
}

/// Builds `G_k` from a `(k, 1)` Neumann pair; valid on `[R1, r_max]`.
pub fn extend_gk(pair: &SLEigenpair, r_max: f64) -> Result<GkProfile> {
    let p = &pair.problem;
    if p.bc != BoundaryCondition::Neumann || pair.j != 1 {
        return Err(Error::Precondition(
            "G_k is built from the first Neumann eigenfunction".into(),
        ));
    }
    if r_max < p.r2 {
        return Err(Error::Domain(format!(
            "r_max = {r_max} below R2 = {}",
            p.r2
        )));
    }
    let values = pair.values.clone();
    let m = values.len();
    let h = (p.r2 - p.r1) / (m - 1) as f64;
    // Neumann ends have zero slope; the origin end of a k >= 1 mode does not.
    let slope_start = if p.r1 == 0.0 && p.k >= 1 {
        (-25.0 * values[0] + 48.0 * values[1] - 36.0 * values[2] + 16.0 * values[3]
            - 3.0 * values[4])
            / (12.0 * h)
    } else {
        0.0
    };
    let tail = values[m - 1];
    let spline = UniformSpline::clamped(p.r1, h, values, slope_start, 0.0);
    Ok(GkProfile {
        r1: p.r1,
        r2: p.r2,
        r_max,
        spline,
        tail,
    })
}

/// JSON request accepted by the `sl` front end.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SLRequest {
    pub form: SpaceForm,
    pub n: usize,
    pub k: usize,
    pub r1: f64,
    pub r2: f64,
    pub bc: BoundaryCondition,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    #[serde(default = "default_max_j")]
    pub max_j: usize,
}

fn default_grid() -> usize {
    SolverConfig::default().grid_points
}

fn default_max_j() -> usize {
    SolverConfig::default().max_j
}

impl SLRequest {
    pub fn problem(&self) -> Result<SLProblem> {
        SLProblem::new(self.form, self.n, self.k, self.r1, self.r2, self.bc)
    }

    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            grid_points: self.grid_points,
            max_j: self.max_j,
            ..SolverConfig::default()
        }
    }
}

/// CSV table `r,u` of one eigenfunction.
pub fn eigenfunction_csv(pair: &SLEigenpair) -> String {
    let mut out = String::from("r,u\n");
    for (r, u) in pair.grid.iter().zip(&pair.values) {
        out.push_str(&format!("{r:.17e},{u:.17e}\n"));
    }
    out
}
