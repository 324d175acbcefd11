//! P1 finite elements on a structured `(r, theta)` chart mesh for the Neumann
//! Laplacian of a planar domain in a space form.
//!
//! With the metric `dr^2 + sin_M(r)^2 dtheta^2` the weak form reads
//! `int (u_r v_r + u_theta v_theta / sin_M^2) sin_M dr dtheta` against the mass
//! `int u v sin_M dr dtheta`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{volume, DomainSpec, QuadratureGrid, Symmetry};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::slsolver::{solve, SLProblem, SolverConfig};
use crate::spaceform::SpaceForm;

/// Inner radius used in place of the pole for domains without a hole.
pub const POLE_RADIUS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FemConfig {
    /// Radial cells at level 0.
    pub base_radial: usize,
    /// Angular cells at level 0 (must be divisible by 16).
    pub base_angular: usize,
    /// Levels `first_level, first_level + 1, ...` are solved.
    pub first_level: u32,
    pub level_count: u32,
    /// Number of eigenvalues `mu_1 <= ... <= mu_m`.
    pub eigen_count: usize,
    /// Relative residual target of the algebraic eigensolver.
    pub eig_tol: f64,
    pub pole_radius: f64,
}

impl Default for FemConfig {
    fn default() -> Self {
        Self {
            base_radial: 12,
            base_angular: 48,
            first_level: 1,
            level_count: 3,
            eigen_count: 8,
            eig_tol: 1e-9,
            pole_radius: POLE_RADIUS,
        }
    }
}

impl FemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_radial < 2 || self.base_angular < 16 || !self.base_angular.is_multiple_of(16) {
            return Err(Error::InvalidInput(format!(
                "need base_radial >= 2 and base_angular a positive multiple of 16, got {} and {}",
                self.base_radial, self.base_angular
            )));
        }
        if self.eigen_count < 2 || self.level_count == 0 {
            return Err(Error::InvalidInput(
                "need eigen_count >= 2 and level_count >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Structured triangulation of the chart image `{rho_in(theta) <= r <= rho_out(theta)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarMesh {
    pub level: u32,
    pub n_radial: usize,
    pub n_angular: usize,
    /// `(r, theta)` with `theta` in `[0, 2pi)`.
    pub vertices: Vec<(f64, f64)>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
    /// Half bandwidth of the assembled matrices.
    pub bandwidth: usize,
}

/// Position of angular column `j` in the zigzag order `0, 1, N-1, 2, N-2, ...`,
/// which keeps periodic neighbours within two slots of each other.
fn zigzag_slot(j: usize, n: usize) -> usize {
    if j == 0 {
        0
    } else if j <= n / 2 {
        2 * j - 1
    } else {
        2 * (n - j)
    }
}

/// Mesh with `base_radial * 2^level` radial and `base_angular * 2^level` angular cells.
pub fn generate_mesh(spec: &DomainSpec, level: u32, config: &FemConfig) -> Result<PolarMesh> {
    if spec.n != 2 {
        return Err(Error::InvalidInput(format!(
            "the finite-element solver needs n = 2, got {}",
            spec.n
        )));
    }
    config.validate()?;
    spec.validate()?;
    let nr = config.base_radial << level;
    let nt = config.base_angular << level;
    let dtheta = 2.0 * PI / nt as f64;
    let extents: Vec<(f64, f64)> = (0..nt)
        .map(|j| {
            let t = j as f64 * dtheta;
            let (lo, hi) = spec.extent(&[t.cos(), t.sin()]);
            (
                if spec.rho_in.is_none() {
                    config.pole_radius
                } else {
                    lo
                },
                hi,
            )
        })
        .collect();
    let gap_min = extents
        .iter()
        .map(|(a, b)| b - a)
        .fold(f64::INFINITY, f64::min);
    let gap_max = extents.iter().map(|(a, b)| b - a).fold(0.0, f64::max);
    let h = gap_max / nr as f64;
    if !(gap_min >= 10.0 * h) {
        return Err(Error::DegenerateDomain(format!(
            "thinnest radial gap {gap_min} is below 10 x mesh size {h} at level {level}"
        )));
    }
    let stride = nr + 1;
    let index = |i: usize, j: usize| zigzag_slot(j % nt, nt) * stride + i;
    let mut vertices = vec![(0.0, 0.0); stride * nt];
    for (j, &(lo, hi)) in extents.iter().enumerate() {
        for i in 0..=nr {
            let r = lo + (hi - lo) * i as f64 / nr as f64;
            vertices[index(i, j)] = (r, j as f64 * dtheta);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nr * nt);
    for j in 0..nt {
        for i in 0..nr {
            let (a, b, c, d) = (
                index(i, j),
                index(i + 1, j),
                index(i + 1, j + 1),
                index(i, j + 1),
            );
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * nt);
    for j in 0..nt {
        boundary_edges.push([index(0, j + 1), index(0, j)]);
        boundary_edges.push([index(nr, j), index(nr, j + 1)]);
    }
    let mesh = PolarMesh {
        level,
        n_radial: nr,
        n_angular: nt,
        vertices,
        triangles,
        boundary_edges,
        bandwidth: 2 * stride + 1,
    };
    if let Some(t) = mesh
        .triangles
        .iter()
        .position(|t| mesh.chart_area(t) <= 0.0)
    {
        return Err(Error::DegenerateDomain(format!(
            "triangle {t} is inverted in the chart"
        )));
    }
    Ok(mesh)
}

impl PolarMesh {
    /// Vertex coordinates of a triangle with angles unwrapped around the first vertex.
    pub fn local_coords(&self, tri: &[usize; 3]) -> [(f64, f64); 3] {
        let (r0, t0) = self.vertices[tri[0]];
        let mut out = [(r0, t0); 3];
        for (k, &v) in tri.iter().enumerate().skip(1) {
            let (r, t) = self.vertices[v];
            let mut d = t - t0;
            if d > PI {
                d -= 2.0 * PI;
            } else if d < -PI {
                d += 2.0 * PI;
            }
            out[k] = (r, t0 + d);
        }
        out
    }

    /// Signed area of a triangle in the `(r, theta)` chart.
    pub fn chart_area(&self, tri: &[usize; 3]) -> f64 {
        let [p, q, s] = self.local_coords(tri);
        0.5 * ((q.0 - p.0) * (s.1 - p.1) - (s.0 - p.0) * (q.1 - p.1))
    }

    pub fn unknowns(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices_csv(&self) -> String {
        let mut out = String::from("index,r,theta\n");
        for (i, (r, t)) in self.vertices.iter().enumerate() {
            out.push_str(&format!("{i},{r:.17e},{t:.17e}\n"));
        }
        out
    }

    pub fn triangles_csv(&self) -> String {
        let mut out = String::from("index,v0,v1,v2\n");
        for (i, t) in self.triangles.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", t[0], t[1], t[2]));
        }
        out
    }
}

/// Symmetric band matrix, lower band stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Row `i` holds columns `i - bw ..= i` in ascending order.
    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw, "entry outside the band");
        i * (self.bw + 1) + self.bw - (i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let (bw, w) = (self.bw, self.bw + 1);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let start = i.saturating_sub(bw);
            let row = &self.data[i * w + bw - (i - start)..i * w + bw];
            let diag = self.data[i * w + bw];
            let mut acc = diag * x[i];
            for (k, &a) in row.iter().enumerate() {
                acc += a * x[start + k];
                y[start + k] += a * x[i];
            }
            y[i] += acc;
        }
        y
    }

    /// Band Cholesky factor `L` with `A = L L^T`.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut l = self.data.clone();
        for j in 0..n {
            let start = j.saturating_sub(bw);
            let row_j = &l[j * w..(j + 1) * w];
            let s = row_j[bw]
                - row_j[bw - (j - start)..bw]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>();
            if !(s > 0.0) {
                return Err(Error::SingularMass(format!(
                    "shifted stiffness not positive definite at row {j}"
                )));
            }
            let djj = s.sqrt();
            l[j * w + bw] = djj;
            let (head, tail) = l.split_at_mut((j + 1) * w);
            let row_j = &head[j * w..];
            for i in j + 1..(j + bw + 1).min(n) {
                let start = i.saturating_sub(bw);
                let row_i = &mut tail[(i - j - 1) * w..(i - j) * w];
                let dot: f64 = row_i[bw - (i - start)..bw - (i - j)]
                    .iter()
                    .zip(&row_j[bw - (j - start)..bw])
                    .map(|(a, b)| a * b)
                    .sum();
                let slot = bw - (i - j);
                row_i[slot] = (row_i[slot] - dot) / djj;
            }
        }
        Ok(BandCholesky { n, bw, data: l })
    }
}

pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_many(&[b.to_vec()]).remove(0)
    }

    /// Solves for several right-hand sides in one sweep over the factor.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut ys: Vec<Vec<f64>> = rhs.to_vec();
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let row = &self.data[i * w + bw - (i - start)..i * w + bw];
            let diag = self.data[i * w + bw];
            for y in ys.iter_mut() {
                let dot: f64 = row.iter().zip(&y[start..i]).map(|(a, b)| a * b).sum();
                y[i] = (y[i] - dot) / diag;
            }
        }
        for i in (0..n).rev() {
            let start = i.saturating_sub(bw);
            let row = &self.data[i * w + bw - (i - start)..i * w + bw];
            let diag = self.data[i * w + bw];
            for y in ys.iter_mut() {
                let v = y[i] / diag;
                y[i] = v;
                for (t, a) in y[start..i].iter_mut().zip(row) {
                    *t -= a * v;
                }
            }
        }
        ys
    }
}

/// Square sparse matrix in compressed-row form (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Zero matrix with the sparsity pattern of the given (sorted, unique) rows.
    fn with_pattern(rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for row in rows {
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        Self {
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.position(i, j).expect("entry in the pattern");
        self.vals[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.vals[k])
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                self.vals[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn sum_all(&self) -> f64 {
        self.vals.iter().sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.cols[k])] = self.vals[k];
            }
        }
        d
    }

    /// Lower band of `self + alpha * other` (same pattern).
    pub fn banded_sum(&self, alpha: f64, other: &SparseMatrix, bw: usize) -> SymBand {
        let n = self.dim();
        let mut band = SymBand::zeros(n, bw);
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                if j <= i {
                    band.add(i, j, self.vals[k] + alpha * other.vals[k]);
                }
            }
        }
        band
    }
}

/// Stiffness and mass of the P1 discretization (shared sparsity pattern).
#[derive(Debug, Clone, PartialEq)]
pub struct FemSystem {
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub bandwidth: usize,
}

/// Gauss points on the reference triangle (collapsed tensor rule):
/// `(barycentric a, barycentric b, weight)` with weights summing to 1/2.
pub fn triangle_rule(order: usize) -> Vec<(f64, f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let mut out = Vec::with_capacity(order * order);
    for (xi, wi) in x.iter().zip(&w) {
        let u = 0.5 * (xi + 1.0);
        for (xj, wj) in x.iter().zip(&w) {
            let v = 0.5 * (xj + 1.0);
            out.push((u, v * (1.0 - u), 0.25 * wi * wj * (1.0 - u)));
        }
    }
    out
}

/// Points of the triangle quadrature.
pub const TRIANGLE_RULE_ORDER: usize = 6;

type Mat3 = [[f64; 3]; 3];

/// Element matrices `(stiffness, mass)` for one chart triangle.
pub fn element_matrices(
    form: SpaceForm,
    p: [(f64, f64); 3],
    rule: &[(f64, f64, f64)],
) -> Result<(Mat3, Mat3)> {
    let (dr1, dt1) = (p[1].0 - p[0].0, p[1].1 - p[0].1);
    let (dr2, dt2) = (p[2].0 - p[0].0, p[2].1 - p[0].1);
    let jac = dr1 * dt2 - dr2 * dt1;
    if !(jac > 0.0) {
        return Err(Error::SingularMass(format!(
            "degenerate chart triangle {p:?}"
        )));
    }
    // chart gradients of the barycentric basis
    let grads = [
        ((dt1 - dt2) / jac, (dr2 - dr1) / jac),
        (dt2 / jac, -dr2 / jac),
        (-dt1 / jac, dr1 / jac),
    ];
    let mut int_s = 0.0;
    let mut int_inv_s = 0.0;
    let mut mass = [[0.0; 3]; 3];
    for &(a, b, w) in rule {
        let phi = [1.0 - a - b, a, b];
        let r = phi[0] * p[0].0 + phi[1] * p[1].0 + phi[2] * p[2].0;
        let s = form.sin_unchecked(r);
        let dw = w * jac;
        int_s += s * dw;
        int_inv_s += dw / s;
        for x in 0..3 {
            for y in 0..3 {
                mass[x][y] += phi[x] * phi[y] * s * dw;
            }
        }
    }
    let mut stiff = [[0.0; 3]; 3];
    for x in 0..3 {
        for y in 0..3 {
            stiff[x][y] = grads[x].0 * grads[y].0 * int_s + grads[x].1 * grads[y].1 * int_inv_s;
        }
    }
    Ok((stiff, mass))
}

/// Assembles stiffness and mass. Element work runs in parallel; the scatter is sequential.
pub fn assemble(mesh: &PolarMesh, form: SpaceForm) -> Result<FemSystem> {
    let rule = triangle_rule(TRIANGLE_RULE_ORDER);
    let locals: Vec<_> = mesh
        .triangles
        .par_iter()
        .map(|t| element_matrices(form, mesh.local_coords(t), &rule))
        .collect::<Result<_>>()?;
    let n = mesh.unknowns();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in &mesh.triangles {
        for &a in t {
            rows[a].extend_from_slice(t);
        }
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }
    let mut stiffness = SparseMatrix::with_pattern(&rows);
    let mut mass = SparseMatrix::with_pattern(&rows);
    for (t, (ke, me)) in mesh.triangles.iter().zip(&locals) {
        for x in 0..3 {
            for y in 0..3 {
                stiffness.add(t[x], t[y], ke[x][y]);
                mass.add(t[x], t[y], me[x][y]);
            }
        }
    }
    Ok(FemSystem {
        stiffness,
        mass,
        bandwidth: mesh.bandwidth,
    })
}

/// Lowest eigenpairs of one discrete pencil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigensolution {
    pub eigenvalues: Vec<f64>,
    /// Backward error `||K u - mu M u|| / ((||K|| + |mu| ||M||) ||u||)` per pair.
    pub residuals: Vec<f64>,
    pub subspace_dim: usize,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Smallest `count` eigenpairs of `K u = mu M u` by shift-invert block Krylov
/// iteration with full `M`-orthogonalization and Rayleigh–Ritz on `K`.
///
/// Blocks of four vectors resolve eigenvalues of multiplicity up to four.
pub fn eigensolve(system: &FemSystem, count: usize, tol: f64, level: u32) -> Result<Eigensolution> {
    let n = system.stiffness.dim();
    if count < 2 || 4 * count > n {
        return Err(Error::InvalidInput(format!(
            "eigen_count {count} must be >= 2 and << {n} unknowns"
        )));
    }
    let shift = 1.0;
    let factor = system
        .stiffness
        .banded_sum(shift, &system.mass, system.bandwidth)
        .cholesky()?;
    let (k_norm, m_norm) = (system.stiffness.norm_inf(), system.mass.norm_inf());
    let block = 4;
    let max_dim = (n / 2).min(40 * count + 200);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut m_basis: Vec<Vec<f64>> = Vec::new();
    let mut k_basis: Vec<Vec<f64>> = Vec::new();
    // projected stiffness, grown one row at a time
    let mut projected: Vec<Vec<f64>> = Vec::new();
    let mut current: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut previous: Option<Vec<f64>> = None;
    let mut last_residual = f64::INFINITY;

    loop {
        let mut added = Vec::new();
        for mut v in current.drain(..) {
            let start = dot(&v, &system.mass.mul(&v)).sqrt();
            for _ in 0..2 {
                let coeffs: Vec<f64> = m_basis.par_iter().map(|mb| dot(&v, mb)).collect();
                for (b, c) in basis.iter().zip(coeffs) {
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let mv = system.mass.mul(&v);
            let len = dot(&v, &mv).sqrt();
            if !(len > 1e-10 * start) {
                continue;
            }
            let v: Vec<f64> = v.iter().map(|x| x / len).collect();
            let mv: Vec<f64> = mv.iter().map(|x| x / len).collect();
            let kv = system.stiffness.mul(&v);
            let row: Vec<f64> = basis
                .par_iter()
                .map(|b| dot(b, &kv))
                .chain(rayon::iter::once(dot(&v, &kv)))
                .collect();
            projected.push(row);
            k_basis.push(kv);
            added.push(basis.len());
            basis.push(v);
            m_basis.push(mv);
        }
        if added.is_empty() {
            return Err(Error::Convergence {
                context: format!(
                    "finite-element Krylov space stalled at dimension {}",
                    basis.len()
                ),
                grid: level as usize,
                mode: count,
                residual: last_residual,
            });
        }
        let dim = basis.len();
        if dim >= count + 2 * block {
            let h = DMatrix::from_fn(dim, dim, |i, j| {
                if i >= j {
                    projected[i][j]
                } else {
                    projected[j][i]
                }
            });
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let wanted = &order[..count];
            let values: Vec<f64> = wanted.iter().map(|&c| eig.eigenvalues[c]).collect();
            let mu_ref = values[count - 1].abs().max(1.0);
            // thin pole cells make K large, so Ritz values jitter near 1e-10 relative
            let settled = previous.as_ref().is_some_and(|p| {
                p.iter()
                    .zip(&values)
                    .all(|(a, b)| (a - b).abs() <= tol * mu_ref)
            });
            previous = Some(values.clone());
            if settled {
                let pairs: Vec<(Vec<f64>, f64)> = wanted
                    .par_iter()
                    .zip(&values)
                    .map(|(&c, &mu)| {
                        let y = eig.eigenvectors.column(c);
                        let mut u = vec![0.0; n];
                        let mut ku = vec![0.0; n];
                        let mut mu_vec = vec![0.0; n];
                        for (k, &coef) in y.iter().enumerate() {
                            for idx in 0..n {
                                u[idx] += coef * basis[k][idx];
                                ku[idx] += coef * k_basis[k][idx];
                                mu_vec[idx] += coef * m_basis[k][idx];
                            }
                        }
                        let r: Vec<f64> = ku.iter().zip(&mu_vec).map(|(a, b)| a - mu * b).collect();
                        let scale = (k_norm + mu.abs() * m_norm) * norm(&u);
                        (u, norm(&r) / scale)
                    })
                    .collect();
                let residuals: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                last_residual = residuals.iter().fold(0.0, |m: f64, v| m.max(*v));
                if last_residual <= tol {
                    return Ok(Eigensolution {
                        eigenvalues: values,
                        residuals,
                        subspace_dim: dim,
                        vectors: pairs.into_iter().map(|p| p.0).collect(),
                    });
                }
            }
        }
        if dim + block > max_dim {
            return Err(Error::Convergence {
                context: format!("finite-element eigensolver at subspace dimension {dim}"),
                grid: level as usize,
                mode: count,
                residual: last_residual,
            });
        }
        let rhs: Vec<Vec<f64>> = added.iter().map(|&i| m_basis[i].clone()).collect();
        current = factor.solve_many(&rhs);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: u32,
    /// Largest radial chart step.
    pub h: f64,
    pub n_radial: usize,
    pub n_angular: usize,
    pub unknowns: usize,
    pub eigenvalues: Vec<f64>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FemEigenResult {
    pub levels: Vec<LevelResult>,
    /// Order-2 Richardson values from the two finest levels.
    pub extrapolated: Vec<f64>,
    /// Relative change between the last two Richardson values (needs three levels).
    pub error_estimate: Vec<f64>,
    /// Observed convergence order from the last three levels.
    pub observed_order: Vec<f64>,
}

impl FemEigenResult {
    pub fn finest(&self) -> &LevelResult {
        self.levels.last().expect("at least one level")
    }

    /// Gnuplot-ready table `h mu_1 ... mu_m`, one line per level.
    pub fn convergence_dat(&self) -> String {
        let m = self.finest().eigenvalues.len();
        let header: Vec<String> = (1..=m).map(|i| format!("mu_{i}")).collect();
        let mut out = format!("# h {}\n", header.join(" "));
        for l in &self.levels {
            let vals: Vec<String> = l.eigenvalues.iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&format!("{:.12e} {}\n", l.h, vals.join(" ")));
        }
        out
    }
}

/// Solves every configured level and extrapolates.
pub fn solve_levels(spec: &DomainSpec, config: &FemConfig) -> Result<FemEigenResult> {
    config.validate()?;
    let mut levels = Vec::new();
    for level in config.first_level..config.first_level + config.level_count {
        let mesh = generate_mesh(spec, level, config)?;
        let system = assemble(&mesh, spec.form)?;
        let sol = eigensolve(&system, config.eigen_count, config.eig_tol, level)?;
        let h = (0..mesh.n_angular)
            .map(|j| {
                let top = mesh.vertices
                    [zigzag_slot(j, mesh.n_angular) * (mesh.n_radial + 1) + mesh.n_radial]
                    .0;
                let bottom = mesh.vertices[zigzag_slot(j, mesh.n_angular) * (mesh.n_radial + 1)].0;
                (top - bottom) / mesh.n_radial as f64
            })
            .fold(0.0, f64::max);
        levels.push(LevelResult {
            level,
            h,
            n_radial: mesh.n_radial,
            n_angular: mesh.n_angular,
            unknowns: mesh.unknowns(),
            max_residual: sol.residuals.iter().fold(0.0, |m: f64, v| m.max(*v)),
            eigenvalues: sol.eigenvalues,
        });
    }
    let m = config.eigen_count;
    let richardson = |coarse: &LevelResult, fine: &LevelResult| -> Vec<f64> {
        (0..m)
            .map(|i| (4.0 * fine.eigenvalues[i] - coarse.eigenvalues[i]) / 3.0)
            .collect()
    };
    let count = levels.len();
    let extrapolated = if count >= 2 {
        richardson(&levels[count - 2], &levels[count - 1])
    } else {
        levels[0].eigenvalues.clone()
    };
    let error_estimate = if count >= 3 {
        let previous = richardson(&levels[count - 3], &levels[count - 2]);
        previous
            .iter()
            .zip(&extrapolated)
            .map(|(p, e)| (p - e).abs() / e.abs().max(1e-300))
            .collect()
    } else {
        vec![f64::NAN; m]
    };
    let observed_order = if count >= 3 {
        (0..m)
            .map(|i| {
                let d1 = levels[count - 3].eigenvalues[i] - levels[count - 2].eigenvalues[i];
                let d2 = levels[count - 2].eigenvalues[i] - levels[count - 1].eigenvalues[i];
                (d1 / d2).abs().log2()
            })
            .collect()
    } else {
        vec![f64::NAN; m]
    };
    let mut extrapolated = extrapolated;
    extrapolated[0] = extrapolated[0].max(0.0);
    Ok(FemEigenResult {
        levels,
        extrapolated,
        error_estimate,
        observed_order,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One inequality `lhs <= rhs * (1 + tau)` (or `>=` for the harmonic mean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `(rhs - lhs) / rhs` for upper bounds, `(lhs - rhs) / rhs` for lower bounds.
    pub relative_margin: f64,
    pub holds: bool,
}

/// Outcome of the comparison with the volume-matched annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub schema_version: u32,
    pub spec_hash: String,
    pub form: SpaceForm,
    pub symmetry: Symmetry,
    pub volume: f64,
    pub r1: f64,
    pub r2: f64,
    /// `mu_2` of the comparison annulus (the first `k = 1` Neumann eigenvalue).
    pub annulus_mu2: f64,
    pub levels: Vec<LevelResult>,
    pub extrapolated: Vec<f64>,
    pub error_estimate: Vec<f64>,
    pub tau: f64,
    pub comparisons: Vec<Comparison>,
    pub verdict: Verdict,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Compares `mu_i(Omega)` with `mu_2` of the annulus `B_R2 \ B_R1`, where
/// `R1 = inf rho_in` and `R2` matches the volume.
///
/// Order 2 or central symmetry bounds `mu_2`; order 4 bounds `mu_2` and `mu_3`
/// and also checks the harmonic-mean form.
pub fn verify_theorem(
    spec: &DomainSpec,
    config: &FemConfig,
    sl: &SolverConfig,
) -> Result<TheoremReport> {
    if spec.symmetry_order == Symmetry::None {
        return Err(Error::Symmetry(
            "the comparison needs central, order-2 or order-4 symmetry".into(),
        ));
    }
    if spec.n != 2 {
        return Err(Error::InvalidInput(
            "the finite-element comparison needs n = 2".into(),
        ));
    }
    spec.validate()?;
    let grid = QuadratureGrid::default();
    let vol = volume(spec, &grid);
    let r1 = spec.inf_rho_in();
    let r2 = spec.form.match_outer_radius(2, r1, vol)?;
    let pair = solve(
        &SLProblem::neumann(spec.form, 2, 1, r1, r2)?,
        &sl.with_max_j(1),
    )?;
    let annulus_mu2 = pair[0].eigenvalue;

    let fem = solve_levels(spec, config)?;
    let indices: &[usize] = if spec.symmetry_order == Symmetry::Order4 {
        &[1, 2]
    } else {
        &[1]
    };
    let extrap_residual = indices
        .iter()
        .map(|&i| fem.error_estimate[i])
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let tau = (3.0 * extrap_residual + 10.0 * sl.eig_tol).max(1e-4);

    let mut comparisons: Vec<Comparison> = indices
        .iter()
        .map(|&i| {
            let lhs = fem.extrapolated[i];
            Comparison {
                name: format!("mu_{}", i + 1),
                lhs,
                rhs: annulus_mu2,
                relative_margin: (annulus_mu2 - lhs) / annulus_mu2,
                holds: lhs <= annulus_mu2 * (1.0 + tau),
            }
        })
        .collect();
    if spec.symmetry_order == Symmetry::Order4 {
        let lhs = 1.0 / fem.extrapolated[1] + 1.0 / fem.extrapolated[2];
        let rhs = 2.0 / annulus_mu2;
        comparisons.push(Comparison {
            name: "harmonic_mean".into(),
            lhs,
            rhs,
            relative_margin: (lhs - rhs) / rhs,
            holds: lhs >= rhs * (1.0 - tau),
        });
    }
    let verdict = if comparisons.iter().all(|c| c.holds) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(TheoremReport {
        schema_version: REPORT_SCHEMA_VERSION,
        spec_hash: spec.spec_hash(),
        form: spec.form,
        symmetry: spec.symmetry_order,
        volume: vol,
        r1,
        r2,
        annulus_mu2,
        levels: fem.levels,
        extrapolated: fem.extrapolated,
        error_estimate: fem.error_estimate,
        tau,
        comparisons,
        verdict,
    })
}
