//! Symmetric tridiagonal pencils `K - lambda M` with diagonal positive `M`.
//!
//! Eigenvalues come from Sturm-sequence bisection: by Sylvester's law of
//! inertia the number of negative pivots of `K - lambda M` equals the number of
//! eigenvalues below `lambda`. Eigenvectors come from inverse iteration.

use rayon::prelude::*;

/// Stiffness `K` (diagonal + off-diagonal) paired with a diagonal mass `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagPencil {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    pub mass: Vec<f64>,
}

impl TridiagPencil {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `lambda`.
    pub fn sturm_count(&self, lambda: f64) -> usize {
        let mut count = 0;
        let mut pivot = 1.0;
        for i in 0..self.len() {
            let coupling = if i == 0 {
                0.0
            } else {
                self.off[i - 1] * self.off[i - 1] / pivot
            };
            pivot = self.diag[i] - lambda * self.mass[i] - coupling;
            if pivot == 0.0 {
                pivot =
                    -f64::EPSILON * (self.diag[i].abs() + lambda.abs() * self.mass[i]).max(1e-300);
            }
            if pivot < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin interval for the eigenvalues of `M^{-1/2} K M^{-1/2}`.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut radius = 0.0;
            if i > 0 {
                radius += self.off[i - 1].abs() / (self.mass[i] * self.mass[i - 1]).sqrt();
            }
            if i + 1 < n {
                radius += self.off[i].abs() / (self.mass[i] * self.mass[i + 1]).sqrt();
            }
            let center = self.diag[i] / self.mass[i];
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        (lo, hi)
    }

    /// The `index`-th (0-based) eigenvalue, bisected to `tol * max(1, |lambda|)`.
    pub fn eigenvalue(&self, index: usize, tol: f64) -> f64 {
        assert!(index < self.len(), "eigenvalue index out of range");
        let (glo, ghi) = self.gershgorin();
        let pad = 1e-12 * (glo.abs() + ghi.abs()) + 1e-300;
        let mut lo = glo - pad;
        let mut hi = ghi + pad;
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= tol * mid.abs().max(1.0) || mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The lowest `count` eigenvalues, bisected independently (in parallel).
    pub fn lowest_eigenvalues(&self, count: usize, tol: f64) -> Vec<f64> {
        (0..count.min(self.len()))
            .into_par_iter()
            .map(|j| self.eigenvalue(j, tol))
            .collect()
    }

    /// `y = K x`.
    pub fn apply_stiffness(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Eigenvector for an (accurate) eigenvalue by inverse iteration,
    /// normalized so that `x^T M x = 1`.
    pub fn eigenvector(&self, lambda: f64, iterations: usize) -> Vec<f64> {
        let n = self.len();
        let shifted: Vec<f64> = (0..n)
            .map(|i| self.diag[i] - lambda * self.mass[i])
            .collect();
        let solver = PivotedTridiag::factor(&shifted, &self.off);
        // deterministic start vector with components along every mode
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract())
            .collect();
        for _ in 0..iterations.max(1) {
            let rhs: Vec<f64> = x.iter().zip(&self.mass).map(|(a, m)| a * m).collect();
            x = solver.solve(&rhs);
            let norm = self.mass_norm(&x);
            x.iter_mut().for_each(|v| *v /= norm);
        }
        x
    }

    pub fn mass_norm(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mass)
            .map(|(v, m)| v * v * m)
            .sum::<f64>()
            .sqrt()
    }

    /// `x^T K x / x^T M x`.
    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        // row sums plus differences: exact cancellation for nearly constant x
        let n = self.len();
        let rows: f64 = (0..n)
            .map(|i| {
                let mut row = self.diag[i];
                if i > 0 {
                    row += self.off[i - 1];
                }
                if i + 1 < n {
                    row += self.off[i];
                }
                row * x[i] * x[i]
            })
            .sum();
        let jumps: f64 = self
            .off
            .iter()
            .zip(x.windows(2))
            .map(|(o, w)| -o * (w[1] - w[0]) * (w[1] - w[0]))
            .sum();
        let num = rows + jumps;
        let den: f64 = x.iter().zip(&self.mass).map(|(v, m)| v * v * m).sum();
        num / den
    }
}

/// LU factorization with partial pivoting of a tridiagonal matrix
/// (the layout of LAPACK's `gttrf`).
struct PivotedTridiag {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    upper2: Vec<f64>,
    swapped: Vec<bool>,
}

impl PivotedTridiag {
    fn factor(diag: &[f64], off: &[f64]) -> Self {
        let n = diag.len();
        let mut d = diag.to_vec();
        let mut dl = off.to_vec();
        let mut du = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let tiny = f64::EPSILON
            * diag
                .iter()
                .chain(off)
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(1e-300);
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self {
            lower: dl,
            diag: d,
            upper: du,
            upper2: du2,
            swapped,
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.lower[i] * b[i];
            } else {
                b[i + 1] -= self.lower[i] * b[i];
            }
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            if i + 1 < n {
                v -= self.upper[i] * b[i + 1];
            }
            if i + 2 < n {
                v -= self.upper2[i] * b[i + 2];
            }
            b[i] = v / self.diag[i];
        }
        b
    }
}
