//! Gradients in geodesic normal coordinates, where the metric is
//! `dr^2 + sin_M(r)^2 dsigma^2`, from central differences of the functions.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sfs_core::SpaceForm;

pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// `g^{-1}(df, dh)` with `g^{-1} = u u^T + (r / sin_M r)^2 (I - u u^T)`.
pub fn metric_inner(form: SpaceForm, x: &[f64], df: &[f64], dh: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = form.sin_m(r).unwrap();
    let ratio = (r / s).powi(2);
    let fu: f64 = df.iter().zip(x).map(|(a, b)| a * b / r).sum();
    let hu: f64 = dh.iter().zip(x).map(|(a, b)| a * b / r).sum();
    let full: f64 = df.iter().zip(dh).map(|(a, b)| a * b).sum();
    fu * hu + ratio * (full - fu * hu)
}

/// Smooth radial profile with its derivative.
pub fn profile(r: f64) -> (f64, f64) {
    (
        0.7 + (1.3 * r).sin() + 0.1 * r * r,
        1.3 * (1.3 * r).cos() + 0.2 * r,
    )
}

/// `count` points with `|X|` in `(0.1, 1.4)` and uniform directions.
pub fn random_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dir: Vec<f64> = loop {
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if len > 0.1 && len <= 1.0 {
                    break v.iter().map(|c| c / len).collect();
                }
            };
            let r = rng.gen_range(0.1..1.4);
            dir.iter().map(|c| r * c).collect()
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Worst relative error of the closed-form pair and norm integrands over
/// `count` random points per dimension 2 and 3.
pub fn worst_gradient_errors(form: SpaceForm, count: usize, seed: u64) -> (f64, f64) {
    let h = 1e-5;
    let mut pair_err: f64 = 0.0;
    let mut norm_err: f64 = 0.0;
    for n in [2usize, 3] {
        for (p, x) in random_points(n, count, seed + n as u64).iter().enumerate() {
            let (i, j) = (p % n, (p + 1) % n);
            let r = norm(x);
            let (g, dg) = profile(r);
            let fi = |y: &[f64]| profile(norm(y)).0 * y[i];
            let fj = |y: &[f64]| profile(norm(y)).0 * y[j];
            let (di, dj) = (central_gradient(fi, x, h), central_gradient(fj, x, h));
            let fd = metric_inner(form, x, &di, &dj);
            let closed = sfs_core::domains::grad_pair_integrand(form, r, g, dg, x[i], x[j]);
            let scale =
                metric_inner(form, x, &di, &di).sqrt() * metric_inner(form, x, &dj, &dj).sqrt();
            pair_err = pair_err.max((closed - fd).abs() / scale);

            let fn_ = |y: &[f64]| profile(norm(y)).0 * y[i] / norm(y);
            let dn = central_gradient(fn_, x, h);
            let fd = metric_inner(form, x, &dn, &dn);
            let closed = sfs_core::domains::grad_norm_integrand(form, r, g, dg, x[i] / r);
            norm_err = norm_err.max((closed - fd).abs() / fd.abs());
        }
    }
    (pair_err, norm_err)
}
