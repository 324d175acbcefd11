//! Dimension of the degree-`k` harmonic polynomials in `n` variables as the
//! kernel of the Laplacian on homogeneous polynomials, by numerical rank.

use std::collections::HashMap;

use nalgebra::DMatrix;

pub fn exponents(n: usize, k: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![k]];
    }
    (0..=k)
        .rev()
        .flat_map(|first| {
            exponents(n - 1, k - first)
                .into_iter()
                .map(move |mut rest| {
                    rest.insert(0, first);
                    rest
                })
        })
        .collect()
}

pub fn harmonic_dim_by_rank(n: usize, k: usize) -> usize {
    let domain = exponents(n, k);
    if k < 2 {
        return domain.len();
    }
    let target: HashMap<Vec<usize>, usize> = exponents(n, k - 2)
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, i))
        .collect();
    let mut lap = DMatrix::<f64>::zeros(target.len(), domain.len());
    for (col, e) in domain.iter().enumerate() {
        for v in 0..n {
            if e[v] >= 2 {
                let mut d = e.clone();
                d[v] -= 2;
                lap[(target[&d], col)] += (e[v] * (e[v] - 1)) as f64;
            }
        }
    }
    domain.len() - lap.rank(1e-9)
}
