mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use sfs_core::domains::DomainSpec;
use sfs_core::fem2d::{
    assemble, eigensolve, element_matrices, generate_mesh, solve_levels, triangle_rule, FemConfig,
    TRIANGLE_RULE_ORDER,
};
use sfs_core::slsolver::eigenvalues;
use sfs_core::{SLProblem, SolverConfig, SpaceForm};

fn coarse() -> FemConfig {
    FemConfig {
        base_radial: 12,
        base_angular: 16,
        first_level: 0,
        level_count: 1,
        ..FemConfig::default()
    }
}

fn dense_generalized_eigenvalues(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let l = m.clone().cholesky().expect("mass is positive definite").l();
    let l_inv = l.clone().try_inverse().unwrap();
    let c = &l_inv * k * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut values: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

#[test]
fn krylov_solver_matches_dense_eigensolver() {
    for form in SpaceForm::ALL {
        let spec = DomainSpec::annulus(form, 2, 0.5, 1.4);
        let mesh = generate_mesh(&spec, 0, &coarse()).unwrap();
        let sys = assemble(&mesh, form).unwrap();
        let dense = dense_generalized_eigenvalues(&sys.stiffness.to_dense(), &sys.mass.to_dense());
        let sol = eigensolve(&sys, 8, 1e-10, 0).unwrap();
        for (a, b) in sol.eigenvalues.iter().zip(&dense) {
            assert!(
                (a - b).abs() <= 1e-8 * b.abs().max(1.0),
                "{form}: {a} vs {b}"
            );
        }
    }
}

/// `int_T l1^a l2^b l3^c dA = 2 |T| a! b! c! / (a + b + c + 2)!`
fn barycentric_moment(area: f64, a: u32, b: u32, c: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    2.0 * area * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
}

/// `int_T f dA` by splitting into `4^depth` congruent triangles with the
/// centroid rule at two depths and extrapolating.
fn subdivided_integral<F: Fn(f64, f64) -> f64>(f: &F, p: [(f64, f64); 3], depth: u32) -> f64 {
    fn rec<F: Fn(f64, f64) -> f64>(f: &F, p: [(f64, f64); 3], depth: u32) -> f64 {
        if depth == 0 {
            let area = 0.5
                * ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1));
            let cx = (p[0].0 + p[1].0 + p[2].0) / 3.0;
            let cy = (p[0].1 + p[1].1 + p[2].1) / 3.0;
            return area * f(cx, cy);
        }
        let mid = |a: (f64, f64), b: (f64, f64)| ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        let (m01, m12, m20) = (mid(p[0], p[1]), mid(p[1], p[2]), mid(p[2], p[0]));
        rec(f, [p[0], m01, m20], depth - 1)
            + rec(f, [m01, p[1], m12], depth - 1)
            + rec(f, [m20, m12, p[2]], depth - 1)
            + rec(f, [m01, m12, m20], depth - 1)
    }
    let fine = rec(f, p, depth);
    let coarse = rec(f, p, depth - 1);
    (4.0 * fine - coarse) / 3.0
}

#[test]
fn euclidean_element_matches_direct_integration() {
    // chart triangle in (r, theta); the metric is dr^2 + r^2 dtheta^2
    let p = [(0.4, 0.1), (0.9, 0.25), (0.55, 0.7)];
    let (stiff, mass) =
        element_matrices(SpaceForm::Euclidean, p, &triangle_rule(TRIANGLE_RULE_ORDER)).unwrap();
    let area =
        0.5 * ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1));

    // mass: int phi_x phi_y r, with r = sum_k r_k phi_k
    for x in 0..3 {
        for y in 0..3 {
            let mut exact = 0.0;
            for k in 0..3 {
                let mut e = [0u32; 3];
                e[x] += 1;
                e[y] += 1;
                e[k] += 1;
                exact += p[k].0 * barycentric_moment(area, e[0], e[1], e[2]);
            }
            assert!(
                (mass[x][y] - exact).abs() < 1e-14,
                "mass {x}{y}: {} vs {exact}",
                mass[x][y]
            );
        }
    }

    // stiffness: grad_r phi_x grad_r phi_y int r + grad_t phi_x grad_t phi_y int 1/r
    let jac = 2.0 * area;
    let (dr1, dt1) = (p[1].0 - p[0].0, p[1].1 - p[0].1);
    let (dr2, dt2) = (p[2].0 - p[0].0, p[2].1 - p[0].1);
    let grads = [
        ((dt1 - dt2) / jac, (dr2 - dr1) / jac),
        (dt2 / jac, -dr2 / jac),
        (-dt1 / jac, dr1 / jac),
    ];
    let int_r = area * (p[0].0 + p[1].0 + p[2].0) / 3.0;
    let int_inv_r = subdivided_integral(&|r: f64, _t: f64| 1.0 / r, p, 7);
    for x in 0..3 {
        for y in 0..3 {
            let exact = grads[x].0 * grads[y].0 * int_r + grads[x].1 * grads[y].1 * int_inv_r;
            assert!(
                (stiff[x][y] - exact).abs() < 1e-8 * exact.abs().max(1.0),
                "stiffness {x}{y}"
            );
        }
        let row: f64 = stiff[x].iter().sum();
        assert!(row.abs() < 1e-13);
    }
}

#[test]
fn order4_mesh_is_invariant_under_quarter_turns() {
    let spec: DomainSpec = DomainSpec::from_json(
        r#"{"form": "euclidean", "n": 2, "symmetry_order": "order4",
            "rho_out": {"base": 1.0, "harmonics": [{"m": 4, "a": 0.08}, {"m": 8, "b": 0.03}]},
            "rho_in": {"base": 0.4, "harmonics": [{"m": 4, "b": -0.05}]}}"#,
    )
    .unwrap();
    let mesh = generate_mesh(&spec, 1, &FemConfig::default()).unwrap();
    let quarter = std::f64::consts::FRAC_PI_2;
    let mut radii: Vec<Vec<f64>> = vec![Vec::new(); mesh.n_angular];
    let dtheta = 2.0 * std::f64::consts::PI / mesh.n_angular as f64;
    for &(r, t) in &mesh.vertices {
        radii[(t / dtheta).round() as usize % mesh.n_angular].push(r);
    }
    for col in &mut radii {
        col.sort_by(f64::total_cmp);
    }
    let shift = (quarter / dtheta).round() as usize;
    for j in 0..mesh.n_angular {
        let k = (j + shift) % mesh.n_angular;
        for (a, b) in radii[j].iter().zip(&radii[k]) {
            assert!((a - b).abs() < 1e-12, "column {j}");
        }
    }
    let result = solve_levels(
        &spec,
        &FemConfig {
            level_count: 1,
            ..FemConfig::default()
        },
    )
    .unwrap();
    let mu = &result.levels[0].eigenvalues;
    assert!((mu[1] - mu[2]).abs() < 1e-8 * mu[1], "{mu:?}");
}

#[test]
fn unit_disk_matches_bessel_root() {
    let oracle = common::bessel::first_zero_of_derivative(1).powi(2);
    let spec = DomainSpec::ball(SpaceForm::Euclidean, 2, 1.0);
    let result = solve_levels(&spec, &FemConfig::default()).unwrap();
    let finest = &result.finest().eigenvalues;
    assert!((finest[1] - oracle).abs() < 1e-2);
    assert!((finest[2] - oracle).abs() < 1e-2);
    assert!(
        (result.extrapolated[1] - oracle).abs() < 1e-3,
        "{}",
        result.extrapolated[1]
    );
    assert!((result.observed_order[1] - 2.0).abs() < 0.2);
}

#[test]
fn annulus_matches_radial_solver() {
    let spec = DomainSpec::annulus(SpaceForm::Euclidean, 2, 1.0, 2.0);
    let result = solve_levels(&spec, &FemConfig::default()).unwrap();
    let problem = SLProblem::neumann(SpaceForm::Euclidean, 2, 1, 1.0, 2.0).unwrap();
    let mu11 = eigenvalues(&problem, &SolverConfig::default().with_max_j(1)).unwrap()[0];
    let fem = result.finest().eigenvalues[1];
    assert!((fem - mu11).abs() < 5e-4 * mu11, "{fem} vs {mu11}");
    assert!((result.extrapolated[1] - mu11).abs() < 1e-6 * mu11);
}
