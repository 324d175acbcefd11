mod common;

use common::bessel::*;

#[test]
fn series_matches_tabulated_values() {
    // Abramowitz & Stegun table 9.1
    assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
    assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
    assert!((bessel_j(2, 3.0) - 0.486_091_260_585_891_1).abs() < 1e-14);
}

#[test]
fn first_zeros() {
    let j01 = first_zero(0);
    let dj11 = first_zero_of_derivative(1);
    println!("j_0,1 = {j01:.15}, j'_1,1 = {dj11:.15}");
    println!(
        "j_0,1^2 = {:.15}, j'_1,1^2 = {:.15}",
        j01 * j01,
        dj11 * dj11
    );
    assert!((j01 - 2.404_825_557_695_773).abs() < 1e-12);
    assert!((dj11 - 1.841_183_781_340_659).abs() < 1e-12);
}
