//! Bessel functions of the first kind by power series, and root bracketing.
//! Independent of the library: used only to freeze reference eigenvalues.

pub fn bessel_j(order: u32, x: f64) -> f64 {
    // sum_{m>=0} (-1)^m (x/2)^{2m+order} / (m! (m+order)!)
    let half = 0.5 * x;
    let mut term = half.powi(order as i32);
    for k in 1..=order {
        term /= k as f64;
    }
    let mut sum = term;
    for m in 1..200 {
        term *= -half * half / (m as f64 * (m as f64 + order as f64));
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Derivative of J_order via the recurrence J'_v = (J_{v-1} - J_{v+1}) / 2.
pub fn bessel_j_prime(order: u32, x: f64) -> f64 {
    if order == 0 {
        -bessel_j(1, x)
    } else {
        0.5 * (bessel_j(order - 1, x) - bessel_j(order + 1, x))
    }
}

/// First root of `f` above `start`, located by a coarse scan then bisection.
pub fn first_root<F: Fn(f64) -> f64>(f: F, start: f64) -> f64 {
    let step = 1e-3;
    let mut a = start;
    let mut fa = f(a);
    loop {
        let b = a + step;
        let fb = f(b);
        if fa == 0.0 {
            return a;
        }
        if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            return 0.5 * (lo + hi);
        }
        a = b;
        fa = fb;
        assert!(a < 100.0, "no root found");
    }
}

/// `j'_{v,1}`: first positive zero of J'_v (excluding x = 0).
pub fn first_zero_of_derivative(order: u32) -> f64 {
    first_root(|x| bessel_j_prime(order, x), 0.1)
}

/// `j_{v,1}`: first positive zero of J_v.
pub fn first_zero(order: u32) -> f64 {
    first_root(|x| bessel_j(order, x), 0.1)
}
