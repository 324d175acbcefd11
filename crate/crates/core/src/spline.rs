//! Clamped cubic spline on a uniform grid.

/// Interpolating cubic spline with prescribed end slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSpline {
    start: f64,
    step: f64,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl UniformSpline {
    /// Spline through `values` sampled at `start + i * step` with end slopes
    /// `slope_start` and `slope_end`.
    pub fn clamped(
        start: f64,
        step: f64,
        values: Vec<f64>,
        slope_start: f64,
        slope_end: f64,
    ) -> Self {
        let n = values.len();
        assert!(n >= 2, "spline needs at least two samples");
        let h = step;
        // tridiagonal system for the second derivatives
        let mut sub = vec![h / 6.0; n];
        let mut diag = vec![2.0 * h / 3.0; n];
        let mut sup = vec![h / 6.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = h / 3.0;
        diag[n - 1] = h / 3.0;
        sub[0] = 0.0;
        sup[n - 1] = 0.0;
        rhs[0] = (values[1] - values[0]) / h - slope_start;
        rhs[n - 1] = slope_end - (values[n - 1] - values[n - 2]) / h;
        for i in 1..n - 1 {
            rhs[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h;
        }
        // Thomas algorithm (the matrix is diagonally dominant)
        for i in 1..n {
            let m = sub[i] / diag[i - 1];
            diag[i] -= m * sup[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        let mut second = vec![0.0; n];
        second[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            second[i] = (rhs[i] - sup[i] * second[i + 1]) / diag[i];
        }
        Self {
            start,
            step,
            values,
            second,
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.values.len() - 2;
        let t = (x - self.start) / self.step;
        let i = (t.floor().max(0.0) as usize).min(last);
        (i, x - (self.start + i as f64 * self.step))
    }

    pub fn value(&self, x: f64) -> f64 {
        let (i, dx) = self.locate(x);
        let h = self.step;
        let a = (h - dx) / h;
        let b = dx / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (i, dx) = self.locate(x);
        let h = self.step;
        let a = (h - dx) / h;
        let b = dx / h;
        (self.values[i + 1] - self.values[i]) / h - (3.0 * a * a - 1.0) * h / 6.0 * self.second[i]
            + (3.0 * b * b - 1.0) * h / 6.0 * self.second[i + 1]
    }
}
