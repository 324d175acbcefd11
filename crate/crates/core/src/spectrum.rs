//! Neumann spectrum of a geodesic annulus (or ball) assembled from the radial
//! mode spectra, with spherical-harmonic multiplicities, plus a certification
//! report for the structural facts about the radial spectra.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slsolver::{
    discrete_rayleigh_quotient, eigenvalues, locate_b, solve, SLProblem, SolverConfig,
};
use crate::spaceform::SpaceForm;

/// Dimension of the space of degree-`k` harmonic homogeneous polynomials on R^n.
pub fn harmonic_dim(n: usize, k: usize) -> u64 {
    assert!(n >= 2, "harmonic_dim needs n >= 2");
    match k {
        0 => 1,
        1 => n as u64,
        _ => binomial(k + n - 1, n - 1) - binomial(k + n - 3, n - 1),
    }
}

fn binomial(top: usize, bottom: usize) -> u64 {
    if bottom > top {
        return 0;
    }
    let bottom = bottom.min(top - bottom);
    let mut acc: u128 = 1;
    for i in 0..bottom {
        acc = acc * (top - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub value: f64,
    pub k: usize,
    pub j: usize,
    pub multiplicity: u64,
}

/// Sorted Neumann spectrum of `B_{r2} \ B_{r1}`, complete up to `cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpectrum {
    pub form: SpaceForm,
    pub n: usize,
    pub r1: f64,
    pub r2: f64,
    pub k_max: usize,
    pub j_max: usize,
    /// Every eigenvalue `<= cutoff` is listed; nothing missing lies below it.
    pub cutoff: f64,
    pub entries: Vec<SpectrumEntry>,
}

impl AnnulusSpectrum {
    /// Eigenvalues repeated according to multiplicity: `mu_1, mu_2, ...`.
    pub fn flattened(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity as usize))
            .collect()
    }

    /// Entry carrying `mu_i` (1-based, counted with multiplicity).
    pub fn entry_of(&self, i: usize) -> Option<&SpectrumEntry> {
        let mut seen = 0u64;
        for e in &self.entries {
            seen += e.multiplicity;
            if seen >= i as u64 {
                return Some(e);
            }
        }
        None
    }

    pub fn certified_count(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity as usize).sum()
    }

    /// Fails when fewer than `m` eigenvalues are certified.
    pub fn require(&self, m: usize) -> Result<()> {
        let certified = self.certified_count();
        if certified < m {
            return Err(Error::CutoffTooLow {
                certified,
                requested: m,
                cutoff: self.cutoff,
            });
        }
        Ok(())
    }

    /// The constant mode leads, followed by the single `(k = 1, j = 1)` entry
    /// carrying `mu_2 = ... = mu_{n+1}` with multiplicity `n`.
    pub fn check_low_structure(&self) -> Result<()> {
        let first = self
            .entries
            .first()
            .ok_or_else(|| Error::Precondition("empty spectrum".into()))?;
        if !(first.k == 0 && first.j == 1 && first.multiplicity == 1 && first.value.abs() < 1e-9) {
            return Err(Error::Precondition(format!(
                "unexpected first entry {first:?}"
            )));
        }
        let second = self
            .entries
            .get(1)
            .ok_or_else(|| Error::Precondition("spectrum has a single entry".into()))?;
        if !(second.k == 1 && second.j == 1 && second.multiplicity == self.n as u64) {
            return Err(Error::Precondition(format!(
                "unexpected second entry {second:?}"
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,value,k,j,multiplicity\n");
        let mut i = 1u64;
        for e in &self.entries {
            out.push_str(&format!(
                "{i},{:.17e},{},{},{}\n",
                e.value, e.k, e.j, e.multiplicity
            ));
            i += e.multiplicity;
        }
        out
    }
}

/// Merges the radial spectra for `k <= k_max`, `j <= j_max`.
///
/// Modes left out are bounded below by `mu_{k, j_max}` (for enumerated `k`)
/// and by `max(mu_{k_max,1}, (k_max+1)(k_max+n-1)/sin_M(r2)^2)` (for larger
/// `k`), so every listed entry up to the smaller of these is certified.
pub fn assemble(
    form: SpaceForm,
    n: usize,
    r1: f64,
    r2: f64,
    k_max: usize,
    j_max: usize,
    config: &SolverConfig,
) -> Result<AnnulusSpectrum> {
    if k_max < 1 || j_max < 1 {
        return Err(Error::InvalidInput(format!(
            "assembly needs k_max >= 1 and j_max >= 1, got {k_max}, {j_max}"
        )));
    }
    let config = config.with_max_j(j_max);
    let per_mode: Vec<Vec<f64>> = (0..=k_max)
        .into_par_iter()
        .map(|k| eigenvalues(&SLProblem::neumann(form, n, k, r1, r2)?, &config))
        .collect::<Result<_>>()?;

    let last_in_mode = per_mode
        .iter()
        .map(|v| *v.last().expect("at least one eigenvalue"))
        .fold(f64::INFINITY, f64::min);
    let next_k = (k_max + 1) as f64;
    let angular_bound = next_k * (next_k + n as f64 - 2.0) / form.sin_unchecked(r2).powi(2);
    let beyond_k = per_mode[k_max][0].max(angular_bound);
    let cutoff = last_in_mode.min(beyond_k);

    let mut entries: Vec<SpectrumEntry> = per_mode
        .iter()
        .enumerate()
        .flat_map(|(k, values)| {
            values
                .iter()
                .enumerate()
                .map(move |(j, &value)| SpectrumEntry {
                    value: if k == 0 && j == 0 { 0.0 } else { value },
                    k,
                    j: j + 1,
                    multiplicity: harmonic_dim(n, k),
                })
        })
        .filter(|e| e.value <= cutoff)
        .collect();
    entries.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.k.cmp(&b.k))
            .then(a.j.cmp(&b.j))
    });
    Ok(AnnulusSpectrum {
        form,
        n,
        r1,
        r2,
        k_max,
        j_max,
        cutoff,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeIndex {
    pub k: usize,
    pub j: usize,
}

/// Outcome of one certification check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity (see `detail` for its meaning).
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
    pub offending: Option<ModeIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub form: SpaceForm,
    pub n: usize,
    pub r1: f64,
    pub r2: f64,
    pub j_max: usize,
    pub grids: Vec<usize>,
    pub checks: Vec<CheckResult>,
}

impl CertificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Highest mode index used by the interlacing checks.
pub const CERTIFY_K_MAX: usize = 4;

/// Runs the structural checks on the radial spectra of `[r1, r2]`.
///
/// Failures are recorded in the report, never returned as errors.
pub fn certify_lemmas(
    form: SpaceForm,
    n: usize,
    r1: f64,
    r2: f64,
    j_max: usize,
    config: &SolverConfig,
) -> CertificationReport {
    let mut checks = Vec::new();
    let mut grids = vec![config.grid_points];
    if config.richardson {
        grids.push(2 * config.grid_points);
    }
    let report = |checks: Vec<CheckResult>| CertificationReport {
        form,
        n,
        r1,
        r2,
        j_max,
        grids: grids.clone(),
        checks,
    };

    type PerMode = Vec<Vec<f64>>;
    let solved = (|| -> Result<(PerMode, PerMode)> {
        let neumann_cfg = config.with_max_j(j_max + 1);
        let neu: Vec<Vec<f64>> = (0..=CERTIFY_K_MAX + 1)
            .into_par_iter()
            .map(|k| eigenvalues(&SLProblem::neumann(form, n, k, r1, r2)?, &neumann_cfg))
            .collect::<Result<_>>()?;
        let dir: Vec<Vec<f64>> = (0..=CERTIFY_K_MAX)
            .into_par_iter()
            .map(|k| eigenvalues(&SLProblem::dirichlet(form, n, k, r1, r2)?, &neumann_cfg))
            .collect::<Result<_>>()?;
        Ok((neu, dir))
    })();
    let (neu, dir) = match solved {
        Ok(v) => v,
        Err(e) => {
            checks.push(CheckResult {
                name: "solver".into(),
                passed: false,
                worst: f64::NAN,
                tolerance: 0.0,
                detail: e.to_string(),
                offending: None,
            });
            return report(checks);
        }
    };

    // mu_{0,j+1} = lambda_{1,j}
    {
        let mut worst = 0.0f64;
        let mut at = None;
        for j in 1..=j_max {
            let d = (neu[0][j] - dir[1][j - 1]).abs();
            if d > worst {
                worst = d;
                at = Some(ModeIndex { k: 0, j: j + 1 });
            }
        }
        let tol = 1e-6;
        checks.push(CheckResult {
            name: "neumann_k0_shift_equals_dirichlet_k1".into(),
            passed: worst <= tol,
            worst,
            tolerance: tol,
            detail: "max_j |mu_{0,j+1} - lambda_{1,j}|".into(),
            offending: if worst <= tol { None } else { at },
        });
    }
    // mu_{1,j} < mu_{0,j+1}
    checks.push(margin_check(
        "k1_below_next_k0",
        "min_j (mu_{0,j+1} - mu_{1,j})",
        (1..=j_max).map(|j| (ModeIndex { k: 1, j }, neu[0][j] - neu[1][j - 1])),
        0.0,
    ));
    checks.push(margin_check(
        "monotone_in_k",
        "min_{k,j} (mu_{k+1,j} - mu_{k,j})",
        (0..CERTIFY_K_MAX + 1).flat_map(|k| {
            let neu = &neu;
            (1..=j_max).map(move |j| (ModeIndex { k, j }, neu[k + 1][j - 1] - neu[k][j - 1]))
        }),
        1e-8,
    ));
    checks.push(margin_check(
        "neumann_below_dirichlet",
        "min_{k,j} (lambda_{k,j} - mu_{k,j})",
        (0..=CERTIFY_K_MAX).flat_map(|k| {
            let (neu, dir) = (&neu, &dir);
            (1..=j_max).map(move |j| (ModeIndex { k, j }, dir[k][j - 1] - neu[k][j - 1]))
        }),
        1e-8,
    ));

    checks.extend(eigenfunction_checks(form, n, r1, r2, j_max, config));
    report(checks)
}

fn margin_check(
    name: &str,
    detail: &str,
    margins: impl Iterator<Item = (ModeIndex, f64)>,
    required: f64,
) -> CheckResult {
    let (at, worst) = margins.fold((None, f64::INFINITY), |(at, w), (idx, m)| {
        if m < w {
            (Some(idx), m)
        } else {
            (at, w)
        }
    });
    let passed = worst > required;
    CheckResult {
        name: name.into(),
        passed,
        worst,
        tolerance: required,
        detail: detail.into(),
        offending: if passed { None } else { at },
    }
}

fn eigenfunction_checks(
    form: SpaceForm,
    n: usize,
    r1: f64,
    r2: f64,
    j_max: usize,
    config: &SolverConfig,
) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut turning = (0.0f64, None, String::new());
    let mut increasing = (f64::INFINITY, None);
    let mut potential = (f64::INFINITY, None);
    let mut nodes = (true, None);
    let mut rayleigh = (0.0f64, None);
    let mut simple = (true, None);
    let mut solver_error = None;

    for k in 0..=3usize {
        let problem = match SLProblem::neumann(form, n, k, r1, r2) {
            Ok(p) => p,
            Err(e) => {
                solver_error = Some(e.to_string());
                break;
            }
        };
        let pairs = match solve(&problem, &config.with_max_j(j_max.min(6))) {
            Ok(p) => p,
            Err(e) => {
                solver_error = Some(e.to_string());
                break;
            }
        };
        for pair in &pairs {
            let idx = ModeIndex { k, j: pair.j };
            if pair.sign_changes() != pair.j - 1 && nodes.0 {
                nodes = (false, Some(idx));
            }
            if pair.near_degenerate && simple.0 {
                simple = (false, Some(idx));
            }
            if let Ok(q) = discrete_rayleigh_quotient(pair) {
                let rel = (q - pair.grid_eigenvalue).abs() / pair.grid_eigenvalue.abs().max(1.0);
                if rel > rayleigh.0 {
                    rayleigh = (rel, Some(idx));
                }
            }
        }
        if k == 0 || r1 <= 0.0 {
            continue;
        }
        let first = &pairs[0];
        let idx = ModeIndex { k, j: 1 };
        match locate_b(first) {
            Ok(b) => {
                let mu = first.eigenvalue;
                let res =
                    (mu - problem.angular_eigenvalue() / form.sin_unchecked(b).powi(2)).abs() / mu;
                if res > turning.0 {
                    turning = (res, Some(idx), turning.2);
                }
            }
            Err(e) => turning = (f64::INFINITY, Some(idx), e.to_string()),
        }
        let u = &first.values;
        let min_diff = u
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if min_diff < increasing.0 {
            increasing = (min_diff, Some(idx));
        }
        let c = problem.angular_eigenvalue();
        let mu = first.eigenvalue;
        let m = u.len();
        let rhs = (c / form.sin_unchecked(r2).powi(2) - mu) * u[m - 1] * u[m - 1];
        let slack = first
            .grid
            .iter()
            .zip(u)
            .skip(1)
            .map(|(&r, &v)| (c / form.sin_unchecked(r).powi(2) - mu) * v * v - rhs)
            .fold(f64::INFINITY, f64::min);
        if slack < potential.0 {
            potential = (slack, Some(idx));
        }
    }

    if let Some(e) = solver_error {
        out.push(CheckResult {
            name: "solver".into(),
            passed: false,
            worst: f64::NAN,
            tolerance: 0.0,
            detail: e,
            offending: None,
        });
        return out;
    }
    let grid_note = format!(
        "grid {}",
        config.grid_points * if config.richardson { 2 } else { 1 }
    );
    out.push(CheckResult {
        name: "node_count".into(),
        passed: nodes.0,
        worst: if nodes.0 { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: format!("j-th Neumann eigenfunction has j-1 sign changes, k <= 3 ({grid_note})"),
        offending: nodes.1,
    });
    out.push(CheckResult {
        name: "simple_spectrum".into(),
        passed: simple.0,
        worst: if simple.0 { 0.0 } else { 1.0 },
        tolerance: 1e3 * config.eig_tol,
        detail: "adjacent eigenvalue gaps exceed 1e3 * eig_tol".into(),
        offending: simple.1,
    });
    out.push(CheckResult {
        name: "rayleigh_consistency".into(),
        passed: rayleigh.0 <= 1e-9,
        worst: rayleigh.0,
        tolerance: 1e-9,
        detail: "max relative |R_k(u) - mu| of the discrete Rayleigh quotient".into(),
        offending: if rayleigh.0 <= 1e-9 { None } else { rayleigh.1 },
    });
    if r1 > 0.0 {
        out.push(CheckResult {
            name: "first_mode_turning_point".into(),
            passed: turning.0 <= 1e-9,
            worst: turning.0,
            tolerance: 1e-9,
            detail: if turning.2.is_empty() {
                "max relative residual of mu_{k,1} = k(k+n-2)/sin_M(b)^2, R1 < b < R2, k = 1..3"
                    .into()
            } else {
                turning.2
            },
            offending: if turning.0 <= 1e-9 { None } else { turning.1 },
        });
        out.push(CheckResult {
            name: "first_mode_increasing".into(),
            passed: increasing.0 > 0.0,
            worst: increasing.0,
            tolerance: 0.0,
            detail: "min forward difference of the positive first eigenfunction, k = 1..3".into(),
            offending: if increasing.0 > 0.0 {
                None
            } else {
                increasing.1
            },
        });
        out.push(CheckResult {
            name: "first_mode_potential_inequality".into(),
            passed: potential.0 >= -1e-10,
            worst: potential.0,
            tolerance: -1e-10,
            detail: "min_r (q(r)-mu)u(r)^2 - (q(R2)-mu)u(R2)^2, k = 1..3".into(),
            offending: if potential.0 >= -1e-10 {
                None
            } else {
                potential.1
            },
        });
    }
    out
}
