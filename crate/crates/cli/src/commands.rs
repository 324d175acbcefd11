use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use sfs_core::domains::{
    matched_first_pair, orthogonality_report, rayleigh_gk, sample_family,
    sum_gradient_identity_check, DomainSpec, FamilyParams, IdentityReport, OrthogonalityReport,
    QuadratureGrid, RayleighBound,
};
use sfs_core::fem2d::{generate_mesh, verify_theorem, FemConfig, TheoremReport, Verdict};
use sfs_core::slsolver::{eigenfunction_csv, extend_gk, solve};
use sfs_core::spectrum::{assemble, certify_lemmas, CertificationReport, SpectrumEntry};
use sfs_core::{BoundaryCondition, SLProblem, SolverConfig, SpaceForm};

use crate::config::{FamilySpec, RunConfig};
use crate::fmt::sig;
use crate::{
    CliError, DomainArgs, MomentCheck, MomentsArgs, Outcome, SlArgs, SpectrumArgs, VerifyArgs,
};

pub const SCHEMA_VERSION: u32 = 1;

const ORTHOGONALITY_TOL: f64 = 1e-10;
const RAYLEIGH_TOL: f64 = 1e-8;
const IDENTITY_TOL: f64 = 1e-9;

fn required<T>(value: Option<T>, command: &'static str, flag: &'static str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Missing {
        command,
        message: format!("the argument '--{flag}' is required (as a flag or in --config)"),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn solver_config(rc: &RunConfig, grid: Option<usize>) -> SolverConfig {
    let mut config = SolverConfig::default();
    if let Some(g) = grid.or(rc.file.grid) {
        config.grid_points = g;
    }
    config
}

#[derive(Serialize)]
struct SlRow {
    j: usize,
    eigenvalue: f64,
    grid_eigenvalue: f64,
    sign_changes: usize,
    near_degenerate: bool,
}

#[derive(Serialize)]
struct SlReport {
    schema_version: u32,
    problem: SLProblem,
    config: SolverConfig,
    eigenpairs: Vec<SlRow>,
}

pub fn sl(rc: &RunConfig, a: SlArgs) -> Result<Outcome, CliError> {
    let f = &rc.file;
    let form = required(a.annulus.form.or(f.form), "sl", "form")?;
    let k = required(a.k.or(f.k), "sl", "k")?;
    let r2 = required(a.annulus.r2.or(f.r2), "sl", "r2")?;
    let n = a.annulus.n.or(f.n).unwrap_or(2);
    let r1 = a.annulus.r1.or(f.r1).unwrap_or(0.0);
    let bc = a.bc.or(f.bc).unwrap_or(BoundaryCondition::Neumann);
    let mut config = solver_config(rc, a.annulus.grid);
    if let Some(j) = a.max_j.or(f.max_j) {
        config.max_j = j;
    }
    let problem = SLProblem::new(form, n, k, r1, r2, bc)?;
    let pairs = solve(&problem, &config)?;

    println!(
        "first eigenvalue ({form}, n = {n}, k = {k}, [{}, {}], {bc}): {}",
        sig(r1),
        sig(r2),
        sig(pairs[0].eigenvalue)
    );
    if !rc.quiet {
        println!(
            "{:>3}  {:>20}  {:>20}  {:>12}",
            "j", "eigenvalue", "grid eigenvalue", "sign changes"
        );
        for p in &pairs {
            println!(
                "{:>3}  {:>20}  {:>20}  {:>12}",
                p.j,
                sig(p.eigenvalue),
                sig(p.grid_eigenvalue),
                p.sign_changes()
            );
        }
    }
    for p in &pairs {
        rc.write(&format!("sl_k{k}_j{}.csv", p.j), &eigenfunction_csv(p))?;
    }
    let report = SlReport {
        schema_version: SCHEMA_VERSION,
        problem,
        config,
        eigenpairs: pairs
            .iter()
            .map(|p| SlRow {
                j: p.j,
                eigenvalue: p.eigenvalue,
                grid_eigenvalue: p.grid_eigenvalue,
                sign_changes: p.sign_changes(),
                near_degenerate: p.near_degenerate,
            })
            .collect(),
    };
    rc.write("sl.json", &to_json(&report))?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct SpectrumReport {
    schema_version: u32,
    form: SpaceForm,
    n: usize,
    r1: f64,
    r2: f64,
    k_max: usize,
    j_max: usize,
    cutoff: f64,
    certified_count: usize,
    entries: Vec<SpectrumEntry>,
    certification: Option<CertificationReport>,
}

pub fn spectrum(rc: &RunConfig, a: SpectrumArgs) -> Result<Outcome, CliError> {
    let f = &rc.file;
    let form = required(a.annulus.form.or(f.form), "spectrum", "form")?;
    let r2 = required(a.annulus.r2.or(f.r2), "spectrum", "r2")?;
    let n = a.annulus.n.or(f.n).unwrap_or(2);
    let r1 = a.annulus.r1.or(f.r1).unwrap_or(0.0);
    let k_max = a.kmax.or(f.kmax).unwrap_or(4);
    let j_max = a.jmax.or(f.jmax).unwrap_or(4);
    let certify = a.certify || f.certify.unwrap_or(false);
    let config = solver_config(rc, a.annulus.grid);

    let s = assemble(form, n, r1, r2, k_max, j_max, &config)?;
    let certified = s.certified_count();
    let shown = a.count.or(f.count).unwrap_or(certified);
    if !rc.quiet {
        println!(
            "{:>4}  {:>20}  {:>3}  {:>3}  {:>5}",
            "i", "mu_i", "k", "j", "mult"
        );
        for i in 1..=shown.min(certified) {
            let e = s.entry_of(i).expect("index within the certified range");
            println!(
                "{i:>4}  {:>20}  {:>3}  {:>3}  {:>5}",
                sig(e.value),
                e.k,
                e.j,
                e.multiplicity
            );
        }
        println!(
            "certified below cutoff {}: {certified} eigenvalues",
            sig(s.cutoff)
        );
    }
    rc.write("spectrum.csv", &s.to_csv())?;

    let report = if certify {
        let report = certify_lemmas(form, n, r1, r2, j_max, &config);
        for c in &report.checks {
            let at = c
                .offending
                .map(|m| format!(", at k = {}, j = {}", m.k, m.j))
                .unwrap_or_default();
            println!(
                "{}: {} (worst {}, tolerance {}{at}) {}",
                c.name,
                pass_fail(c.passed),
                sig(c.worst),
                sig(c.tolerance),
                c.detail
            );
        }
        Some(report)
    } else {
        None
    };
    let passed = report.as_ref().is_none_or(|r| r.all_passed());
    let json = SpectrumReport {
        schema_version: SCHEMA_VERSION,
        form,
        n,
        r1,
        r2,
        k_max,
        j_max,
        cutoff: s.cutoff,
        certified_count: certified,
        entries: s.entries.clone(),
        certification: report,
    };
    rc.write("spectrum.json", &to_json(&json))?;
    if shown > certified {
        eprintln!(
            "warning: only {certified} eigenvalues are certified below the cutoff {}; raise --kmax or --jmax",
            sig(s.cutoff)
        );
        s.require(shown)?;
    }
    Ok(if passed { Outcome::Pass } else { Outcome::Fail })
}

#[derive(Debug, Clone, Serialize)]
struct FamilyRecord {
    params: FamilyParams,
    count: usize,
    seed: u64,
}

struct Domain {
    source: String,
    spec: DomainSpec,
}

fn collect_domains(
    rc: &RunConfig,
    a: &DomainArgs,
    n: usize,
    command: &'static str,
) -> Result<(Vec<Domain>, Option<FamilyRecord>), CliError> {
    let f = &rc.file;
    let mut domains = Vec::new();
    let paths: Vec<PathBuf> = if a.specs.is_empty() {
        f.specs.clone().unwrap_or_default()
    } else {
        a.specs.clone()
    };
    for path in paths {
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let spec = DomainSpec::from_json(&text)?;
        domains.push(Domain {
            source: path.display().to_string(),
            spec,
        });
    }
    let mut record = None;
    if let Some(text) = a.random_family.clone().or(f.random_family.clone()) {
        let family = FamilySpec::parse(&text)?;
        let hole = if a.no_hole {
            None
        } else {
            a.hole.or(family.hole).or(f.hole)
        };
        let params = FamilyParams {
            form: a.form.or(f.form).unwrap_or(SpaceForm::Euclidean),
            n,
            symmetry: family.symmetry,
            base_in: hole,
            base_out: a.base_out.or(family.base_out).or(f.base_out).unwrap_or(1.0),
            amplitude: family.amplitude,
        };
        let specs = sample_family(&params, family.count, rc.seed)?;
        for (i, spec) in specs.into_iter().enumerate() {
            domains.push(Domain {
                source: format!("family:{}", i + 1),
                spec,
            });
        }
        record = Some(FamilyRecord {
            params,
            count: family.count,
            seed: rc.seed,
        });
    }
    if domains.is_empty() {
        return Err(CliError::Missing {
            command,
            message: "give DomainSpec paths or --random-family".into(),
        });
    }
    Ok((domains, record))
}

#[derive(Serialize)]
struct VerifyEntry {
    source: String,
    spec: DomainSpec,
    report: TheoremReport,
}

#[derive(Serialize)]
struct VerifyReport {
    schema_version: u32,
    family: Option<FamilyRecord>,
    fem: FemConfig,
    domains: Vec<VerifyEntry>,
    passed: usize,
    total: usize,
}

pub fn verify(rc: &RunConfig, a: VerifyArgs) -> Result<Outcome, CliError> {
    let (domains, family) = collect_domains(rc, &a.domains, 2, "verify")?;
    let mut fem = FemConfig::default();
    if let Some(levels) = a.levels.or(rc.file.levels) {
        fem.level_count = levels;
    }
    let sl = solver_config(rc, None);
    let dump_mesh = a.dump_mesh || rc.file.dump_mesh.unwrap_or(false);
    let total = domains.len();
    let mut entries = Vec::with_capacity(total);
    for (i, d) in domains.into_iter().enumerate() {
        let report = verify_theorem(&d.spec, &fem, &sl)?;
        let margins: Vec<String> = report
            .comparisons
            .iter()
            .map(|c| format!("{} margin {}", c.name, sig(c.relative_margin)))
            .collect();
        println!(
            "domain {}/{total} {} ({}, {}, {}): {}  {}  tau {}",
            i + 1,
            report.spec_hash,
            d.source,
            d.spec.form,
            d.spec.symmetry_order,
            if report.verdict == Verdict::Pass {
                "PASS"
            } else {
                "FAIL"
            },
            margins.join("  "),
            sig(report.tau)
        );
        if rc.verbosity > 0 {
            for l in &report.levels {
                println!(
                    "    level {} h {} unknowns {} mu_2 {} max residual {}",
                    l.level,
                    sig(l.h),
                    l.unknowns,
                    sig(l.eigenvalues[1]),
                    sig(l.max_residual)
                );
            }
            println!(
                "    annulus [{}, {}] mu_2 {}",
                sig(report.r1),
                sig(report.r2),
                sig(report.annulus_mu2)
            );
        }
        rc.write(
            &format!("convergence_{}.dat", report.spec_hash),
            &convergence_dat(&report),
        )?;
        if dump_mesh {
            let finest = report.levels.last().expect("at least one level").level;
            let mesh = generate_mesh(&d.spec, finest, &fem)?;
            rc.write(
                &format!("mesh_{}_vertices.csv", report.spec_hash),
                &mesh.vertices_csv(),
            )?;
            rc.write(
                &format!("mesh_{}_triangles.csv", report.spec_hash),
                &mesh.triangles_csv(),
            )?;
        }
        entries.push(VerifyEntry {
            source: d.source,
            spec: d.spec,
            report,
        });
    }
    let passed = entries
        .iter()
        .filter(|e| e.report.verdict == Verdict::Pass)
        .count();
    println!("{passed}/{total} PASS");
    let json = VerifyReport {
        schema_version: SCHEMA_VERSION,
        family,
        fem,
        domains: entries,
        passed,
        total,
    };
    rc.write("verify.json", &to_json(&json))?;
    Ok(if passed == total {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn convergence_dat(report: &TheoremReport) -> String {
    let m = report.levels.last().map_or(0, |l| l.eigenvalues.len());
    let header: Vec<String> = (1..=m).map(|i| format!("mu_{i}")).collect();
    let mut out = format!("# h {}\n", header.join(" "));
    for l in &report.levels {
        let vals: Vec<String> = l.eigenvalues.iter().map(|v| format!("{v:.12e}")).collect();
        out.push_str(&format!("{:.12e} {}\n", l.h, vals.join(" ")));
    }
    out
}

#[derive(Serialize)]
struct MomentsEntry {
    source: String,
    spec_hash: String,
    orthogonality: Option<OrthogonalityReport>,
    rayleigh: Vec<RayleighBound>,
    identity: Option<IdentityReport>,
    passed: bool,
}

#[derive(Serialize)]
struct MomentsReport {
    schema_version: u32,
    family: Option<FamilyRecord>,
    orthogonality_tolerance: f64,
    rayleigh_tolerance: f64,
    identity_tolerance: f64,
    domains: Vec<MomentsEntry>,
}

pub fn moments(rc: &RunConfig, a: MomentsArgs) -> Result<Outcome, CliError> {
    let f = &rc.file;
    let n = a.n.or(f.n).unwrap_or(2);
    let check = match (a.check, f.check.as_deref()) {
        (Some(c), _) => c,
        (None, None) => MomentCheck::All,
        (None, Some(name)) => clap::ValueEnum::from_str(name, true)
            .map_err(|_| CliError::Input(format!("unknown check '{name}'")))?,
    };
    let max_m = a.max_m.or(f.max_m).unwrap_or(3);
    let k_max = a.kmax.or(f.kmax).unwrap_or(3);
    let (domains, family) = collect_domains(rc, &a.domains, n, "moments")?;
    let grid = QuadratureGrid::default();
    let config = solver_config(rc, None);
    let wants = |c: MomentCheck| check == MomentCheck::All || check == c;

    let mut entries = Vec::new();
    for (i, d) in domains.iter().enumerate() {
        let label = format!("domain {} ({})", i + 1, d.source);
        let mut passed = true;
        let first = matched_first_pair(&d.spec, &grid, 1, None, &config)?;
        let g = extend_gk(&first, d.spec.sup_rho_out().max(first.problem.r2))?;

        let orthogonality = if wants(MomentCheck::Orthogonality) {
            let report = orthogonality_report(&d.spec, &grid, &g, max_m);
            let ok = report.passed(ORTHOGONALITY_TOL);
            passed &= ok;
            let required = report.checks.iter().filter(|c| c.required).count();
            println!(
                "{label}: orthogonality {} (max required {}, tolerance {}, {required} required of {} integrals)",
                pass_fail(ok),
                sig(report.max_required()),
                sig(ORTHOGONALITY_TOL),
                report.checks.len()
            );
            Some(report)
        } else {
            None
        };

        let mut rayleigh = Vec::new();
        if wants(MomentCheck::Rayleigh) {
            for k in 1..=k_max {
                let pair = if k == 1 {
                    first.clone()
                } else {
                    matched_first_pair(&d.spec, &grid, k, None, &config)?
                };
                let bound = rayleigh_gk(&d.spec, &grid, &pair)?;
                let ok = bound.quotient <= bound.mu * (1.0 + RAYLEIGH_TOL);
                passed &= ok;
                println!(
                    "{label}: rayleigh k = {k} {} (quotient {}, mu {}, margin {})",
                    pass_fail(ok),
                    sig(bound.quotient),
                    sig(bound.mu),
                    sig(bound.relative_margin())
                );
                rayleigh.push(bound);
            }
        }

        let identity = if wants(MomentCheck::Identity) {
            let report = sum_gradient_identity_check(&d.spec, &grid, &g);
            let ok = report.max_residual <= IDENTITY_TOL;
            passed &= ok;
            println!(
                "{label}: identity {} (max residual {}, {} nodes)",
                pass_fail(ok),
                sig(report.max_residual),
                report.nodes
            );
            Some(report)
        } else {
            None
        };

        entries.push(MomentsEntry {
            source: d.source.clone(),
            spec_hash: d.spec.spec_hash(),
            orthogonality,
            rayleigh,
            identity,
            passed,
        });
    }
    let all = entries.iter().all(|e| e.passed);
    let json = MomentsReport {
        schema_version: SCHEMA_VERSION,
        family,
        orthogonality_tolerance: ORTHOGONALITY_TOL,
        rayleigh_tolerance: RAYLEIGH_TOL,
        identity_tolerance: IDENTITY_TOL,
        domains: entries,
    };
    rc.write("moments.json", &to_json(&json))?;
    Ok(if all { Outcome::Pass } else { Outcome::Fail })
}
