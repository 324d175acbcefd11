use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sfs(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfs"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("SFS_THREADS")
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn last_number(line: &str) -> f64 {
    line.split_whitespace().last().unwrap().parse().unwrap()
}

#[test]
fn sl_hemisphere_first_line_is_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "sl",
            "--form",
            "spherical",
            "--n",
            "2",
            "--k",
            "1",
            "--r1",
            "0",
            "--r2",
            "1.5707963",
            "--bc",
            "neumann",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert!((last_number(&first) - 2.0).abs() < 1e-5, "{first}");
    assert!(dir.path().join("sl.json").exists());
    let csv = std::fs::read_to_string(dir.path().join("sl_k1_j1.csv")).unwrap();
    assert!(csv.starts_with("r,u\n"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sl.json")).unwrap())
            .unwrap();
    assert_eq!(json["schema_version"], 1);
}

#[test]
fn sl_constant_mode_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "sl",
            "--form",
            "euclidean",
            "--n",
            "2",
            "--k",
            "0",
            "--r1",
            "1",
            "--r2",
            "2",
            "--bc",
            "neumann",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert!(last_number(&first).abs() < 1e-10, "{first}");
}

#[test]
fn sl_missing_r2_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "sl",
            "--form",
            "euclidean",
            "--n",
            "2",
            "--k",
            "0",
            "--r1",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--r2"));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_space_form_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &["sl", "--form", "toroidal", "--k", "1", "--r2", "1"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sl_radius_outside_the_space_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "sl",
            "--form",
            "spherical",
            "--k",
            "1",
            "--r1",
            "0.5",
            "--r2",
            "3.5",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"form": "spherical", "k": 1, "r2": 1.0, "grid_points": 128}"#,
    )
    .unwrap();
    let o = sfs(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "sl",
            "--grid",
            "256",
            "-q",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sl.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["grid_points"], 256);
    assert_eq!(json["problem"]["form"], "spherical");
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"form": "spherical", "radius": 1.0}"#).unwrap();
    let o = sfs(dir.path(), &["--config", cfg.to_str().unwrap(), "sl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("radius"));
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "--threads",
            "0",
            "sl",
            "--form",
            "euclidean",
            "--k",
            "1",
            "--r2",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_lists_the_double_first_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "spectrum",
            "--form",
            "euclidean",
            "--n",
            "2",
            "--r1",
            "1",
            "--r2",
            "2",
            "--count",
            "5",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .take(5)
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert_eq!(rows[1][0], "2");
    assert_eq!(rows[2][0], "3");
    assert_eq!(rows[1][1..], rows[2][1..]);
    assert_eq!(rows[1][2..4], ["1", "1"]);
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("i,value,k,j,multiplicity\n"));
}

#[test]
fn spectrum_cutoff_too_low_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "spectrum",
            "--form",
            "euclidean",
            "--r1",
            "1",
            "--r2",
            "2",
            "--kmax",
            "1",
            "--count",
            "12",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("cutoff"));
}

#[test]
fn spectrum_certification_passes_on_hyperbolic_annulus() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "spectrum",
            "--form",
            "hyperbolic",
            "--n",
            "2",
            "--r1",
            "0.5",
            "--r2",
            "1.5",
            "--certify",
            "-q",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("neumann_k0_shift_equals_dirichlet_k1: PASS (worst "));
    assert!(!text.contains("FAIL"));
}

#[test]
fn verify_exact_annulus_is_the_equality_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(dir.path(), &["verify", &data("exact_annulus.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap())
            .unwrap();
    let report = &json["domains"][0]["report"];
    assert_eq!(report["verdict"], "PASS");
    let margin = report["comparisons"][0]["relative_margin"]
        .as_f64()
        .unwrap();
    assert!(margin.abs() < 1e-6, "{margin}");
}

#[test]
fn verify_rejects_specs_beyond_the_hemisphere() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(dir.path(), &["verify", &data("beyond_hemisphere.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hemisphere"));
}

#[test]
fn verify_rejects_inconsistent_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(dir.path(), &["verify", &data("wrong_symmetry.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("symmetry"));
}

#[test]
fn verify_needs_some_domain() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(dir.path(), &["verify"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_single_coarse_level_fails_and_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &["verify", &data("exact_annulus.json"), "--levels", "1"],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn verify_random_family_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--seed",
        "11",
        "verify",
        "--random-family",
        "s=4 count=2 amplitude=0.1",
        "--form",
        "hyperbolic",
        "--hole",
        "0.4",
    ];
    let first = sfs(a.path(), &[&["--threads", "1"][..], &args[..]].concat());
    assert_eq!(first.status.code(), Some(0), "{}", stdout(&first));
    let second = Command::new(env!("CARGO_BIN_EXE_sfs"))
        .arg("--out")
        .arg(b.path())
        .args(args)
        .env("SFS_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(second.status.code(), Some(0));
    let ja = std::fs::read(a.path().join("verify.json")).unwrap();
    let jb = std::fs::read(b.path().join("verify.json")).unwrap();
    assert_eq!(ja, jb);
    assert!(stdout(&first).contains("2/2 PASS"));
}

#[test]
fn verify_dumps_meshes_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "verify",
            &data("squarish.json"),
            "--dump-mesh",
            "--levels",
            "2",
        ],
    );
    assert!(
        matches!(o.status.code(), Some(0) | Some(4)),
        "{}",
        stderr(&o)
    );
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n.ends_with("_vertices.csv")));
    assert!(names.iter().any(|n| n.ends_with("_triangles.csv")));
    assert!(names.iter().any(|n| n.starts_with("convergence_")));
}

#[test]
fn moments_checks_pass_on_symmetric_domains() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "moments",
            &data("squarish.json"),
            &data("exact_annulus.json"),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("orthogonality PASS"));
    assert!(text.contains("rayleigh k = 3 PASS"));
    assert!(text.contains("identity PASS"));
}

#[test]
fn moments_random_family_in_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfs(
        dir.path(),
        &[
            "moments",
            "--random-family",
            "s=2 count=2 amplitude=0.05",
            "--n",
            "3",
            "--hole",
            "0.5",
            "--check",
            "orthogonality",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("orthogonality PASS").count(), 2);
}
