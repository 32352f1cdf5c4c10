use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lamestab"))
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    let text = format!("out_dir = out\nh = 0.25\nsscale_h = 0.5\nfocus_h = 0.05\nkernel_nu = 4\nkernel_gamma = 4\n{extra}");
    fs::write(&path, text).unwrap();
    path
}

fn run(dir: &Path, suite: &str, extra: &str) -> (i32, String) {
    let cfg = write_config(dir, extra);
    let out = bin().arg(suite).arg("-c").arg(&cfg).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn validate_suite_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(dir.path(), "validate", "");
    assert_eq!(code, 0, "{err}");
    let txt = fs::read_to_string(dir.path().join("out/validate.txt")).unwrap();
    assert!(!txt.is_empty());
    let csv = fs::read_to_string(dir.path().join("out/validate.csv")).unwrap();
    assert!(csv.starts_with("suite,mesh_h,solver_tol"));
}

#[test]
fn kernels_table_has_nonnegative_c() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(dir.path(), "kernels", "");
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("out/kernels.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let ci = header.iter().position(|h| *h == "C").unwrap();
    let mut rows = 0;
    for line in lines.take_while(|l| !l.is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != header.len() {
            break;
        }
        let c: f64 = cols[ci].parse().unwrap();
        assert!(c >= -1e-12, "{line}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn dtn_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, err) = run(d.path(), "dtn", "");
        assert_eq!(code, 0, "{err}");
    }
    let ca = fs::read(a.path().join("out/dtn.csv")).unwrap();
    let cb = fs::read(b.path().join("out/dtn.csv")).unwrap();
    assert!(!ca.is_empty());
    assert_eq!(ca, cb);
}

#[test]
fn stability_sweep_is_deterministic_across_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (code, err) = run(a.path(), "stability", "workers = 1\n");
    assert_eq!(code, 0, "{err}");
    let (code, err) = run(b.path(), "stability", "workers = 2\n");
    assert_eq!(code, 0, "{err}");
    let ca = fs::read_to_string(a.path().join("out/stability.csv")).unwrap();
    let cb = fs::read_to_string(b.path().join("out/stability.csv")).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(ca.lines().count(), 4);
}

#[test]
fn zero_amplitude_is_a_degenerate_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(dir.path(), "stability", "amplitudes = 0\n");
    assert_eq!(code, 0, "{err}");
}

#[test]
fn sderiv_slope_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(dir.path(), "sderiv", "");
    assert_eq!(code, 0, "{err}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/sderiv.json")).unwrap())
            .unwrap();
    assert!(json["distributed"].as_f64().unwrap().is_finite());
    let csv = fs::read_to_string(dir.path().join("out/sderiv_fd.csv")).unwrap();
    let slopes: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter_map(|l| l.rsplit(',').next()?.parse().ok())
        .collect();
    assert!(!slopes.is_empty());
    for s in slopes {
        assert!((1.7..=2.3).contains(&s), "slope {s}");
    }
}

#[test]
fn non_monotone_pair_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(
        dir.path(),
        "stability",
        "interior_lambda = 3\ninterior_mu = 0.5\n",
    );
    assert_eq!(code, 2, "{err}");
}

#[test]
fn unknown_suite_and_bad_config_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(dir.path(), "nonsense", "");
    assert_eq!(code, 2);
    let (code, err) = run(dir.path(), "validate", "no_such_key = 1\n");
    assert_eq!(code, 2);
    assert!(err.contains("no_such_key"));
    let (code, _) = run(dir.path(), "validate", "amplitudes = 0.5\n");
    assert_eq!(code, 2);
}
