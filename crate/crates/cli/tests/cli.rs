use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_laplace-cauchy");

const SQUARE: &str = "[domain]\ndim = 2\nbase = interval\nlo = 0\nhi = 1\nbottom = 0\ntop = 1\n";

fn solve(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("solve")
        .arg(config)
        .args(args)
        .env_remove("LAPLACE_CAUCHY_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn trace_check(threshold: &str) -> String {
    format!("experiment = trace-check\n{SQUARE}[data]\noracle = re_z2\n[run]\ntrace_point = 0.4\nthreshold = {threshold}\n")
}

#[test]
fn trace_check_passes_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.ini", &trace_check("1e-10"));
    let out = dir.path().join("out");
    let o = solve(&cfg, &["--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("PASS"));
    let csv = fs::read_to_string(out.join("trace-check.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config-hash: "));
    assert_eq!(lines.next().unwrap(), "y,re_u,im_u,oracle_re,oracle_im,abs_error,status");
    assert_eq!(lines.count(), 33);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "trace-check");
    assert_eq!(json["passed"], true);
}

#[test]
fn missed_threshold_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.ini", &trace_check("1e-300"));
    let o = solve(&cfg, &["--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_oracle_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.ini", &trace_check("1e-10").replace("re_z2", "re_z9"));
    let o = solve(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("data.oracle"), "{err}");
    assert!(err.contains("line 10"), "{err}");
}

#[test]
fn usage_and_io_errors() {
    let o = Command::new(BIN).arg("solve").arg("/no/such/config.ini").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.ini", &trace_check("1e-10"));
    let o = solve(&cfg, &["--experiment", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.ini",
        &format!("experiment = reconstruct\n{SQUARE}[data]\ncsv = missing.csv\n[run]\npoints = 0.5,0.5\n"),
    );
    let o = solve(&cfg, &["--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("missing.csv"));
}

#[test]
fn overrides_and_output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "experiment = reconstruct\nseed = 3\n{SQUARE}[data]\noracle = re_z2\n[params]\nschedule = 1,2,4\n[run]\npoints = 0.5,0.7\nthreshold = 0.5\n[output]\ndir = from_config\nformats = csv\n"
    );
    let cfg = write_config(dir.path(), "r.ini", &text);

    // The config's own directory wins over the environment.
    let o = Command::new(BIN)
        .current_dir(dir.path())
        .args(["solve", "r.ini", "--experiment", "convergence"])
        .env("LAPLACE_CAUCHY_OUT_DIR", dir.path().join("from_env"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("from_config/convergence.csv").exists());
    assert!(!dir.path().join("from_config/summary.json").exists());

    // Without one the environment decides.
    let cfg2 = write_config(dir.path(), "r2.ini", &text.replace("dir = from_config\n", ""));
    let o = Command::new(BIN)
        .arg("solve")
        .arg(&cfg2)
        .env("LAPLACE_CAUCHY_OUT_DIR", dir.path().join("from_env"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from_env/reconstruct.csv").exists());

    // The seed enters the config hash, the output directory does not.
    let hash = |p: &Path| fs::read_to_string(p).unwrap().lines().next().unwrap().to_string();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    solve(&cfg, &["--out-dir", a.to_str().unwrap()]);
    solve(&cfg, &["--out-dir", b.to_str().unwrap(), "--seed", "4"]);
    assert_ne!(hash(&a.join("reconstruct.csv")), hash(&b.join("reconstruct.csv")));
    solve(&cfg, &["--out-dir", b.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(hash(&a.join("reconstruct.csv")), hash(&b.join("reconstruct.csv")));
}

#[test]
fn sampled_data_from_a_relative_csv_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x1,x2,u0,u1\n");
    for i in 0..=40 {
        let x = i as f64 / 40.0;
        csv.push_str(&format!("{x},1,{},-2\n", x * x - 1.0));
    }
    fs::create_dir(dir.path().join("data")).unwrap();
    fs::write(dir.path().join("data/re_z2.csv"), csv).unwrap();
    let cfg = write_config(
        dir.path(),
        "r.ini",
        &format!(
            "experiment = reconstruct\n{SQUARE}[data]\ncsv = data/re_z2.csv\n[params]\nschedule = 1,2,4,8\n[run]\npoints = 0.5,0.8\n"
        ),
    );
    let out = dir.path().join("o");
    let o = solve(&cfg, &["--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let v = json["results"][0]["value"].as_f64().unwrap();
    // u = x1^2 - x2^2 at (0.5, 0.8)
    assert!((v - (0.25 - 0.64)).abs() < 1e-2, "{v}");
}

#[test]
fn field_records_failures_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.ini",
        &format!(
            "experiment = field\n{SQUARE}[data]\noracle = const1\n[params]\nschedule = 1,2,4,8\n[run]\naxes = 0.5; 0.7,1.5\n"
        ),
    );
    let out = dir.path().join("o");
    let o = solve(&cfg, &["--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("field.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with(",ok"));
    assert!(rows[1].contains("not strictly inside"), "{}", rows[1]);
}
