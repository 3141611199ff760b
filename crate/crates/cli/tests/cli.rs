use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BROWNIAN: &str = r#"
seed = 5

[model]
kind = "brownian"
dim = 1

[solver]
horizon = 1.0
dt = 0.03125
particles = 400
"#;

fn levymv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levymv"))
        .args(args)
        .env_remove("LEVYMV_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("c.toml");
    std::fs::write(&p, body).unwrap();
    p
}

/// Rows of a CSV output file, header comments removed.
fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| split_csv(l))
        .collect()
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut quoted = false;
    for c in line.chars() {
        match c {
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(String::new()),
            _ => out.last_mut().unwrap().push(c),
        }
    }
    out
}

fn run_in(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir, config);
    let out = dir.join(format!("out-{cmd}"));
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (levymv(&args), out)
}

#[test]
fn admissible_row_reports_the_gamma_window() {
    let tmp = tempfile::tempdir().unwrap();
    let config = format!("{BROWNIAN}\n[admissible]\nalpha = [2.0]\nd = [1]\np = [4.0]\nq = [4.0]\n");
    let (o, out) = run_in(tmp.path(), "admissible", &config, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("admissible.csv"));
    assert_eq!(table.len(), 2);
    assert_eq!(table[1].last().unwrap(), "admissible, γ∈(1.25,1.5)");
    // p = 2 closes the window for alpha = 1.5, d = 1
    let (o, out) = run_in(
        tmp.path(),
        "admissible",
        BROWNIAN,
        &["--set", "admissible.alpha=[1.5]", "--set", "admissible.p=[2.0]", "--set", "admissible.q=[8.0]"],
    );
    assert!(o.status.success());
    assert_eq!(rows(&out.join("admissible.csv"))[1].last().unwrap(), "inadmissible");
}

#[test]
fn every_output_starts_with_the_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_in(tmp.path(), "admissible", BROWNIAN, &["--seed", "77"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("admissible.csv")).unwrap();
    let header: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(header[0].starts_with("# levymv "));
    assert!(header.contains(&"# seed = 77"));
    assert!(header.contains(&"# particles = 400"));
    // defaults are echoed too
    assert!(header.iter().any(|l| l.starts_with("# tol = ")));
    // and the echo is valid TOML describing the same experiment
    let body: String = header[3..]
        .iter()
        .map(|l| format!("{}\n", l.trim_start_matches('#').trim_start()))
        .collect();
    let table: toml::Table = toml::from_str(&body).unwrap();
    assert_eq!(table["seed"].as_integer(), Some(77));
}

#[test]
fn drift_free_simulation_emits_a_ks_pass_column() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_in(tmp.path(), "simulate", BROWNIAN, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ks = rows(&out.join("ks.csv"));
    assert_eq!(ks[0], ["t", "statistic", "p_value", "level", "pass"]);
    assert_eq!(ks.len(), 1 + 8);
    assert!(ks[1..].iter().all(|r| r[4] == "PASS"));
    let ens = rows(&out.join("ensemble.csv"));
    assert_eq!(ens[0], ["t", "particle", "x0"]);
    // 9 recorded nodes of 400 particles
    assert_eq!(ens.len(), 1 + 9 * 400);
    assert!(ens[1..401].iter().all(|r| r[2] == "0.0000000000000000e0"));
    // drifts other than zero skip the check
    let other = tempfile::tempdir().unwrap();
    let (o, out) = run_in(
        other.path(),
        "simulate",
        &format!("{BROWNIAN}\n[drift]\nkind = \"mean_reverting\"\nrate = 1.0\n"),
        &[],
    );
    assert!(o.status.success());
    assert!(!out.join("ks.csv").exists());
}

#[test]
fn brownian_gradient_probe_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let config = format!("{BROWNIAN}\n[probe]\nchecks = [\"gradient\"]\np = [2.0]\norders = [1]\n");
    let (o, out) = run_in(tmp.path(), "kernel-probe", &config, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("kernel_probe.csv"));
    assert_eq!(table.len(), 2);
    let slope: f64 = table[1][3].parse().unwrap();
    assert!((slope + 0.5).abs() < 0.05, "{slope}");
    assert_eq!(table[1][6], "PASS");
    let series = rows(&out.join("kernel_probe_series.csv"));
    assert_eq!(series.len(), 1 + 9);
}

#[test]
fn picard_writes_summary_and_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let config = format!("{BROWNIAN}\n[drift]\nkind = \"mean_reverting\"\nrate = 1.0\n\n[init]\nkind = \"normal\"\nmean = 1.0\nsd = 0.5\n");
    let (o, out) = run_in(tmp.path(), "picard", &config, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: toml::Table = toml::from_str(&std::fs::read_to_string(out.join("picard_summary.toml")).unwrap()).unwrap();
    assert_eq!(summary["status"].as_str(), Some("converged"));
    let solves = summary["solves"].as_integer().unwrap() as usize;
    assert_eq!(rows(&out.join("picard_gaps.csv")).len(), 1 + solves);
}

#[test]
fn exit_status_classifies_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let status = |o: &Output| o.status.code().unwrap();
    // unknown key, with a line-precise message
    let (o, _) = run_in(tmp.path(), "simulate", &format!("{BROWNIAN}\nbogus = 1\n"), &[]);
    assert_eq!(status(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown field `bogus`") && err.contains("line"), "{err}");
    // out-of-range model parameter is reported by the module that rejects it
    let (o, _) = run_in(
        tmp.path(),
        "simulate",
        &BROWNIAN.replace("kind = \"brownian\"", "kind = \"isotropic_stable\"\nalpha = 2.5"),
        &[],
    );
    assert_eq!(status(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("levy_model: invalid model"));
    // Picard needs a Lipschitz drift
    let (o, _) = run_in(
        tmp.path(),
        "picard",
        &format!("{BROWNIAN}\n[drift]\nkind = \"sign\"\nscale = 1.0\n"),
        &[],
    );
    assert_eq!(status(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver: invalid argument"));
    // a probe whose slope misses its bound: the L^2-critical profile is not in L^4
    let (o, _) = run_in(
        tmp.path(),
        "kernel-probe",
        BROWNIAN,
        &["--set", "probe.checks=[\"continuity\"]", "--set", "probe.profile_p=[4.0]", "--set", "probe.theta=[1.0]"],
    );
    assert_eq!(status(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    // an exploding linear drift overflows the Euler scheme
    let (o, _) = run_in(
        tmp.path(),
        "simulate",
        &format!("{BROWNIAN}\n[drift]\nkind = \"linear\"\nmatrix = [[1e300]]\noffset = [0.0]\n"),
        &[],
    );
    assert_eq!(status(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver: numerical failure"));
    let (o, _) = run_in(tmp.path(), "simulate", BROWNIAN, &["--set", "solver.dt=-1"]);
    assert_eq!(status(&o), 2);
    let missing = levymv(&["admissible", "--config", "/nonexistent/levymv.toml"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn overrides_apply_in_order_and_parse_as_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_in(
        tmp.path(),
        "admissible",
        BROWNIAN,
        &["--set", "admissible.p=[3.0]", "--set", "admissible.p=[inf]", "--set", "admissible.d=[2]"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("admissible.csv"));
    assert!(table[1..].iter().all(|r| r[1] == "2" && r[2] == "inf"));
    let (o, _) = run_in(tmp.path(), "admissible", BROWNIAN, &["--set", "noequals"]);
    assert_eq!(o.status.code(), Some(2));
}
