use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nbconc::bounds::chernoff_mean_deviation_bound;
use nbconc::distributions::NBParams;
use serde_json::Value;

fn nbconc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbconc"))
        .args(args)
        .env_remove("NBCONC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn reference_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference.toml")
}

#[test]
fn chernoff_round_trips_library_value() {
    let out = json(&nbconc(&[
        "bound",
        "chernoff",
        "--params",
        "3:0.3,5:0.5,8:0.7",
        "--a",
        "2",
    ]));
    let params = [(3.0, 0.3), (5.0, 0.5), (8.0, 0.7)].map(|(r, p)| NBParams::new(r, p).unwrap());
    let lib = chernoff_mean_deviation_bound(&params, 2.0).unwrap();
    assert_eq!(
        out["bound_value"].as_f64().unwrap().to_bits(),
        lib.bound_value.to_bits()
    );
    assert_eq!(
        out["optimizer"]["t_star"].as_f64().unwrap().to_bits(),
        lib.optimizer.unwrap().t_star.to_bits()
    );
    assert_eq!(out["threshold"], 2.0);
}

#[test]
fn dependent_kolmogorov_at_reference_threshold() {
    let out = json(&nbconc(&[
        "bound",
        "kolmogorov-dep",
        "--shape",
        "4",
        "--rate",
        "4",
        "--thetas",
        "@design",
        "--lambda",
        "476.52",
    ]));
    let b = out["bound_value"].as_f64().unwrap();
    assert!((b - 0.05).abs() < 1e-4, "{b}");
    let c = &out["components"];
    let sum = c["cond_term"].as_f64().unwrap() + c["mix_term"].as_f64().unwrap();
    assert_eq!(sum, out["raw_bound"].as_f64().unwrap());
}

#[test]
fn inversion_via_alpha() {
    let out = json(&nbconc(&[
        "bound",
        "kolmogorov-indep",
        "--params",
        "@design",
        "--alpha",
        "0.05",
    ]));
    let lambda = out["threshold"].as_f64().unwrap();
    assert!((lambda - 72.49).abs() < 0.01, "{lambda}");
}

#[test]
fn bernstein_clamps_to_one() {
    let out = json(&nbconc(&[
        "bound",
        "bernstein",
        "--shape",
        "4",
        "--rate",
        "4",
        "--thetas",
        "1,2,3",
        "--lambda",
        "0.0001",
    ]));
    assert_eq!(out["bound_value"], 1.0);
    assert!(out["raw_bound"].as_f64().unwrap() > 1.0);
}

#[test]
fn delimited_bound_has_header_and_row() {
    let out = nbconc(&[
        "bound",
        "kolmogorov-indep",
        "--params",
        "2:0.5",
        "--lambda",
        "2",
        "--format",
        "delimited",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "threshold,bound_value,raw_bound,cond_term,mix_term,t_star,iterations,converged"
    );
    // Var NB(2, 0.5) = 4, so the bound is 4 / 2² = 1
    assert!(lines[1].starts_with("2.0,1.0,1.0,"));
}

#[test]
fn usage_and_domain_errors() {
    assert_eq!(
        nbconc(&["bound", "chernoff", "--a", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        nbconc(&[
            "bound",
            "kolmogorov-indep",
            "--params",
            "1:0.5",
            "--lambda",
            "1",
            "--alpha",
            "0.1"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(nbconc(&["no-such-command"]).status.code(), Some(2));

    let out = nbconc(&["bound", "chernoff", "--params", "3:1.5", "--a", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p must lie in (0, 1)"));

    let out = nbconc(&["bound", "chernoff", "--params", "3:0.5", "--a", "-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn limit_from_reference_scenario() {
    let scenario = reference_scenario();
    let out = json(&nbconc(&[
        "limit",
        "--scenario",
        scenario.to_str().unwrap(),
    ]));
    assert_eq!(out["v_n"], 2_028_900.0);
    let limits = out["limits"].as_array().unwrap();
    let l05 = limits[0]["lambda"].as_f64().unwrap();
    let l01 = limits[1]["lambda"].as_f64().unwrap();
    assert!((l05 - 6370.0).abs() <= 1.0);
    assert!((l01 - 14244.0).abs() <= 1.0);
}

#[test]
fn limit_near_one_is_root_variance() {
    let out = json(&nbconc(&[
        "limit",
        "--nb2",
        "10:0.5,4:0",
        "--weeks",
        "3",
        "--alpha",
        "0.999999999",
    ]));
    let v = out["v_n"].as_f64().unwrap();
    assert_eq!(v, 3.0 * (10.0 + 50.0 + 4.0));
    let l = out["limits"][0]["lambda"].as_f64().unwrap();
    assert!((l / v.sqrt() - 1.0).abs() < 1e-8);
}

#[test]
fn limit_rejects_empty_regions() {
    assert_eq!(
        nbconc(&["limit", "--nb2", "", "--alpha", "0.05"])
            .status
            .code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    fs::write(&path, "weeks = 4\nalpha_levels = [0.05]\nregions = []\n").unwrap();
    assert_eq!(
        nbconc(&["limit", "--scenario", path.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

/// One Poisson region with weekly mean 50 over two weeks: V_n = 100, so at
/// alpha 0.25 the limit is sqrt(100 / 0.25) = 20 exactly.
fn boundary_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("one.toml");
    fs::write(
        &path,
        "weeks = 2\nalpha_levels = [0.25]\n\n[[regions]]\nname = \"north\"\nweekly_mu = 50.0\nkappa = 0.0\n",
    )
    .unwrap();
    path
}

fn monitor(scenario: &Path, counts: &str, dir: &Path) -> (Output, PathBuf) {
    let counts_path = dir.join("counts.csv");
    fs::write(&counts_path, counts).unwrap();
    let out_path = dir.join("history.csv");
    let out = nbconc(&[
        "monitor",
        "--scenario",
        scenario.to_str().unwrap(),
        "--counts",
        counts_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    (out, out_path)
}

#[test]
fn monitor_counts_at_means_do_not_alarm() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = reference_scenario();
    let header = "region1,region2,region3,region4,region5\n";
    let row = "210,340,290,480,380\n";
    let counts = format!("{header}{}", row.repeat(12));
    let (out, history) = monitor(&scenario, &counts, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(history).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "period,S_t,lambda_alpha,alarm");
    assert_eq!(lines.len(), 13);
    assert!(lines[1..].iter().all(|l| l.ends_with(",false")));
}

#[test]
fn monitor_alarms_on_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = boundary_scenario(dir.path());
    let (out, history) = monitor(&scenario, "north\n70\n50\n", dir.path());
    assert_eq!(out.status.code(), Some(3));
    let text = fs::read_to_string(history).unwrap();
    assert_eq!(
        text,
        "period,S_t,lambda_alpha,alarm\n1,20.0,20.0,true\n2,20.0,20.0,true\n"
    );

    let (out, _) = monitor(&scenario, "north\n69\n", dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn monitor_reports_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = boundary_scenario(dir.path());
    let (out, _) = monitor(&scenario, "north\n50\nabc\n", dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let (out, _) = monitor(&scenario, "south\n50\n", dir.path());
    assert_eq!(out.status.code(), Some(1));
    // more weeks than the scenario horizon
    let (out, _) = monitor(&scenario, "north\n50\n50\n50\n", dir.path());
    assert_eq!(out.status.code(), Some(1));
}

fn reproduce_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "reproduce",
        "figures",
        "--reps",
        "300",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    nbconc(&args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reproduce_is_deterministic_and_worker_invariant() {
    let root = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<(String, Vec<u8>)>> = [("a", "1"), ("b", "1"), ("c", "2"), ("d", "8")]
        .iter()
        .map(|(name, workers)| {
            let dir = root.path().join(name);
            let out = reproduce_into(&dir, &["--seed", "42", "--workers", workers]);
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            read_dir_sorted(&dir)
        })
        .collect();
    assert!(runs[0]
        .iter()
        .any(|(n, _)| n == "fig8_efficiency_kappa.csv"));
    for other in &runs[1..] {
        assert_eq!(&runs[0], other);
    }
}

#[test]
fn reproduce_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = nbconc(&[
        "reproduce",
        "epi",
        "--reps",
        "200",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let report = json(&out);
    assert_eq!(report["environment"]["seed"], 7);
    assert_eq!(report["environment"]["epi_replications"], 200);
    assert!(report["environment"]["version"].is_string());
    assert!(report["table2"].is_null());
    assert_eq!(report["epi"]["v_n"], 2_028_900.0);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("epi.csv").exists());
}

#[test]
fn reproduce_fails_on_unwritable_output() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = nbconc(&[
        "reproduce",
        "table2",
        "--reps",
        "100",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fresh_seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = nbconc(&[
        "reproduce",
        "table2",
        "--fresh",
        "--reps",
        "100",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let report = json(&out);
    assert!(report["environment"]["seed"].is_u64());
    assert_eq!(
        nbconc(&["reproduce", "table2", "--fresh", "--seed", "1"])
            .status
            .code(),
        Some(2)
    );
}

fn field_names(value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                out.push(k.clone());
                field_names(v, out);
            }
        }
        Value::Array(items) => items.iter().for_each(|v| field_names(v, out)),
        _ => {}
    }
}

#[test]
fn schema_document_lists_every_field() {
    let schema = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/output-schema.md"),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = json(&reproduce_into(dir.path(), &[]));
    let mut names = Vec::new();
    field_names(&report, &mut names);
    for id in report["figures"].as_array().unwrap() {
        let id = id.as_str().unwrap();
        names.push(id.to_string());
        let csv = fs::read_to_string(dir.path().join(format!("{id}.csv"))).unwrap();
        names.extend(csv.lines().next().unwrap().split(',').map(String::from));
    }
    for file in ["table2.csv", "epi.csv"] {
        let csv = fs::read_to_string(dir.path().join(file)).unwrap();
        names.extend(csv.lines().next().unwrap().split(',').map(String::from));
    }
    let bound = json(&nbconc(&[
        "bound", "chernoff", "--params", "2:0.5", "--a", "1",
    ]));
    field_names(&bound, &mut names);
    let words: std::collections::HashSet<&str> = schema
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .collect();
    for name in names {
        assert!(words.contains(name.as_str()), "schema lacks `{name}`");
    }
}
