use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

fn moescale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moescale"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn temp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn predict_from_shape() {
    let out = stdout(&moescale(&[
        "predict", "--coeffs", &fixture("moe_e64.json"), "--d-model", "512", "--n-blocks", "8", "--e", "64", "--g",
        "8", "--tokens", "16e9",
    ]));
    assert!((value(&out, "loss") - 3.16).abs() < 0.01, "{out}");
    assert!(out.contains("loss 3.156210e0"));
}

#[test]
fn predict_from_notation_matches_counts() {
    let by_notation = stdout(&moescale(&[
        "predict", "--coeffs", &fixture("moe_e64.json"), "--model", "64x25.165824M", "--tokens", "16B",
    ]));
    let by_total = stdout(&moescale(&[
        "predict", "--coeffs", &fixture("moe_e64.json"), "--n", "1082130432", "--tokens", "16e9",
    ]));
    assert!((value(&by_notation, "loss") - value(&by_total, "loss")).abs() < 1e-6);
}

#[test]
fn optimize_reproduces_billion_row() {
    let out = stdout(&moescale(&[
        "optimize", "--flops", "1.93e20", "--coeffs", &fixture("moe_e64.json"), "--e", "64",
    ]));
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,n_active,n_total,d_model,n_blocks,tokens,granularity,flops,predicted_loss"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let field = |i: usize| row[i].parse::<f64>().unwrap();
    assert!(row[0].starts_with("64x"));
    assert!((field(1) / 1e9 - 1.0).abs() < 0.05);
    assert!((field(5) / 28.94e9 - 1.0).abs() < 0.15);
    assert_eq!(field(6), 16.0);
    assert!((field(8) - 2.491).abs() < 0.03);
}

#[test]
fn optimize_concrete_uses_whole_blocks() {
    let out = stdout(&moescale(&[
        "optimize", "--flops", "1e21", "--coeffs", &fixture("moe_e64.json"), "--concrete",
    ]));
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[3].fract(), 0.0);
    assert!((row[6] / 1e21 - 1.0).abs() < 1e-9);
}

#[test]
fn frontier_writes_decreasing_rows_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = temp(&dir, "frontier.csv");
    let plot = temp(&dir, "frontier.tsv");
    stdout(&moescale(&[
        "frontier", "--from", "1e18", "--to", "1e26", "--points", "20", "--coeffs", &fixture("moe_e64.json"),
        "--dense-coeffs", &fixture("dense_e64.json"), "--out", csv.to_str().unwrap(), "--plot-data",
        plot.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "flops,moe_loss,dense_loss,G,n_active,n_total,d_model,n_blocks,tokens,savings_ratio"
    );
    let losses: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 20);
    assert!(losses.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(std::fs::read_to_string(&plot).unwrap().lines().count(), 21);
}

#[test]
fn flops_breakdown() {
    let out = stdout(&moescale(&[
        "flops", "--d-model", "512", "--n-blocks", "8", "--e", "64", "--g", "4", "--tokens", "16e9",
    ]));
    assert_eq!(value(&out, "n_active"), 2.516582e7);
    assert_eq!(value(&out, "n_total"), 1.082130e9);
    let share = value(&out, "routing_share");
    assert!(share > 0.0 && share < 1.0);
}

#[test]
fn savings_near_twenty_at_1e20() {
    let out = stdout(&moescale(&["savings", "--flops", "1e20", "--coeffs", &fixture("moe_e64.json")]));
    let ratio = value(&out, "savings_ratio");
    assert!((15.0..=25.0).contains(&ratio), "{ratio}");
}

#[test]
fn synth_fit_validate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let runs = temp(&dir, "runs.csv");
    let runs_again = temp(&dir, "again.csv");
    let coeffs = temp(&dir, "fit.json");
    for path in [&runs, &runs_again] {
        stdout(&moescale(&[
            "synth", "--coeffs", &fixture("moe_e64.json"), "--noise", "0.01", "--seed", "5", "--out",
            path.to_str().unwrap(),
        ]));
    }
    assert_eq!(std::fs::read(&runs).unwrap(), std::fs::read(&runs_again).unwrap());

    let out = stdout(&moescale(&[
        "fit", "--runs", runs.to_str().unwrap(), "--out", coeffs.to_str().unwrap(), "--weight-decay", "0",
        "--max-starts", "8",
    ]));
    assert!(value(&out, "rmse") < 0.02);
    let saved = moescale::io::load_coefficients(&coeffs).unwrap();
    assert_eq!(saved.expansion, 64.0);
    assert_eq!(saved.fit_meta.unwrap().n_runs, 78);

    let out = stdout(&moescale(&[
        "validate", "--runs", runs.to_str().unwrap(), "--weight-decay", "0", "--max-starts", "8",
    ]));
    assert!(out.contains("n_train 63"));
    assert!(out.contains("n_holdout 15"));
    assert!(value(&out, "holdout_rmse").is_finite());
}

#[test]
fn bootstrap_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let runs = temp(&dir, "runs.csv");
    stdout(&moescale(&[
        "synth", "--coeffs", &fixture("moe_e64.json"), "--noise", "0.01", "--seed", "2", "--out",
        runs.to_str().unwrap(),
    ]));
    let args = [
        "bootstrap", "--runs", runs.to_str().unwrap(), "--iterations", "6", "--seed", "11", "--weight-decay", "0",
        "--max-starts", "2", "--flops", "1e20",
    ];
    let first = stdout(&moescale(&args));
    let second = stdout(&moescale(&args));
    assert_eq!(first, second);
    assert!(first.starts_with("parameter,estimate,lo,hi\n"));
    assert_eq!(first.lines().filter(|l| l.starts_with("alpha,")).count(), 1);
    assert!(first.contains("flops,tokens_lo,tokens_hi"));
}

#[test]
fn dense_synth_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let runs = temp(&dir, "dense.csv");
    stdout(&moescale(&["synth", "--coeffs", &fixture("dense_e64.json"), "--out", runs.to_str().unwrap()]));
    let out = stdout(&moescale(&[
        "fit", "--runs", runs.to_str().unwrap(), "--kind", "dense", "--weight-decay", "0", "--max-starts", "16",
    ]));
    assert!((value(&out, "alpha") - 0.126).abs() < 0.01, "{out}");
}

#[test]
fn usage_errors_exit_two() {
    for args in [&["bogus"][..], &["predict", "--nope"][..], &[][..]] {
        let out = moescale(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[E_USAGE]: "));
    }
    assert_eq!(moescale(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_carry_codes() {
    let dir = tempfile::tempdir().unwrap();
    let header_only = temp(&dir, "h.csv");
    std::fs::write(&header_only, "d_model,n_blocks,expansion,granularity,tokens,loss\n").unwrap();
    let cases: Vec<(Vec<String>, &str)> = vec![
        (vec!["fit".into(), "--runs".into(), header_only.display().to_string()], "E_PARSE"),
        (vec!["fit".into(), "--runs".into(), temp(&dir, "missing.csv").display().to_string()], "E_IO"),
        (
            vec!["optimize".into(), "--flops=-1".into(), "--coeffs".into(), fixture("moe_e64.json")],
            "E_DOMAIN",
        ),
        (
            vec!["savings".into(), "--flops".into(), "1e20".into(), "--coeffs".into(), fixture("dense_e64.json")],
            "E_SCHEMA",
        ),
    ];
    for (args, code) in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = moescale(&refs);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with(&format!("error[{code}]: ")), "{err}");
        assert_eq!(err.lines().count(), 1);
    }
    let out = moescale(&["fit", "--runs", header_only.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no data rows"));
}

#[test]
fn thread_cap_is_validated() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_moescale"))
            .env("MOESCALE_THREADS", threads)
            .args(["savings", "--flops", "1e20", "--coeffs", &fixture("moe_e64.json")])
            .output()
            .unwrap()
    };
    assert!(run("1").status.success());
    let bad = run("0");
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error[E_ENV]"));
}
