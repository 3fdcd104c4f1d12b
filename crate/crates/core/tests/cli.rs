use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn volindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volindex")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = volindex(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, days: &str) {
    ok(&["synth", "--seed", "4", "--days", days, "--strikes-per-side", "20", "--out", s(dir)]);
}

#[test]
fn synth_writes_a_loadable_market() {
    let t = tempfile::tempdir().unwrap();
    let m = t.path().join("m");
    synth(&m, "40");
    for f in ["options.csv", "underlying.csv", "rates.csv", "synth.toml", "variance.csv"] {
        assert!(m.join(f).exists(), "{f}");
    }
    // the written config regenerates the same market
    let again = t.path().join("again");
    ok(&["synth", "--config", s(&m.join("synth.toml")), "--out", s(&again)]);
    assert_eq!(fs::read(m.join("options.csv")).unwrap(), fs::read(again.join("options.csv")).unwrap());
}

#[test]
fn vix_csv_has_a_row_per_day() {
    let t = tempfile::tempdir().unwrap();
    let m = t.path().join("m");
    synth(&m, "30");
    let out = ok(&["vix", "--data", s(&m), "--n-per-side", "10"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("date,vix,vix_star_sq,n_options"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        let v: f64 = f[1].parse().unwrap();
        assert!(v > 5.0 && v < 80.0, "{r}");
        // two terms, each with 10 puts, 10 calls and both quotes at K0
        assert!(f[3].parse::<usize>().unwrap() <= 2 * (2 * 10 + 2));
    }
}

#[test]
fn backtest_weights_report_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let m = t.path().join("m");
    synth(&m, "1150");
    let run = t.path().join("runs/ridge");
    ok(&["backtest", "--data", s(&m), "--algo", "ridge", "--mode", "reg2", "--n-per-side", "5", "--out", s(&run)]);
    for f in ["predictions.csv", "summary.csv", "benchmark.csv", "replication.csv", "weights_summary.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let replication = fs::read_to_string(run.join("replication.csv")).unwrap();
    assert!(replication.lines().skip(1).all(|l| l.ends_with(",true")));

    let preds = fs::read_to_string(run.join("predictions.csv")).unwrap();
    let first = preds.lines().nth(1).unwrap();
    let date = first.split(',').next().unwrap();
    let forecast: f64 = first.split(',').nth(2).unwrap().parse().unwrap();
    let model = run.join("models/fold_000.model");
    let w = String::from_utf8(ok(&["weights", "--model", s(&model), "--date", date]).stdout).unwrap();
    assert!(w.starts_with("date,expiry,strike,kind,weight\n"));
    assert!(w.lines().count() > 1);

    let bundle = volindex::cli::Bundle::from_text(&fs::read_to_string(&model).unwrap()).unwrap();
    let again = volindex::cli::bundle_forecast(&bundle, date.parse().unwrap()).unwrap();
    assert_eq!(again, forecast);

    let report = String::from_utf8(ok(&["report", s(&t.path().join("runs"))]).stdout).unwrap();
    assert!(report.contains("OOS R² (reg2)"));
    let row = report.lines().find(|l| l.trim_start().starts_with("11 ")).unwrap();
    assert_eq!(row.split_whitespace().filter(|c| *c != "-").count(), 3, "{row}");
}

#[test]
fn forest_bundles_refuse_weights() {
    let t = tempfile::tempdir().unwrap();
    let m = t.path().join("m");
    synth(&m, "1100");
    let run = t.path().join("rf");
    ok(&["backtest", "--data", s(&m), "--algo", "rf", "--mode", "reg1", "--n-per-side", "3", "--trees", "3", "--out", s(&run)]);
    assert!(!run.join("replication.csv").exists());
    let date = fs::read_to_string(run.join("predictions.csv")).unwrap().lines().nth(1).unwrap()[..10].to_string();
    let out = volindex(&["weights", "--model", s(&run.join("models/fold_000.model")), "--date", &date]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: regressors:") && err.lines().count() == 1, "{err}");
}

#[test]
fn failures_are_one_line_and_nonzero() {
    let t = tempfile::tempdir().unwrap();
    let out = volindex(&["vix", "--data", s(&t.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: market_data:") && err.lines().count() == 1, "{err}");

    assert_eq!(volindex(&["backtest", "--algo", "svm"]).status.code(), Some(2));
    assert_eq!(volindex(&["synth", "--premium", "0.5", "--out", s(t.path())]).status.code(), Some(1));

    let bogus = t.path().join("bogus.model");
    fs::write(&bogus, "not a bundle\n").unwrap();
    let out = volindex(&["weights", "--model", s(&bogus), "--date", "2001-01-02"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn too_short_history_is_a_validation_error() {
    let t = tempfile::tempdir().unwrap();
    let m = t.path().join("m");
    synth(&m, "200");
    let out = volindex(&["backtest", "--data", s(&m), "--algo", "linear", "--mode", "reg1", "--n-per-side", "3", "--out", s(&t.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: validation:"));
}
