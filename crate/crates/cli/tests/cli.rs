use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::{array, Array1, Array2};
use pulasso::evaluate::Method;
use pulasso::simulate::{gen_on_truth_params, simulate_dataset, SimConfig};
use pulasso::{CaseControlRatios, GroupStructure, ModelKind, ModelParams, MultinomialParams, Scenario};
use pulasso_cli::artifact::{FitMetadata, ModelArtifact, FORMAT_VERSION};
use pulasso_cli::error::CliError;
use pulasso_cli::io::{default_names, load_dataset, load_table, write_dataset};
use tempfile::TempDir;

const RATIOS: &str = "1.565302864604933,1.3882818922628333";

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/sample.csv")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulasso")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fit_sample(dir: &TempDir, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.path().join(name);
    let data = sample();
    let mut args = vec!["fit", "--data", path_str(&data), "--model", "multinomial", "--ratios", RATIOS];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", path_str(&out)]);
    (run(&args), out)
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn cc(k: usize) -> Scenario {
    Scenario::CaseControl(CaseControlRatios::new(vec![1.0; k]).unwrap())
}

#[test]
fn handcrafted_table_parses_exactly() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "d.csv", "a,z,b\n1.5,0,-2\n0,2,3.25\n-1e-3,1,7\n");
    let t = load_table(&p, true).unwrap();
    assert_eq!(t.covariates, vec!["a", "b"]);
    assert_eq!(t.x, array![[1.5, -2.0], [0.0, 3.25], [-1e-3, 7.0]]);
    assert_eq!(t.z, Some(vec![0, 2, 1]));
    assert_eq!(t.y, None);
}

#[test]
fn out_of_range_label_names_row() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "d.csv", "z,x\n0,1\n1,2\n7,3\n");
    match load_dataset(&p, cc(2)) {
        Err(CliError::LabelOutOfRange { row, label, k, .. }) => assert_eq!((row, label, k), (3, 7, 2)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bad_cells_report_position() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "d.csv", "z,x1,x2\n0,1,2\n1,2,oops\n");
    match load_table(&p, true) {
        Err(CliError::NonNumericCovariate { row, column, value, .. }) => {
            assert_eq!((row, column.as_str(), value.as_str()), (2, "x2", "oops"))
        }
        other => panic!("unexpected {other:?}"),
    }
    let p = write(&dir, "e.csv", "z,x1\n0,1\n1.5,2\n");
    match load_table(&p, true) {
        Err(CliError::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "z")),
        other => panic!("unexpected {other:?}"),
    }
    let p = write(&dir, "f.csv", "x1,x2\n0,1\n");
    assert!(load_table(&p, true).is_err());
}

#[test]
fn dataset_round_trips_through_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = SimConfig::single_training(80, 4, 3, 2, vec![0.5, 0.6, 0.7], 11);
    let truth = gen_on_truth_params(&cfg).unwrap();
    let data = simulate_dataset(&truth, &cfg).unwrap();
    let p = dir.path().join("d.csv");
    write_dataset(&p, &data, &default_names(4)).unwrap();
    let back = load_dataset(&p, data.scenario().clone()).unwrap();
    assert_eq!(back, data);
}

#[test]
fn fit_on_sample_converges_with_monotone_trace() {
    let dir = TempDir::new().unwrap();
    let (out, art) = fit_sample(&dir, "m.json", &["--lambda", "0.05"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let art = ModelArtifact::load(&art).unwrap();
    assert!(art.fit.converged);
    assert!(art.fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("objective trace monotone: yes"), "{report}");
}

#[test]
fn huge_penalty_zeroes_regression_part() {
    let dir = TempDir::new().unwrap();
    let (out, art) = fit_sample(&dir, "m.json", &["--lambda", "1e9"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let art = ModelArtifact::load(&art).unwrap();
    assert!(art.params.penalized().iter().all(|v| *v == 0.0));
}

fn objective_line(out: &Output) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    let line = text.lines().find(|l| l.starts_with("objective:")).expect("objective line");
    line["objective:".len()..].trim().parse().unwrap()
}

#[test]
fn pgd_and_em_reports_agree() {
    let dir = TempDir::new().unwrap();
    let (a, _) = fit_sample(&dir, "a.json", &["--lambda", "0.03", "--solver", "pgd", "--tol", "1e-12"]);
    let (b, _) = fit_sample(&dir, "b.json", &["--lambda", "0.03", "--solver", "em", "--tol", "1e-12"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    assert!((objective_line(&a) - objective_line(&b)).abs() <= 1e-4);
}

#[test]
fn cv_fit_records_folds_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, pa) = fit_sample(&dir, "a.json", &["--cv", "--grid-len", "8", "--seed", "3"]);
    let (b, pb) = fit_sample(&dir, "b.json", &["--cv", "--grid-len", "8", "--seed", "3"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0);
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_eq!(ModelArtifact::load(&pa).unwrap().fit.cv_folds, Some(5));
}

#[test]
fn iteration_limit_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let (out, art) = fit_sample(&dir, "m.json", &["--lambda", "0.01", "--max-iter", "1"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(art.exists());
}

#[test]
fn usage_and_data_errors_exit_with_one() {
    let out = run(&["fit", "--data", path_str(&sample()), "--lambda", "0.1", "--out", "/dev/null"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--model"));
    assert_eq!(code(&run(&["fit", "--no-such-flag"])), 1);
    let out = run(&["fit", "--data", "/nonexistent.csv", "--model", "mn", "--ratios", "1", "--lambda", "1", "--out", "/dev/null"]);
    assert_eq!(code(&out), 1);
    let out = run(&["fit", "--data", path_str(&sample()), "--model", "mn", "--ratios", "1", "--k", "1", "--lambda", "1", "--out", "/dev/null"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("outside 0..=1"), "{}", stderr(&out));
}

#[test]
fn config_file_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", "lambda = 1e9\nsolver = \"em\"\n");
    let (out, art) = fit_sample(&dir, "m.json", &["--lambda", "0.01", "--config", path_str(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let art = ModelArtifact::load(&art).unwrap();
    assert_eq!(art.lambda, 1e9);
    assert_eq!(art.fit.solver, Method::Em);

    let cfg = write(&dir, "bad.toml", "lambda = 0.1\n[line_search]\nshrink = 2\n");
    let (out, _) = fit_sample(&dir, "n.json", &["--config", path_str(&cfg)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line_search"), "{}", stderr(&out));
    let cfg = write(&dir, "typed.toml", "folds = \"five\"\n");
    let (out, _) = fit_sample(&dir, "o.json", &["--lambda", "0.1", "--config", path_str(&cfg)]);
    assert!(stderr(&out).contains("folds"), "{}", stderr(&out));
}

#[test]
fn artifact_round_trip_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (out, path) = fit_sample(&dir, "m.json", &["--lambda", "0.02"]);
    assert_eq!(code(&out), 0);
    let first = std::fs::read_to_string(&path).unwrap();
    let art = ModelArtifact::load(&path).unwrap();
    let again = dir.path().join("again.json");
    art.save(&again).unwrap();
    assert_eq!(first, std::fs::read_to_string(&again).unwrap());
    assert!(first.contains("\"format_version\": 1"));
}

#[test]
fn corrupted_artifact_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (_, path) = fit_sample(&dir, "m.json", &["--lambda", "0.02"]);
    let text = std::fs::read_to_string(&path).unwrap();
    let bad = write(&dir, "bad.json", &text.replace("\"format_version\": 1", "\"format_version\": 9"));
    assert!(ModelArtifact::load(&bad).is_err());
    let bad = write(&dir, "bad2.json", &text.replace("\"p\": 5", "\"p\": 4"));
    assert!(ModelArtifact::load(&bad).is_err());
}

fn handmade(theta: Array2<f64>, b: Array1<f64>) -> ModelArtifact {
    let (p, k) = theta.dim();
    ModelArtifact {
        format_version: FORMAT_VERSION,
        model: ModelKind::Multinomial,
        scenario: cc(k),
        k,
        p,
        covariates: default_names(p),
        params: ModelParams::Multinomial(MultinomialParams::new(theta, b).unwrap()),
        groups: GroupStructure::rows(p, k),
        lambda: 1.0,
        fit: FitMetadata {
            solver: Method::Pgd,
            iterations: 0,
            converged: true,
            objective: 0.0,
            stationarity_gap: 0.0,
            objective_trace: vec![],
            cv_folds: None,
        },
    }
}

fn predict_rows(dir: &TempDir, art: &ModelArtifact, data: &Path) -> Vec<Vec<f64>> {
    let model = dir.path().join("model.json");
    art.save(&model).unwrap();
    let out = dir.path().join("pred.csv");
    let res = run(&["predict", "--model-file", path_str(&model), "--data", path_str(data), "--proba", "--out", path_str(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = std::fs::read_to_string(&out).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn zero_model_predicts_uniform_probabilities() {
    let dir = TempDir::new().unwrap();
    let rows = predict_rows(&dir, &handmade(Array2::zeros((5, 2)), Array1::zeros(2)), &sample());
    assert_eq!(rows.len(), 50);
    for r in rows {
        assert_eq!(r.len(), 4);
        for v in &r[1..] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}

#[test]
fn single_row_matches_softmax() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "one.csv", "x1,x2\n0.5,-1\n");
    let art = handmade(array![[1.0, -2.0], [0.5, 0.25]], array![0.1, -0.3]);
    let rows = predict_rows(&dir, &art, &data);
    // scores: 0.5*1 - 0.5 + 0.1 = 0.1 and -1 - 0.25 - 0.3 = -1.55
    let (e1, e2) = (0.1f64.exp(), (-1.55f64).exp());
    let z = 1.0 + e1 + e2;
    let want = [1.0 / z, e1 / z, e2 / z];
    assert_eq!(rows[0][0], 1.0);
    for (got, want) in rows[0][1..].iter().zip(want) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
}

#[test]
fn predict_after_fit_matches_in_memory() {
    let dir = TempDir::new().unwrap();
    let (_, path) = fit_sample(&dir, "m.json", &["--lambda", "0.02"]);
    let art = ModelArtifact::load(&path).unwrap();
    let rows = predict_rows(&dir, &art, &sample());
    let x = load_table(&sample(), true).unwrap().x;
    let proba = art.params.predict_proba_matrix(x.view()).unwrap();
    let labels = art.params.predict_labels(x.view()).unwrap();
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0] as usize, labels[i]);
        for (j, v) in r[1..].iter().enumerate() {
            assert_eq!(v.to_bits(), proba[(i, j)].to_bits());
        }
    }
}

#[test]
fn predict_rejects_wrong_width() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m.json");
    handmade(Array2::zeros((3, 2)), Array1::zeros(2)).save(&model).unwrap();
    let out = run(&["predict", "--model-file", path_str(&model), "--data", path_str(&sample())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("dimension mismatch"), "{}", stderr(&out));
}

#[test]
fn simulate_is_deterministic_and_feeds_fit() {
    let dir = TempDir::new().unwrap();
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let csv = dir.path().join(format!("{name}.csv"));
        let truth = dir.path().join(format!("{name}.json"));
        let out = run(&[
            "simulate", "--model", "ordinal", "--n", "120", "--p", "6", "--k", "2", "--scenario", "single-training",
            "--pi-st", "0.6", "--seed", "42", "--out", path_str(&csv), "--truth-out", path_str(&truth),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        files.push((std::fs::read(&csv).unwrap(), std::fs::read(&truth).unwrap(), csv));
    }
    assert_eq!(files[0].0, files[1].0);
    assert_eq!(files[0].1, files[1].1);
    let art = dir.path().join("fit.json");
    let out = run(&[
        "fit", "--data", path_str(&files[0].2), "--model", "ordinal", "--scenario", "single-training", "--pi-st", "0.6",
        "--lambda", "0.05", "--out", path_str(&art),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let art = ModelArtifact::load(&art).unwrap();
    assert_eq!(art.k, 2);
}

#[test]
fn cv_command_writes_curve() {
    let dir = TempDir::new().unwrap();
    let out_csv = dir.path().join("curve.csv");
    let out = run(&[
        "cv", "--data", path_str(&sample()), "--model", "mn", "--ratios", RATIOS, "--grid-len", "6", "--metric",
        "misclassification", "--out", path_str(&out_csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(String::from_utf8_lossy(&out.stdout).contains("best lambda"));
}

#[test]
fn diagnose_matches_hand_computed_norms() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("d.csv");
    let truth = dir.path().join("t.json");
    let out = run(&[
        "simulate", "--model", "mn", "--n", "300", "--p", "4", "--k", "2", "--seed", "5", "--out", path_str(&csv),
        "--truth-out", path_str(&truth),
    ]);
    assert_eq!(code(&out), 0);
    let ratios = String::from_utf8_lossy(&out.stdout)
        .lines()
        .find_map(|l| l.split("--ratios ").nth(1).map(str::to_string))
        .unwrap();
    let art = dir.path().join("m.json");
    let out = run(&["fit", "--data", path_str(&csv), "--model", "mn", "--ratios", &ratios, "--lambda", "0.02", "--out", path_str(&art)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let diag = dir.path().join("diag.json");
    let out = run(&[
        "diagnose", "--truth", path_str(&truth), "--estimate", path_str(&art), "--data", path_str(&csv), "--out",
        path_str(&diag),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&diag).unwrap()).unwrap();

    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&truth).unwrap()).unwrap();
    let t: ModelParams = serde_json::from_value(t["params"].clone()).unwrap();
    let e = ModelArtifact::load(&art).unwrap().params;
    let (ModelParams::Multinomial(t), ModelParams::Multinomial(e)) = (t, e) else { panic!() };
    let d = &e.theta - &t.theta;
    let dist = d.columns().into_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let radius = t.theta.columns().into_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let x = load_table(&csv, true).unwrap().x;
    let cb = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let region = &report["region"];
    assert_eq!(region["model"], "multinomial");
    assert!((region["distance"].as_f64().unwrap() - dist).abs() < 1e-12);
    assert!((report["param_radius"].as_f64().unwrap() - radius).abs() < 1e-12);
    assert_eq!(report["cov_bound"].as_f64().unwrap(), cb);
    let inside = dist <= region["radius_bound"].as_f64().unwrap();
    assert_eq!(region["inside"].as_bool().unwrap(), inside);
}

#[test]
fn tiny_scaling_bench_reports_fit_quality() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let start = std::time::Instant::now();
    let out = run(&["bench-scaling", "--preset", "tiny", "--out-json", path_str(&json), "--out-csv", path_str(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(start.elapsed().as_secs() <= 120);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(report["rate_fits"][0]["r_squared"].is_f64());
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("cell,setting,x,replicate,estimator,error"));
}

#[test]
fn compare_bench_runs_each_sweep() {
    let dir = TempDir::new().unwrap();
    for sweep in ["prevalence", "ratio", "misspec"] {
        let json = dir.path().join(format!("{sweep}.json"));
        let out = run(&[
            "--threads", "1", "bench-compare", "--sweep", sweep, "--n", "120", "--p", "10", "--replicates", "2",
            "--values", "0.5", "--grid-len", "5", "--folds", "3", "--test-size", "40", "--out-json", path_str(&json),
        ]);
        assert_eq!(code(&out), 0, "{sweep}: {}", stderr(&out));
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert!(!report["summaries"].as_array().unwrap().is_empty());
    }
}
