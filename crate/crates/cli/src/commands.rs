use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use pulasso::evaluate::{
    comparison_experiment, default_groups, kfold_cv, lambda_grid, misspecification_experiment, scaling_experiment,
    theoretical_rate, CVPlan, ComparisonPlan, Estimator, ExperimentReport, Method, MisspecPlan, ScalingCell,
    ScalingPlan, Sweep,
};
use pulasso::simulate::{gen_mn_truth_params, gen_on_truth_params, simulate_dataset, Design, InterceptTarget, SimConfig};
use pulasso::theory::{region_report_mn, region_report_on, TheoryInputs};
use pulasso::{
    CaseControlRatios, FitResult, GroupStructure, ModelKind, ModelParams, PUDataset, Scenario, SingleTrainingProbs,
};
use serde::Serialize;

use crate::args::*;
use crate::artifact::{FitMetadata, ModelArtifact, ParamsFile, TruthFile, FORMAT_VERSION};
use crate::error::{CliError, CliResult};
use crate::io::{default_names, into_dataset, load_table, read_text, write_dataset, write_text};

/// What a finished command reports back to the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
}

fn need<T: Clone>(value: &Option<T>, flag: &str) -> CliResult<T> {
    value.clone().ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

/// Expands a single value to `k` copies; longer lists must have length `k`.
fn per_class(values: &[f64], k: usize, flag: &str) -> CliResult<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; k]),
        n if n == k => Ok(values.to_vec()),
        n => Err(CliError::Usage(format!("--{flag} has {n} values but there are {k} positive classes"))),
    }
}

/// Number of positive classes, from an explicit count, a per-class list, or the labels.
fn class_count(k: Option<usize>, list: Option<&[f64]>, max_label: usize) -> CliResult<usize> {
    let k = k.or(list.filter(|l| l.len() > 1).map(|l| l.len())).unwrap_or(max_label);
    if k == 0 {
        return Err(CliError::Usage("no positive labels found; pass --k".into()));
    }
    Ok(k)
}

fn build_scenario(
    scenario: ScenarioArg,
    ratios: Option<&[f64]>,
    pi_st: Option<&[f64]>,
    k: Option<usize>,
    max_label: usize,
) -> CliResult<Scenario> {
    Ok(match scenario {
        ScenarioArg::CaseControl => {
            let r = ratios.ok_or_else(|| CliError::Usage("case-control data needs --ratios".into()))?;
            let k = class_count(k, Some(r), max_label)?;
            Scenario::CaseControl(CaseControlRatios::new(per_class(r, k, "ratios")?)?)
        }
        ScenarioArg::SingleTraining => {
            let p = pi_st.ok_or_else(|| CliError::Usage("single-training data needs --pi-st".into()))?;
            let k = class_count(k, Some(p), max_label)?;
            Scenario::SingleTraining(SingleTrainingProbs::new(per_class(p, k, "pi-st")?)?)
        }
    })
}

struct Loaded {
    data: PUDataset,
    covariates: Vec<String>,
}

fn load_data(
    path: &Path,
    scenario: ScenarioArg,
    ratios: Option<&[f64]>,
    pi_st: Option<&[f64]>,
    k: Option<usize>,
) -> CliResult<Loaded> {
    let table = load_table(path, true)?;
    let scenario = build_scenario(scenario, ratios, pi_st, k, table.max_label())?;
    let covariates = table.covariates.clone();
    Ok(Loaded { data: into_dataset(path, table, scenario)?, covariates })
}

fn load_groups(path: Option<&Path>, model: ModelKind, data: &PUDataset) -> CliResult<GroupStructure> {
    match path {
        None => Ok(default_groups(model, data.p(), data.k())),
        Some(path) => {
            let text = read_text(path)?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| CliError::format(path, e))
        }
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn simulate(a: SimulateArgs) -> CliResult<Status> {
    let model: ModelKind = need(&a.model, "model")?.into();
    let out = need(&a.out, "out")?;
    let design = match a.scenario {
        ScenarioArg::CaseControl => {
            if !(a.unlabeled_fraction > 0.0 && a.unlabeled_fraction < 1.0) {
                return Err(CliError::Usage("--unlabeled-fraction must lie in (0, 1)".into()));
            }
            let n_u = (a.n as f64 * a.unlabeled_fraction).round() as usize;
            let rest = a.n - n_u;
            let n_labeled = (0..a.k).map(|j| rest / a.k.max(1) + usize::from(j < rest % a.k.max(1))).collect();
            Design::CaseControl { n_unlabeled: n_u, n_labeled }
        }
        ScenarioArg::SingleTraining => Design::SingleTraining { pi_st: per_class(&a.pi_st, a.k, "pi-st")? },
    };
    let cfg = SimConfig {
        n: a.n,
        p: a.p,
        k: a.k,
        s: a.s,
        covariate_sd: a.covariate_sd,
        nonzero_range: (0.5, 1.0),
        seed: a.seed,
        design,
        intercepts: a.positive_share.map_or(InterceptTarget::Balanced, InterceptTarget::PositiveShare),
    };
    let truth = match model {
        ModelKind::Multinomial => gen_mn_truth_params(&cfg)?,
        ModelKind::Ordinal => gen_on_truth_params(&cfg)?,
    };
    let data = simulate_dataset(&truth, &cfg)?;
    write_dataset(&out, &data, &default_names(a.p))?;
    if let Some(path) = &a.truth_out {
        let file = TruthFile {
            format_version: FORMAT_VERSION,
            params: truth,
            scenario: data.scenario().clone(),
            simulation: cfg,
        };
        write_text(path, &file.to_json())?;
    }
    let values = match data.scenario() {
        Scenario::CaseControl(r) => format!("--scenario case-control --ratios {}", join(r.as_slice())),
        Scenario::SingleTraining(p) => format!("--scenario single-training --pi-st {}", join(p.as_slice())),
    };
    println!("wrote {} rows to {}; label counts {:?}", data.n(), out.display(), data.label_counts());
    println!("fit with: {values}");
    Ok(Status::Ok)
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn estimator(model: ModelKind, solver: SolverArg, max_iter: Option<usize>, tol: Option<f64>) -> Estimator {
    let mut est = Estimator::new(model, solver.into());
    if let Some(m) = max_iter {
        est.config.inner.max_iter = m;
    }
    if let Some(t) = tol {
        est.config.inner.tol = t;
    }
    est
}

/// Human-readable summary of a fit.
pub fn fit_report(art: &ModelArtifact, n: usize) -> String {
    let f = &art.fit;
    let monotone = f.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let penalized = art.params.penalized();
    let active = art.groups.support(&penalized).len();
    let mut s = String::new();
    let _ = writeln!(s, "model: {} ({}, K={}, p={}, n={n})", art.model, art.scenario.name(), art.k, art.p);
    let _ = writeln!(s, "solver: {}", f.solver);
    match f.cv_folds {
        Some(folds) => {
            let _ = writeln!(s, "lambda: {} (chosen by {folds}-fold cross-validation)", art.lambda);
        }
        None => {
            let _ = writeln!(s, "lambda: {}", art.lambda);
        }
    }
    let _ = writeln!(s, "iterations: {}", f.iterations);
    let _ = writeln!(s, "converged: {}", if f.converged { "yes" } else { "no" });
    let _ = writeln!(s, "stationarity gap: {:e}", f.stationarity_gap);
    let _ = writeln!(s, "objective: {}", f.objective);
    let _ = writeln!(s, "objective trace monotone: {}", if monotone { "yes" } else { "no" });
    let _ = writeln!(s, "active groups: {active} of {}", art.groups.len());
    s
}

pub fn fit(a: FitArgs) -> CliResult<Status> {
    let model: ModelKind = need(&a.model, "model")?.into();
    let data_path = need(&a.data, "data")?;
    let out = need(&a.out, "out")?;
    if a.cv == a.lambda.is_some() {
        return Err(CliError::Usage("pass exactly one of --lambda and --cv".into()));
    }
    let Loaded { data, covariates } =
        load_data(&data_path, a.scenario, a.ratios.as_deref(), a.pi_st.as_deref(), a.k)?;
    let gs = load_groups(a.groups.as_deref(), model, &data)?;
    let est = estimator(model, a.solver, a.max_iter, a.tol);
    let lambda = match a.lambda {
        Some(l) => l,
        None => {
            let grid = lambda_grid(est.lambda_max(&data, &gs)?, a.grid_len, a.grid_ratio)?;
            let plan = CVPlan { folds: a.folds, lambda_grid: grid, metric: Default::default(), seed: a.seed };
            kfold_cv(&data, &gs, &est, &plan)?.best_lambda
        }
    };
    let fit = est.fit(&data, &gs, lambda, None)?;
    let art = artifact(&data, covariates, &est, gs, fit, a.cv.then_some(a.folds));
    art.save(&out)?;
    let report = fit_report(&art, data.n());
    print!("{report}");
    if let Some(p) = &a.report {
        write_text(p, &report)?;
    }
    Ok(if art.fit.converged { Status::Ok } else { Status::NotConverged })
}

fn artifact(
    data: &PUDataset,
    covariates: Vec<String>,
    est: &Estimator,
    groups: GroupStructure,
    fit: FitResult<ModelParams>,
    cv_folds: Option<usize>,
) -> ModelArtifact {
    ModelArtifact {
        format_version: FORMAT_VERSION,
        model: est.model,
        scenario: data.scenario().clone(),
        k: data.k(),
        p: data.p(),
        covariates,
        groups,
        lambda: fit.lambda,
        fit: FitMetadata {
            solver: est.method,
            iterations: fit.iterations,
            converged: fit.converged,
            objective: fit.objective(),
            stationarity_gap: fit.stationarity_gap,
            objective_trace: fit.objective_trace,
            cv_folds,
        },
        params: fit.params,
    }
}

pub fn cv(a: CvArgs) -> CliResult<Status> {
    let model: ModelKind = need(&a.model, "model")?.into();
    let data_path = need(&a.data, "data")?;
    let Loaded { data, .. } = load_data(&data_path, a.scenario, a.ratios.as_deref(), a.pi_st.as_deref(), a.k)?;
    let gs = load_groups(a.groups.as_deref(), model, &data)?;
    let est = estimator(model, a.solver, None, None);
    let grid = lambda_grid(est.lambda_max(&data, &gs)?, a.grid_len, a.grid_ratio)?;
    let plan = CVPlan { folds: a.folds, lambda_grid: grid, metric: a.metric.into(), seed: a.seed };
    let res = kfold_cv(&data, &gs, &est, &plan)?;
    let mut csv = String::from("lambda,mean,se\n");
    for pt in &res.curve {
        let _ = writeln!(csv, "{},{},{}", pt.lambda, pt.mean, pt.se);
    }
    if let Some(p) = &a.out {
        write_text(p, &csv)?;
    }
    println!("best lambda: {} (index {} of {})", res.best_lambda, res.best_index, res.curve.len());
    Ok(Status::Ok)
}

pub fn predict(a: PredictArgs) -> CliResult<Status> {
    let model_path = need(&a.model_file, "model-file")?;
    let data_path = need(&a.data, "data")?;
    let art = ModelArtifact::load(&model_path)?;
    let table = load_table(&data_path, false)?;
    if table.x.ncols() != art.p {
        return Err(pulasso::Error::DimensionMismatch(format!(
            "model expects {} covariates but {} has {}",
            art.p,
            data_path.display(),
            table.x.ncols()
        ))
        .into());
    }
    let proba = art.params.predict_proba_matrix(table.x.view())?;
    let labels = art.params.predict_labels(table.x.view())?;
    let mut csv = String::from("label");
    if a.proba {
        for j in 0..=art.k {
            let _ = write!(csv, ",p{j}");
        }
    }
    csv.push('\n');
    for (i, label) in labels.iter().enumerate() {
        let _ = write!(csv, "{label}");
        if a.proba {
            for v in proba.row(i) {
                let _ = write!(csv, ",{v}");
            }
        }
        csv.push('\n');
    }
    write_or_print(a.out.as_deref(), &csv)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct Diagnosis {
    cov_bound: f64,
    param_radius: f64,
    min_increment: Option<f64>,
    region: pulasso::theory::RegionReport,
}

fn ratios_of(s: &Scenario) -> CaseControlRatios {
    match s {
        Scenario::CaseControl(r) => r.clone(),
        Scenario::SingleTraining(p) => p.odds(),
    }
}

pub fn diagnose(a: DiagnoseArgs) -> CliResult<Status> {
    let truth_path = need(&a.truth, "truth")?;
    let est_path = need(&a.estimate, "estimate")?;
    let truth = ParamsFile::load(&truth_path)?;
    let est = ParamsFile::load(&est_path)?;
    let cov_bound = match (a.cov_bound, &a.data) {
        (Some(c), _) => c,
        (None, Some(path)) => TheoryInputs::covariate_bound(load_table(path, false)?.x.view()),
        (None, None) => return Err(CliError::Usage("pass --cov-bound or --data".into())),
    };
    let ratios = match (&a.ratios, est.scenario.as_ref().or(truth.scenario.as_ref())) {
        (Some(r), _) => CaseControlRatios::new(per_class(r, truth.params.k(), "ratios")?)?,
        (None, Some(s)) => ratios_of(s),
        (None, None) => return Err(CliError::Usage("no scenario in the inputs; pass --ratios".into())),
    };
    let (ti, region) = match (&truth.params, &est.params) {
        (ModelParams::Multinomial(t), ModelParams::Multinomial(e)) => {
            let ti = TheoryInputs::for_multinomial(t, cov_bound, ratios)?;
            let r = region_report_mn(e, t, &ti)?;
            (ti, r)
        }
        (ModelParams::Ordinal(t), ModelParams::Ordinal(e)) => {
            let ti = TheoryInputs::for_ordinal(t, cov_bound, ratios)?;
            let r = region_report_on(e, t, &ti, a.slack)?;
            (ti, r)
        }
        _ => return Err(CliError::Usage("truth and estimate are different model kinds".into())),
    };
    let out = Diagnosis {
        cov_bound,
        param_radius: ti.param_radius,
        min_increment: ti.min_increment,
        region,
    };
    let text = to_json(&out);
    print!("{text}");
    if let Some(p) = &a.out {
        write_text(p, &text)?;
    }
    Ok(Status::Ok)
}

fn scaling_cells(model: ModelKind, preset: PresetArg) -> Vec<ScalingCell> {
    let (lines, rates): (&[(usize, usize)], &[f64]) = match preset {
        PresetArg::Tiny => (&[(20, 2)], &[0.3, 0.2, 0.14, 0.1]),
        PresetArg::Standard => (&[(100, 2), (200, 3)], &[0.1, 0.06, 0.035, 0.02]),
    };
    let mut cells = Vec::new();
    for &(p, s) in lines {
        for &rate in rates {
            let probe = ScalingCell { n: 1, p, s, k: 2 };
            let n = (theoretical_rate(model, &probe) / rate).powi(2).round() as usize;
            cells.push(ScalingCell { n, p, s, k: 2 });
        }
    }
    cells
}

fn emit(report: &ExperimentReport, csv: Option<&PathBuf>, json: Option<&PathBuf>) -> CliResult<()> {
    if let Some(path) = csv {
        let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        report.write_csv(f)?;
    }
    if let Some(path) = json {
        write_text(path, &to_json(report))?;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for s in &report.summaries {
        let _ = writeln!(out, "{:<40} {:<8} mean {:.4} (se {:.4}, {} runs)", s.setting, s.estimator, s.mean, s.se, s.count);
    }
    for r in &report.rate_fits {
        let _ = writeln!(
            out,
            "rate fit for {}: slope {:.3}, R^2 {:.4} (centered {:.4})",
            r.estimator, r.slope, r.r_squared, r.r_squared_centered
        );
    }
    Ok(())
}

pub fn bench_scaling(a: BenchScalingArgs) -> CliResult<Status> {
    let model: ModelKind = a.model.map_or(ModelKind::Multinomial, Into::into);
    let (replicates, pilots) = match a.preset {
        PresetArg::Tiny => (3, 1),
        PresetArg::Standard => (10, 2),
    };
    let plan = ScalingPlan {
        model,
        cells: a.cells.clone().unwrap_or_else(|| scaling_cells(model, a.preset)),
        replicates: a.replicates.unwrap_or(replicates),
        lambda_const: a.lambda_const,
        calibration_grid: vec![0.05, 0.1, 0.2, 0.4, 0.8],
        calibration_replicates: pilots,
        covariate_sd: 1.0,
        seed: a.seed,
        method: Method::from(a.solver),
    };
    let report = scaling_experiment(&plan)?;
    emit(&report, a.out_csv.as_ref(), a.out_json.as_ref())?;
    Ok(Status::Ok)
}

pub fn bench_compare(a: BenchCompareArgs) -> CliResult<Status> {
    let model: ModelKind = a.model.map_or(ModelKind::Multinomial, Into::into);
    let report = match a.sweep {
        SweepArg::Prevalence | SweepArg::Ratio => {
            let sweep = if a.sweep == SweepArg::Prevalence {
                Sweep::Prevalence(a.values.clone().unwrap_or_else(|| vec![0.3, 0.5, 0.7]))
            } else {
                Sweep::UnlabeledFraction(a.values.clone().unwrap_or_else(|| vec![0.25, 0.5, 0.75]))
            };
            comparison_experiment(&ComparisonPlan {
                model,
                n: a.n,
                p: a.p,
                s: a.s,
                k: a.k,
                covariate_sd: a.covariate_sd.unwrap_or(2.0),
                sweep,
                replicates: a.replicates,
                test_size: a.test_size,
                folds: a.folds,
                grid_len: a.grid_len,
                grid_ratio: a.grid_ratio,
                seed: a.seed,
                method: a.solver.into(),
            })?
        }
        SweepArg::Misspec => misspecification_experiment(&MisspecPlan {
            model,
            n: a.n,
            p: a.p,
            s: a.s,
            k: a.k,
            true_pi: a.true_pi,
            assumed_pi: a.values.clone().unwrap_or_else(|| vec![0.4, 0.5, 0.6, 0.7, 0.8]),
            replicates: a.replicates,
            covariate_sd: a.covariate_sd.unwrap_or(1.0),
            test_size: a.test_size,
            folds: a.folds,
            grid_len: a.grid_len,
            grid_ratio: a.grid_ratio,
            seed: a.seed,
            method: a.solver.into(),
        })?,
    };
    emit(&report, a.out_csv.as_ref(), a.out_json.as_ref())?;
    Ok(Status::Ok)
}
