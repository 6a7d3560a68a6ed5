use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use logcontrast::args::{parse_domain, parse_k_grid, parse_lambda_path, parse_list};
use logcontrast::composition::{assemble_dataset, check_domain, parse_response_csv, parse_trajectory_csv};
use logcontrast::design::{build_design, IntegrationRule};
use logcontrast::fitio::FitRecord;
use logcontrast::simulate::{generate_dataset, render_table, run_experiment, ExperimentPlan, ExperimentSummary, Method, SimConfig};
use logcontrast::solver::{lambda_grid, lambda_max, FitResult, PreparedFit};
use logcontrast::tuning::{bootstrap_stability, derive_seed, tune_and_fit, Criterion, TuningGrid};
use logcontrast::{BasisSpec, SolverOptions, TrajectoryDataset, Variant};
use nalgebra::{DMatrix, DVector};

use crate::output::{self, FitOutputs};
use crate::{BasisDumpArgs, BootstrapArgs, DataArgs, DesignDumpArgs, FitArgs, GridArgs, PredictArgs, ReportArgs, SimulateArgs, SolverArgs, TuneArgs};

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("CARGO_PKG_NAME"), ")");

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or input files.
    Input(String),
    /// The numerical procedure failed.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Solver(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Solver(m) => f.write_str(m),
        }
    }
}

impl From<logcontrast::Error> for CliError {
    fn from(e: logcontrast::Error) -> Self {
        match e {
            logcontrast::Error::Numerical(_) => CliError::Solver(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub enum Status {
    Done,
    NotConverged,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> ExitCode {
        match s {
            Status::Done => ExitCode::SUCCESS,
            Status::NotConverged => {
                eprintln!("warning: solver did not converge; outputs are flagged");
                ExitCode::from(3)
            }
        }
    }
}

fn status_of(fit: &FitResult) -> Status {
    if fit.converged {
        Status::Done
    } else {
        Status::NotConverged
    }
}

pub(crate) fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))
}

fn set_jobs(jobs: usize) -> CliResult<()> {
    if jobs == 0 {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }
    // a second initialization only happens in tests; the first pool stays
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    Ok(())
}

fn rule(data: &DataArgs) -> IntegrationRule {
    IntegrationRule {
        boundary_extension: !data.no_boundary_extension,
    }
}

/// Parses, joins and preprocesses the two input files.
fn load(data: &DataArgs) -> CliResult<TrajectoryDataset> {
    let traj = parse_trajectory_csv(&read(&data.trajectories)?)?;
    let resp = parse_response_csv(&read(&data.responses)?)?;
    let domain = parse_domain(&data.domain)?;
    let dataset = assemble_dataset(traj, resp, domain)?;
    Ok(dataset.preprocess(data.zero_replacement)?)
}

fn options(args: &SolverArgs) -> CliResult<SolverOptions> {
    let o = SolverOptions {
        mu0: args.mu0,
        rho: args.rho,
        eps1: args.eps1,
        eps2: args.eps2,
        ..SolverOptions::default()
    };
    o.validate()?;
    Ok(o)
}

/// `bgl` without a reference draws one from the seed.
fn variant(s: &str, p: usize, seed: Option<u64>) -> CliResult<Variant> {
    if s.trim().eq_ignore_ascii_case("bgl") {
        let seed = seed.ok_or_else(|| CliError::Input("--variant bgl without a reference needs --seed".into()))?;
        return Ok(Variant::Bgl((derive_seed(seed, 1) % p as u64) as usize));
    }
    let v = Variant::parse(s)?;
    if let Variant::Bgl(r) = v {
        if r >= p {
            return Err(CliError::Input(format!("reference {} exceeds the {p} components", r + 1)));
        }
    }
    Ok(v)
}

fn tuning_grid(args: &GridArgs, seed: u64, rule: IntegrationRule) -> CliResult<TuningGrid> {
    Ok(TuningGrid {
        k_values: parse_k_grid(&args.k_grid)?,
        degree: args.degree,
        lambda_count: args.nlambda,
        lambda_min_ratio: args.lambda_min_ratio,
        folds: args.folds,
        fold_seed: seed,
        rule,
    })
}

pub fn fit(args: FitArgs) -> CliResult<Status> {
    let dataset = load(&args.data)?;
    let rule = rule(&args.data);
    let opts = options(&args.solver)?;
    let variant = variant(&args.solver.variant, dataset.p(), args.seed)?;
    let spec = BasisSpec::uniform(args.k, args.degree, dataset.domain)?;
    let design = build_design(&dataset, &spec, rule)?;
    let prepared = PreparedFit::new(&design, variant, &opts)?;
    create_dir(&args.out)?;
    let fit = match (&args.lambda, &args.lambda_path) {
        (Some(lambda), _) => prepared.fit(*lambda, &opts, None)?,
        (None, Some(path)) => {
            let (count, ratio) = parse_lambda_path(path)?;
            let lambdas = lambda_grid(lambda_max(&design)?, count, ratio);
            let fits = prepared.fit_path(&lambdas, &opts)?;
            write(&args.out.join("path.csv"), &output::path_csv(&fits, &dataset.component_names))?;
            fits.into_iter().last().expect("non-empty path")
        }
        (None, None) => return Err(CliError::Input("pass --lambda or --lambda-path".into())),
    };
    FitOutputs {
        fit: &fit,
        spec: &spec,
        dataset: &dataset,
        zero_replacement: args.data.zero_replacement,
        rule,
        grid: args.grid,
    }
    .write(&args.out)?;
    Ok(status_of(&fit))
}

pub fn tune(args: TuneArgs) -> CliResult<Status> {
    set_jobs(args.jobs)?;
    let dataset = load(&args.data)?;
    let rule = rule(&args.data);
    let opts = options(&args.solver)?;
    let variant = variant(&args.solver.variant, dataset.p(), Some(args.seed))?;
    let criterion = Criterion::parse(&args.criterion)?;
    let grid = tuning_grid(&args.tuning, args.seed, rule)?;
    let tuned = tune_and_fit(&dataset, &grid, variant, criterion, &opts)?;
    create_dir(&args.out)?;
    let score = match criterion {
        Criterion::Cv => "cv_error",
        Criterion::Gic => "gic",
    };
    write(&args.out.join("cv_table.csv"), &tuned.outcome.to_csv(score))?;
    FitOutputs {
        fit: &tuned.fit,
        spec: &tuned.spec,
        dataset: &dataset,
        zero_replacement: args.data.zero_replacement,
        rule,
        grid: args.grid,
    }
    .write(&args.out)?;
    println!("selected k = {}, lambda = {:e}", tuned.outcome.best_k, tuned.outcome.best_lambda);
    Ok(status_of(&tuned.fit))
}

pub fn bootstrap(args: BootstrapArgs) -> CliResult<Status> {
    set_jobs(args.jobs)?;
    if args.replicates == 0 {
        return Err(CliError::Input("--replicates must be at least 1".into()));
    }
    let dataset = load(&args.data)?;
    let rule = rule(&args.data);
    let opts = options(&args.solver)?;
    let variant = variant(&args.solver.variant, dataset.p(), Some(args.seed))?;
    let grid = tuning_grid(&args.tuning, derive_seed(args.seed, 3), rule)?;
    let report = bootstrap_stability(&dataset, &grid, args.replicates, args.seed, variant, &opts)?;
    create_dir(&args.out)?;
    let json = serde_json::to_string_pretty(&report).expect("serializable report");
    write(&args.out.join("stability.json"), &json)?;
    for j in report.ranking() {
        println!("{}\t{:.3}", report.component_names[j], report.selection_proportion[j]);
    }
    if report.failures > 0 {
        eprintln!("warning: {} of {} replicates failed", report.failures, args.replicates);
    }
    Ok(Status::Done)
}

pub fn simulate(args: SimulateArgs) -> CliResult<Status> {
    set_jobs(args.jobs)?;
    let config = SimConfig {
        m: args.m,
        rho_t: args.rho_t,
        rho_x: args.rho_x,
        snr: args.snr,
        sigma_x2: args.sigma_x2,
        n_test: args.n_test,
        ..SimConfig::new(args.n, args.p, args.seed)
    };
    config.validate()?;
    let plan = ExperimentPlan {
        config: config.clone(),
        replicates: args.replicates,
        methods: parse_list(&args.methods, Method::parse)?,
        criteria: parse_list(&args.criteria, Criterion::parse)?,
        grid: tuning_grid(&args.tuning, 0, IntegrationRule::default())?,
        options: SolverOptions::default(),
    };
    plan.grid.validate(args.n)?;
    if let Some(dir) = &args.emit_data {
        let (train, _, _) = generate_dataset(&SimConfig {
            seed: derive_seed(args.seed, 0),
            ..config
        })?;
        create_dir(dir)?;
        let (traj, resp) = train.to_csv();
        write(&dir.join("trajectories.csv"), &traj)?;
        write(&dir.join("responses.csv"), &resp)?;
    }
    let summary = run_experiment(&plan)?;
    write(&args.out, &summary.to_csv())?;
    print!("{}", render_table(&summary));
    Ok(Status::Done)
}

pub fn predict(args: PredictArgs) -> CliResult<Status> {
    let record = FitRecord::from_json(&read(&args.fit)?)?;
    let fit = record.to_fit()?;
    let spec = record.spec()?;
    let traj = parse_trajectory_csv(&read(&args.trajectories)?)?;
    let mut out = String::from("subject,prediction\n");
    if traj.subjects.is_empty() {
        output::emit(args.out.as_deref(), &out)?;
        return Ok(Status::Done);
    }
    let order = output::reorder(&record.component_names, &traj.component_names, "component")?;
    let n = traj.subjects.len();
    let mut subjects = traj.subjects;
    for s in &mut subjects {
        for o in &mut s.observations {
            o.values = order.iter().map(|&j| o.values[j]).collect();
        }
    }
    check_domain(&subjects, spec.domain)?;
    let mut controls = DMatrix::zeros(n, record.control_names.len());
    if !record.control_names.is_empty() {
        let path = args
            .controls
            .as_ref()
            .ok_or_else(|| CliError::Input("the model has controls; pass --controls".into()))?;
        let table = parse_response_csv(&read(path)?)?;
        let cols = output::reorder(&record.control_names, &table.control_names, "control")?;
        for (i, s) in subjects.iter().enumerate() {
            let (_, _, values) = table
                .rows
                .iter()
                .find(|(id, _, _)| *id == s.id)
                .ok_or_else(|| CliError::Input(format!("no control values for subject {:?}", s.id)))?;
            for (c, &src) in cols.iter().enumerate() {
                controls[(i, c)] = values[src];
            }
        }
    }
    let dataset = TrajectoryDataset {
        subjects,
        response: DVector::zeros(n),
        controls,
        domain: spec.domain,
        component_names: record.component_names.clone(),
        control_names: record.control_names.clone(),
    }
    .preprocess(record.zero_replacement)?;
    let design = build_design(&dataset, &spec, record.rule())?;
    let yhat = fit.predict(&design)?;
    for (s, v) in dataset.subjects.iter().zip(yhat.iter()) {
        out.push_str(&format!("{},{v:e}\n", s.id));
    }
    output::emit(args.out.as_deref(), &out)?;
    Ok(Status::Done)
}

pub fn report(args: ReportArgs) -> CliResult<Status> {
    let summary = ExperimentSummary::from_csv(&read(&args.table)?)?;
    output::emit(args.out.as_deref(), &render_table(&summary))?;
    Ok(Status::Done)
}

pub fn basis_dump(args: BasisDumpArgs) -> CliResult<Status> {
    let spec = BasisSpec::uniform(args.k, args.degree, parse_domain(&args.domain)?)?;
    let grid = output::grid(spec.domain, args.grid)?;
    let values = spec.eval_matrix(&grid)?;
    let mut out = String::from("t");
    for l in 1..=spec.k() {
        out.push_str(&format!(",phi{l}"));
    }
    out.push('\n');
    for (g, t) in grid.iter().enumerate() {
        out.push_str(&format!("{t:e}"));
        for l in 0..spec.k() {
            out.push_str(&format!(",{:e}", values[(g, l)]));
        }
        out.push('\n');
    }
    output::emit(args.out.as_deref(), &out)?;
    Ok(Status::Done)
}

pub fn design_dump(args: DesignDumpArgs) -> CliResult<Status> {
    let dataset = load(&args.data)?;
    let spec = BasisSpec::uniform(args.k, args.degree, dataset.domain)?;
    let design = build_design(&dataset, &spec, rule(&args.data))?;
    let mut out = String::from("subject,y");
    for name in &dataset.control_names {
        out.push_str(&format!(",{name}"));
    }
    for name in &dataset.component_names {
        for l in 1..=design.k {
            out.push_str(&format!(",{name}_{l}"));
        }
    }
    out.push('\n');
    for (i, s) in dataset.subjects.iter().enumerate() {
        out.push_str(&format!("{},{:e}", s.id, design.y[i]));
        for v in design.zc.row(i).iter().chain(design.z.row(i).iter()) {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    output::emit(args.out.as_deref(), &out)?;
    Ok(Status::Done)
}
