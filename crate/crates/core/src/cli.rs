//! Command-line front end: `train`, `predict`, `check` and `bench`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver budget
//! exhausted (the model is still written, marked `converged false`).

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::coord_descent;
use crate::data::{self, DataFormat, Dataset};
use crate::error::{Error, Result};
use crate::fixed_point;
use crate::kernel::{build_gram, AlphaRule, KernelSpec, DEFAULT_DENSE_BUDGET};
use crate::loss::{LossKind, LossModel};
use crate::model::{read_model, write_model, Model, StepSize};
use crate::problem::{IndexRule, Problem, SolverConfig, SolverResult, TraceRow};
use crate::reformulation::ReformulatedProblem;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Header of the `bench` trace table.
pub const BENCH_HEADER: &str = "solver,iter,objective,residual,ms";
/// Header of the `train --trace` table.
pub const TRACE_HEADER: &str = "iter,objective,residual,ms";

#[derive(Debug, Parser)]
#[command(name = "rkm", version, about = "Regularized kernel methods solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model and write it to a file.
    Train(TrainArgs),
    /// Evaluate a model on each row of a dataset.
    Predict(PredictArgs),
    /// Report the optimality residual of a model on its training data.
    ///
    /// A zero residual certifies optimality. When K is rank deficient some
    /// optima have a nonzero residual, so a large value is not proof of a
    /// suboptimal model.
    Check(CheckArgs),
    /// Run both solvers on one problem and write a combined trace table.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Jacobi,
    Cd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelKind {
    Linear,
    Gaussian,
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleKind {
    Cyclic,
    Aitken,
    Random,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Training data file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "libsvm")]
    format: DataFormat,
    /// l1svm, l2svm, rls, rla or svr.
    #[arg(long)]
    loss: LossKind,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda: f64,
    /// Insensitivity width (svr only).
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = KernelKind::Linear)]
    kernel: KernelKind,
    /// Gaussian width, or the inner-product scale of the polynomial kernel.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    coef0: f64,
    /// Coordinate order for coordinate descent.
    #[arg(long, value_enum, default_value_t = RuleKind::Cyclic)]
    rule: RuleKind,
    /// Seed for the random coordinate order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// trace, spectral, frobenius or a number (fixed-point solver only).
    #[arg(long, default_value = "trace", allow_negative_numbers = true)]
    alpha: AlphaRule,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    tol: f64,
    /// Iteration budget (macro-iterations for coordinate descent).
    #[arg(long = "max-iters", default_value_t = 10_000)]
    max_iters: usize,
    /// Model output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Convergence trace CSV path.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = SolverKind::Cd)]
    solver: SolverKind,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Combined trace table path; stdout when absent.
    #[arg(long = "out-trace")]
    out_trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "libsvm")]
    format: DataFormat,
    /// Prediction output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "libsvm")]
    format: DataFormat,
    /// Also report the gradient norm of the smooth reformulation at step 1.
    #[arg(long)]
    reformulated: bool,
}

/// Failures classified by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonPositiveAlpha(_)
            | Error::InvalidLoss(_)
            | Error::InvalidKernel(_)
            | Error::FrobeniusOnDense
            | Error::AlphaOutOfRange { .. }
            | Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a).map(|()| EXIT_OK),
        Command::Check(a) => check(&a).map(|()| EXIT_OK),
        Command::Bench(a) => bench(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            EXIT_DATA
        }
    }
}

fn load_data(path: &Path, format: DataFormat) -> std::result::Result<Dataset, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    data::parse(BufReader::new(file), format)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_failure(path, e))
}

fn kernel_spec(args: &ProblemArgs) -> Result<KernelSpec> {
    let spec = match args.kernel {
        KernelKind::Linear => KernelSpec::Linear,
        KernelKind::Gaussian => KernelSpec::Gaussian { gamma: args.gamma },
        KernelKind::Poly => KernelSpec::Polynomial {
            degree: args.degree,
            coef0: args.coef0,
            scale: args.gamma,
        },
    };
    spec.validate()?;
    Ok(spec)
}

fn solver_config(args: &ProblemArgs) -> Result<SolverConfig> {
    if !(args.tol > 0.0 && args.tol.is_finite()) {
        return Err(Error::Config(format!(
            "--tol must be positive, got {}",
            args.tol
        )));
    }
    if args.max_iters == 0 {
        return Err(Error::Config("--max-iters must be at least 1".into()));
    }
    if args.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    Ok(SolverConfig {
        alpha_rule: args.alpha,
        tolerance: args.tol,
        max_iterations: args.max_iters,
        index_rule: match args.rule {
            RuleKind::Cyclic => IndexRule::Cyclic,
            RuleKind::Aitken => IndexRule::Aitken,
            RuleKind::Random => IndexRule::Randomized { seed: args.seed },
        },
        initial_c: None,
        record_trace: args.trace.is_some(),
        threads: args.threads,
    })
}

struct Setup {
    data: Dataset,
    kernel: KernelSpec,
    problem: Problem,
    config: SolverConfig,
}

fn setup(args: &ProblemArgs) -> std::result::Result<Setup, Failure> {
    let kernel = kernel_spec(args)?;
    let config = solver_config(args)?;
    let data = load_data(&args.data, args.format)?;
    let loss = LossModel::new(args.loss, args.lambda, args.epsilon, data.labels().to_vec())
        .map_err(|e| match e {
            Error::InvalidLabel { .. } => Failure::Data(format!("{}: {e}", args.data.display())),
            other => other.into(),
        })?;
    let gram = build_gram(&data, &kernel, DEFAULT_DENSE_BUDGET)?;
    let problem = Problem::new(gram, loss)?;
    Ok(Setup {
        data,
        kernel,
        problem,
        config,
    })
}

fn run_solver(solver: SolverKind, s: &Setup) -> Result<SolverResult> {
    match solver {
        SolverKind::Jacobi => fixed_point::solve(&s.problem, &s.config),
        SolverKind::Cd => coord_descent::solve(&s.problem, &s.config),
    }
}

fn build_model(s: &Setup, result: &SolverResult) -> Result<Model> {
    let alpha = match result.alpha {
        Some(a) => StepSize::Uniform(a),
        None => StepSize::Diagonal,
    };
    Model::from_solution(
        &s.data,
        &result.c,
        s.problem.loss(),
        s.kernel,
        alpha,
        result.converged,
    )
}

fn save_model(model: &Model, path: &Path) -> std::result::Result<(), Failure> {
    let mut out = create(path)?;
    write_model(model, &mut out).map_err(|e| io_failure_any(path, e))?;
    Ok(())
}

fn io_failure_any(path: &Path, e: Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write_trace<W: Write>(mut out: W, solver: Option<&str>, rows: &[TraceRow]) -> io::Result<()> {
    for r in rows {
        if let Some(name) = solver {
            write!(out, "{name},")?;
        }
        writeln!(
            out,
            "{},{},{},{:.3}",
            r.iteration, r.objective, r.step, r.elapsed_ms
        )?;
    }
    Ok(())
}

fn report(name: &str, result: &SolverResult) {
    info!(
        "{name}: objective {} after {} iterations, residual {:e}, converged {}",
        result.objective, result.iterations, result.residual_norm, result.converged
    );
    if !result.converged {
        warn!("{name}: iteration budget exhausted before reaching the tolerance");
    }
}

fn train(args: &TrainArgs) -> std::result::Result<i32, Failure> {
    let s = setup(&args.problem)?;
    let result = run_solver(args.solver, &s)?;
    let name = match args.solver {
        SolverKind::Jacobi => "jacobi",
        SolverKind::Cd => "cd",
    };
    report(name, &result);
    let model = build_model(&s, &result)?;
    if let Some(path) = &args.problem.out {
        save_model(&model, path)?;
    } else {
        write_model(&model, io::stdout().lock())?;
    }
    if let Some(path) = &args.problem.trace {
        let mut out = create(path)?;
        writeln!(out, "{TRACE_HEADER}")
            .and_then(|()| write_trace(&mut out, None, &result.trace))
            .and_then(|()| out.flush())
            .map_err(|e| io_failure(path, e))?;
    }
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "error: not converged after {} iterations (residual {:e})",
            result.iterations, result.residual_norm
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn bench(args: &BenchArgs) -> std::result::Result<i32, Failure> {
    let mut s = setup(&args.problem)?;
    s.config.record_trace = true;
    let jacobi = run_solver(SolverKind::Jacobi, &s)?;
    report("jacobi", &jacobi);
    let cd = run_solver(SolverKind::Cd, &s)?;
    report("cd", &cd);

    let table = |out: &mut dyn Write| -> io::Result<()> {
        writeln!(out, "{BENCH_HEADER}")?;
        write_trace(&mut *out, Some("jacobi"), &jacobi.trace)?;
        write_trace(&mut *out, Some("cd"), &cd.trace)?;
        out.flush()
    };
    match args.out_trace.as_ref().or(args.problem.trace.as_ref()) {
        Some(path) => {
            let mut out = create(path)?;
            table(&mut out).map_err(|e| io_failure(path, e))?;
        }
        None => table(&mut io::stdout().lock()).map_err(|e| Failure::Data(e.to_string()))?,
    }
    if let Some(path) = &args.problem.out {
        save_model(&build_model(&s, &cd)?, path)?;
    }
    if jacobi.converged && cd.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: at least one solver did not converge within the budget");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn load_model(path: &Path) -> std::result::Result<Model, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    read_model(BufReader::new(file)).map_err(|e| io_failure_any(path, e))
}

fn predict(args: &PredictArgs) -> std::result::Result<(), Failure> {
    let model = load_model(&args.model)?;
    let data = load_data(&args.data, args.format)?;
    let mut text = String::new();
    for (i, x) in data.rows().iter().enumerate() {
        let g = model
            .predict(x)
            .map_err(|e| Failure::Data(format!("row {}: {e}", i + 1)))?;
        text.push_str(&format!("{g}\n"));
    }
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            out.write_all(text.as_bytes())
                .and_then(|()| out.flush())
                .map_err(|e| io_failure(path, e))?;
        }
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Data(e.to_string()))?,
    }
    Ok(())
}

fn check(args: &CheckArgs) -> std::result::Result<(), Failure> {
    let model = load_model(&args.model)?;
    let data = load_data(&args.data, args.format)?;
    let loss = LossModel::new(
        model.loss,
        model.lambda,
        model.epsilon,
        data.labels().to_vec(),
    )
    .map_err(|e| Failure::Data(format!("{}: {e}", args.data.display())))?;
    let gram = build_gram(&data, &model.kernel, DEFAULT_DENSE_BUDGET)?;
    let problem = Problem::new(gram, loss)?;
    let c = model.coefficients_for(&data);
    let matched = c.iter().filter(|v| **v != 0.0).count();
    if matched != model.support.len() {
        return Err(Failure::Data(format!(
            "only {matched} of {} support vectors match rows of {}",
            model.support.len(),
            args.data.display()
        )));
    }
    let alphas = match model.alpha {
        StepSize::Uniform(a) => vec![a; problem.dim()],
        StepSize::Diagonal => problem.diagonal_alphas(),
    };
    let residual = problem.certificate_norm(&c, &alphas)?;
    let objective = problem.objective(&c)?;
    let mut out = io::stdout().lock();
    let mut lines = format!("objective {objective}\nresidual {residual:e}\n");
    if args.reformulated {
        if problem.gram().spectral_norm() >= 2.0 {
            warn!("step 1 is outside (0, 2/||K||); stationarity does not certify optimality");
        }
        let rp = ReformulatedProblem::build(&problem, 1.0)?;
        let stationarity = rp.stationarity_residual(&c)?;
        lines.push_str(&format!("stationarity {stationarity:e}\n"));
    }
    out.write_all(lines.as_bytes())
        .map_err(|e| Failure::Data(e.to_string()))?;
    Ok(())
}
