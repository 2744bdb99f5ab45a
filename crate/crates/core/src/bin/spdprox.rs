use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spdprox::field::{
    self, gen_synthetic, load_field, mean_distance, save_field, FieldError, Noise, TensorField,
};
use spdprox::jobs::{self, Filter, WeightPolicy, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_WARNING};
use spdprox::par::Execution;
use spdprox::prox::{iteration_lower_bound, ProxConfig, Solution};
use spdprox::spd::SpdPoint;

/// Proximal point solvers for means and medians of SPD matrices.
#[derive(Parser)]
#[command(name = "spdprox", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Weighted Karcher mean of all records.
    Mean(SolveArgs),
    /// Weighted Riemannian median of all records.
    Median(SolveArgs),
    /// One proximal step from the arithmetic mean.
    Prox {
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, value_enum, default_value_t = FilterArg::Mean)]
        filter: FilterArg,
    },
    /// Windowed mean or median filter over a grid field.
    Denoise(DenoiseArgs),
    /// Lower bound on outer iterations to reach a given accuracy.
    Bound(BoundArgs),
    /// Write a synthetic noisy field (and optionally its clean version).
    Synth(SynthArgs),
    /// Mean Riemannian distance between two fields of equal shape.
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Mean,
    Median,
}

impl From<FilterArg> for Filter {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Mean => Filter::Mean,
            FilterArg::Median => Filter::Median,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    /// Every record weighs 1.
    Uniform,
    /// Use the `weights:` line of the input.
    Field,
}

impl From<WeightsArg> for WeightPolicy {
    fn from(w: WeightsArg) -> Self {
        match w {
            WeightsArg::Uniform => WeightPolicy::Uniform,
            WeightsArg::Field => WeightPolicy::Field,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    theta1: Option<f64>,
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    upsilon: Option<f64>,
    /// Finite-difference step.
    #[arg(long)]
    delta: Option<f64>,
    /// Inner stop tolerance of the first sweep.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    residual_tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> ProxConfig {
        let mut c = ProxConfig::default();
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src { c.$($dst).+ = v; })*
            };
        }
        set!(
            beta0 => beta0,
            theta1 => theta1,
            theta2 => theta2,
            eps0 => eps0,
            mu => mu,
            eta => inner.eta,
            upsilon => inner.upsilon,
            delta => inner.delta,
            tau => inner.tau,
            outer_tol => outer_tol,
            residual_tol => residual_tol,
            max_outer => max_outer,
            max_inner => max_inner,
        );
        c
    }
}

#[derive(Args)]
struct SolveArgs {
    input: PathBuf,
    /// Result file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// CSV with one row per outer iteration.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = WeightsArg::Field)]
    weights: WeightsArg,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct DenoiseArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Odd side length of the neighbourhood.
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, value_enum, default_value_t = FilterArg::Mean)]
    filter: FilterArg,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = WeightsArg::Uniform)]
    weights: WeightsArg,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 1.0)]
    eps0: f64,
    #[arg(long, default_value_t = 1.0)]
    beta0: f64,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    /// Integer ratio `ε_k/ε_{k+1}`.
    #[arg(long, default_value_t = 2)]
    omega: u32,
    /// Target accuracy.
    #[arg(long)]
    eps: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// `HxW`.
    #[arg(long, default_value = "8x8", value_parser = parse_grid)]
    grid: (usize, usize),
    /// Riemannian distance of each perturbation.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Perturb only this fraction of voxels.
    #[arg(long)]
    impulse: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the noise-free field here.
    #[arg(long)]
    clean: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got '{s}'"))?;
    let p = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad grid size '{t}': {e}"))
    };
    Ok((p(h)?, p(w)?))
}

enum Failure {
    Field(FieldError),
    Solver(spdprox::Error),
}

impl From<FieldError> for Failure {
    fn from(e: FieldError) -> Self {
        Failure::Field(e)
    }
}

impl From<spdprox::Error> for Failure {
    fn from(e: spdprox::Error) -> Self {
        Failure::Solver(e)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|source| {
        Failure::Field(FieldError::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

fn emit_point(point: &SpdPoint, output: Option<&Path>) -> Result<(), Failure> {
    let f = TensorField::new(vec![point.clone()], None, None)?;
    match output {
        Some(p) => save_field(p, &f)?,
        None => print!("{}", field::format_field(&f)),
    }
    Ok(())
}

/// `single_step` runs are not expected to meet the outer tolerance, so only
/// an exhausted inner budget counts as a warning for them.
fn solve(
    args: &SolveArgs,
    single_step: bool,
    run: impl Fn(&TensorField, &ProxConfig) -> spdprox::Result<Solution>,
) -> Result<i32, Failure> {
    let config = args.solver.config();
    config.validate()?;
    let mut input = load_field(&args.input)?;
    if let WeightsArg::Uniform = args.weights {
        input = TensorField::new(input.matrices().to_vec(), None, input.grid())?;
    }
    let sol = run(&input, &config)?;
    emit_point(&sol.point, args.output.as_deref())?;
    if let Some(t) = &args.trace {
        write_text(t, &jobs::trace_csv(&sol.trace))?;
    }
    let warned = if single_step {
        sol.trace.any_warning()
    } else {
        jobs::has_warning(&sol)
    };
    if warned {
        eprintln!(
            "warning: solver stopped after {} outer iterations (converged: {}, inner budget exhausted: {})",
            sol.trace.records.len(),
            sol.converged,
            sol.trace.any_warning()
        );
        return Ok(EXIT_WARNING);
    }
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.cmd {
        Cmd::Mean(a) => solve(&a, false, jobs::run_mean),
        Cmd::Median(a) => solve(&a, false, jobs::run_median),
        Cmd::Prox { solve: a, filter } => {
            solve(&a, true, |f, c| jobs::run_prox(f, filter.into(), c))
        }
        Cmd::Denoise(a) => {
            let config = a.solver.config();
            config.validate()?;
            let input = load_field(&a.input)?;
            let out = jobs::run_denoise(
                &input,
                a.window,
                a.filter.into(),
                a.weights.into(),
                &config,
                Execution::from_jobs(a.jobs),
            )?;
            save_field(&a.output, &out.field)?;
            if out.warnings.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!(
                    "warning: {} of {} voxels did not converge",
                    out.warnings.len(),
                    out.field.len()
                );
                Ok(EXIT_WARNING)
            }
        }
        Cmd::Bound(a) => {
            let k = iteration_lower_bound(a.eps0, a.beta0, a.mu, a.omega, a.eps)?;
            println!(
                "eps0={} beta0={} mu={} omega={} eps={}",
                a.eps0, a.beta0, a.mu, a.omega, a.eps
            );
            println!("{k}");
            Ok(EXIT_OK)
        }
        Cmd::Synth(a) => {
            let noise = match a.impulse {
                Some(fraction) => Noise::Impulse {
                    scale: a.noise,
                    fraction,
                },
                None => Noise::Dense { scale: a.noise },
            };
            let (clean, noisy) = gen_synthetic(a.dim, a.grid.0, a.grid.1, noise, a.seed)?;
            save_field(&a.output, &noisy)?;
            if let Some(p) = &a.clean {
                save_field(p, &clean)?;
            }
            Ok(EXIT_OK)
        }
        Cmd::Compare { a, b } => {
            let d = mean_distance(&load_field(&a)?, &load_field(&b)?)?;
            println!("{d}");
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(Failure::Field(e)) => {
            eprintln!("error: {e}");
            jobs::field_exit_code(&e)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            jobs::error_exit_code(&e)
        }
    };
    debug_assert!([EXIT_OK, EXIT_USAGE, 3, EXIT_WARNING, EXIT_NUMERIC].contains(&code));
    ExitCode::from(code as u8)
}
