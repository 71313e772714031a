use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use ces_evd::asymptotics::{coeffs_closed_form_student, coeffs_numeric, AsymptoticCoeffs};
use ces_evd::ces::CesDistribution;
use ces_evd::experiments::{render_svg, run_experiment, to_csv_string, write_csv, Estimator, Experiment, ExperimentConfig};
use ces_evd::mestimator::student_spec;
use ces_evd::rng::RandomStream;
use ces_evd::Error;

#[derive(Parser)]
#[command(name = "ces-evd", about = "Monte Carlo experiments for M-estimator eigendecomposition asymptotics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write CSV (stdout unless --out) and optionally SVG.
    Run(RunArgs),
    /// Print closed-form and Monte Carlo coefficients of the t M-estimator.
    Coeffs(CoeffArgs),
    /// Print version information.
    Version,
}

/// Comma-separated list flag value.
#[derive(Clone, Debug)]
struct List<T>(Vec<T>);

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<List<T>, String> {
    s.trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| format!("cannot parse '{t}'")))
        .collect::<Result<_, _>>()
        .map(List)
}

/// Each flag overrides the config key of the same name.
#[derive(Args)]
struct RunArgs {
    /// Flat TOML file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long = "rho_mod", alias = "rho-mod")]
    rho_mod: Option<f64>,
    #[arg(long = "rho_phase", alias = "rho-phase", allow_hyphen_values = true)]
    rho_phase: Option<f64>,
    /// Comma-separated, e.g. 40,228,2000.
    #[arg(long = "n_grid", alias = "n-grid", value_parser = parse_list::<usize>)]
    n_grid: Option<List<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long = "lambda_r", alias = "lambda-r", value_parser = parse_list::<f64>)]
    lambda_r: Option<List<f64>>,
    #[arg(long = "eigvec_index", alias = "eigvec-index")]
    eigvec_index: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max_iter", alias = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long = "coeff_draws", alias = "coeff-draws")]
    coeff_draws: Option<usize>,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(e) = self.experiment {
            c.experiment = e.parse::<Experiment>()?;
        }
        if let Some(e) = self.estimator {
            c.estimator = e.parse::<Estimator>()?;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { c.$field = v; })*};
        }
        set!(p, d, rho_mod, rho_phase, trials, seed, r, gamma2, eigvec_index, tol, max_iter, coeff_draws);
        if let Some(List(v)) = self.n_grid {
            c.n_grid = v;
        }
        if let Some(List(v)) = self.lambda_r {
            c.lambda_r = v;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        if self.svg.is_some() {
            c.svg = self.svg;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct CoeffArgs {
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 3.0)]
    d: f64,
    /// Monte Carlo draws for the numeric estimate.
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Coefficient(_) => 2,
        _ => 3,
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let cfg = args.into_config()?;
    let start = Instant::now();
    let result = run_experiment(&cfg)?;
    match &cfg.out {
        Some(path) => write_csv(&result, path)?,
        None => print!("{}", to_csv_string(&result)),
    }
    if let Some(path) = &cfg.svg {
        render_svg(&result, path)?;
    }
    for (k, v) in &result.metadata {
        if k == "warning" {
            eprintln!("warning: {v}");
        }
    }
    let excluded: usize = result.rows.iter().map(|r| r.excluded).sum();
    eprintln!(
        "{}: {} grid points x {} trials in {:.2} s ({excluded} excluded)",
        cfg.experiment.name(),
        cfg.n_grid.len(),
        cfg.trials,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn print_coeffs(label: &str, c: &AsymptoticCoeffs) {
    println!(
        "{label:<12} theta1={:.6} theta2={:.6} sigma1={:.6} sigma2={:.6}  (a={:.4} b={:.4} c={:.4})",
        c.theta1, c.theta2, c.sigma1, c.sigma2, c.a, c.b, c.c
    );
}

fn coeffs(args: CoeffArgs) -> Result<(), Error> {
    let closed = coeffs_closed_form_student(args.p, args.d)?;
    let dist = CesDistribution::student_t(args.d)?;
    let spec = student_spec(args.p, args.d)?;
    let numeric = coeffs_numeric(&spec, dist, args.p, args.draws, &mut RandomStream::new(args.seed, 0))?;
    println!("t M-estimator, p = {}, d = {}", args.p, args.d);
    print_coeffs("closed-form", &closed);
    print_coeffs("numeric", &numeric);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Coeffs(a) => coeffs(a),
        Command::Version => {
            println!("ces-evd {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
