//! Argument parsing and the subcommands of the `robust-scatter` binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use robust_scatter_core::estimator::{distances, fit_regularized, initial_estimate, pca, FitOptions};
use robust_scatter_core::simgen::{run_experiment, Contaminant, ExperimentOptions, Method, SimConfig};
use robust_scatter_core::spline::Smoothing;
use robust_scatter_core::tuning::{build_grid, default_grid_size, tune_on_grid, Tuned};
use robust_scatter_core::{DataSet, WeightSpec};
use serde_json::json;

use crate::error::{CliError, Result};
use crate::exec::RayonExec;
use crate::io::{load_csv, write_json, write_matrix, write_records, Loaded};
use crate::report::{ArCurveReport, ExperimentReport, ModelReport, TuningReport};

#[derive(Debug, Parser)]
#[command(name = "robust-scatter", version, about = "Robust PCA with a trimmed Tyler-type scatter estimator")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Weight threshold; observations with exp(-d) <= alpha get no weight.
    #[arg(long, global = true, default_value_t = 0.05)]
    pub alpha: f64,
    /// Smallest active ratio covered by the tuning grid.
    #[arg(long, global = true, default_value_t = 0.2)]
    pub ell: f64,
    /// Number of grid points [default: n/5 for tuning, 50 for simulations].
    #[arg(long, global = true)]
    pub grid_size: Option<usize>,
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 500)]
    pub max_iter: usize,
    /// Number of principal components.
    #[arg(long, global = true, default_value_t = 3)]
    pub k: usize,
    /// Shrinkage toward the identity for the final fit (0 disables it).
    #[arg(long, global = true, default_value_t = 0.0)]
    pub tau: f64,
    /// Base seed of simulated data; estimation itself is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads [default: all cores].
    #[arg(long, global = true, env = "ROBUST_SCATTER_THREADS")]
    pub threads: Option<usize>,
    /// Use the full scatter in Mahalanobis distances instead of its diagonal.
    #[arg(long, global = true)]
    pub full_mahalanobis: bool,
    /// Read the input columns as they are.
    #[arg(long, global = true)]
    pub no_standardize: bool,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at one scale and write model.json, scores.csv and weights.csv.
    #[command(visible_alias = "pca")]
    Fit(FitArgs),
    /// Build the active-ratio curve and select the scale; writes ar_curve.json and tuning.json.
    Tune(TuneArgs),
    /// Run a grid of simulated configurations; writes experiment.csv and experiment.json.
    Simulate(SimulateArgs),
    /// Run the preset contamination study at desk scale.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub input: PathBuf,
    /// Initialization scale. Without it (or --tuning) the scale is tuned first.
    #[arg(long)]
    pub a: Option<f64>,
    /// Take the scale from a tuning.json written by `tune`.
    #[arg(long, conflicts_with = "a")]
    pub tuning: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContaminantArg {
    Mixture,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    SppcaAstar,
    SppcaOpt,
    Tme,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::SppcaAstar => Method::SppcaAStar,
            MethodArg::SppcaOpt => Method::SppcaOpt,
            MethodArg::Tme => Method::Tme,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "250")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub p: Vec<usize>,
    /// Degrees of freedom of the main component.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub nu: Vec<f64>,
    /// Contamination proportions.
    #[arg(long, value_delimiter = ',', default_value = "0.15")]
    pub pi: Vec<f64>,
    /// Separation multipliers.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub c: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, value_enum, default_value_t = ContaminantArg::Mixture)]
    pub contaminant: ContaminantArg,
    /// Truncation radius as a fraction of c * sqrt(p).
    #[arg(long, default_value_t = 0.5)]
    pub radius_frac: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sppca-astar,sppca-opt,tme")]
    pub methods: Vec<MethodArg>,
    /// Grid lower end as a multiple of p.
    #[arg(long, default_value_t = 0.2)]
    pub grid_lo: f64,
    /// Grid upper end as a multiple of p.
    #[arg(long, default_value_t = 3.0)]
    pub grid_hi: f64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 250)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub p: usize,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn warn(message: &str) {
    eprintln!("{}", json!({ "warning": message }));
}

impl Common {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(usage(format!("--alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.ell > 0.0 && self.ell < 1.0) {
            return Err(usage(format!("--ell must lie in (0, 1), got {}", self.ell)));
        }
        if matches!(self.grid_size, Some(m) if m < 4) {
            return Err(usage("--grid-size must be at least 4"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(usage("--tol must be positive and --max-iter at least 1"));
        }
        if self.k == 0 {
            return Err(usage("--k must be at least 1"));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(usage(format!("--tau must be finite and >= 0, got {}", self.tau)));
        }
        if self.threads == Some(0) {
            return Err(usage("--threads must be at least 1"));
        }
        Ok(())
    }

    fn spec(&self) -> WeightSpec {
        WeightSpec {
            alpha: self.alpha,
            ..WeightSpec::default()
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            diag_approx: !self.full_mahalanobis,
        }
    }

    fn exec(&self) -> Result<RayonExec> {
        RayonExec::new(self.threads).map_err(|e| usage(format!("cannot start worker pool: {e}")))
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Parses `args`, runs the subcommand and reports failures as JSON on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                _ => {
                    let err = usage(e.to_string().trim_end().to_owned());
                    eprintln!("{}", err.to_json());
                    return ExitCode::from(err.exit_code());
                }
            }
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

/// Executes a parsed command line and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let common = &cli.common;
    common.validate()?;
    std::fs::create_dir_all(&common.out_dir).map_err(|e| CliError::io(&common.out_dir, e))?;
    match &cli.command {
        Command::Fit(args) => cmd_fit(common, args),
        Command::Tune(args) => cmd_tune(common, args),
        Command::Simulate(args) => cmd_simulate(common, args),
        Command::Benchmark(args) => cmd_benchmark(common, args),
    }
}

fn load(common: &Common, input: &Path) -> Result<Loaded> {
    load_csv(input, !common.no_standardize)
}

fn tune(common: &Common, data: &DataSet, exec: &RayonExec) -> Result<Tuned> {
    let spec = common.spec();
    let opts = common.fit_options();
    let m = common.grid_size.unwrap_or_else(|| default_grid_size(data.n()));
    let grid = build_grid(data, common.ell, m, &spec, &opts, exec)?;
    let base = initial_estimate(data)?;
    let tuned = tune_on_grid(data, &grid, &base, &spec, &opts, Smoothing::Gcv, exec)?;
    if tuned.gcv_fallback {
        warn("GCV minimum on the edge of its range; smoothing spline uses a fixed number of degrees of freedom");
    }
    if tuned.result.fallback_used {
        warn("slope of the active-ratio curve has no interior local minimum; using the largest grid value");
    }
    Ok(tuned)
}

fn cmd_tune(common: &Common, args: &TuneArgs) -> Result<Vec<PathBuf>> {
    let loaded = load(common, &args.input)?;
    let exec = common.exec()?;
    let tuned = tune(common, &loaded.data, &exec)?;
    let curve_path = common.output("ar_curve.json");
    let tuning_path = common.output("tuning.json");
    write_json(&curve_path, &ArCurveReport::from(&tuned.curve))?;
    write_json(&tuning_path, &TuningReport::new(&tuned.result, tuned.gcv_fallback))?;
    Ok(vec![curve_path, tuning_path])
}

fn cmd_fit(common: &Common, args: &FitArgs) -> Result<Vec<PathBuf>> {
    let loaded = load(common, &args.input)?;
    let data = &loaded.data;
    if common.k > data.p() {
        return Err(usage(format!("--k must not exceed the number of columns ({})", data.p())));
    }
    let a = match (args.a, &args.tuning) {
        (Some(a), _) => {
            if !(a > 0.0 && a.is_finite()) {
                return Err(usage(format!("--a must be positive, got {a}")));
            }
            a
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let t: TuningReport = serde_json::from_str(&text)?;
            t.a_star
        }
        (None, None) => tune(common, data, &common.exec()?)?.result.a_star,
    };
    let spec = common.spec();
    let base = initial_estimate(data)?;
    let fit = fit_regularized(data, a, common.tau, &base.scaled(a), &spec, &common.fit_options())?;
    if !fit.converged {
        warn(&format!(
            "fit did not converge after {} iterations (relative change {:e})",
            fit.iterations, fit.residual
        ));
    }
    let model = pca(&fit.ls, common.k)?;
    let scores = model.scores(data, &fit.ls.mu);
    let d = distances(data, &fit.ls)?;
    let mut weights = DMatrix::zeros(data.n(), 3);
    for (i, di) in d.iter().enumerate() {
        weights[(i, 0)] = *di;
        weights[(i, 1)] = spec.weight_unchecked(*di);
        weights[(i, 2)] = if fit.active_mask[i] { 1.0 } else { 0.0 };
    }

    let model_path = common.output("model.json");
    let scores_path = common.output("scores.csv");
    let weights_path = common.output("weights.csv");
    write_json(
        &model_path,
        &ModelReport::new(&fit, &model, common.alpha, common.tau, loaded.standardization.as_ref()),
    )?;
    let header: Vec<String> = (1..=common.k).map(|j| format!("pc{j}")).collect();
    write_matrix(&scores_path, &header, &scores)?;
    let header = ["distance", "weight", "active"].map(String::from);
    write_matrix(&weights_path, &header, &weights)?;
    Ok(vec![model_path, scores_path, weights_path])
}

fn experiment(common: &Common, configs: &[SimConfig], opts: ExperimentOptions) -> Result<Vec<PathBuf>> {
    for c in configs {
        c.validate().map_err(|e| usage(format!("invalid configuration: {e}")))?;
    }
    let exec = common.exec()?;
    let table = run_experiment(configs, &opts, &exec)?;
    let report = ExperimentReport::from(&table);
    let csv_path = common.output("experiment.csv");
    let json_path = common.output("experiment.json");
    write_records(&csv_path, &report.rows)?;
    write_json(&json_path, &report)?;
    Ok(vec![csv_path, json_path])
}

fn base_options(common: &Common, replicates: usize) -> ExperimentOptions {
    ExperimentOptions {
        replicates,
        spec: common.spec(),
        fit: common.fit_options(),
        grid_points: common.grid_size.unwrap_or(50),
        ..ExperimentOptions::default()
    }
}

fn cmd_simulate(common: &Common, args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    if args.replicates == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    if !(args.grid_lo > 0.0 && args.grid_hi > args.grid_lo) {
        return Err(usage("need 0 < --grid-lo < --grid-hi"));
    }
    if args.methods.is_empty() {
        return Err(usage("--methods must name at least one method"));
    }
    let contaminant = match args.contaminant {
        ContaminantArg::Mixture => Contaminant::Mixture,
        ContaminantArg::Truncated => Contaminant::Truncated {
            radius_frac: args.radius_frac,
        },
    };
    let mut configs = Vec::new();
    for &n in &args.n {
        for &p in &args.p {
            for &nu in &args.nu {
                for &pi in &args.pi {
                    for &c in &args.c {
                        configs.push(SimConfig {
                            n,
                            p,
                            k: common.k,
                            nu,
                            pi,
                            c,
                            seed: common.seed,
                            contaminant,
                        });
                    }
                }
            }
        }
    }
    let mut methods: Vec<Method> = args.methods.iter().map(|m| Method::from(*m)).collect();
    methods.dedup();
    let opts = ExperimentOptions {
        methods,
        grid_lo: args.grid_lo,
        grid_hi: args.grid_hi,
        ..base_options(common, args.replicates)
    };
    experiment(common, &configs, opts)
}

/// Uncontaminated baseline plus `pi = 0.15` at separations 1 to 5, `nu = 10`.
fn cmd_benchmark(common: &Common, args: &BenchmarkArgs) -> Result<Vec<PathBuf>> {
    if args.replicates == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    let config = |pi: f64, c: f64| SimConfig {
        n: args.n,
        p: args.p,
        k: common.k,
        nu: 10.0,
        pi,
        c,
        seed: common.seed,
        contaminant: Contaminant::Mixture,
    };
    let mut configs = vec![config(0.0, 0.0)];
    configs.extend([1.0, 2.0, 3.0, 4.0, 5.0].map(|c| config(0.15, c)));
    experiment(common, &configs, base_options(common, args.replicates))
}
