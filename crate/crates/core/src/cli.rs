//! The `moescale` command-line surface.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::compute_optimal::{
    compute_savings, concretize, frontier, log_spaced, optimize_dense, optimize_moe, BudgetQuery,
    OptimalConfig,
};
use crate::error::{Error, Result};
use crate::fitting::{
    bootstrap_fit, fit_dense, fit_moe, multistart_grid, percentile_interval, rmse, validation_split, FitConfig,
    FitResult, FittableLaw, TrainingRun,
};
use crate::io::{
    frontier_plot_data, generate_synthetic, load_coefficients, load_runs, model_notation, parse_model_notation,
    parse_quantity, save_coefficients, sci, write_frontier_csv, write_runs, CoefficientValues, CoefficientsFile,
    FitMeta, SyntheticGrid,
};
use crate::laws::{clark_loss, dense_loss, moe_loss, perplexity, DenseCoefficients, MoeCoefficients};
use crate::shapes::{
    param_counts, routing_share, shape_from_active, training_flops, flops_per_token, FlopsConstants, ModelShape,
};

pub const THREADS_ENV: &str = "MOESCALE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "moescale", version, about = "Scaling laws for fine-grained Mixture-of-Experts models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a loss law to a runs CSV and write a coefficients JSON.
    Fit(FitCmd),
    /// Predict the loss of one configuration.
    Predict(PredictCmd),
    /// Parameter and FLOPs breakdown for a shape.
    Flops(FlopsCmd),
    /// Compute-optimal configuration for a FLOPs budget.
    Optimize(OptimizeCmd),
    /// Compute-optimal MoE and dense frontier over a budget range.
    Frontier(FrontierCmd),
    /// Dense-to-MoE compute savings at a budget.
    Savings(SavingsCmd),
    /// Bootstrap percentile intervals for fitted coefficients.
    Bootstrap(BootstrapCmd),
    /// Generate a synthetic runs CSV from coefficients.
    Synth(SynthCmd),
    /// Fit on all but the lowest-loss fifth of runs and report holdout error.
    Validate(ValidateCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawKind {
    Moe,
    Dense,
}

fn quantity(s: &str) -> std::result::Result<f64, String> {
    parse_quantity(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    /// Forward+backward FLOPs per parameter per token.
    #[arg(long, default_value_t = 6.0)]
    pub c_f: f64,
    /// Router FLOPs per routing parameter per token.
    #[arg(long, default_value_t = 14.0)]
    pub c_r: f64,
    /// d_model / n_blocks.
    #[arg(long, default_value_t = 64.0)]
    pub width_depth_ratio: f64,
}

impl ConstantsArgs {
    fn constants(&self) -> Result<FlopsConstants> {
        FlopsConstants::new(self.c_f, self.c_r, self.width_depth_ratio)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 0.1)]
    pub huber_delta: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    /// Residuals on raw losses instead of log losses.
    #[arg(long)]
    pub raw_space: bool,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    /// Upper bound on the number of multistart points.
    #[arg(long, default_value_t = crate::fitting::DEFAULT_MAX_STARTS)]
    pub max_starts: usize,
}

impl FitArgs {
    fn config(&self) -> Result<FitConfig> {
        let config = FitConfig {
            huber_delta: self.huber_delta,
            weight_decay: self.weight_decay,
            multistart_grid: multistart_grid(self.max_starts),
            max_iterations: self.max_iterations,
            log_space: !self.raw_space,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    /// `E x N_act` notation, e.g. `64x25M`.
    #[arg(long, conflicts_with_all = ["d_model", "n_blocks"])]
    pub model: Option<String>,
    #[arg(long, value_parser = quantity, requires = "n_blocks")]
    pub d_model: Option<f64>,
    #[arg(long, value_parser = quantity, requires = "d_model")]
    pub n_blocks: Option<f64>,
    /// Expansion rate E.
    #[arg(long)]
    pub e: Option<f64>,
    /// Granularity G.
    #[arg(long, default_value_t = 1.0)]
    pub g: f64,
}

impl ShapeArgs {
    fn has_shape(&self) -> bool {
        self.model.is_some() || self.d_model.is_some()
    }

    fn shape(&self, default_expansion: f64, constants: &FlopsConstants) -> Result<ModelShape> {
        if let Some(model) = &self.model {
            let (e, n_active) = parse_model_notation(model)?;
            if let Some(flag) = self.e {
                if flag != e {
                    return Err(Error::domain(format!("--e {flag} contradicts --model {model}")));
                }
            }
            return shape_from_active(n_active, e, self.g, constants);
        }
        match (self.d_model, self.n_blocks) {
            (Some(d), Some(n)) => ModelShape::new(d, n, self.e.unwrap_or(default_expansion), self.g),
            _ => Err(Error::domain("give --model or both --d-model and --n-blocks")),
        }
    }
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[arg(long)]
    pub runs: PathBuf,
    /// Coefficients JSON to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LawKind::Moe)]
    pub kind: LawKind,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct PredictCmd {
    #[arg(long)]
    pub coeffs: PathBuf,
    /// Total parameter count; alternative to a shape.
    #[arg(long, value_parser = quantity, conflicts_with_all = ["model", "d_model"])]
    pub n: Option<f64>,
    #[arg(long, value_parser = quantity)]
    pub tokens: Option<f64>,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub constants: ConstantsArgs,
}

#[derive(Debug, Args)]
pub struct FlopsCmd {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, value_parser = quantity)]
    pub tokens: f64,
    #[command(flatten)]
    pub constants: ConstantsArgs,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// MoE coefficients JSON (a dense file selects the dense optimum).
    #[arg(long)]
    pub coeffs: PathBuf,
    /// Expansion rate E; defaults to the coefficients file's.
    #[arg(long)]
    pub e: Option<f64>,
    /// Comma-separated candidate granularities.
    #[arg(long, value_parser = quantity, value_delimiter = ',')]
    pub g_grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub constants: ConstantsArgs,
}

impl BudgetArgs {
    fn query(&self, flops: f64, file: &CoefficientsFile) -> Result<BudgetQuery> {
        let mut query = BudgetQuery::new(flops, self.e.unwrap_or(file.expansion))?;
        query.constants = self.constants.constants()?;
        if let Some(grid) = &self.g_grid {
            query.g_grid = grid.clone();
        }
        query.validate()?;
        Ok(query)
    }

    fn dense(&self, path: &Option<PathBuf>) -> Result<DenseCoefficients> {
        match path {
            Some(p) => load_coefficients(p)?.dense_coefficients(),
            None => Ok(DenseCoefficients::PUBLISHED),
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeCmd {
    #[arg(long, value_parser = quantity)]
    pub flops: f64,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Round depth to whole blocks and respend the budget on tokens.
    #[arg(long)]
    pub concrete: bool,
}

#[derive(Debug, Args)]
pub struct FrontierCmd {
    #[arg(long, value_parser = quantity)]
    pub from: f64,
    #[arg(long, value_parser = quantity)]
    pub to: f64,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Dense coefficients JSON; defaults to the published dense fit.
    #[arg(long)]
    pub dense_coeffs: Option<PathBuf>,
    /// Frontier CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tab-separated plot data path.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SavingsCmd {
    #[arg(long, value_parser = quantity)]
    pub flops: f64,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long)]
    pub dense_coeffs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapCmd {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, value_enum, default_value_t = LawKind::Moe)]
    pub kind: LawKind,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.8)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.9)]
    pub hi: f64,
    /// Comma-separated budgets at which to report compute-optimal intervals.
    #[arg(long, value_parser = quantity, value_delimiter = ',')]
    pub flops: Option<Vec<f64>>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub constants: ConstantsArgs,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    #[arg(long)]
    pub coeffs: PathBuf,
    /// `reference-e64`, `reference-e16`, `reference-dense`, or a grid JSON path.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Runs CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateCmd {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, value_enum, default_value_t = LawKind::Moe)]
    pub kind: LawKind,
    #[command(flatten)]
    pub fit: FitArgs,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Errors go to `err` as `error[CODE]: message`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let rendered = e.render().to_string();
            let mut lines = rendered.lines();
            let first = lines.next().unwrap_or_default();
            let _ = writeln!(err, "error[E_USAGE]: {}", first.trim_start_matches("error: "));
            for line in lines {
                let _ = writeln!(err, "{line}");
            }
            return 2;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            1
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Fit(cmd) => run_fit(cmd, out),
        Command::Predict(cmd) => run_predict(cmd, out),
        Command::Flops(cmd) => run_flops(cmd, out),
        Command::Optimize(cmd) => run_optimize(cmd, out),
        Command::Frontier(cmd) => run_frontier(cmd, out),
        Command::Savings(cmd) => run_savings(cmd, out),
        Command::Bootstrap(cmd) => run_bootstrap(cmd, out),
        Command::Synth(cmd) => run_synth(cmd, out),
        Command::Validate(cmd) => run_validate(cmd, out),
    }
}

fn kv(out: &mut dyn Write, key: &str, value: f64) -> Result<()> {
    writeln!(out, "{key} {}", sci(value))?;
    Ok(())
}

fn coefficient_rows(values: &CoefficientValues) -> Vec<(&'static str, f64)> {
    match values {
        CoefficientValues::Moe(k) => vec![
            ("a", k.a),
            ("alpha", k.alpha),
            ("b", k.b),
            ("beta", k.beta),
            ("g", k.g),
            ("gamma", k.gamma),
            ("c", k.c),
        ],
        CoefficientValues::Dense(k) => {
            vec![("a", k.a), ("alpha", k.alpha), ("b", k.b), ("beta", k.beta), ("c", k.c)]
        }
        CoefficientValues::Clark(k) => vec![("a", k.a), ("b", k.b), ("c", k.c), ("d", k.d)],
    }
}

/// The single expansion rate shared by all runs.
fn common_expansion(runs: &[TrainingRun]) -> Result<f64> {
    let first = runs.first().ok_or(Error::EmptyRuns)?.expansion;
    if runs.iter().any(|r| r.expansion != first) {
        return Err(Error::domain("runs mix several expansion rates"));
    }
    Ok(first)
}

fn fit_meta<L>(result: &FitResult<L>, config: &FitConfig) -> FitMeta {
    FitMeta {
        rmse: result.rmse,
        n_runs: result.n_runs,
        objective: result.objective_value,
        converged: result.converged,
        huber_delta: config.huber_delta,
        weight_decay: config.weight_decay,
        log_space: config.log_space,
        max_iterations: config.max_iterations,
        starts: config.multistart_grid.len(),
    }
}

fn fit_to_file(kind: LawKind, runs: &[TrainingRun], config: &FitConfig) -> Result<CoefficientsFile> {
    match kind {
        LawKind::Moe => {
            let result = fit_moe(runs, config)?;
            Ok(CoefficientsFile {
                expansion: common_expansion(runs)?,
                values: CoefficientValues::Moe(result.coefficients),
                fit_meta: Some(fit_meta(&result, config)),
            })
        }
        LawKind::Dense => {
            let result = fit_dense(runs, config)?;
            Ok(CoefficientsFile {
                expansion: 1.0,
                values: CoefficientValues::Dense(result.coefficients),
                fit_meta: Some(fit_meta(&result, config)),
            })
        }
    }
}

fn run_fit(cmd: FitCmd, out: &mut dyn Write) -> Result<()> {
    let table = load_runs(&cmd.runs)?;
    let config = cmd.fit.config()?;
    let file = fit_to_file(cmd.kind, &table.rows, &config)?;
    let meta = file.fit_meta.clone().expect("fit attaches metadata");
    kv(out, "rmse", meta.rmse)?;
    kv(out, "objective", meta.objective)?;
    writeln!(out, "n_runs {}", meta.n_runs)?;
    writeln!(out, "converged {}", meta.converged)?;
    for (name, value) in coefficient_rows(&file.values) {
        kv(out, name, value)?;
    }
    if let Some(path) = &cmd.out {
        save_coefficients(&file, path)?;
    }
    Ok(())
}

fn run_predict(cmd: PredictCmd, out: &mut dyn Write) -> Result<()> {
    let file = load_coefficients(&cmd.coeffs)?;
    let constants = cmd.constants.constants()?;
    let (n_total, granularity, expansion) = match cmd.n {
        Some(n) => (n, cmd.shape.g, cmd.shape.e.unwrap_or(file.expansion)),
        None => {
            let shape = cmd.shape.shape(file.expansion, &constants)?;
            kv(out, "n_active", param_counts(&shape).active)?;
            (param_counts(&shape).total, shape.granularity(), shape.expansion())
        }
    };
    let tokens = || cmd.tokens.ok_or_else(|| Error::domain("--tokens is required for this law"));
    let loss = match file.values {
        CoefficientValues::Moe(k) => moe_loss(n_total, tokens()?, granularity, &k)?,
        CoefficientValues::Dense(k) => dense_loss(n_total, tokens()?, &k)?,
        CoefficientValues::Clark(k) => clark_loss(n_total, expansion, &k)?,
    };
    kv(out, "n_total", n_total)?;
    kv(out, "loss", loss)?;
    kv(out, "perplexity", perplexity(loss))?;
    Ok(())
}

fn run_flops(cmd: FlopsCmd, out: &mut dyn Write) -> Result<()> {
    let constants = cmd.constants.constants()?;
    if !cmd.shape.has_shape() {
        return Err(Error::domain("give --model or both --d-model and --n-blocks"));
    }
    let shape = cmd.shape.shape(1.0, &constants)?;
    let counts = param_counts(&shape);
    kv(out, "d_model", shape.d_model())?;
    kv(out, "n_blocks", shape.n_blocks())?;
    kv(out, "n_active", counts.active)?;
    kv(out, "n_total", counts.total)?;
    kv(out, "n_routing", counts.routing)?;
    kv(out, "flops_per_token", flops_per_token(&shape, &constants))?;
    kv(out, "training_flops", training_flops(&shape, cmd.tokens, &constants)?)?;
    kv(out, "routing_share", routing_share(&shape, &constants))?;
    Ok(())
}

const CONFIG_HEADER: &str = "model,n_active,n_total,d_model,n_blocks,tokens,granularity,flops,predicted_loss";

fn config_row(c: &OptimalConfig) -> String {
    [
        c.n_active,
        c.n_total,
        c.shape.d_model(),
        c.shape.n_blocks(),
        c.tokens,
        c.granularity,
        c.flops_check,
        c.predicted_loss,
    ]
    .iter()
    .fold(model_notation(&c.shape), |row, v| row + "," + &sci(*v))
}

fn run_optimize(cmd: OptimizeCmd, out: &mut dyn Write) -> Result<()> {
    let file = load_coefficients(&cmd.budget.coeffs)?;
    let query = cmd.budget.query(cmd.flops, &file)?;
    let config = match file.values {
        CoefficientValues::Moe(k) => {
            let c = optimize_moe(&query, &k)?;
            if cmd.concrete { concretize(&c, &k, &query.constants)? } else { c }
        }
        CoefficientValues::Dense(k) => {
            let c = optimize_dense(cmd.flops, &k, &query.constants)?;
            if cmd.concrete { concretize(&c, &k, &query.constants)? } else { c }
        }
        CoefficientValues::Clark(_) => {
            return Err(Error::Schema("compute-optimal allocation needs a moe or dense law".into()))
        }
    };
    writeln!(out, "{CONFIG_HEADER}")?;
    writeln!(out, "{}", config_row(&config))?;
    Ok(())
}

fn run_frontier(cmd: FrontierCmd, out: &mut dyn Write) -> Result<()> {
    let file = load_coefficients(&cmd.budget.coeffs)?;
    let moe = file.moe_coefficients()?;
    let dense = cmd.budget.dense(&cmd.dense_coeffs)?;
    let query = cmd.budget.query(cmd.from, &file)?;
    let budgets = log_spaced(cmd.from, cmd.to, cmd.points)?;
    let points = frontier(&budgets, &moe, &dense, &query)?;
    match &cmd.out {
        Some(path) => write_frontier_csv(&points, std::io::BufWriter::new(fs::File::create(path)?))?,
        None => write_frontier_csv(&points, &mut *out)?,
    }
    if let Some(path) = &cmd.plot_data {
        fs::write(path, frontier_plot_data(&points))?;
    }
    Ok(())
}

fn run_savings(cmd: SavingsCmd, out: &mut dyn Write) -> Result<()> {
    let file = load_coefficients(&cmd.budget.coeffs)?;
    let moe = file.moe_coefficients()?;
    let dense = cmd.budget.dense(&cmd.dense_coeffs)?;
    let query = cmd.budget.query(cmd.flops, &file)?;
    let ratio = compute_savings(cmd.flops, &moe, &dense, &query)?;
    kv(out, "flops", cmd.flops)?;
    kv(out, "dense_flops", ratio * cmd.flops)?;
    kv(out, "savings_ratio", ratio)?;
    Ok(())
}

fn interval_rows<L: FittableLaw>(
    results: &[Result<FitResult<L>>],
    estimate: &L,
    to_values: fn(&L) -> CoefficientValues,
    lo: f64,
    hi: f64,
    out: &mut dyn Write,
) -> Result<Vec<L>> {
    let fits: Vec<L> = results.iter().flatten().map(|r| r.coefficients.clone()).collect();
    if fits.is_empty() {
        return Err(Error::domain("every bootstrap refit failed"));
    }
    writeln!(out, "parameter,estimate,lo,hi")?;
    let wrap = |k: &L| coefficient_rows(&to_values(k));
    let names = wrap(estimate);
    for (i, (name, value)) in names.iter().enumerate() {
        let samples: Vec<f64> = fits.iter().map(|k| wrap(k)[i].1).collect();
        let (p_lo, p_hi) = percentile_interval(&samples, lo, hi)?;
        writeln!(out, "{name},{},{},{}", sci(*value), sci(p_lo), sci(p_hi))?;
    }
    Ok(fits)
}

fn run_bootstrap(cmd: BootstrapCmd, out: &mut dyn Write) -> Result<()> {
    let table = load_runs(&cmd.runs)?;
    let config = cmd.fit.config()?;
    let constants = cmd.constants.constants()?;
    match cmd.kind {
        LawKind::Moe => {
            let estimate = fit_moe(&table.rows, &config)?.coefficients;
            let results = bootstrap_fit::<MoeCoefficients>(&table.rows, &config, cmd.fraction, cmd.iterations, cmd.seed)?;
            let fits = interval_rows(&results, &estimate, |k| CoefficientValues::Moe(*k), cmd.lo, cmd.hi, out)?;
            writeln!(out, "failures {}", results.len() - fits.len())?;
            if let Some(budgets) = &cmd.flops {
                let expansion = common_expansion(&table.rows)?;
                writeln!(out, "flops,tokens_lo,tokens_hi,n_active_lo,n_active_hi,G_lo,G_hi")?;
                for &flops in budgets {
                    let mut query = BudgetQuery::new(flops, expansion)?;
                    query.constants = constants;
                    let optima = fits
                        .iter()
                        .map(|k| optimize_moe(&query, k))
                        .collect::<Result<Vec<_>>>()?;
                    let pick = |f: fn(&OptimalConfig) -> f64| {
                        percentile_interval(&optima.iter().map(f).collect::<Vec<_>>(), cmd.lo, cmd.hi)
                    };
                    let tokens = pick(|c| c.tokens)?;
                    let active = pick(|c| c.n_active)?;
                    let g = pick(|c| c.granularity)?;
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        sci(flops),
                        sci(tokens.0),
                        sci(tokens.1),
                        sci(active.0),
                        sci(active.1),
                        sci(g.0),
                        sci(g.1)
                    )?;
                }
            }
        }
        LawKind::Dense => {
            let estimate = fit_dense(&table.rows, &config)?.coefficients;
            let results =
                bootstrap_fit::<DenseCoefficients>(&table.rows, &config, cmd.fraction, cmd.iterations, cmd.seed)?;
            let fits = interval_rows(&results, &estimate, |k| CoefficientValues::Dense(*k), cmd.lo, cmd.hi, out)?;
            writeln!(out, "failures {}", results.len() - fits.len())?;
        }
    }
    Ok(())
}

fn run_synth(cmd: SynthCmd, out: &mut dyn Write) -> Result<()> {
    let file = load_coefficients(&cmd.coeffs)?;
    let grid = match cmd.grid.as_deref() {
        Some("reference-e64") => SyntheticGrid::reference_e64(),
        Some("reference-e16") => SyntheticGrid::reference_e16(),
        Some("reference-dense") => SyntheticGrid::reference_dense(),
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Schema(e.to_string()))?,
        None => match file.model_kind() {
            crate::io::ModelKind::Dense => SyntheticGrid::reference_dense(),
            _ if file.expansion == 16.0 => SyntheticGrid::reference_e16(),
            _ => SyntheticGrid::reference_e64(),
        },
    };
    let table = match file.values {
        CoefficientValues::Moe(k) => generate_synthetic(&k, &grid, cmd.noise, cmd.seed)?,
        CoefficientValues::Dense(k) => generate_synthetic(&k, &grid, cmd.noise, cmd.seed)?,
        CoefficientValues::Clark(_) => {
            return Err(Error::Schema("synthetic runs need a moe or dense law".into()))
        }
    };
    match &cmd.out {
        Some(path) => write_runs(&table, std::io::BufWriter::new(fs::File::create(path)?)),
        None => write_runs(&table, &mut *out),
    }
}

fn run_validate(cmd: ValidateCmd, out: &mut dyn Write) -> Result<()> {
    let table = load_runs(&cmd.runs)?;
    let config = cmd.fit.config()?;
    let (train, holdout) = validation_split(&table.rows)?;
    let file = fit_to_file(cmd.kind, &train, &config)?;
    let (train_rmse, holdout_rmse) = match file.values {
        CoefficientValues::Moe(k) => (rmse(&k, &train, config.log_space)?, rmse(&k, &holdout, config.log_space)?),
        CoefficientValues::Dense(k) => (rmse(&k, &train, config.log_space)?, rmse(&k, &holdout, config.log_space)?),
        CoefficientValues::Clark(_) => unreachable!("fit never produces clark coefficients"),
    };
    writeln!(out, "n_train {}", train.len())?;
    writeln!(out, "n_holdout {}", holdout.len())?;
    kv(out, "train_rmse", train_rmse)?;
    kv(out, "holdout_rmse", holdout_rmse)?;
    for (name, value) in coefficient_rows(&file.values) {
        kv(out, name, value)?;
    }
    Ok(())
}
