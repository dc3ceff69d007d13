//! Command-line interface: `synth`, `train`, `validate` and `scenario`.
//!
//! Exit codes: 0 on success, 1 when a model fails at runtime (e.g. a fit
//! diverges), 2 for bad flags or input data.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::data::{ModelConfig, RegionLevel, RegionRecord};
use crate::error::{Error, Result};
use crate::evaluate::{rolling_validate, write_report_csv, RefitForecaster, ReplayForecaster, ValidationPlan, ValidationReport};
use crate::forecast::ForecastMode;
use crate::hawkes::check_simplex;
use crate::ingest::{complete_hierarchy, load_bundle, write_bundle, write_text, DataPaths, DatasetBundle};
use crate::model_io::SavedModel;
use crate::scenario::{builtin_presets, long_forecast, preset, table_from_record, write_forecast_csv, write_plot_csv, DateInterval};
use crate::synth::{generate_world, WorldSpec};
use crate::trainer::{fit, TrainReport};

pub const SEED_ENV: &str = "COVIHAWKES_SEED";

#[derive(Debug, Parser)]
#[command(name = "covihawkes", version, about = "Mobility-driven Hawkes forecasts of daily case counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic nation/state/district dataset in the input CSV layout.
    Synth(SynthArgs),
    /// Fit one model per selected region.
    Train(TrainArgs),
    /// Rolling-origin validation with models refit per interval.
    Validate(ValidateArgs),
    /// Long-horizon forecasts under historical mobility scenarios.
    ///
    /// Future mobility on each date is the mean over the same weekday in the
    /// source interval (weekday 1 = Sunday through 7 = Saturday).
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding cases.csv, mobility.csv, vaccination.csv,
    /// population.csv and regions.csv.
    #[arg(long, default_value = ".")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub cases: Option<PathBuf>,
    #[arg(long)]
    pub mobility: Option<PathBuf>,
    #[arg(long)]
    pub vaccination: Option<PathBuf>,
    #[arg(long)]
    pub population: Option<PathBuf>,
    #[arg(long = "regions-file")]
    pub regions: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> DataPaths {
        let mut p = DataPaths::in_dir(&self.data_dir);
        for (slot, over) in [
            (&mut p.cases, &self.cases),
            (&mut p.mobility, &self.mobility),
            (&mut p.vaccination, &self.vaccination),
            (&mut p.population, &self.population),
            (&mut p.regions, &self.regions),
        ] {
            if let Some(path) = over {
                *slot = path.clone();
            }
        }
        p
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct RegionSelect {
    /// Region id (repeatable).
    #[arg(long)]
    pub region: Vec<String>,
    /// Every region at this level: nation, state or district.
    #[arg(long, value_parser = parse_level)]
    pub regions_level: Option<RegionLevel>,
}

fn parse_level(s: &str) -> std::result::Result<RegionLevel, String> {
    s.parse::<RegionLevel>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Lag window L in days.
    #[arg(long)]
    pub lag: Option<usize>,
    /// Mobility delay Δ in days.
    #[arg(long)]
    pub delta: Option<usize>,
    /// LSTM hidden size.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

impl ModelArgs {
    fn config(&self, seed: u64) -> Result<ModelConfig> {
        let mut c = ModelConfig::default();
        if let Some(v) = self.lag {
            c.lag = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.hidden {
            c.hidden = v;
        }
        let o = &mut c.optimizer;
        if let Some(v) = self.step_size {
            o.step_size = v;
        }
        if let Some(v) = self.max_iters {
            o.max_iters = v;
        }
        if let Some(v) = self.tolerance {
            o.tolerance = v;
        }
        if let Some(v) = self.patience {
            o.patience = v;
        }
        o.seed = seed;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Output directory (created if absent).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for region- and interval-level parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Random seed; falls back to $COVIHAWKES_SEED, then 0.
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub select: RegionSelect,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub select: RegionSelect,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Forecast window sizes in days.
    #[arg(long, value_delimiter = ',', default_value = "7,14,28")]
    pub windows: Vec<usize>,
    /// Length of the validation span in days.
    #[arg(long, default_value_t = 84)]
    pub span: usize,
    /// First day (1-based) of the validation span; defaults to the last
    /// `span` observed days.
    #[arg(long)]
    pub start_day: Option<usize>,
    /// Score the observed counts instead of model forecasts.
    #[arg(long, hide = true)]
    pub replay_truth: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mean,
    Sample,
}

impl From<ModeArg> for ForecastMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mean => ForecastMode::MeanPath,
            ModeArg::Sample => ForecastMode::Sampled,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trained model file; its region selects the history to extend.
    #[arg(long)]
    pub model: PathBuf,
    /// Built-in mobility condition (repeatable): strict, unlock7, none, current.
    #[arg(long, value_parser = ["strict", "unlock7", "none", "current"])]
    pub preset: Vec<String>,
    /// Custom source interval as two dates, START END (inclusive).
    #[arg(long, num_args = 2, value_names = ["START", "END"])]
    pub custom_interval: Option<Vec<NaiveDate>>,
    /// Name used for the custom scenario's output files.
    #[arg(long, default_value = "custom")]
    pub custom_name: String,
    /// Days to forecast past the last observation.
    #[arg(long, default_value_t = 120)]
    pub horizon: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Mean)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the five CSV files.
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub districts: usize,
    #[arg(long, default_value = "2020-02-14")]
    pub start_date: NaiveDate,
    #[arg(long, default_value_t = 554)]
    pub days: usize,
    /// Base rate μ.
    #[arg(long, default_value_t = 5.0)]
    pub mu: f64,
    /// Reproduction number at baseline mobility.
    #[arg(long, default_value_t = 1.25)]
    pub r0: f64,
    #[arg(long, default_value_t = 1.5)]
    pub mobility_effect: f64,
    #[arg(long, default_value_t = 7)]
    pub effect_delay: usize,
    /// Lag weights, oldest first, summing to 1.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Population of each district.
    #[arg(long, default_value_t = 2_000_000)]
    pub population: u64,
    #[arg(long, default_value_t = 2_000)]
    pub daily_vaccinations: u64,
    #[arg(long, default_value = "2021-01-16")]
    pub vaccination_start: NaiveDate,
    /// Random seed; falls back to $COVIHAWKES_SEED, then 0.
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_input_error() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => with_pool(a.run.workers, || cmd_train(&a)),
        Command::Validate(a) => with_pool(a.run.workers, || cmd_validate(&a)),
        Command::Scenario(a) => cmd_scenario(&a),
    }
}

fn with_pool(workers: Option<usize>, f: impl FnOnce() -> CliResult + Send) -> CliResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Argument("--workers must be at least 1".into()).into());
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError {
            code: 1,
            message: format!("cannot start worker pool: {e}"),
        })?;
    pool.install(f)
}

fn load(data: &DataArgs) -> CliResult<DatasetBundle> {
    let paths = data.paths();
    for p in paths.all() {
        if !p.exists() {
            return Err(CliError {
                code: 2,
                message: format!("path not found: {}", p.display()),
            });
        }
    }
    Ok(complete_hierarchy(load_bundle(&paths)?)?)
}

fn select<'a>(bundle: &'a DatasetBundle, select: &RegionSelect) -> CliResult<Vec<&'a RegionRecord>> {
    if let Some(level) = select.regions_level {
        let found = bundle.records_at(level);
        if found.is_empty() {
            return Err(Error::Argument(format!("no regions with data at level `{level}`")).into());
        }
        return Ok(found);
    }
    Ok(select
        .region
        .iter()
        .map(|id| bundle.record(id))
        .collect::<Result<Vec<_>>>()?)
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn cmd_train(args: &TrainArgs) -> CliResult {
    let bundle = load(&args.data)?;
    let records = select(&bundle, &args.select)?;
    let config = args.model.config(args.run.seed)?;
    create_dir(&args.run.out)?;
    let results: Vec<(String, Result<TrainReport>)> = records
        .par_iter()
        .map(|r| (r.region().id.clone(), fit(r, &config)))
        .collect();

    let mut summary = String::from("region,iterations_run,converged,final_nll,mu\n");
    let mut failures = Vec::new();
    for (region, result) in results {
        match result {
            Ok(report) => {
                let model = SavedModel {
                    region: region.clone(),
                    config: config.clone(),
                    params: report.final_params.clone(),
                };
                model.save(&args.run.out.join(format!("{region}.model.json")))?;
                let mut trace = String::from("iteration,nll\n");
                for (k, nll) in report.nll_trace.iter().enumerate() {
                    let _ = writeln!(trace, "{},{nll:.6}", k + 1);
                }
                write_text(&args.run.out.join(format!("{region}.trace.csv")), &trace)?;
                let _ = writeln!(
                    summary,
                    "{region},{},{},{:.6},{:.6}",
                    report.iterations_run,
                    report.converged,
                    report.final_nll,
                    report.final_params.mu()
                );
                println!(
                    "{region}: {} iterations, converged={}, nll={:.6}",
                    report.iterations_run, report.converged, report.final_nll
                );
            }
            Err(e) => failures.push((region, e)),
        }
    }
    write_text(&args.run.out.join("train_summary.csv"), &summary)?;
    if failures.is_empty() {
        return Ok(());
    }
    let width = failures.iter().map(|(r, _)| r.len()).max().unwrap_or(6).max(6);
    let mut table = format!("{:width$}  error\n", "region");
    for (region, e) in &failures {
        let _ = writeln!(table, "{region:width$}  {e}");
    }
    eprint!("{table}");
    let code = if failures.iter().all(|(_, e)| e.is_input_error()) { 2 } else { 1 };
    Err(CliError {
        code,
        message: format!("{} of {} regions failed", failures.len(), records.len()),
    })
}

fn cmd_validate(args: &ValidateArgs) -> CliResult {
    if args.windows.is_empty() {
        return Err(Error::Argument("at least one window is required".into()).into());
    }
    let widest = *args.windows.iter().max().expect("non-empty");
    if args.span < widest {
        return Err(Error::Argument(format!(
            "validation span {} is shorter than the largest window {widest}",
            args.span
        ))
        .into());
    }
    let bundle = load(&args.data)?;
    let records = select(&bundle, &args.select)?;
    let config = args.model.config(args.run.seed)?;
    create_dir(&args.run.out)?;
    for record in records {
        let region = &record.region().id;
        let t_s = match args.start_day {
            Some(day) => day,
            None => record
                .len()
                .checked_sub(args.span)
                .map(|d| d + 1)
                .ok_or_else(|| Error::InsufficientHistory(format!("`{region}` has fewer than {} days", args.span)))?,
        };
        let mut reports: Vec<ValidationReport> = Vec::with_capacity(args.windows.len());
        for &w in &args.windows {
            let plan = ValidationPlan::new(t_s, args.span, w)?;
            let report = if args.replay_truth {
                rolling_validate(record, &plan, &ReplayForecaster)?
            } else {
                rolling_validate(record, &plan, &RefitForecaster { config: config.clone() })?
            };
            match report.aggregate {
                Some(e) => println!("{region}: E({w}) = {e:.6}"),
                None => println!("{region}: E({w}) undefined, every interval has zero cases"),
            }
            reports.push(report);
        }
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &reports).map_err(|e| Error::io(&args.run.out, e))?;
        let path = args.run.out.join(format!("validation_{region}.csv"));
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn cmd_scenario(args: &ScenarioArgs) -> CliResult {
    let mut intervals: Vec<(String, DateInterval)> = args
        .preset
        .iter()
        .map(|name| {
            let p = preset(name).expect("validated by clap");
            (p.name.to_owned(), p.interval)
        })
        .collect();
    if let Some(dates) = &args.custom_interval {
        intervals.push((args.custom_name.clone(), DateInterval::new(dates[0], dates[1])?));
    }
    if intervals.is_empty() {
        let names: Vec<&str> = builtin_presets().iter().map(|p| p.name).collect();
        return Err(Error::Argument(format!(
            "choose --preset ({}) or --custom-interval",
            names.join(", ")
        ))
        .into());
    }
    if !args.model.exists() {
        return Err(CliError {
            code: 2,
            message: format!("path not found: {}", args.model.display()),
        });
    }
    let model = SavedModel::load(&args.model)?;
    let bundle = load(&args.data)?;
    let record = bundle.record(&model.region)?;
    create_dir(&args.run.out)?;
    for (name, interval) in intervals {
        let table = table_from_record(record, &name, interval)?;
        let forecast = long_forecast(
            &model.params,
            &model.config,
            record,
            &table,
            args.horizon,
            args.mode.into(),
            args.run.seed,
        )?;
        let stem = format!("{}_{name}", model.region);
        let mut buf = Vec::new();
        write_forecast_csv(&mut buf, &forecast).map_err(|e| Error::io(&args.run.out, e))?;
        let path = args.run.out.join(format!("scenario_{stem}.csv"));
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        let mut buf = Vec::new();
        write_plot_csv(&mut buf, &forecast).map_err(|e| Error::io(&args.run.out, e))?;
        let path = args.run.out.join(format!("plot_{stem}.csv"));
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        println!("{}: {name} total {:.6} over {} days", model.region, forecast.total(), args.horizon);
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let mut spec = WorldSpec {
        districts: args.districts,
        start_date: args.start_date,
        days: args.days,
        mu: args.mu,
        r0: args.r0,
        mobility_effect: args.mobility_effect,
        effect_delay: args.effect_delay,
        district_population: args.population,
        daily_vaccinations: args.daily_vaccinations,
        vaccination_start: args.vaccination_start,
        seed: args.seed,
        ..WorldSpec::default()
    };
    if let Some(w) = &args.weights {
        check_simplex(w).map_err(|e| match e {
            Error::Argument(m) => Error::Argument(format!("--weights: {m}")),
            other => other,
        })?;
        spec.weights = w.clone();
    }
    if !(args.mu.is_finite() && args.mu >= 0.0) {
        return Err(Error::Argument(format!("--mu must be non-negative, got {}", args.mu)).into());
    }
    if !(args.r0.is_finite() && args.r0 >= 0.0) {
        return Err(Error::Argument(format!("--r0 must be non-negative, got {}", args.r0)).into());
    }
    let world = generate_world(&spec)?;
    write_bundle(&args.out, &world.regions, &world.populations, &world.districts)?;
    println!(
        "wrote {} districts x {} days to {}",
        world.districts.len(),
        args.days,
        args.out.display()
    );
    Ok(())
}
