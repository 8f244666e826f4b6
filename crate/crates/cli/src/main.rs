//! `pollencast`: synthesize data, label seasons, train, predict, backtest
//! and tabulate the threshold function.
//!
//! Exit codes: 0 success, 2 runtime or data error, 64 usage error.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::Datelike;
use clap::{Args, Parser, Subcommand};
use pollencast_core::backtest::{self, BacktestConfig, ZRangePolicy};
use pollencast_core::data::{
    generate_synthetic, ingest_csv, label_season, write_csv_file, Boundary, ColumnMap, Dataset,
    GeneratorProfile, SeasonDefinition,
};
use pollencast_core::gbm::GbmConfig;
use pollencast_core::pipeline::{
    self, predict_series, PipelineConfig, S2Protocol, Stage1Model, Stage2Model, TrainingSpec,
    DEFAULT_HORIZON, DEFAULT_U_FLOOR,
};
use pollencast_core::wls;

use config::{parse_years, RunConfig};

const EXIT_RUNTIME: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub enum CliError {
    Usage { kind: &'static str, message: String },
    Runtime(pollencast_core::Error),
}

impl CliError {
    fn usage(kind: &'static str, message: impl Into<String>) -> Self {
        CliError::Usage {
            kind,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// `error kind=<Kind> message=<text>` on one line.
    fn line(&self) -> String {
        let (kind, message) = match self {
            CliError::Usage { kind, message } => (*kind, message.clone()),
            CliError::Runtime(e) => (e.kind(), e.to_string()),
        };
        format!("error kind={kind} message={}", message.replace('\n', " "))
    }
}

impl From<pollencast_core::Error> for CliError {
    fn from(e: pollencast_core::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(pollencast_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "pollencast",
    version,
    about = "Allergy-season start/end forecasting"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data synthesis and model fitting.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic daily dataset as CSV.
    Synth(SynthArgs),
    /// Print per-year season labels as CSV.
    Label(LabelArgs),
    /// Fit Stage-1 and Stage-2 models and save them as JSON.
    Train(TrainArgs),
    /// Predict a year's series and the fused boundary forecast.
    Predict(PredictArgs),
    /// Rolling-origin backtest with report files.
    Backtest(BacktestArgs),
    /// Tabulate the threshold function and the minimum day count.
    Threshold(ThresholdArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    years: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generator profile JSON.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeasonArgs {
    #[arg(long = "delta-c")]
    delta_c: Option<f64>,
    #[arg(long = "delta-n")]
    delta_n: Option<usize>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    season: SeasonArgs,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[command(flatten)]
    season: SeasonArgs,
    #[arg(long, value_parser = ["start", "end"])]
    boundary: Option<String>,
    #[arg(long)]
    horizon: Option<u32>,
    /// Number of boosting rounds for both stages.
    #[arg(long)]
    trees: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// `2003-2015` or `2003,2004,2008`; defaults to every full year.
    #[arg(long = "train-years")]
    train_years: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Directory holding stage1.json and stage2.json.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    year: Option<i32>,
    /// Last prediction day (day of year); defaults to the last day in the data.
    #[arg(long = "z-last", allow_hyphen_values = true)]
    z_last: Option<i32>,
    /// First prediction day; defaults to `z-last - horizon`.
    #[arg(long = "z-first", allow_hyphen_values = true)]
    z_first: Option<i32>,
    /// Forecast series CSV (`z,y_hat,u_hat`).
    #[arg(long = "series-out")]
    series_out: Option<PathBuf>,
    /// Final forecast JSON; printed to stdout when omitted.
    #[arg(long = "forecast-out")]
    forecast_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Number of final years tested with expanding-window training.
    #[arg(long = "test-years")]
    test_years: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(long, allow_hyphen_values = true)]
    beta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta1: Option<f64>,
    #[arg(long = "z-start", allow_hyphen_values = true)]
    z_start: Option<f64>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    verbose: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn column_map(&self) -> ColumnMap {
        self.cfg.column_map.clone().unwrap_or_default()
    }

    fn load(&self, input: &Path) -> CliResult<Dataset> {
        let got = ingest_csv(input, &self.column_map())?;
        self.note(format!(
            "loaded {} rows ({} forward-filled) from {}",
            got.report.rows_read,
            got.report.filled.len(),
            input.display()
        ));
        Ok(got.dataset)
    }

    fn season(&self, args: &SeasonArgs) -> CliResult<SeasonDefinition> {
        let c = args.delta_c.or(self.cfg.delta_c).unwrap_or(120.0);
        let n = args.delta_n.or(self.cfg.delta_n).unwrap_or(4);
        SeasonDefinition::new(c, n).map_err(|e| CliError::usage("InvalidParameter", e.to_string()))
    }

    fn pipeline_config(&self, args: &ModelArgs) -> CliResult<PipelineConfig> {
        let boundary = match &args.boundary {
            Some(b) => b.parse::<Boundary>()?,
            None => self.cfg.boundary.unwrap_or(Boundary::Start),
        };
        let mut spec = TrainingSpec::new(self.season(&args.season)?, boundary);
        spec.horizon = args.horizon.or(self.cfg.horizon).unwrap_or(DEFAULT_HORIZON);
        spec.include_doy = self.cfg.include_doy.unwrap_or(true);
        if spec.horizon < 1 {
            return Err(CliError::usage("InvalidParameter", "horizon must be >= 1"));
        }
        let stage = |c: &Option<GbmConfig>| -> CliResult<GbmConfig> {
            let mut g = c.clone().unwrap_or_default();
            g.seed = self.seed;
            if let Some(t) = args.trees {
                g.n_trees = t;
            }
            g.validate()
                .map_err(|e| CliError::usage("InvalidParameter", e.to_string()))?;
            Ok(g)
        };
        let u_floor = self.cfg.u_floor.unwrap_or(DEFAULT_U_FLOOR);
        if !(u_floor > 0.0 && u_floor.is_finite()) {
            return Err(CliError::usage("InvalidParameter", "u_floor must be > 0"));
        }
        Ok(PipelineConfig {
            spec,
            stage1: stage(&self.cfg.stage1)?,
            stage2: stage(&self.cfg.stage2)?,
            s2_protocol: self
                .cfg
                .s2_protocol
                .clone()
                .unwrap_or(S2Protocol::LeaveOneYearOut),
            u_floor,
        })
    }
}

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::usage("MissingArgument", format!("--{flag} is required")))
}

fn cmd_synth(ctx: &Ctx, args: &SynthArgs) -> CliResult {
    let years = required(args.years.or(ctx.cfg.years), "years")?;
    if years == 0 {
        return Err(CliError::usage("InvalidParameter", "--years must be >= 1"));
    }
    let out = required(args.out.clone().or(ctx.cfg.out.clone()), "out")?;
    let profile = match &args.profile {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str::<GeneratorProfile>(&text)
                .map_err(|e| CliError::usage("ConfigError", format!("{}: {e}", p.display())))?
        }
        None => ctx.cfg.profile.clone().unwrap_or_default(),
    };
    profile
        .validate()
        .map_err(|e| CliError::usage("InvalidParameter", e.to_string()))?;
    let data = generate_synthetic(ctx.seed, years, &profile)?;
    write_csv_file(&data, &out)?;
    ctx.note(format!("wrote {} days to {}", data.len(), out.display()));
    Ok(())
}

fn cmd_label(ctx: &Ctx, args: &LabelArgs) -> CliResult {
    let input = required(args.input.clone().or(ctx.cfg.input.clone()), "input")?;
    let def = ctx.season(&args.season)?;
    let data = ctx.load(&input)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let na = |v: Option<u32>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
    let mut text = String::from("year,start_day,end_day,length\n");
    for year in data.full_years() {
        let l = label_season(&data, &def, year)?;
        text.push_str(&format!(
            "{year},{},{},{}\n",
            na(l.start_day),
            na(l.end_day),
            na(l.length_days)
        ));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| io_err(Path::new("<stdout>"), e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(pollencast_core::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text).map_err(pollencast_core::Error::from)?)
}

fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> CliResult {
    let input = required(args.input.clone().or(ctx.cfg.input.clone()), "input")?;
    let out_dir = required(args.out_dir.clone().or(ctx.cfg.out_dir.clone()), "out-dir")?;
    let years = match &args.train_years {
        Some(s) => Some(parse_years(s).map_err(|m| CliError::usage("InvalidParameter", m))?),
        None => ctx.cfg.train_years.clone(),
    };
    let cfg = ctx.pipeline_config(&args.model)?;
    let data = ctx.load(&input)?;
    let years = years.unwrap_or_else(|| data.full_years());
    let trained = pipeline::train(&data, &cfg, &years)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    write_json(&out_dir.join("stage1.json"), &trained.stage1)?;
    write_json(&out_dir.join("stage2.json"), &trained.stage2)?;
    println!(
        "years={} stage1_mse={} stage2_mse={}",
        years.len(),
        trained.stage1_curve.final_mse(),
        trained.stage2_curve.final_mse()
    );
    Ok(())
}

fn cmd_predict(ctx: &Ctx, args: &PredictArgs) -> CliResult {
    let models = required(args.models.clone().or(ctx.cfg.models.clone()), "models")?;
    let input = required(args.input.clone().or(ctx.cfg.input.clone()), "input")?;
    let year = required(args.year.or(ctx.cfg.year), "year")?;
    let stage1: Stage1Model = read_json(&models.join("stage1.json"))?;
    let stage2: Stage2Model = read_json(&models.join("stage2.json"))?;
    let data = ctx.load(&input)?;
    let z_last = match args.z_last.or(ctx.cfg.z_last) {
        Some(z) => z,
        None => {
            let last = data.last_date();
            if last.year() != year {
                return Err(CliError::usage(
                    "MissingArgument",
                    format!("--z-last is required when the data does not end in {year}"),
                ));
            }
            last.ordinal() as i32
        }
    };
    let z_first = args
        .z_first
        .or(ctx.cfg.z_first)
        .unwrap_or(z_last - stage1.spec.horizon as i32);
    if z_first >= z_last {
        return Err(CliError::usage(
            "InvalidParameter",
            "z-first must be below z-last",
        ));
    }
    let series = predict_series(&stage1, &stage2, &data, year, z_first..=z_last)?;
    if let Some(p) = &args.series_out {
        series.write_csv_file(p)?;
    }
    let fit = wls::fit_wls(&series.points)?;
    let forecast = wls::final_forecast(&fit)?;
    match &args.forecast_out {
        Some(p) => write_json(p, &forecast)?,
        None => println!("{}", forecast.to_json()?),
    }
    Ok(())
}

fn cmd_backtest(ctx: &Ctx, args: &BacktestArgs) -> CliResult {
    let input = required(args.input.clone().or(ctx.cfg.input.clone()), "input")?;
    let out_dir = required(args.out_dir.clone().or(ctx.cfg.out_dir.clone()), "out-dir")?;
    let pipeline = ctx.pipeline_config(&args.model)?;
    let n_test = args.test_years.or(ctx.cfg.test_years).unwrap_or(5);
    let z_range = ctx
        .cfg
        .z_range
        .clone()
        .unwrap_or(ZRangePolicy::TruthAnchored { lead: 0 });
    let data = ctx.load(&input)?;
    let folds = backtest::expanding_window(&data.full_years(), n_test)
        .map_err(|e| CliError::usage("FoldConfigInvalid", e.to_string()))?;
    let cfg = BacktestConfig {
        pipeline,
        folds,
        z_range,
    };
    let report = backtest::rolling_backtest(&data, &cfg)?;
    let files = backtest::emit_report(&report, &out_dir)?;
    ctx.note(format!(
        "wrote {} files to {}",
        files.len(),
        out_dir.display()
    ));
    backtest::write_summary(&report, std::io::stdout().lock())
        .map_err(|e| io_err(Path::new("<stdout>"), e))
}

fn cmd_threshold(ctx: &Ctx, args: &ThresholdArgs) -> CliResult {
    let beta0 = required(args.beta0.or(ctx.cfg.beta0), "beta0")?;
    let beta1 = required(args.beta1.or(ctx.cfg.beta1), "beta1")?;
    let z_start = args.z_start.or(ctx.cfg.z_start).unwrap_or(0.0);
    let n_max = args.n_max.or(ctx.cfg.n_max).unwrap_or(100);
    if beta1 == 0.0 {
        return Err(CliError::usage("ZeroSlope", "--beta1 must be non-zero"));
    }
    if n_max < 2 {
        return Err(CliError::usage("InvalidParameter", "--n-max must be >= 2"));
    }
    let analysis = wls::min_days(beta0, beta1, z_start, n_max)?;
    match args.out.clone().or(ctx.cfg.out.clone()) {
        Some(p) => {
            let file = std::fs::File::create(&p).map_err(|e| io_err(&p, e))?;
            analysis.write_csv(file)?;
        }
        None => analysis.write_csv(std::io::stdout().lock())?,
    }
    eprintln!(
        "N_n={}",
        analysis
            .min_days
            .map_or_else(|| "NA".to_string(), |n| n.to_string())
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(42),
        verbose: cli.verbose || cfg.verbose.unwrap_or(false),
        cfg,
    };
    match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Label(a) => cmd_label(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Predict(a) => cmd_predict(&ctx, a),
        Command::Backtest(a) => cmd_backtest(&ctx, a),
        Command::Threshold(a) => cmd_threshold(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
