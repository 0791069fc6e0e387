//! `wf` command line.
//!
//! Exit codes: 0 success, 1 bad input data, 2 usage error. Every failure
//! prints one `ERROR <code>: <message>` line on stderr; data only goes to
//! files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{loocv, BenchmarkMode, EvalReport};
use crate::features::{
    build_features, parse_features_csv, write_features_csv, FeatureConfig, FeatureRow,
};
use crate::ingest::{
    load_programme_records, load_regional_series, AgeBand, CsvInput, RegionalSeries,
};
use crate::model::{fit, fit_per_region, join_observations, Observation};
use crate::perf::{
    aggregate_performance, parse_performance_csv, write_performance_csv, PerformanceRow,
    SuccessRule,
};
use crate::report::{emit_figure_data, summary, BaselineMode, FigureInputs, FigureOptions};
use crate::synth::{generate, write_outputs, Shock, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "wf",
    version,
    about = "Reintegration-programme performance forecasting pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run input validation only.
    Validate(ValidateArgs),
    /// Build demand and supply features from the statistics files.
    Features(FeaturesArgs),
    /// Aggregate programme records into performance rates.
    Performance(PerformanceArgs),
    /// Fit the linear model.
    Fit(FitArgs),
    /// Leave-one-out evaluation against the historical-mean benchmark.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic panel with a known ground truth.
    Synth(SynthArgs),
    /// Write plot data for the four figures.
    Figures(FiguresArgs),
}

#[derive(Debug, Args, Serialize)]
struct StatsInputs {
    #[arg(long)]
    employment: PathBuf,
    #[arg(long)]
    unemployment: PathBuf,
    #[arg(long)]
    population: PathBuf,
}

#[derive(Debug, Args)]
struct LayoutOpts {
    /// Years by which both proxies trail the programme-entry year.
    #[arg(long, default_value_t = 0)]
    lag: u32,
    /// Working-age interval, inclusive.
    #[arg(long, value_name = "LO:HI", default_value = "16:64", value_parser = parse_age_band)]
    working_age: AgeBand,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, requires_all = ["unemployment", "population"])]
    employment: Option<PathBuf>,
    #[arg(long, requires_all = ["employment", "population"])]
    unemployment: Option<PathBuf>,
    #[arg(long, requires_all = ["employment", "unemployment"])]
    population: Option<PathBuf>,
    #[arg(long, required_unless_present = "employment")]
    records: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[command(flatten)]
    inputs: StatsInputs,
    #[arg(long, default_value = "features.csv")]
    out: PathBuf,
    /// Divide demand by working-age population (default).
    #[arg(long, overrides_with = "no_normalize")]
    normalize: bool,
    /// Keep demand as a raw head-count change.
    #[arg(long, overrides_with = "normalize")]
    no_normalize: bool,
    #[command(flatten)]
    layout: LayoutOpts,
}

#[derive(Debug, Args)]
struct PerformanceArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value = "performance.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = crate::perf::DEFAULT_MIN_HOURS)]
    min_hours: f64,
    #[arg(long, default_value_t = crate::perf::DEFAULT_WINDOW_MONTHS)]
    window_months: u32,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    performance: PathBuf,
    #[arg(long, visible_alias = "model", default_value = "model.json")]
    out: PathBuf,
    /// Fit one model per region instead of a pooled model.
    #[arg(long)]
    per_region: bool,
    #[command(flatten)]
    layout: LayoutOpts,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    performance: PathBuf,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = BenchmarkMode::TrainfoldMean)]
    benchmark: BenchmarkMode,
    #[command(flatten)]
    layout: LayoutOpts,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    regions: u32,
    #[arg(long, default_value_t = 2011)]
    first_year: i32,
    #[arg(long, default_value_t = 2017)]
    last_year: i32,
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.35, allow_negative_numbers = true)]
    intercept: f64,
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    coef_demand: f64,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    coef_supply: f64,
    #[arg(long)]
    shock_year: Option<i32>,
    #[arg(
        long,
        default_value_t = 0.0,
        allow_negative_numbers = true,
        requires = "shock_year"
    )]
    demand_shift: f64,
    #[arg(
        long,
        default_value_t = 0.0,
        allow_negative_numbers = true,
        requires = "shock_year"
    )]
    supply_shift: f64,
    #[arg(long, default_value_t = 50)]
    entrants: u32,
}

#[derive(Debug, Args)]
struct FiguresArgs {
    #[command(flatten)]
    inputs: StatsInputs,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    performance: PathBuf,
    /// Evaluation report written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Population baseline year; defaults to each region's first year.
    #[arg(long)]
    baseline_year: Option<i32>,
    #[arg(long, value_enum, default_value_t = BaselineMode::Ratio)]
    population_baseline: BaselineMode,
    #[arg(long, value_enum, default_value_t = BaselineMode::Difference)]
    performance_baseline: BaselineMode,
    #[arg(long, value_name = "LO:HI", default_value = "16:64", value_parser = parse_age_band)]
    working_age: AgeBand,
}

fn parse_age_band(s: &str) -> std::result::Result<AgeBand, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: u32 = lo
        .trim()
        .parse()
        .map_err(|_| format!("invalid age {lo:?}"))?;
    let hi: u32 = hi
        .trim()
        .parse()
        .map_err(|_| format!("invalid age {hi:?}"))?;
    if lo > hi {
        return Err(format!("{lo} exceeds {hi}"));
    }
    Ok(AgeBand::new(lo, hi))
}

/// Resolved settings stamped into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_config: Option<FeatureConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark_mode: Option<BenchmarkMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figures: Option<FigureOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn paths<const N: usize>(items: [(&str, &Path); N]) -> BTreeMap<String, String> {
    items
        .into_iter()
        .map(|(k, p)| (k.to_string(), p.display().to_string()))
        .collect()
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_series(inputs: &StatsInputs) -> Result<BTreeMap<String, RegionalSeries>> {
    Ok(load_regional_series(
        &inputs.employment,
        &inputs.unemployment,
        &inputs.population,
    )?)
}

fn load_features(path: &Path, layout: &LayoutOpts) -> Result<Vec<FeatureRow>> {
    let bytes = read_file(path)?;
    let name = path.display().to_string();
    Ok(parse_features_csv(
        CsvInput::new(&name, &bytes),
        layout.lag,
        layout.working_age,
    )?)
}

fn load_performance(path: &Path) -> Result<Vec<PerformanceRow>> {
    let bytes = read_file(path)?;
    let name = path.display().to_string();
    Ok(parse_performance_csv(CsvInput::new(&name, &bytes))?)
}

fn load_observations(
    features: &Path,
    performance: &Path,
    layout: &LayoutOpts,
) -> Result<Vec<Observation>> {
    Ok(join_observations(
        &load_features(features, layout)?,
        &load_performance(performance)?,
    ))
}

fn note(msg: &str) {
    eprintln!("{msg}");
}

fn validate(args: &ValidateArgs) -> Result<()> {
    if let (Some(e), Some(u), Some(p)) = (&args.employment, &args.unemployment, &args.population) {
        let series = load_regional_series(e, u, p)?;
        for s in series.values() {
            note(&format!(
                "ok: region {} years {}-{}",
                s.region_id,
                s.first_year().unwrap_or_default(),
                s.last_year().unwrap_or_default()
            ));
        }
    }
    if let Some(r) = &args.records {
        let records = load_programme_records(r)?;
        note(&format!("ok: {} programme records", records.len()));
    }
    Ok(())
}

fn features(args: &FeaturesArgs) -> Result<()> {
    let series = load_series(&args.inputs)?;
    let config = FeatureConfig {
        normalize: !args.no_normalize,
        lag: args.layout.lag,
        working_age: args.layout.working_age,
    };
    let rows = build_features(&series, &config)?;
    write_file(&args.out, write_features_csv(&rows))?;
    note(&format!(
        "wrote {} feature rows ({config}) to {}",
        rows.len(),
        args.out.display()
    ));
    Ok(())
}

fn performance(args: &PerformanceArgs) -> Result<()> {
    let records = load_programme_records(&args.records)?;
    let rule = SuccessRule {
        min_hours: args.min_hours,
        window_months: args.window_months,
    };
    let rows = aggregate_performance(&records, rule);
    write_file(&args.out, write_performance_csv(&rows))?;
    note(&format!(
        "wrote {} performance rows to {}",
        rows.len(),
        args.out.display()
    ));
    Ok(())
}

fn fit_cmd(args: &FitArgs) -> Result<()> {
    let obs = load_observations(&args.features, &args.performance, &args.layout)?;
    let json = if args.per_region {
        serde_json::to_string_pretty(&fit_per_region(&obs)?).expect("fits serialize") + "\n"
    } else {
        let model = fit(&obs)?;
        note(&format!(
            "fit on {} rows: intercept {} demand {} supply {} (R² {:.4})",
            model.n_obs, model.intercept, model.coef_demand, model.coef_supply, model.r_squared
        ));
        model.to_json()
    };
    write_file(&args.out, json)
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    run_config: &'a RunConfig,
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let obs = load_observations(&args.features, &args.performance, &args.layout)?;
    let report = loocv(&obs, args.benchmark)?;
    let run_config = RunConfig {
        subcommand: "evaluate".into(),
        inputs: paths([
            ("features", &args.features),
            ("performance", &args.performance),
        ]),
        outputs: paths([("report", &args.out)]),
        feature_config: Some(report.feature_config),
        benchmark_mode: Some(args.benchmark),
        figures: None,
        seed: None,
    };
    let file = ReportFile {
        report: &report,
        run_config: &run_config,
    };
    write_file(
        &args.out,
        serde_json::to_string_pretty(&file).expect("report serializes") + "\n",
    )?;
    eprint!("{}", summary(&report));
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_regions: args.regions,
        first_year: args.first_year,
        last_year: args.last_year,
        seed: args.seed,
        true_intercept: args.intercept,
        true_coef_demand: args.coef_demand,
        true_coef_supply: args.coef_supply,
        noise_sd: args.noise_sd,
        shock: args.shock_year.map(|year| Shock {
            year,
            demand_shift: args.demand_shift,
            supply_shift: args.supply_shift,
        }),
        entrants_per_cell: args.entrants,
    };
    let output = generate(&config)?;
    let files = write_outputs(&config, &output, &args.out)?;
    note(&format!(
        "wrote {} files to {} ({} points, {} clipped)",
        files.len(),
        args.out.display(),
        output.performance.len(),
        output.n_clipped
    ));
    Ok(())
}

fn figures(args: &FiguresArgs) -> Result<()> {
    let series = load_series(&args.inputs)?;
    let layout = LayoutOpts {
        lag: 0,
        working_age: args.working_age,
    };
    let report_bytes = read_file(&args.report)?;
    let report: EvalReport = serde_json::from_slice(&report_bytes).map_err(|e| Error::Json {
        path: args.report.clone(),
        message: e.to_string(),
    })?;
    let features = load_features(
        &args.features,
        &LayoutOpts {
            lag: report.feature_config.lag,
            ..layout
        },
    )?;
    let performance = load_performance(&args.performance)?;
    let options = FigureOptions {
        baseline_year: args.baseline_year,
        population_mode: args.population_baseline,
        performance_mode: args.performance_baseline,
        working_age: args.working_age,
    };
    let files = emit_figure_data(
        &FigureInputs {
            series: &series,
            features: &features,
            performance: &performance,
            report: &report,
        },
        &options,
        &args.out,
    )?;
    note(&format!(
        "wrote {} figure files to {}",
        files.len(),
        args.out.display()
    ));
    Ok(())
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Validate(a) => validate(a),
        Command::Features(a) => features(a),
        Command::Performance(a) => performance(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
        Command::Figures(a) => figures(a),
    }
}

fn error_line(code: &str, message: &str) {
    let styled = std::env::var_os("WF_NO_COLOR").is_none() && std::io::stderr().is_terminal();
    let tag = if styled {
        "\x1b[1;31mERROR\x1b[0m"
    } else {
        "ERROR"
    };
    eprintln!("{tag} {code}: {message}");
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let rendered = e.render().to_string();
            let mut lines = rendered.lines();
            let first = lines.next().unwrap_or_default();
            error_line("usage", first.trim_start_matches("error: "));
            for line in lines {
                eprintln!("{line}");
            }
            return EXIT_USAGE;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error_line(e.code(), &e.to_string().replace('\n', " "));
            EXIT_DATA
        }
    }
}
