use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use driftwatch_core::acquisition::{
    fetch_reference_hourly, fetch_sensor_history, Credentials, FetchJob, Fetcher, HttpTransport, RecordingTransport,
    ReplayTransport, Source, SystemClock, Transport,
};
use driftwatch_core::correction::{fit_correction, loso_cross_validate, CorrectionModelSpec};
use driftwatch_core::degradation::{condition_contrast, flag_rate_by_op_hour, DegradationPolicy};
use driftwatch_core::flagging::{sweep_percentiles, SweepConfig};
use driftwatch_core::ingest::{read_sensor_meta, write_sensor_meta, HourlyConfig, QcBounds, RawSchema, TempUnit};
use driftwatch_core::schema::{self, read_csv, write_csv};
use driftwatch_core::synthfleet::{generate, write_fleet, ScenarioConfig};
use driftwatch_core::time::parse_timestamp;
use driftwatch_core::trend::{BootstrapConfig, GamConfig, Outcome, TrendOptions};
use driftwatch_core::CorrectionRow;
use driftwatch_cli::config::ReportConfig;
use driftwatch_cli::pipeline::*;
use driftwatch_cli::{in_dir, report};
use serde::Serialize;

/// Low-cost PM2.5 sensor degradation analysis: QC, collocation, dual-channel
/// flagging, degradation classification, correction and trend fitting.
#[derive(Parser)]
#[command(name = "driftwatch", version)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download sensor history or reference monitor data into ingest CSVs.
    Fetch(FetchArgs),
    /// Parse raw sensor CSVs, apply QC and aggregate to hourly records.
    Ingest(IngestArgs),
    /// Match sensors to reference monitors and merge hourly series.
    Collocate(CollocateArgs),
    /// Evaluate the flag rule over a grid of percentile cutoffs.
    FlagSweep(FlagSweepArgs),
    /// Flag hours where the two sensor channels disagree.
    Flag(FlagArgs),
    /// Classify permanently degraded sensors and summarize flag rates.
    Degrade(DegradeArgs),
    /// Fit a correction model against the reference and emit correction errors.
    Correct(CorrectArgs),
    /// Fit linear trends of a degradation outcome over operational hours.
    Trend(TrendArgs),
    /// Fit a penalized-spline GAM with cluster-bootstrap bands.
    Gam(GamArgs),
    /// Generate a synthetic sensor fleet with known ground truth.
    Synth(SynthArgs),
    /// Run the full chain from a config file and write every figure and table series.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SourceArg {
    SensorApi,
    AqsApi,
}

#[derive(Args)]
struct FetchArgs {
    #[arg(long, value_enum)]
    source: SourceArg,
    /// Sensor indices, or AQS sites as `state-county-site`.
    #[arg(long, value_delimiter = ',', required = true)]
    ids: Vec<String>,
    /// Start of the range (date or timestamp, UTC), inclusive.
    #[arg(long)]
    from: String,
    /// End of the range (date or timestamp, UTC), exclusive.
    #[arg(long)]
    to: String,
    #[arg(long)]
    out: PathBuf,
    /// Hours per request window [default: 120 for sensors, 720 for AQS].
    #[arg(long)]
    window_hours: Option<i64>,
    /// Requests per minute [default: 30 for sensors, 10 for AQS].
    #[arg(long)]
    rate_limit: Option<u32>,
    /// Concurrent requests.
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long)]
    base_url: Option<String>,
    /// Serve responses from a recorded session instead of the network.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Save every network response to this file for later replay.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TempUnitArg {
    C,
    F,
}

#[derive(Args)]
struct IngestArgs {
    /// Raw sensor CSV file or a directory of them.
    #[arg(long)]
    raw: PathBuf,
    /// Sensor metadata CSV (`sensor_id,lat,lon,location[,deploy_start,climate_zone]`).
    #[arg(long)]
    sensors: PathBuf,
    /// Climate-zone lookup: a `sensor_id,climate_zone` table or GeoJSON polygons.
    #[arg(long)]
    zones: Option<PathBuf>,
    /// JSON column-mapping schema for the raw files.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Temperature unit of the raw files (overrides the schema).
    #[arg(long, value_enum)]
    temp_unit: Option<TempUnitArg>,
    /// Sub-hourly records with channel A required per hour; 3 of the 4
    /// two-minute-average slots keeps hours that are mostly complete.
    #[arg(long, default_value_t = 3)]
    min_subhourly: u32,
    /// Records with both channels above this are treated as saturated (µg/m³);
    /// the optical sensor's effective range ends near 1500.
    #[arg(long, default_value_t = 1500.0)]
    max_pm: f64,
    /// Output directory for hourly.csv, sensors.csv and qc_report.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CollocateArgs {
    /// hourly.csv, or the ingest output directory.
    #[arg(long)]
    hourly: PathBuf,
    /// sensors.csv [default: next to the hourly file].
    #[arg(long)]
    sensors: Option<PathBuf>,
    /// Monitor sites (`site_id,lat,lon,method_code`).
    #[arg(long)]
    monitors: PathBuf,
    /// Reference hourly CSV (`site_id,hour,pm25_ref,method_code`).
    #[arg(long)]
    reference: PathBuf,
    /// Matching radius in metres; 50 m keeps sensor and monitor in the same air.
    #[arg(long, default_value_t = 50.0)]
    radius: f64,
    /// Output directory for pairs.csv and merged.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FlagSweepArgs {
    /// Directory holding pairs.csv and merged.csv.
    #[arg(long)]
    merged: PathBuf,
    /// Spacing of percentile cutoffs between 0 and 0.99.
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
    /// Minimum absolute channel difference for a flag (µg/m³); 5 keeps
    /// low-concentration noise from being flagged.
    #[arg(long, default_value_t = 5.0)]
    abs_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FlagArgs {
    /// hourly.csv, or the ingest output directory.
    #[arg(long)]
    hourly: PathBuf,
    /// Per-sensor percentile of channel percent difference above which an
    /// hour is flagged; 0.85 minimized error against reference monitors
    /// in the nationwide collocated sweep.
    #[arg(long, default_value_t = 0.85)]
    percentile: f64,
    /// Minimum absolute channel difference for a flag (µg/m³).
    #[arg(long, default_value_t = 5.0)]
    abs_threshold: f64,
    /// Output file [default: flagged.csv next to the hourly file].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DegradeArgs {
    /// flagged.csv, or its directory.
    #[arg(long)]
    flagged: PathBuf,
    /// sensors.csv [default: next to the flagged file].
    #[arg(long)]
    sensors: Option<PathBuf>,
    /// Forward cumulative flag mean marking a degraded hour; 0.4 separates
    /// sensors that stay flagged from ones with transient episodes.
    #[arg(long, default_value_t = 0.4)]
    threshold: f64,
    /// Qualifying hours needed for a permanent-degradation verdict; 100 hours
    /// rules out short bursts.
    #[arg(long, default_value_t = 100)]
    min_hours: usize,
    /// Per-sensor verdict CSV; flag_rate.csv and contrast.json go beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrectArgs {
    /// Directory holding pairs.csv and merged.csv.
    #[arg(long)]
    merged: PathBuf,
    /// flagged.csv or its directory; flagged hours are excluded from fitting
    /// [default: the merged directory].
    #[arg(long)]
    flagged: Option<PathBuf>,
    /// sensors.csv [default: next to the flagged file].
    #[arg(long)]
    sensors: Option<PathBuf>,
    /// Correction model 0-8; model 2 (PM and RH) is the widely used
    /// nationwide form.
    #[arg(long, default_value_t = 2)]
    model: u8,
    /// Also run leave-one-sensor-out cross-validation.
    #[arg(long)]
    loso: bool,
    /// Fit JSON; errors.csv goes beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum OutcomeArg {
    PctFlagged,
    CorrectionError,
    NormalizedError,
}

impl From<OutcomeArg> for Outcome {
    fn from(o: OutcomeArg) -> Self {
        match o {
            OutcomeArg::PctFlagged => Outcome::PctFlagged,
            OutcomeArg::CorrectionError => Outcome::CorrectionError,
            OutcomeArg::NormalizedError => Outcome::NormalizedError,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum StratifyArg {
    All,
    Location,
    ClimateZone,
}

impl From<StratifyArg> for Stratify {
    fn from(s: StratifyArg) -> Self {
        match s {
            StratifyArg::All => Stratify::All,
            StratifyArg::Location => Stratify::Location,
            StratifyArg::ClimateZone => Stratify::ClimateZone,
        }
    }
}

#[derive(Args)]
struct OutcomeInput {
    #[arg(long, value_enum)]
    outcome: OutcomeArg,
    /// flagged.csv (pct_flagged) or errors.csv (error outcomes), or their directory.
    #[arg(long)]
    input: PathBuf,
    /// sensors.csv [default: next to the input file].
    #[arg(long)]
    sensors: Option<PathBuf>,
    /// Leading operational hours dropped per sensor; the first 20 hours
    /// show elevated start-up flag rates.
    #[arg(long, default_value_t = 20)]
    burn_in: usize,
}

#[derive(Args)]
struct TrendArgs {
    #[command(flatten)]
    input: OutcomeInput,
    /// Climate zones use outside devices only.
    #[arg(long, value_enum, default_value = "all")]
    stratify: StratifyArg,
    /// Weight flag percentages by measurements per hour.
    #[arg(long)]
    weighted: bool,
    /// Cluster-robust (CR1) standard errors by sensor for error outcomes.
    #[arg(long)]
    cluster_robust: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GamArgs {
    #[command(flatten)]
    input: OutcomeInput,
    /// Cubic B-spline basis size; 20 is flexible enough for slow drift.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Sensor-cluster bootstrap replicates.
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    /// Clusters drawn per replicate [default: number of sensors].
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario JSON [default: built-in scenario].
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: `output_dir` from the config, else `report/` beside it].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn require(path: &Path) -> Result<&Path> {
    if !path.exists() {
        bail!("input not found: {}", path.display());
    }
    Ok(path)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.parent().unwrap_or(Path::new(".")).join(name)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).with_context(|| format!("cannot create {}", p.display()))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fetch(a) => fetch(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Collocate(a) => collocate_cmd(a),
        Command::FlagSweep(a) => flag_sweep(a),
        Command::Flag(a) => flag(a),
        Command::Degrade(a) => degrade(a),
        Command::Correct(a) => correct(a),
        Command::Trend(a) => trend(a),
        Command::Gam(a) => gam(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn fetch(a: FetchArgs) -> Result<()> {
    let source = match a.source {
        SourceArg::SensorApi => Source::SensorApi,
        SourceArg::AqsApi => Source::AqsApi,
    };
    let mut job = FetchJob::new(source, a.ids, parse_timestamp(&a.from)?, parse_timestamp(&a.to)?);
    if let Some(w) = a.window_hours {
        job.window_hours = w;
    }
    if let Some(r) = a.rate_limit {
        job.rate_limit_per_minute = r;
    }
    job.concurrency = a.concurrency;
    if let Some(b) = a.base_url {
        job.base_url = b;
    }
    let clock = Arc::new(SystemClock::default());
    let mut recorder = None;
    let transport: Arc<dyn Transport> = match (&a.replay, &a.record) {
        (Some(p), _) => Arc::new(ReplayTransport::load(require(p)?)?),
        (None, Some(_)) => {
            let r = Arc::new(RecordingTransport::new(HttpTransport::new(std::time::Duration::from_secs(60))?));
            recorder = Some(r.clone());
            r
        }
        (None, None) => Arc::new(HttpTransport::new(std::time::Duration::from_secs(60))?),
    };
    let creds = match Credentials::from_env(source) {
        Ok(c) => c,
        // Replayed requests are matched with credentials redacted.
        Err(_) if a.replay.is_some() => match source {
            Source::SensorApi => Credentials::Sensor {
                api_key: "replay".into(),
            },
            Source::AqsApi => Credentials::Aqs {
                email: "replay".into(),
                key: "replay".into(),
            },
        },
        Err(e) => return Err(e.into()),
    };
    let fetcher = Fetcher::new(transport, clock);
    let manifest = match source {
        Source::SensorApi => fetch_sensor_history(&fetcher, &job, &creds, &a.out)?,
        Source::AqsApi => fetch_reference_hourly(&fetcher, &job, &creds, &a.out)?,
    };
    if let (Some(r), Some(path)) = (recorder, &a.record) {
        r.save(path)?;
    }
    if !manifest.incomplete.is_empty() {
        log::warn!("incomplete ids: {}", manifest.incomplete.join(", "));
    }
    Ok(())
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    let mut schema: RawSchema = match &a.schema {
        Some(p) => serde_json::from_str(
            &std::fs::read_to_string(require(p)?).with_context(|| format!("cannot read {}", p.display()))?,
        )
        .with_context(|| format!("invalid schema {}", p.display()))?,
        None => RawSchema::default(),
    };
    if let Some(u) = a.temp_unit {
        schema.temp_unit = match u {
            TempUnitArg::C => TempUnit::Celsius,
            TempUnitArg::F => TempUnit::Fahrenheit,
        };
    }
    let bounds = QcBounds {
        max_pm: a.max_pm,
        ..QcBounds::default()
    };
    let out = ingest(
        require(&a.raw)?,
        require(&a.sensors)?,
        a.zones.as_deref().map(require).transpose()?,
        &schema,
        &bounds,
        &HourlyConfig {
            min_subhourly: a.min_subhourly,
        },
    )?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    schema::write_hourly(&a.out.join(schema::HOURLY_FILE), &out.hourly)?;
    write_sensor_meta(&a.out.join(schema::SENSORS_FILE), &out.sensors)?;
    write_json(&a.out.join("qc_report.json"), &out.report())
}

fn collocate_cmd(a: CollocateArgs) -> Result<()> {
    let hourly_path = in_dir(require(&a.hourly)?, schema::HOURLY_FILE);
    let sensors_path = a.sensors.unwrap_or_else(|| sibling(&a.hourly, schema::SENSORS_FILE));
    let hourly = schema::read_hourly(require(&hourly_path)?)?;
    let sensors = read_sensor_meta(require(&sensors_path)?)?;
    let monitors = schema::read_monitors(require(&a.monitors)?)?;
    let reference = schema::read_reference(require(&a.reference)?)?;
    let pairs = collocate_stage(&sensors, &monitors, &hourly, reference, a.radius);
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    schema::write_pairs(&a.out.join(schema::PAIRS_FILE), &a.out.join(schema::MERGED_FILE), &pairs)?;
    Ok(())
}

fn read_pairs_dir(dir: &Path) -> Result<Vec<driftwatch_core::CollocationPair>> {
    let dir = require(dir)?;
    let pairs = require(&dir.join(schema::PAIRS_FILE))?.to_path_buf();
    let merged = require(&dir.join(schema::MERGED_FILE))?.to_path_buf();
    Ok(schema::read_pairs(&pairs, &merged)?)
}

#[derive(Serialize)]
struct SweepCsvRow {
    x: f64,
    r: Option<f64>,
    nrmse: Option<f64>,
    pct_flagged: f64,
    n_retained: usize,
}

fn flag_sweep(a: FlagSweepArgs) -> Result<()> {
    if !(a.grid_step > 0.0 && a.grid_step <= 0.99) {
        bail!("--grid-step must lie in (0, 0.99]");
    }
    let pairs = read_pairs_dir(&a.merged)?;
    let steps = (0.99 / a.grid_step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| ((k as f64 * a.grid_step) * 1e9).round() / 1e9).collect();
    let sweep = sweep_percentiles(
        &pairs,
        &SweepConfig {
            grid,
            abs_threshold: a.abs_threshold,
        },
    )?;
    let rows: Vec<SweepCsvRow> = sweep
        .rows
        .iter()
        .map(|r| SweepCsvRow {
            x: r.x,
            r: r.pearson_r,
            nrmse: r.nrmse,
            pct_flagged: r.pct_flagged,
            n_retained: r.n_retained,
        })
        .collect();
    create_parent(&a.out)?;
    write_csv(&a.out, &rows, None::<&[&str]>)?;
    println!("selected_x={} best_r_x={:?}", sweep.selected_x, sweep.best_r_x);
    Ok(())
}

fn flag(a: FlagArgs) -> Result<()> {
    let hourly_path = in_dir(require(&a.hourly)?, schema::HOURLY_FILE);
    let hourly = schema::read_hourly(require(&hourly_path)?)?;
    let flagged = flag_stage(hourly, a.percentile, a.abs_threshold)?;
    let out = a.out.unwrap_or_else(|| sibling(&a.hourly, schema::FLAGGED_FILE));
    create_parent(&out)?;
    schema::write_flagged(&out, &flagged)?;
    Ok(())
}

fn read_flagged_with_meta(
    flagged: &Path,
    sensors: Option<PathBuf>,
) -> Result<(Vec<driftwatch_core::FlaggedRecord>, Vec<driftwatch_core::SensorMeta>)> {
    let path = in_dir(require(flagged)?, schema::FLAGGED_FILE);
    let records = schema::read_flagged(require(&path)?)?;
    let sensors = sensors.unwrap_or_else(|| sibling(flagged, schema::SENSORS_FILE));
    let meta = if sensors.exists() {
        read_sensor_meta(&sensors)?
    } else {
        log::warn!("{} not found; deploy starts default to first flagged hour", sensors.display());
        Vec::new()
    };
    Ok((records, meta))
}

fn degrade(a: DegradeArgs) -> Result<()> {
    let (flagged, meta) = read_flagged_with_meta(&a.flagged, a.sensors)?;
    let series = op_series(&meta, &flagged);
    let profs = profiles(
        &series,
        DegradationPolicy {
            threshold: a.threshold,
            min_hours: a.min_hours,
        },
    );
    create_parent(&a.out)?;
    write_csv(&a.out, profile_rows(&profs, &meta), None::<&[&str]>)?;
    let rate = flag_rate_by_op_hour(series.flags.values().map(Vec::as_slice));
    write_csv(&sibling(&a.out, "flag_rate.csv"), &rate, None::<&[&str]>)?;
    write_json(&sibling(&a.out, "contrast.json"), &condition_contrast(&flagged))
}

#[derive(Serialize)]
struct CorrectOutput<'a> {
    fit: &'a driftwatch_core::FittedCorrection,
    loso: Option<&'a driftwatch_core::correction::LosoResult>,
}

fn correct(a: CorrectArgs) -> Result<()> {
    let pairs = read_pairs_dir(&a.merged)?;
    let flagged_dir = a.flagged.clone().unwrap_or_else(|| a.merged.clone());
    let (flagged, meta) = if in_dir(&flagged_dir, schema::FLAGGED_FILE).exists() {
        read_flagged_with_meta(&flagged_dir, a.sensors)?
    } else if a.flagged.is_some() {
        bail!("input not found: {}", in_dir(&flagged_dir, schema::FLAGGED_FILE).display());
    } else {
        log::warn!("no flagged.csv beside the merged data; fitting on all merged hours");
        let sensors = a.sensors.unwrap_or_else(|| a.merged.join(schema::SENSORS_FILE));
        let meta = if sensors.exists() { read_sensor_meta(&sensors)? } else { Vec::new() };
        (Vec::new(), meta)
    };
    let spec = CorrectionModelSpec::new(a.model)?;
    let mut starts = driftwatch_core::degradation::deploy_starts(&meta, &flagged);
    // Sensors absent from both inputs start at their first merged hour.
    for p in &pairs {
        if let Some(first) = p.rows.iter().map(|r| r.hour).min() {
            starts.entry(p.sensor_id.clone()).or_insert(first);
        }
    }
    let rows = correction_inputs(&pairs, &flagged, &starts);
    let train: Vec<CorrectionRow> = rows.iter().map(|r| r.row.clone()).collect();
    let fit = fit_correction(&train, &spec)?;
    let loso = if a.loso { Some(loso_cross_validate(&train, &spec)?) } else { None };
    write_json(
        &a.out,
        &CorrectOutput {
            fit: &fit,
            loso: loso.as_ref(),
        },
    )?;
    write_csv(&sibling(&a.out, schema::ERRORS_FILE), correction_errors(&fit, &rows), None::<&[&str]>)?;
    Ok(())
}

enum LoadedOutcome {
    Flags(std::collections::BTreeMap<String, Vec<(i64, bool)>>),
    Errors(Vec<ErrorRow>),
}

fn load_outcome(input: &OutcomeInput) -> Result<(LoadedOutcome, Vec<driftwatch_core::SensorMeta>)> {
    let outcome: Outcome = input.outcome.into();
    let sensors = input.sensors.clone().unwrap_or_else(|| sibling(&input.input, schema::SENSORS_FILE));
    match outcome {
        Outcome::PctFlagged => {
            let (flagged, meta) = read_flagged_with_meta(&input.input, Some(sensors))?;
            Ok((LoadedOutcome::Flags(op_series(&meta, &flagged).flags), meta))
        }
        _ => {
            let path = in_dir(require(&input.input)?, schema::ERRORS_FILE);
            let errors: Vec<ErrorRow> = read_csv(require(&path)?)?;
            let meta = if sensors.exists() { read_sensor_meta(&sensors)? } else { Vec::new() };
            Ok((LoadedOutcome::Errors(errors), meta))
        }
    }
}

fn trend(a: TrendArgs) -> Result<()> {
    let (loaded, meta) = load_outcome(&a.input)?;
    let data = match &loaded {
        LoadedOutcome::Flags(f) => OutcomeData::Flags(f),
        LoadedOutcome::Errors(e) => OutcomeData::Errors(e),
    };
    let rows = trend_table(
        a.input.outcome.into(),
        &data,
        &meta,
        a.stratify.into(),
        a.input.burn_in,
        &TrendOptions {
            weighted: a.weighted,
            cluster_robust: a.cluster_robust,
        },
    )?;
    create_parent(&a.out)?;
    write_csv(&a.out, &rows, None::<&[&str]>)?;
    Ok(())
}

fn gam(a: GamArgs) -> Result<()> {
    let (loaded, _) = load_outcome(&a.input)?;
    let cfg = GamConfig {
        k: a.k,
        ..GamConfig::default()
    };
    let boot = BootstrapConfig {
        replicates: a.replicates,
        m: a.m,
        seed: a.seed,
    };
    let outcome: Outcome = a.input.outcome.into();
    let fit = match &loaded {
        LoadedOutcome::Flags(f) => gam_flags(f, a.input.burn_in, &cfg, &boot)?,
        LoadedOutcome::Errors(e) => gam_errors(outcome, e, a.input.burn_in, &cfg, &boot)?,
    };
    #[derive(Serialize)]
    struct Out<'a> {
        outcome: Outcome,
        burn_in_hours: usize,
        fit: &'a driftwatch_core::GamFit,
    }
    write_json(
        &a.out,
        &Out {
            outcome,
            burn_in_hours: a.input.burn_in,
            fit: &fit,
        },
    )
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.scenario {
        Some(p) => ScenarioConfig::from_path(require(p)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let fleet = generate(&cfg)?;
    write_fleet(&a.out, &fleet)?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let cfg = ReportConfig::from_path(require(&a.config)?)?;
    for p in [&cfg.inputs.raw, &cfg.inputs.sensors, &cfg.inputs.monitors, &cfg.inputs.reference] {
        require(p)?;
    }
    let out = a
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| sibling(&a.config, "report"));
    let manifest = report::run_report(&cfg, &out)?;
    println!(
        "wrote {} artifacts and {} to {}",
        manifest.artifacts.len(),
        report::MANIFEST_FILE,
        out.display()
    );
    Ok(())
}
