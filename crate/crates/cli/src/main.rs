use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scrubsel::pipeline::{self, PipelineConfig};
use scrubsel::Error;

/// Selective disk scrubbing: score disk health with conformal prediction,
/// forecast idle hours and schedule scrubs only where they are needed.
#[derive(Debug, Parser)]
#[command(name = "scrubsel", version)]
struct Cli {
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long, global = true, env = "SCRUBSEL_CONFIG")]
    config: Option<PathBuf>,

    /// Seed for the train/calibration/test split.
    #[arg(long, global = true, env = "SCRUBSEL_SEED")]
    seed: Option<u64>,

    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, env = "SCRUBSEL_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse SMART telemetry and utilization logs into canonical artifacts.
    Ingest(IngestArgs),
    /// Fit, calibrate and score disk health.
    Score(ScoreArgs),
    /// Forecast utilization over the scheduling window.
    Forecast {
        #[command(flatten)]
        forecast: ForecastArgs,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Plan today's scrubs and simulate them against observed utilization.
    Schedule {
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Observed utilization CSV used by the simulation.
        #[arg(long, env = "SCRUBSEL_ACTUAL")]
        actual: Option<PathBuf>,
    },
    /// Summarize the run into report.json.
    Report,
    /// Every stage in order.
    Run {
        #[command(flatten)]
        ingest: IngestArgs,
        #[command(flatten)]
        score: ScoreArgs,
        #[command(flatten)]
        forecast: ForecastArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        plan: PlanArgs,
    },
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// SMART telemetry CSV.
    #[arg(long, env = "SCRUBSEL_DATASET")]
    dataset: Option<PathBuf>,
    /// JSON column mapping for the input CSVs.
    #[arg(long, env = "SCRUBSEL_SCHEMA")]
    schema: Option<PathBuf>,
    /// Hourly disk-busy percentage log.
    #[arg(long, env = "SCRUBSEL_DISK_BUSY")]
    disk_busy: Option<PathBuf>,
    /// Hourly CPU-busy percentage log.
    #[arg(long, env = "SCRUBSEL_CPU_BUSY")]
    cpu_busy: Option<PathBuf>,
    /// Observed utilization during the scrub window.
    #[arg(long = "actual", env = "SCRUBSEL_ACTUAL")]
    actual: Option<PathBuf>,
    /// Separate SMART file of disks to score instead of the test partition.
    #[arg(long, env = "SCRUBSEL_FLEET")]
    fleet: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Neighbours consulted by the classifier.
    #[arg(long, env = "SCRUBSEL_K")]
    k: Option<usize>,
    /// Significance level; disks scoring at least 1 - threshold are skipped.
    #[arg(long, env = "SCRUBSEL_THRESHOLD")]
    threshold: Option<f64>,
    /// Explicit skip boundary, overriding 1 - threshold.
    #[arg(long, env = "SCRUBSEL_HEALTHY_FLOOR")]
    healthy_floor: Option<f64>,
    /// inverse_probability or margin.
    #[arg(long, value_parser = serde_enum::<scrubsel::knn::NonconformityMode>)]
    nonconformity: Option<scrubsel::knn::NonconformityMode>,
    /// paper or conservative.
    #[arg(long, value_parser = serde_enum::<scrubsel::conformal::PValueMode>)]
    pvalue_mode: Option<scrubsel::conformal::PValueMode>,
    /// mondrian or pooled.
    #[arg(long, value_parser = serde_enum::<scrubsel::conformal::Taxonomy>)]
    taxonomy: Option<scrubsel::conformal::Taxonomy>,
    /// Reuse the persisted model and calibration when they match the data.
    #[arg(long)]
    reuse_calibration: bool,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    /// Number of fuzzy sets partitioning the utilization range.
    #[arg(long, env = "SCRUBSEL_SETS")]
    sets: Option<usize>,
}

#[derive(Debug, Args)]
struct WindowArgs {
    /// Hourly slots in the scheduling window.
    #[arg(long, env = "SCRUBSEL_HORIZON")]
    horizon: Option<usize>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Build the schedule but skip simulation.
    #[arg(long)]
    dry_run: bool,
    /// Day index being scheduled.
    #[arg(long, env = "SCRUBSEL_DAY")]
    day: Option<i64>,
    /// next_due.json from an earlier schedule run.
    #[arg(long, env = "SCRUBSEL_LEDGER")]
    ledger: Option<PathBuf>,
    /// Utilization percentage at or above which an hour counts as busy.
    #[arg(long, env = "SCRUBSEL_IDLE_THRESHOLD")]
    idle_threshold: Option<f64>,
    /// Scrubs that may start in one hour.
    #[arg(long, env = "SCRUBSEL_CAPACITY")]
    capacity: Option<usize>,
}

fn serde_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl IngestArgs {
    fn apply(self, c: &mut PipelineConfig) {
        set_opt(&mut c.dataset, self.dataset);
        set_opt(&mut c.schema, self.schema);
        set_opt(&mut c.disk_busy, self.disk_busy);
        set_opt(&mut c.cpu_busy, self.cpu_busy);
        set_opt(&mut c.actual_utilization, self.actual);
        set_opt(&mut c.fleet, self.fleet);
    }
}

impl ScoreArgs {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.k, self.k);
        set(&mut c.threshold, self.threshold);
        set_opt(&mut c.healthy_floor, self.healthy_floor);
        set(&mut c.conformal.nonconformity, self.nonconformity);
        set(&mut c.conformal.pvalue_mode, self.pvalue_mode);
        set(&mut c.conformal.taxonomy, self.taxonomy);
        c.reuse_calibration |= self.reuse_calibration;
    }
}

impl PlanArgs {
    fn apply(self, c: &mut PipelineConfig) {
        c.dry_run |= self.dry_run;
        set(&mut c.day, self.day);
        set_opt(&mut c.ledger, self.ledger);
        set(&mut c.scheduler.idle_threshold_pct, self.idle_threshold);
        set(&mut c.scheduler.hour_capacity, self.capacity);
    }
}

fn run(cli: Cli) -> scrubsel::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out, cli.out);
    match cli.command {
        Command::Ingest(a) => {
            a.apply(&mut cfg);
            let s = pipeline::ingest(&cfg)?;
            println!("rows={}", s.rows);
            println!("disks={}", s.disk_count);
            println!("failed_disks={}", s.failed_disk_count);
        }
        Command::Score(a) => {
            a.apply(&mut cfg);
            print_score(&pipeline::score(&cfg)?);
        }
        Command::Forecast { forecast, window } => {
            set(&mut cfg.fuzzy_sets, forecast.sets);
            set(&mut cfg.scheduler.horizon_hours, window.horizon);
            let f = pipeline::forecast(&cfg)?;
            let points: Vec<String> = f
                .outlook
                .hourly_pct
                .iter()
                .map(|p| format!("{p:.2}"))
                .collect();
            println!("window_start_hour={}", f.outlook.start_hour);
            println!("outlook_pct={}", points.join(","));
        }
        Command::Schedule {
            plan,
            window,
            actual,
        } => {
            plan.apply(&mut cfg);
            set(&mut cfg.scheduler.horizon_hours, window.horizon);
            set_opt(&mut cfg.actual_utilization, actual);
            print_schedule(&pipeline::schedule(&cfg)?);
        }
        Command::Report => {
            let r = pipeline::report(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Run {
            ingest,
            score,
            forecast,
            window,
            plan,
        } => {
            ingest.apply(&mut cfg);
            score.apply(&mut cfg);
            set(&mut cfg.fuzzy_sets, forecast.sets);
            set(&mut cfg.scheduler.horizon_hours, window.horizon);
            plan.apply(&mut cfg);
            pipeline::ingest(&cfg)?;
            print_score(&pipeline::score(&cfg)?);
            if cfg.disk_busy.is_some() {
                pipeline::forecast(&cfg)?;
                print_schedule(&pipeline::schedule(&cfg)?);
            }
            pipeline::report(&cfg)?;
        }
    }
    Ok(())
}

fn print_score(s: &pipeline::ScoreSummary) {
    println!("fleet={}", s.health.fleet_size);
    println!("selected={}", s.health.selected_count);
    println!("selected_fraction={}", s.health.selected_fraction);
    println!("replacement={}", s.health.replacement_count);
    println!("reused_calibration={}", s.reused_calibration);
}

fn print_schedule(o: &pipeline::ScheduleOutcome) {
    println!("assigned={}", o.schedule.assignments.len());
    println!("deferred={}", o.schedule.deferred.len());
    if o.warning().is_some() {
        println!("warning=no_idle_window");
    }
    println!("energy_saved_wh={}", o.energy.saved_wh);
    match &o.simulation {
        Some(sim) => {
            println!("completed={}", sim.completed.len());
            println!("interrupted={}", sim.interrupted.len());
        }
        None => println!("simulation=skipped"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for bad input, 1 for everything else.
fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        1
    }
}
