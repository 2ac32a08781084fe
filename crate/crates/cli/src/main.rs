//! `dras`: zones, risk matrix, simulation, ingestion, replay, evaluation,
//! Monte Carlo and the HTTP server behind one binary.
//!
//! Exit status: 0 on success, 1 on usage or validation errors, 2 on I/O
//! errors.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dras_core::config::{Config, ConfigError};
use dras_core::eval::{evaluate, read_truth, render_accuracy_table, AccuracyTable};
use dras_core::geometry::zone_polygons;
use dras_core::ingest::{self, IngestError, ReplayOptions, ReplaySpeed};
use dras_core::ldm::Ldm;
use dras_core::pipeline::{read_ticks, run_replay, write_ticks, RunError, TRUTH_FILE};
use dras_core::risk::{kmh_to_mps, risk_matrix, GazeTarget};
use dras_core::simulator::{apply_noise, distribution_report, generate, monte_carlo, Motion, NoiseModel, ScenarioSpec, SimError};
use dras_server::AppState;

#[derive(Debug, Parser)]
#[command(name = "dras", version, about = "Gaze-aware rear risk assessment for reverse parking")]
struct Cli {
    /// TOML configuration file (layout, risk, sensor, staleness).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    show_config: bool,
    /// Override the reverse speed, km/h.
    #[arg(long, global = true)]
    speed_kmh: Option<f64>,
    /// Override the driver reaction time, s.
    #[arg(long, global = true)]
    reaction_s: Option<f64>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit zone polygons, one JSON record per line.
    Zones(ZonesArgs),
    /// Print the risk matrix.
    Matrix(MatrixArgs),
    /// Generate a labeled dataset.
    Simulate(SimulateArgs),
    /// Load percepts from a file or a TCP feed into the store.
    Ingest(IngestArgs),
    /// Run the pipeline over a dataset directory and write assessments.
    Replay(ReplayArgs),
    /// Score assessments against truth labels.
    Evaluate(EvaluateArgs),
    /// Repeated simulate, noise, replay and evaluate rounds.
    Montecarlo(MonteCarloArgs),
    /// Serve the HTTP and stream API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ZoneFormat {
    Polygons,
    Summary,
}

#[derive(Debug, Args)]
struct ZonesArgs {
    #[arg(long, value_enum, default_value_t = ZoneFormat::Polygons)]
    format: ZoneFormat,
    /// Fill the color field for this gaze; left empty otherwise.
    #[arg(long)]
    gaze: Option<GazeTarget>,
    /// Chord count per quarter circle of the band outlines.
    #[arg(long, default_value_t = 32)]
    resolution: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatrixFormat {
    Table,
    Lines,
}

#[derive(Debug, Args)]
struct MatrixArgs {
    /// Show the band-by-column panel for one gaze.
    #[arg(long)]
    gaze: Option<GazeTarget>,
    #[arg(long, value_enum, default_value_t = MatrixFormat::Table)]
    format: MatrixFormat,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario spec file (TOML); flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    peds: Option<usize>,
    #[arg(long)]
    cars: Option<usize>,
    #[arg(long, value_enum)]
    motion: Option<MotionArg>,
    /// Noise model file (TOML). Accuracy targets in it are calibrated first.
    #[arg(long)]
    noise: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MotionArg {
    Parked,
    Reversing,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, conflicts_with = "listen", required_unless_present = "listen")]
    file: Option<PathBuf>,
    /// Accept line records over TCP on host:port.
    #[arg(long)]
    listen: Option<String>,
    /// Replay pace as a multiple of real time.
    #[arg(long, conflicts_with = "fast")]
    speed: Option<f64>,
    /// Replay without delays (the default).
    #[arg(long)]
    fast: bool,
    /// Skip malformed lines instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Stop listening after this many seconds; runs until killed otherwise.
    #[arg(long)]
    duration_s: Option<f64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Dataset directory with detections, gaze and truth files.
    data: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Assessment file written by `replay`.
    #[arg(long)]
    assessments: PathBuf,
    /// Truth file, or a dataset directory containing one.
    #[arg(long)]
    truth: PathBuf,
    /// Append the published reference rows to the accuracy table.
    #[arg(long)]
    reference: bool,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 2000)]
    frames: usize,
    /// Noise model file (TOML); defaults to the 0.92 zone / 0.73 gaze targets.
    #[arg(long)]
    noise: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Stream this dataset directory once the server is up.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Replay pace as a multiple of real time.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Also accept live line records over TCP on host:port.
    #[arg(long)]
    listen: Option<String>,
    /// Static bundle served for every non-API path.
    #[arg(long)]
    ui: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Io { .. } | RunError::Ingest { source: IngestError::Io(_), .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io { .. } => CliError::Io(e.to_string()),
            SimError::Run(r) => r.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    toml::from_str(&read_text(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn resolve_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(kmh) = cli.speed_kmh {
        config.risk.reverse_speed = kmh_to_mps(kmh);
    }
    if let Some(s) = cli.reaction_s {
        config.risk.reaction_time = s;
    }
    config.validate()?;
    Ok(config)
}

/// Write to `--out` when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn zones(cli: &Cli, args: &ZonesArgs, config: &Config) -> Result<(), CliError> {
    let polygons = zone_polygons(&config.layout, args.resolution).map_err(|e| CliError::Invalid(e.to_string()))?;
    let matrix = risk_matrix(&config.risk);
    let mut text = String::new();
    for p in &polygons {
        let color = args.gaze.map(|g| {
            let aware = p.zone.column().is_some_and(|c| dras_core::risk::is_aware(c, g));
            matrix.get(p.zone, aware).color()
        });
        match args.format {
            ZoneFormat::Polygons => {
                let vertices: Vec<[f64; 2]> = p.vertices.iter().map(|v| [v.x, v.y]).collect();
                let record = serde_json::json!({ "zone": p.zone, "color": color, "vertices": vertices });
                text.push_str(&record.to_string());
            }
            ZoneFormat::Summary => {
                text.push_str(&format!("{:<4} {:>4} vertices  {}", p.zone.to_string(), p.vertices.len(), color.unwrap_or("-")));
            }
        }
        text.push('\n');
    }
    emit(cli.out.as_deref(), &text)
}

fn matrix(cli: &Cli, args: &MatrixArgs, config: &Config) -> Result<(), CliError> {
    let m = risk_matrix(&config.risk);
    let text = match (args.format, args.gaze) {
        (MatrixFormat::Lines, _) => m.to_lines(),
        (MatrixFormat::Table, Some(g)) => m.render_gaze_panel(g),
        (MatrixFormat::Table, None) => m.render_table(),
    };
    emit(cli.out.as_deref(), &text)
}

fn simulate(cli: &Cli, args: &SimulateArgs, config: &Config) -> Result<(), CliError> {
    let out = cli.out.as_deref().ok_or_else(|| CliError::Invalid("simulate needs --out <dir>".into()))?;
    let mut spec: ScenarioSpec = match &args.spec {
        Some(path) => parse_toml(path)?,
        None => ScenarioSpec::default(),
    };
    spec.seed = cli.seed;
    if let Some(n) = args.frames {
        spec.frames = n;
    }
    if let Some(n) = args.peds {
        spec.pedestrians = n;
    }
    if let Some(n) = args.cars {
        spec.cars = n;
    }
    if let Some(m) = args.motion {
        spec.motion = match m {
            MotionArg::Parked => Motion::Parked,
            MotionArg::Reversing => Motion::Reversing,
        };
    }
    let mut dataset = generate(&spec, config)?;
    if let Some(path) = &args.noise {
        let noise: NoiseModel = parse_toml(path)?;
        let noise = noise.calibrate(&spec, config, cli.seed)?;
        dataset = apply_noise(&dataset, &noise, cli.seed.wrapping_add(1));
    }
    dataset.write(out)?;
    emit(None, &distribution_report(&dataset).render())
}

fn ingest_cmd(args: &IngestArgs, config: &Config) -> Result<(), CliError> {
    let _ = config;
    let ldm = Arc::new(Ldm::new());
    if let Some(path) = &args.file {
        let speed = match args.speed {
            Some(f) => ReplaySpeed::Factor(f),
            None => ReplaySpeed::Fast,
        };
        let summary = ingest::replay(path, ReplayOptions { speed, lenient: args.lenient }, &ldm)?;
        for e in &summary.rejected {
            log::warn!("{}: {e}", path.display());
        }
        println!(
            "inserted {} record(s), rejected {}, span {} ms, store holds {} record(s)",
            summary.inserted,
            summary.rejected.len(),
            summary.duration_ms,
            ldm.len()
        );
        return Ok(());
    }
    let endpoint = args.listen.as_deref().expect("clap requires --file or --listen");
    let handle = ingest::listen(endpoint, Arc::clone(&ldm))?;
    eprintln!("listening on {}", handle.local_addr());
    match args.duration_s {
        Some(s) if s.is_finite() && s >= 0.0 => std::thread::sleep(Duration::from_secs_f64(s)),
        Some(s) => return Err(CliError::Invalid(format!("--duration-s must be non-negative, got {s}"))),
        None => loop {
            std::thread::sleep(Duration::from_secs(3600));
        },
    }
    let stats = handle.join();
    println!(
        "connections {}, inserted {}, errors {}, store holds {} record(s)",
        stats.connections,
        stats.inserted,
        stats.errors,
        ldm.len()
    );
    Ok(())
}

fn replay_cmd(cli: &Cli, args: &ReplayArgs, config: &Config) -> Result<(), CliError> {
    let run = run_replay(&args.data, config)?;
    emit(cli.out.as_deref(), &write_ticks(&run.ticks))
}

fn evaluate_cmd(cli: &Cli, args: &EvaluateArgs) -> Result<(), CliError> {
    let ticks = read_ticks(&read_text(&args.assessments)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.assessments.display())))?;
    let truth_path = if args.truth.is_dir() { args.truth.join(TRUTH_FILE) } else { args.truth.clone() };
    let truth = read_truth(&read_text(&truth_path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", truth_path.display())))?;
    let report = evaluate(&ticks, &truth).map_err(|e| CliError::Invalid(e.to_string()))?;
    if let Some(path) = &cli.out {
        fs::write(path, report.to_json() + "\n").map_err(|e| io_err(path, e))?;
    }
    let reference = args.reference.then(AccuracyTable::published_reference);
    let mut text = render_accuracy_table(&report.accuracy_table(), reference.as_ref());
    text.push('\n');
    text.push_str(&report.distribution.render());
    emit(None, &text)
}

fn montecarlo_cmd(cli: &Cli, args: &MonteCarloArgs, config: &Config) -> Result<(), CliError> {
    let spec = ScenarioSpec { seed: cli.seed, frames: args.frames, ..ScenarioSpec::default() };
    let noise = match &args.noise {
        Some(path) => parse_toml(path)?,
        None => NoiseModel::reference_targets(),
    };
    let noise = noise.calibrate(&spec, config, cli.seed)?;
    let report = monte_carlo(&spec, &noise, args.trials, config)?;
    if let Some(path) = &cli.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        fs::write(path, json).map_err(|e| io_err(path, e))?;
    }
    emit(None, &report.render())
}

fn serve_cmd(args: &ServeArgs, config: Config) -> Result<(), CliError> {
    let state = AppState::new(config).map_err(|e| CliError::Invalid(e.to_string()))?;
    let percepts = match &args.replay {
        Some(dir) => {
            let dataset = dras_core::simulator::Dataset::load(dir)?;
            Some(dataset.percepts())
        }
        None => None,
    };
    if !(args.speed.is_finite() && args.speed > 0.0) {
        return Err(CliError::Invalid(format!("--speed must be positive, got {}", args.speed)));
    }
    let live = match &args.listen {
        Some(endpoint) => Some(ingest::listen(endpoint.as_str(), state.ldm())?),
        None => None,
    };
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Invalid(format!("bad address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
        eprintln!("serving on http://{}", listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?);
        if let Some(percepts) = percepts {
            let (ldm, hub, config) = (state.ldm(), state.hub(), state.config());
            let speed = ReplaySpeed::Factor(args.speed);
            tokio::spawn(async move {
                match dras_server::feed::replay_into(percepts, speed, ldm, hub, config).await {
                    Ok(n) => log::info!("replay finished after {n} frame(s)"),
                    Err(e) => log::error!("replay stopped: {e}"),
                }
            });
        }
        if live.is_some() {
            tokio::spawn(dras_server::feed::live_ticker(state.ldm(), state.hub(), state.config(), Duration::from_millis(100)));
        }
        let app = dras_server::router(state, args.ui.clone());
        dras_server::serve(listener, app).await.map_err(|e| CliError::Io(e.to_string()))
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = resolve_config(&cli)?;
    if cli.show_config {
        return emit(None, &config.to_toml_string());
    }
    match &cli.command {
        None => Err(CliError::Invalid("no command given; see --help".into())),
        Some(Command::Zones(a)) => zones(&cli, a, &config),
        Some(Command::Matrix(a)) => matrix(&cli, a, &config),
        Some(Command::Simulate(a)) => simulate(&cli, a, &config),
        Some(Command::Ingest(a)) => ingest_cmd(a, &config),
        Some(Command::Replay(a)) => replay_cmd(&cli, a, &config),
        Some(Command::Evaluate(a)) => evaluate_cmd(&cli, a),
        Some(Command::Montecarlo(a)) => montecarlo_cmd(&cli, a, &config),
        Some(Command::Serve(a)) => serve_cmd(a, config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
