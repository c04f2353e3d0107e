use clap::{Args, Parser, Subcommand};
use legtrack::anatomy::{PointId, Route};
use legtrack::io::config::{ConsistencySpec, SessionConfig};
use legtrack::io::stream::{write_marker_stream, MarkerStreamReader};
use legtrack::pipeline::Session;
use legtrack::simulate::{synthesize, LegModelParams, MotionScript, NoiseSpec};
use legtrack::{Error, Result};
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "legtrack", version, about = "Optical-marker leg tracking: poses, angles and cross-route checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic marker stream with ground truth.
    Simulate(SimulateArgs),
    /// Fit rigid-body poses and frames for every sample.
    Track(StreamArgs),
    /// Hip and knee angles and knee translations for every sample.
    Angles(StreamArgs),
    /// Cross-route error of one point for every sample.
    Consistency(ConsistencyArgs),
    /// Check a session configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Leg model parameters (JSON); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Motion script (JSON); a default multi-joint motion when omitted.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Duration of the default motion, s.
    #[arg(long, default_value_t = 10.0)]
    duration_s: f64,
    /// Sample rate of the default motion, Hz.
    #[arg(long, default_value_t = 100.0)]
    rate_hz: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-axis marker noise, mm.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma_mm: f64,
    /// Per-axis landmark noise, mm.
    #[arg(long, default_value_t = 0.0)]
    landmark_sigma_mm: f64,
    /// Per-marker, per-sample occlusion probability.
    #[arg(long, default_value_t = 0.0)]
    occlusion_prob: f64,
    /// Marker stream CSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Where to write the matching session configuration.
    #[arg(long)]
    session: Option<PathBuf>,
    /// Where to write the ground-truth commands.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    config: PathBuf,
    /// Marker stream CSV.
    #[arg(long)]
    input: PathBuf,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConsistencyArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Point to compare; overrides the configuration.
    #[arg(long)]
    point: Option<PointId>,
    /// First route, e.g. `M`.
    #[arg(long)]
    route_a: Option<Route>,
    /// Second route, e.g. `H>C>D`.
    #[arg(long)]
    route_b: Option<Route>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn open_stream(path: &Path) -> Result<MarkerStreamReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    MarkerStreamReader::new(BufReader::new(file))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(output: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    match output {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let params: LegModelParams = match &args.config {
        Some(p) => read_json(p)?,
        None => LegModelParams::default(),
    };
    let script = match &args.script {
        Some(p) => {
            let s: MotionScript = read_json(p)?;
            s.validate()?;
            s
        }
        None => MotionScript::default_motion(args.duration_s, args.rate_hz)?,
    };
    let noise = NoiseSpec {
        marker_sigma_mm: args.noise_sigma_mm,
        landmark_sigma_mm: args.landmark_sigma_mm,
        occlusion_prob: args.occlusion_prob,
        seed: args.seed,
        ..NoiseSpec::default()
    };
    let syn = synthesize(&params, &script, &noise)?;
    match &args.output {
        Some(path) => write_marker_stream(create(path)?, &syn.samples)?,
        None => write_marker_stream(std::io::stdout().lock(), &syn.samples)?,
    }
    if let Some(path) = &args.session {
        write_json(Some(path), &syn.session_config())?;
    }
    if let Some(path) = &args.truth {
        write_json(Some(path), &syn.truth)?;
    }
    Ok(())
}

fn session(config: &Path) -> Result<Session> {
    Session::new(SessionConfig::load(config)?)
}

fn consistency(args: ConsistencyArgs) -> Result<()> {
    let mut config = SessionConfig::load(&args.stream.config)?;
    let base = config.consistency.clone().unwrap_or(ConsistencySpec {
        point: PointId::E,
        route_a: Route::tibia(),
        route_b: Route::femur_condyle_tibia(),
    });
    config.consistency = Some(ConsistencySpec {
        point: args.point.unwrap_or(base.point),
        route_a: args.route_a.unwrap_or(base.route_a),
        route_b: args.route_b.unwrap_or(base.route_b),
    });
    let session = Session::new(config)?;
    let report = session.run_consistency(open_stream(&args.stream.input)?)?;
    write_json(args.stream.output.as_deref(), &report)
}

#[derive(Serialize)]
struct ValidateReport {
    valid: bool,
    bodies: usize,
    frames: Vec<String>,
    supports_angles: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Track(args) => {
            let rows = session(&args.config)?.run_tracking(open_stream(&args.input)?)?;
            write_json(args.output.as_deref(), &rows)
        }
        Command::Angles(args) => {
            let report = session(&args.config)?.run(open_stream(&args.input)?)?;
            write_json(args.output.as_deref(), &report)
        }
        Command::Consistency(args) => consistency(args),
        Command::Validate { config } => {
            let config = SessionConfig::load(&config)?;
            write_json(
                None,
                &ValidateReport {
                    valid: true,
                    bodies: config.bodies.len(),
                    frames: config.available_frames().iter().map(|f| f.to_string()).collect(),
                    supports_angles: config.supports_angles(),
                },
            )
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
