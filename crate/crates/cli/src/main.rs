//! `rlstm`: command-line front end.
//!
//! Exit codes: 0 success, 1 domain error, 2 I/O error, 3 network error.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use rlstm_core::bench::{self, Arm, BenchConfig, BenchReport};
use rlstm_core::engine::{self, EngineConfig, EngineError, OnlineSession, Trainer};
use rlstm_core::feed::{self, FeedError};
use rlstm_core::geo::{self, Dataset, DatasetRole, IngestError, Trajectory};
use rlstm_core::nn::Arch;
use rlstm_core::predictor::{Checkpoint, ModelKind, PredictorError, PredictorModel};
use rlstm_core::report;
use rlstm_core::seed::mix;
use rlstm_core::synth::{self, ShapeKind, ShapeParams, SuiteConfig};

#[derive(Debug)]
enum Failure {
    Domain(anyhow::Error),
    Io(anyhow::Error),
    Network(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Io(_) => 2,
            Failure::Network(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Domain(e) | Failure::Io(e) | Failure::Network(e) => e,
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn domain(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Domain(e.into())
}

fn io_err(e: io::Error, what: impl std::fmt::Display) -> Failure {
    Failure::Io(anyhow::Error::new(e).context(what.to_string()))
}

fn net_err(e: io::Error, what: impl std::fmt::Display) -> Failure {
    Failure::Network(anyhow::Error::new(e).context(what.to_string()))
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(io) => Failure::Io(io.into()),
            other => domain(other),
        }
    }
}

impl From<PredictorError> for Failure {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::Io(io) => Failure::Io(io.into()),
            other => domain(other),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        domain(e)
    }
}

#[derive(Parser)]
#[command(name = "rlstm", version, about = "Recurrent online UAV trajectory prediction")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Ndjson,
    Csv,
}

#[derive(clap::Args)]
struct EngineArgs {
    /// JSON file with engine settings (train, start_gate, warm_start, online_retrain).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the number of training iterations per step.
    #[arg(long)]
    iterations: Option<usize>,
}

impl EngineArgs {
    fn load(&self) -> CliResult<EngineConfig> {
        let mut cfg: EngineConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => EngineConfig::default(),
        };
        if let Some(k) = self.iterations {
            cfg.train.iterations = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(clap::Args)]
struct Endpoint {
    /// Accept one connection on this address.
    #[arg(long, conflicts_with = "connect", required_unless_present = "connect")]
    listen: Option<String>,
    /// Connect to this address.
    #[arg(long)]
    connect: Option<String>,
}

impl Endpoint {
    fn open(&self) -> CliResult<TcpStream> {
        if let Some(addr) = &self.listen {
            let listener = TcpListener::bind(addr).map_err(|e| net_err(e, format!("bind {addr}")))?;
            info!("listening on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
            let (stream, peer) = listener.accept().map_err(|e| net_err(e, "accept"))?;
            info!("connection from {peer}");
            Ok(stream)
        } else {
            let addr = self.connect.as_deref().expect("clap requires one endpoint");
            TcpStream::connect(addr).map_err(|e| net_err(e, format!("connect {addr}")))
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a trajectory CSV and print a summary.
    Validate { path: PathBuf },
    /// Generate one synthetic trajectory as CSV.
    Synth {
        #[arg(long, default_value = "line")]
        shape: ShapeKind,
        #[arg(long, default_value_t = 30)]
        points: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth-01")]
        uav_id: String,
        /// Ground speed, m/s.
        #[arg(long)]
        speed: Option<f64>,
        /// Broadcast interval, s.
        #[arg(long)]
        interval: Option<f64>,
        #[arg(long)]
        heading: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
        /// Climb rate for helices, m/s.
        #[arg(long)]
        climb: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled synthetic train/test suite.
    Suite {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = SuiteConfig::default().base_seed)]
        seed: u64,
    },
    /// Pretrain a model and save a checkpoint.
    Pretrain {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "lstm")]
        model: ModelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run the online loop over one trajectory.
    Run {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Required when the file holds more than one trajectory.
        #[arg(long)]
        uav_id: Option<String>,
        #[arg(long, value_enum, default_value = "ndjson")]
        emit: Emit,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        per_step_error_svg: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Benchmark several models over repeated runs.
    Bench {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated list, e.g. `lstm,lstm-frozen,persistence`.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<Arm>>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Leave wall-clock metadata out so output is byte-reproducible.
        #[arg(long)]
        no_timestamps: bool,
        /// JSON file mirroring the bench configuration fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Regenerate CSV tables and charts from a saved report.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Replay a trajectory as a paced NDJSON position feed.
    FeedReplay {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        uav_id: Option<String>,
        #[command(flatten)]
        endpoint: Endpoint,
        #[arg(long, default_value_t = 2500)]
        interval_ms: u64,
        #[arg(long, default_value_t = 1.0)]
        speedup: f64,
    },
    /// Read a position feed and emit predictions as NDJSON.
    FeedPredict {
        #[command(flatten)]
        endpoint: Endpoint,
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(e, format!("read {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| domain(anyhow!(e).context(format!("parse {}", path.display()))))
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| io_err(e, format!("write {}", path.display())))
}

fn load_dataset(path: &Path, role: DatasetRole) -> CliResult<Dataset> {
    let file = File::open(path).map_err(|e| io_err(e, format!("open {}", path.display())))?;
    geo::parse_csv(BufReader::new(file), role).map_err(|e| match e {
        IngestError::Io(io) => io_err(io, format!("read {}", path.display())),
        other => domain(anyhow!(other).context(path.display().to_string())),
    })
}

fn load_trajectory(path: &Path, uav_id: Option<&str>) -> CliResult<Trajectory> {
    let ds = load_dataset(path, DatasetRole::Test)?;
    match uav_id {
        Some(id) => ds
            .get(id)
            .cloned()
            .ok_or_else(|| domain(anyhow!("no trajectory `{id}` in {}", path.display()))),
        None if ds.len() == 1 => Ok(ds.trajectories.into_iter().next().expect("one trajectory")),
        None => Err(domain(anyhow!(
            "{} holds {} trajectories; choose one with --uav-id",
            path.display(),
            ds.len()
        ))),
    }
}

fn load_trainer(path: &Path) -> CliResult<Trainer> {
    let ckpt = Checkpoint::load(path)?;
    let (model, opt) = PredictorModel::from_checkpoint(ckpt)?;
    Ok(Trainer::with_optimizer(model, opt))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| io_err(e, format!("create {}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_validate(path: &Path) -> CliResult {
    let ds = load_dataset(path, DatasetRole::Test)?;
    println!("{}: {} trajectories", path.display(), ds.len());
    for t in &ds.trajectories {
        println!("  {} {} points", t.uav_id, t.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    shape: ShapeKind,
    points: usize,
    noise: f64,
    seed: u64,
    uav_id: &str,
    overrides: [Option<f64>; 5],
    out: Option<&Path>,
) -> CliResult {
    let mut p = ShapeParams::default();
    let [speed, interval, heading, radius, climb] = overrides;
    p.speed = speed.unwrap_or(p.speed);
    p.interval = interval.unwrap_or(p.interval);
    p.heading_deg = heading.unwrap_or(p.heading_deg);
    p.radius = radius.unwrap_or(p.radius);
    p.climb_rate = climb.unwrap_or(p.climb_rate);
    let traj = synth::synth_generate(uav_id, shape, &p, points, noise, seed).map_err(domain)?;
    let ds = Dataset::new(vec![traj], DatasetRole::Test)?;
    let mut w = output(out)?;
    w.write_all(geo::to_csv(&ds).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_err(e, "write csv"))
}

fn cmd_suite(out_dir: &Path, seed: u64) -> CliResult {
    let cfg = SuiteConfig {
        base_seed: seed,
        ..SuiteConfig::default()
    };
    let (train, test) = synth::synthetic_suite(&cfg).map_err(domain)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(e, format!("create {}", out_dir.display())))?;
    write_file(&out_dir.join("train.csv"), &geo::to_csv(&train))?;
    write_file(&out_dir.join("test.csv"), &geo::to_csv(&test))?;
    println!("wrote {} training and {} test trajectories to {}", train.len(), test.len(), out_dir.display());
    Ok(())
}

fn cmd_pretrain(train: &Path, kind: ModelKind, seed: u64, out: &Path, engine: &EngineArgs) -> CliResult {
    let cfg = engine.load()?;
    let ds = load_dataset(train, DatasetRole::Train)?;
    let model = PredictorModel::new(kind, &Arch::default(), seed)?;
    let mut trainer = Trainer::new(model);
    let losses = engine::pretrain(&mut trainer, &ds, &cfg, mix(&[seed, 1]))?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        println!("{} steps, loss {first:.6} -> {last:.6}", losses.len());
    }
    let (model, opt) = trainer.into_parts();
    model.to_checkpoint(opt.as_ref()).save(out)?;
    println!("saved {} checkpoint to {}", kind, out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    model_file: &Path,
    trajectory: &Path,
    uav_id: Option<&str>,
    emit: Emit,
    out: Option<&Path>,
    svg: Option<&Path>,
    seed: u64,
    engine: &EngineArgs,
) -> CliResult {
    let cfg = engine.load()?;
    let trainer = load_trainer(model_file)?;
    let traj = load_trajectory(trajectory, uav_id)?;
    let records = engine::run_trajectory(&trainer, &traj, &cfg, seed)?;
    let text = match emit {
        Emit::Ndjson => records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect::<String>(),
        Emit::Csv => report::records_csv(&records),
    };
    let mut w = output(out)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_err(e, "write records"))?;
    if let Some(path) = svg {
        write_file(path, &report::records_step_svg(&traj.uav_id, &records))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    train: &Path,
    test: &Path,
    models: Option<Vec<Arm>>,
    repeats: Option<usize>,
    seed: Option<u64>,
    out_dir: &Path,
    no_timestamps: bool,
    config: Option<&Path>,
    iterations: Option<usize>,
) -> CliResult {
    let mut cfg: BenchConfig = match config {
        Some(p) => read_json(p)?,
        None => BenchConfig::default(),
    };
    if let Some(m) = models {
        cfg.arms = m;
    }
    if let Some(r) = repeats {
        cfg.repeats = r;
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(k) = iterations {
        cfg.engine.train.iterations = k;
    }
    let train = load_dataset(train, DatasetRole::Train)?;
    let test = load_dataset(test, DatasetRole::Test)?;
    let mut rep = bench::run_benchmark(&train, &test, &cfg).map_err(domain)?;
    if !no_timestamps {
        rep.generated_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
    }
    write_outputs(&rep, out_dir)?;
    print_ranking(&rep);
    Ok(())
}

fn write_outputs(rep: &BenchReport, out_dir: &Path) -> CliResult {
    fs::create_dir_all(out_dir).map_err(|e| io_err(e, format!("create {}", out_dir.display())))?;
    write_file(&out_dir.join("report.json"), &(rep.to_json() + "\n"))?;
    write_file(&out_dir.join("models.csv"), &report::models_csv(rep))?;
    write_file(&out_dir.join("trajectories.csv"), &report::trajectories_csv(rep))?;
    write_file(&out_dir.join("models.svg"), &report::model_bar_svg(rep))?;
    write_file(&out_dir.join("trajectories.svg"), &report::trajectory_bar_svg(rep))?;
    Ok(())
}

fn print_ranking(rep: &BenchReport) {
    println!("{} repeats over {} test trajectories", rep.config.repeats, rep.test_trajectories);
    println!("rank  model           mean_j3d_m  wins");
    for r in bench::compare_models(rep) {
        println!("{:>4}  {:<14} {:>11.3}  {:>4}", r.rank, r.model, r.mean_j3d_m, r.trajectory_wins);
    }
}

fn cmd_report(path: &Path, out_dir: &Path) -> CliResult {
    let rep: BenchReport = read_json(path)?;
    write_outputs(&rep, out_dir)?;
    print_ranking(&rep);
    Ok(())
}

fn cmd_feed_replay(trajectory: &Path, uav_id: Option<&str>, endpoint: &Endpoint, interval_ms: u64, speedup: f64) -> CliResult {
    let traj = load_trajectory(trajectory, uav_id)?;
    if !(speedup > 0.0 && speedup.is_finite()) {
        return Err(domain(anyhow!("--speedup must be positive, got {speedup}")));
    }
    let stream = endpoint.open()?;
    let sent = feed::replay(
        &feed::feed_records(&traj),
        BufWriter::new(stream),
        Duration::from_millis(interval_ms),
        speedup,
    )
    .map_err(|e| match e {
        FeedError::Io(io) => net_err(io, "send feed"),
        other => domain(other),
    })?;
    eprintln!("sent {sent} positions for {}", traj.uav_id);
    Ok(())
}

fn cmd_feed_predict(endpoint: &Endpoint, model_file: &Path, seed: u64, out: Option<&Path>, engine: &EngineArgs) -> CliResult {
    let cfg = engine.load()?;
    let trainer = load_trainer(model_file)?;
    let session = OnlineSession::new(trainer, cfg, seed)?;
    let out = output(out)?;
    let stream = endpoint.open()?;
    let summary = feed::predict_stream(BufReader::new(stream), out, session).map_err(|e| match e {
        FeedError::Io(io) => net_err(io, "feed stream"),
        FeedError::Engine(e) => domain(e),
        other => domain(other),
    })?;
    eprintln!(
        "{} lines, {} accepted, {} skipped, {} records ({} realized){}",
        summary.lines,
        summary.accepted,
        summary.skipped,
        summary.records,
        summary.realized,
        summary.uav_id.map(|id| format!(" for {id}")).unwrap_or_default()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.cmd {
        Command::Validate { path } => cmd_validate(&path),
        Command::Synth {
            shape,
            points,
            noise,
            seed,
            uav_id,
            speed,
            interval,
            heading,
            radius,
            climb,
            out,
        } => cmd_synth(
            shape,
            points,
            noise,
            seed,
            &uav_id,
            [speed, interval, heading, radius, climb],
            out.as_deref(),
        ),
        Command::Suite { out_dir, seed } => cmd_suite(&out_dir, seed),
        Command::Pretrain {
            train,
            model,
            seed,
            out,
            engine,
        } => cmd_pretrain(&train, model, seed, &out, &engine),
        Command::Run {
            model_file,
            trajectory,
            uav_id,
            emit,
            out,
            per_step_error_svg,
            seed,
            engine,
        } => cmd_run(
            &model_file,
            &trajectory,
            uav_id.as_deref(),
            emit,
            out.as_deref(),
            per_step_error_svg.as_deref(),
            seed,
            &engine,
        ),
        Command::Bench {
            train,
            test,
            models,
            repeats,
            seed,
            out_dir,
            no_timestamps,
            config,
            iterations,
        } => cmd_bench(
            &train,
            &test,
            models,
            repeats,
            seed,
            &out_dir,
            no_timestamps,
            config.as_deref(),
            iterations,
        ),
        Command::Report { report, out_dir } => cmd_report(&report, &out_dir),
        Command::FeedReplay {
            trajectory,
            uav_id,
            endpoint,
            interval_ms,
            speedup,
        } => cmd_feed_replay(&trajectory, uav_id.as_deref(), &endpoint, interval_ms, speedup),
        Command::FeedPredict {
            endpoint,
            model_file,
            seed,
            out,
            engine,
        } => cmd_feed_predict(&endpoint, &model_file, seed, out.as_deref(), &engine),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
