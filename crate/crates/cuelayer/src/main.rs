//! `cuelayer` command-line interface.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cuelayer::analysis::{analyze, train_synthetic_gesture_model, Models};
use cuelayer::config::Resources;
use cuelayer::record::{read_file, write_file, Record, RecordKind};
use cuelayer::replay::{replay_file, rerecord, ReplayClock, ReplayControl};
use cuelayer::report::build_report;
use cuelayer::service::{prepare_replay, start, ServiceOptions};
use cuelayer::sim::{simulate, stream_frame_counts};
use cuelayer_core::gesture::synth::{feature_dataset, PoseNoise};
use cuelayer_core::gesture::{cross_validate, ForestModel};

/// Environment variable holding the log filter, e.g. `debug` or
/// `cuelayer=trace`.
const LOG_ENV: &str = "CUELAYER_LOG";

#[derive(Parser)]
#[command(name = "cuelayer", version, about = "Multimodal communication-cue analysis for VR training sessions")]
struct Cli {
    /// Configuration file (TOML, or JSON for a .json extension). Bundled
    /// defaults are used when absent.
    #[arg(long, global = true, env = "CUELAYER_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic session and its ground-truth sidecar.
    Simulate {
        #[arg(long)]
        seed: Option<u64>,
        /// Session length in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = "session.jsonl")]
        out: PathBuf,
        /// Ground-truth sidecar; defaults to `<out>.truth.json`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the full offline pipeline over a session file.
    Analyze {
        file: PathBuf,
        /// Feature, proposal and decision records; defaults to
        /// `<file>.analysis.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gesture model written by `train-gesture`.
        #[arg(long)]
        gesture_model: Option<PathBuf>,
    },
    /// Replay a session onto the stream bus at a scaled rate.
    Replay {
        file: PathBuf,
        /// Playback speed; `inf` delivers the whole file at once.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Re-record what the bus delivers to this file (batch speed).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the live session API over WebSocket.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
        /// Session file to replay as the live source.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Session log written by the service.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        gesture_model: Option<PathBuf>,
        /// Exit once the replay has been delivered.
        #[arg(long)]
        exit_after_replay: bool,
    },
    /// Train the gesture forest on synthetic poses of the taxonomy.
    TrainGesture {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 30)]
        per_class: usize,
        #[arg(long)]
        trees: Option<usize>,
        /// Stratified cross-validation folds; 0 skips it.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value = "gesture_model.json")]
        out: PathBuf,
    },
    /// Summary statistics over analysis outputs, including the
    /// length-loudness correlation. Raw session files are analyzed first.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    let res = Resources::load(cli.config.as_deref()).context("loading configuration")?;
    match cli.command {
        Cmd::Simulate {
            seed,
            duration,
            out,
            truth,
        } => cmd_simulate(&res, seed, duration, &out, truth),
        Cmd::Analyze {
            file,
            out,
            gesture_model,
        } => cmd_analyze(&res, &file, out, gesture_model.as_deref()),
        Cmd::Replay { file, speed, out } => cmd_replay(&file, speed, out.as_deref()),
        Cmd::Serve {
            bind,
            replay,
            speed,
            out,
            gesture_model,
            exit_after_replay,
        } => cmd_serve(&res, bind, replay, speed, out, gesture_model.as_deref(), exit_after_replay),
        Cmd::TrainGesture {
            seed,
            per_class,
            trees,
            folds,
            out,
        } => cmd_train_gesture(&res, seed, per_class, trees, folds, &out),
        Cmd::Report { files, out } => cmd_report(&res, &files, out.as_deref()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_simulate(
    res: &Resources,
    seed: Option<u64>,
    duration: Option<f64>,
    out: &Path,
    truth: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = res.config.simulator.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.duration_s = d;
    }
    let t = Instant::now();
    let session = simulate(&cfg, &res.taxonomy)?;
    let truth = truth.unwrap_or_else(|| with_suffix(out, ".truth.json"));
    session.write(out, &truth)?;
    log::info!(
        "simulated {:.0} s (seed {}) in {:.1} s: {} records to {}, truth to {}",
        cfg.duration_s,
        cfg.seed,
        t.elapsed().as_secs_f64(),
        session.records.len(),
        out.display(),
        truth.display()
    );
    print_json(&stream_frame_counts(&session.records))
}

fn load_models(gesture_model: Option<&Path>) -> Result<Models> {
    let gesture = match gesture_model {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let model: ForestModel = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            model.validate()?;
            Some(model)
        }
        None => None,
    };
    Ok(Models { gesture, emotion: None })
}

fn run_analysis(res: &Resources, records: &[Record], models: &Models) -> Result<cuelayer::analysis::Analysis> {
    Ok(analyze(
        records,
        &res.config.analysis,
        &res.config.interpreter,
        &res.taxonomy,
        &res.table,
        models,
    )?)
}

fn cmd_analyze(res: &Resources, file: &Path, out: Option<PathBuf>, gesture_model: Option<&Path>) -> Result<()> {
    let log = read_file(file)?;
    if !log.skipped.is_empty() {
        log::warn!("{} malformed lines skipped", log.skipped.len());
    }
    let models = load_models(gesture_model)?;
    let analysis = run_analysis(res, &log.records, &models)?;
    let out = out.unwrap_or_else(|| with_suffix(file, ".analysis.jsonl"));
    write_file(&out, &analysis.records)?;
    log::info!(
        "analyzed {} in {:.1} s: {} records to {}, {} proposals",
        file.display(),
        analysis.summary.seconds,
        analysis.records.len(),
        out.display(),
        analysis.summary.proposals
    );
    print_json(&analysis.summary)
}

fn cmd_replay(file: &Path, speed: f64, out: Option<&Path>) -> Result<()> {
    if let Some(out) = out {
        let log = read_file(file)?;
        let f = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        let (report, _) = rerecord(&log, std::io::BufWriter::new(f))?;
        log::info!("re-recorded {} records to {}", report.delivered, out.display());
        return print_json(&report);
    }
    let control = ReplayControl::new(ReplayClock::new(speed)?);
    let bus = cuelayer::bus::Bus::default();
    let start = Instant::now();
    let mut markers = 0usize;
    let report = replay_file(file, &control, &bus, |r| {
        if r.kind == RecordKind::Marker {
            markers += 1;
            log::info!("{:>8.3} s  marker {}", r.t, r.as_marker()?.label);
        }
        bus.drain();
        Ok(())
    })?;
    log::info!(
        "replayed {} records ({markers} markers) in {:.1} s",
        report.delivered,
        start.elapsed().as_secs_f64()
    );
    print_json(&report)
}

fn cmd_serve(
    res: &Resources,
    bind: Option<SocketAddr>,
    replay: Option<PathBuf>,
    speed: f64,
    out: Option<PathBuf>,
    gesture_model: Option<&Path>,
    exit_after_replay: bool,
) -> Result<()> {
    let models = load_models(gesture_model)?;
    let mut context = res.config.simulator.context.clone();
    let source = match &replay {
        Some(path) => {
            let log = read_file(path)?;
            if let Some(ctx) = log.records.iter().find_map(Record::as_storybook) {
                context = ctx;
            }
            log::info!("running the analysis lanes over {}", path.display());
            Some(prepare_replay(
                log,
                ReplayClock::new(speed)?,
                &res.config.analysis,
                &res.config.interpreter,
                &res.taxonomy,
                &models,
            )?)
        }
        None => None,
    };
    if exit_after_replay && source.is_none() {
        bail!("--exit-after-replay needs --replay");
    }
    let handle = start(ServiceOptions {
        bind: bind.unwrap_or(res.config.service.bind),
        feature_rate_hz: res.config.service.feature_rate_hz,
        interpreter: res.config.interpreter.clone(),
        table: res.table.clone(),
        context,
        risk_step_s: res.config.analysis.risk_step_s,
        log_path: out,
        replay: source,
    })?;
    println!("listening on ws://{}", handle.local_addr());
    if exit_after_replay {
        handle.wait_for_replay();
        return print_json(&handle.shutdown()?);
    }
    loop {
        std::thread::park();
    }
}

fn cmd_train_gesture(
    res: &Resources,
    seed: Option<u64>,
    per_class: usize,
    trees: Option<usize>,
    folds: usize,
    out: &Path,
) -> Result<()> {
    let mut cfg = res.config.analysis.gesture.clone();
    cfg.per_class = per_class;
    if let Some(s) = seed {
        cfg.training_seed = s;
        cfg.forest.seed = s;
    }
    if let Some(n) = trees {
        cfg.forest.n_trees = n;
    }
    if folds > 0 {
        let (x, y) = feature_dataset(res.taxonomy.len(), cfg.per_class, &PoseNoise::default(), cfg.training_seed);
        let cv = cross_validate(&x, &y, folds, &cfg.forest)?;
        log::info!("{folds}-fold accuracy {:.3}", cv.mean);
    }
    let model = train_synthetic_gesture_model(&res.taxonomy, &cfg)?;
    std::fs::write(out, serde_json::to_vec(&model)?).with_context(|| format!("writing {}", out.display()))?;
    log::info!(
        "wrote {} ({} trees, {} classes, OOB accuracy {:?})",
        out.display(),
        model.trees.len(),
        model.n_classes,
        model.oob_accuracy
    );
    Ok(())
}

fn cmd_report(res: &Resources, files: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut sessions = Vec::new();
    for f in files {
        let log = read_file(f)?;
        let analyzed = log.records.iter().any(|r| r.kind == RecordKind::Feature);
        let records = if analyzed {
            log.records
        } else {
            log::info!("{} has no feature records; analyzing it first", f.display());
            run_analysis(res, &log.records, &Models::default())?.records
        };
        sessions.push((f.display().to_string(), records));
    }
    let report = build_report(&sessions)?;
    if let Some(out) = out {
        std::fs::write(out, serde_json::to_vec_pretty(&report)?).with_context(|| format!("writing {}", out.display()))?;
    }
    print_json(&report)
}
