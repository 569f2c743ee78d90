//! Live session service: a replay producer, the interpretation loop and
//! WebSocket clients running concurrently.
//!
//! All session state lives in the interpretation loop. Replayed records,
//! client connections and client commands reach it through one queue, so
//! commands are applied in arrival order and each gets exactly one reply.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{LineWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use cuelayer_core::error::Error as CoreError;
use cuelayer_core::gesture::Taxonomy;
use cuelayer_core::interpret::{
    ContextState, Decision, EscalationIndexTable, InterpretEvent, Interpreter, InterpreterConfig,
};
use serde::Serialize;
use serde_json::{json, Value};
use tungstenite::Message;

use crate::analysis::{event_record, lanes, run_lanes, AnalysisConfig, LaneCue, Models};
use crate::bus::Bus;
use crate::error::{io_at, Error, Result};
use crate::protocol::{self, codes, types, Command, CommandError, ReplayCommand};
use crate::record::{sort_records, Record, RecordKind, RecordWriter, SessionLog};
use crate::replay::{replay, ReplayClock, ReplayControl, ReplayReport};
use crate::session::SessionData;

/// How long a client thread waits for inbound data before checking its
/// outbound queue.
const CLIENT_POLL: Duration = Duration::from_millis(10);

/// A session to replay with the cues its lanes produce.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    /// Input records merged with the lane features, sorted by time.
    pub log: SessionLog,
    pub cues: Vec<LaneCue>,
    pub clock: ReplayClock,
}

/// Runs the lanes over a recorded session so that the replay can carry
/// features and cues. Interpretation records already in the file are
/// dropped; the live loop produces its own.
pub fn prepare_replay(
    log: SessionLog,
    clock: ReplayClock,
    analysis: &AnalysisConfig,
    interpreter: &InterpreterConfig,
    taxonomy: &Taxonomy,
    models: &Models,
) -> Result<ReplaySource> {
    let mut records: Vec<Record> = log
        .records
        .into_iter()
        .filter(|r| !(r.stream == lanes::INTERPRET || r.stream == lanes::RISK))
        .filter(|r| !matches!(r.kind, RecordKind::Proposal | RecordKind::Decision))
        .collect();
    let session = SessionData::from_records(&records)?;
    let lane_out = run_lanes(&session, analysis, &interpreter.encodings, taxonomy, models)?;
    records.extend(lane_out.features);
    sort_records(&mut records);
    Ok(ReplaySource {
        log: SessionLog {
            records,
            skipped: log.skipped,
        },
        cues: lane_out.cues,
        clock,
    })
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub bind: SocketAddr,
    pub feature_rate_hz: f64,
    pub interpreter: InterpreterConfig,
    pub table: EscalationIndexTable,
    pub context: ContextState,
    pub risk_step_s: f64,
    /// JSONL log of everything the loop sees and decides.
    pub log_path: Option<PathBuf>,
    pub replay: Option<ReplaySource>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ServiceSummary {
    pub commands: usize,
    pub errors: usize,
    pub proposals: usize,
    pub decisions: usize,
    pub records: usize,
    pub logged: usize,
    pub replay: Option<ReplayReport>,
}

enum LoopMsg {
    Connect { client: u64, tx: Sender<String> },
    Disconnect { client: u64 },
    Command { client: u64, text: String },
    Record(Box<Record>),
    ReplayDone(Result<ReplayReport>),
    Shutdown,
}

/// Per-stream wall-clock rate limit on outbound feature messages.
struct Throttle {
    min_interval: Duration,
    last: BTreeMap<String, Instant>,
}

impl Throttle {
    fn new(rate_hz: f64) -> Self {
        let min_interval = if rate_hz > 0.0 {
            Duration::from_secs_f64(1.0 / rate_hz)
        } else {
            Duration::MAX
        };
        Self {
            min_interval,
            last: BTreeMap::new(),
        }
    }

    fn allow(&mut self, stream: &str) -> bool {
        let now = Instant::now();
        match self.last.get(stream) {
            Some(t) if now.duration_since(*t) < self.min_interval => false,
            _ => {
                self.last.insert(stream.to_string(), now);
                true
            }
        }
    }
}

/// Session state owned by the interpretation loop.
pub struct SessionLoop {
    engine: Interpreter,
    cues: Vec<LaneCue>,
    next_cue: usize,
    risk_step: f64,
    next_eval: f64,
    now: f64,
    started: Instant,
    replaying: bool,
    replay: Option<ReplayControl>,
    log: Option<RecordWriter<Box<dyn Write + Send>>>,
    clients: BTreeMap<u64, Sender<String>>,
    throttle: Throttle,
    summary: ServiceSummary,
}

impl SessionLoop {
    pub fn new(
        config: InterpreterConfig,
        table: EscalationIndexTable,
        context: ContextState,
        risk_step_s: f64,
        feature_rate_hz: f64,
    ) -> Result<Self> {
        if !(risk_step_s > 0.0) {
            return Err(Error::Invalid("risk step must be positive".into()));
        }
        config.validate()?;
        Ok(Self {
            engine: Interpreter::new(config, table, context)?,
            cues: Vec::new(),
            next_cue: 0,
            risk_step: risk_step_s,
            next_eval: 0.0,
            now: 0.0,
            started: Instant::now(),
            replaying: false,
            replay: None,
            log: None,
            clients: BTreeMap::new(),
            throttle: Throttle::new(feature_rate_hz),
            summary: ServiceSummary::default(),
        })
    }

    /// Cues to feed as session time passes.
    pub fn with_cues(mut self, mut cues: Vec<LaneCue>) -> Self {
        cues.sort_by(|a, b| a.t().total_cmp(&b.t()));
        self.cues = cues;
        self.replaying = true;
        self
    }

    pub fn with_log(mut self, out: Box<dyn Write + Send>) -> Self {
        self.log = Some(RecordWriter::new(out));
        self
    }

    fn with_replay(mut self, control: ReplayControl) -> Self {
        self.replay = Some(control);
        self.replaying = true;
        self
    }

    pub fn interpreter(&self) -> &Interpreter {
        &self.engine
    }

    pub fn summary(&self) -> &ServiceSummary {
        &self.summary
    }

    /// Session time used to stamp commands: the replay position, or wall
    /// time since start when nothing is replayed.
    pub fn session_time(&self) -> f64 {
        if self.replaying {
            self.now
        } else {
            self.started.elapsed().as_secs_f64()
        }
    }

    pub fn connect(&mut self, client: u64, tx: Sender<String>) {
        let _ = tx.send(protocol::event(types::STATE, &self.state()));
        self.clients.insert(client, tx);
    }

    pub fn disconnect(&mut self, client: u64) {
        self.clients.remove(&client);
    }

    fn broadcast(&mut self, text: &str) {
        self.clients.retain(|_, tx| tx.send(text.to_string()).is_ok());
    }

    fn log(&mut self, r: &Record) {
        if let Some(w) = &mut self.log {
            match w.write(r) {
                Ok(()) => self.summary.logged += 1,
                Err(e) => log::error!("session log write failed: {e}"),
            }
        }
    }

    /// Moves session time to `t`: feeds due cues and evaluates risk on the
    /// grid up to `t`.
    pub fn advance(&mut self, t: f64) -> Result<()> {
        if t < self.now {
            return Ok(());
        }
        while self.next_eval <= t {
            let te = self.next_eval;
            self.feed_cues(te)?;
            if let Some(snapshot) = self.engine.evaluate(te)? {
                let r = Record::feature(te, lanes::RISK, &snapshot);
                self.log(&r);
                if self.throttle.allow(lanes::RISK) {
                    let msg = protocol::event(types::FEATURE, &feature_payload(&r));
                    self.broadcast(&msg);
                }
            }
            self.flush_events();
            self.next_eval += self.risk_step;
        }
        self.feed_cues(t)?;
        self.now = t;
        Ok(())
    }

    fn feed_cues(&mut self, t: f64) -> Result<()> {
        while self.next_cue < self.cues.len() && self.cues[self.next_cue].t() <= t {
            self.cues[self.next_cue].observe(&mut self.engine)?;
            self.next_cue += 1;
        }
        Ok(())
    }

    /// Handles one replayed record.
    pub fn on_record(&mut self, r: &Record) -> Result<()> {
        self.summary.records += 1;
        self.advance(r.t)?;
        self.log(r);
        match r.kind {
            RecordKind::Feature => {
                if self.throttle.allow(&r.stream) {
                    let msg = protocol::event(types::FEATURE, &feature_payload(r));
                    self.broadcast(&msg);
                }
            }
            RecordKind::Marker => {
                let msg = protocol::event(types::MARKER, &r.as_marker()?);
                self.broadcast(&msg);
            }
            RecordKind::Context => {
                if let Some(ctx) = r.as_storybook() {
                    self.engine.set_context(ctx, r.t)?;
                }
            }
            _ => {}
        }
        self.flush_events();
        Ok(())
    }

    fn flush_events(&mut self) {
        for event in self.engine.take_events() {
            self.log(&event_record(&event));
            let msg = match &event {
                InterpretEvent::Proposal(p) => {
                    self.summary.proposals += 1;
                    protocol::event(types::PROPOSAL, p)
                }
                InterpretEvent::Review(r) => protocol::event(types::REVIEW, r),
                InterpretEvent::Decision(d) => {
                    self.summary.decisions += 1;
                    let decision = protocol::event(types::DECISION, d);
                    self.broadcast(&decision);
                    if d.emitted_actions.is_empty() {
                        continue;
                    }
                    protocol::event(
                        types::ACTION,
                        &json!({ "proposal_id": d.proposal_id, "t": d.t, "actions": d.emitted_actions }),
                    )
                }
                InterpretEvent::Expired { id, t } => protocol::event(types::EXPIRED, &json!({ "id": id, "t": t })),
                InterpretEvent::ModeChanged { .. }
                | InterpretEvent::WeightChanged { .. }
                | InterpretEvent::ContextChanged { .. } => protocol::event(types::STATE, &self.state()),
            };
            self.broadcast(&msg);
        }
    }

    pub fn state(&self) -> Value {
        let replay = self.replay.as_ref().map(|c| {
            let clock = c.clock();
            json!({
                "t": clock.t(),
                "speed": if clock.is_batch() { Value::Null } else { json!(clock.speed()) },
                "paused": clock.is_paused(),
                "stopped": c.is_stopped(),
            })
        });
        let weights: BTreeMap<&str, f64> = self
            .engine
            .config()
            .weights
            .iter()
            .map(|(s, w)| (s.name(), w))
            .collect();
        json!({
            "t": self.session_time(),
            "mode": self.engine.mode(),
            "context": self.engine.context(),
            "weights": weights,
            "proposals": self.engine.proposals(),
            "replay": replay,
        })
    }

    /// Applies one inbound message, broadcasts what it changed and returns
    /// the reply for the sender.
    pub fn handle_command(&mut self, text: &str) -> String {
        self.summary.commands += 1;
        let (id, parsed) = protocol::parse_command(text);
        let result = parsed.and_then(|cmd| {
            let name = cmd.name();
            self.apply(cmd).map(|v| (name, v))
        });
        self.flush_events();
        match result {
            Ok((name, value)) => protocol::ack(id, name, value),
            Err(e) => {
                self.summary.errors += 1;
                log::info!("command rejected ({}): {}", e.code, e.message);
                protocol::error(id, &e)
            }
        }
    }

    fn apply(&mut self, cmd: Command) -> std::result::Result<Value, CommandError> {
        let t = self.session_time();
        match cmd {
            Command::Approve(p) => self.decide(&p.proposal_id, Decision::Approve, &p.actor, t),
            Command::Reject(p) => self.decide(&p.proposal_id, Decision::Reject, &p.actor, t),
            Command::Override(p) => self.decide(&p.proposal_id, Decision::Override { actions: p.actions }, &p.actor, t),
            Command::InjectContext(p) => {
                let mut ctx = self.engine.context().clone();
                ctx.flags.extend(p.flags);
                self.engine.set_context(ctx, t).map_err(core_error)?;
                Ok(serde_json::to_value(self.engine.context()).unwrap_or(Value::Null))
            }
            Command::SetWeight(p) => {
                self.engine.set_weight(p.modality, p.weight, t).map_err(core_error)?;
                Ok(json!({ "modality": p.modality, "weight": p.weight }))
            }
            Command::SetMode(p) => {
                self.engine.set_mode(p.mode, t);
                Ok(json!({ "mode": p.mode }))
            }
            Command::Replay(r) => {
                let control = self
                    .replay
                    .as_ref()
                    .ok_or_else(|| CommandError::new(codes::UNAVAILABLE, "no replay is running"))?;
                match r {
                    ReplayCommand::Pause => control.pause(),
                    ReplayCommand::Resume => control.resume(),
                    ReplayCommand::Speed { speed } => control
                        .set_speed(speed)
                        .map_err(|e| CommandError::bad_request(e.to_string()))?,
                    ReplayCommand::Stop => control.stop(),
                }
                Ok(self.state()["replay"].clone())
            }
            Command::GetState => Ok(self.state()),
        }
    }

    fn decide(&mut self, id: &str, d: Decision, actor: &str, t: f64) -> std::result::Result<Value, CommandError> {
        let record = self.engine.record_decision(id, d, actor, t).map_err(core_error)?;
        Ok(serde_json::to_value(record).unwrap_or(Value::Null))
    }

    fn finish(mut self) -> Result<ServiceSummary> {
        if let Some(w) = self.log.take() {
            w.finish()?;
        }
        Ok(self.summary)
    }
}

fn core_error(e: CoreError) -> CommandError {
    let code = match e {
        CoreError::UnknownProposal(_) => codes::NOT_FOUND,
        CoreError::AlreadyDecided(_) => codes::CONFLICT,
        _ => codes::BAD_REQUEST,
    };
    CommandError::new(code, e.to_string())
}

#[derive(Serialize)]
struct FeaturePayload<'a> {
    stream: &'a str,
    t: f64,
    data: &'a serde_json::value::RawValue,
}

fn feature_payload(r: &Record) -> FeaturePayload<'_> {
    FeaturePayload {
        stream: &r.stream,
        t: r.t,
        data: &r.data,
    }
}

/// Handle on a running service.
pub struct ServiceHandle {
    addr: SocketAddr,
    tx: Sender<LoopMsg>,
    shutdown: Arc<AtomicBool>,
    replay: Option<ReplayControl>,
    accept_thread: Option<JoinHandle<()>>,
    loop_thread: Option<JoinHandle<Result<ServiceSummary>>>,
    replay_done: Arc<AtomicBool>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn replay_finished(&self) -> bool {
        self.replay_done.load(Ordering::SeqCst)
    }

    /// Blocks until the replay has been fully delivered.
    pub fn wait_for_replay(&self) {
        while self.replay.is_some() && !self.replay_finished() {
            thread::sleep(Duration::from_millis(20));
        }
    }

    /// Stops every thread and returns the loop's summary.
    pub fn shutdown(mut self) -> Result<ServiceSummary> {
        self.stop_threads();
        match self.loop_thread.take().map(JoinHandle::join) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(Error::Invalid("interpretation loop panicked".into())),
            None => Ok(ServiceSummary::default()),
        }
    }

    fn stop_threads(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(c) = &self.replay {
            c.stop();
        }
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept_thread.take() {
            let _ = h.join();
        }
        let _ = self.tx.send(LoopMsg::Shutdown);
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        if self.loop_thread.is_some() {
            self.stop_threads();
        }
    }
}

/// Binds the socket and starts the loop, the replay producer and the
/// accept thread.
pub fn start(options: ServiceOptions) -> Result<ServiceHandle> {
    let listener = TcpListener::bind(options.bind).map_err(|e| Error::Invalid(format!("bind {}: {e}", options.bind)))?;
    let addr = listener.local_addr()?;
    let log: Option<Box<dyn Write + Send>> = match &options.log_path {
        Some(p) => Some(Box::new(LineWriter::new(File::create(p).map_err(io_at(p))?))),
        None => None,
    };
    let mut session = SessionLoop::new(
        options.interpreter,
        options.table,
        options.context,
        options.risk_step_s,
        options.feature_rate_hz,
    )?;
    if let Some(out) = log {
        session = session.with_log(out);
    }
    let (tx, rx) = mpsc::channel::<LoopMsg>();
    let replay_done = Arc::new(AtomicBool::new(false));
    let mut control = None;
    if let Some(source) = options.replay {
        let c = ReplayControl::new(source.clock.clone());
        session = session.with_cues(source.cues).with_replay(c.clone());
        spawn_replay(source.log, c.clone(), tx.clone());
        control = Some(c);
    } else {
        replay_done.store(true, Ordering::SeqCst);
    }
    let done = replay_done.clone();
    let loop_thread = thread::Builder::new()
        .name("interpret-loop".into())
        .spawn(move || run_loop(session, rx, done))?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let accept_thread = {
        let tx = tx.clone();
        let shutdown = shutdown.clone();
        thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(listener, tx, shutdown))?
    };
    log::info!("serving on ws://{addr}");
    Ok(ServiceHandle {
        addr,
        tx,
        shutdown,
        replay: control,
        accept_thread: Some(accept_thread),
        loop_thread: Some(loop_thread),
        replay_done,
    })
}

fn spawn_replay(log: SessionLog, control: ReplayControl, tx: Sender<LoopMsg>) {
    thread::spawn(move || {
        let bus = Bus::default();
        let result = replay(&log, &control, &bus, |r| {
            // The loop consumes records directly; draining keeps the bus
            // buffers bounded.
            bus.drain();
            tx.send(LoopMsg::Record(Box::new(r.clone())))
                .map_err(|_| Error::Invalid("interpretation loop has stopped".into()))
        });
        let _ = tx.send(LoopMsg::ReplayDone(result));
    });
}

fn run_loop(mut session: SessionLoop, rx: Receiver<LoopMsg>, replay_done: Arc<AtomicBool>) -> Result<ServiceSummary> {
    for msg in rx {
        match msg {
            LoopMsg::Connect { client, tx } => session.connect(client, tx),
            LoopMsg::Disconnect { client } => session.disconnect(client),
            LoopMsg::Command { client, text } => {
                let reply = session.handle_command(&text);
                if let Some(tx) = session.clients.get(&client) {
                    let _ = tx.send(reply);
                }
            }
            LoopMsg::Record(r) => {
                if let Err(e) = session.on_record(&r) {
                    log::warn!("t={}: {e}", r.t);
                }
            }
            LoopMsg::ReplayDone(result) => {
                match result {
                    Ok(report) => {
                        let msg = protocol::event(types::REPLAY_FINISHED, &report);
                        session.broadcast(&msg);
                        session.summary.replay = Some(report);
                    }
                    Err(e) => log::error!("replay failed: {e}"),
                }
                replay_done.store(true, Ordering::SeqCst);
            }
            LoopMsg::Shutdown => break,
        }
    }
    session.finish()
}

fn accept_loop(listener: TcpListener, tx: Sender<LoopMsg>, shutdown: Arc<AtomicBool>) {
    static NEXT_CLIENT: AtomicU64 = AtomicU64::new(1);
    for stream in listener.incoming() {
        if shutdown.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let client = NEXT_CLIENT.fetch_add(1, Ordering::SeqCst);
        let tx = tx.clone();
        let shutdown = shutdown.clone();
        thread::spawn(move || {
            if let Err(e) = client_loop(client, stream, &tx, &shutdown) {
                log::debug!("client {client}: {e}");
            }
            let _ = tx.send(LoopMsg::Disconnect { client });
        });
    }
}

fn client_loop(client: u64, stream: TcpStream, tx: &Sender<LoopMsg>, shutdown: &AtomicBool) -> Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| Error::Invalid(format!("handshake: {e}")))?;
    ws.get_ref().set_read_timeout(Some(CLIENT_POLL))?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    tx.send(LoopMsg::Connect {
        client,
        tx: out_tx.clone(),
    })
    .map_err(|_| Error::Invalid("interpretation loop has stopped".into()))?;
    log::info!("client {client} connected");
    while !shutdown.load(Ordering::SeqCst) {
        while let Ok(text) = out_rx.try_recv() {
            ws.send(Message::Text(text)).map_err(Box::new)?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                if tx.send(LoopMsg::Command { client, text }).is_err() {
                    break;
                }
            }
            Ok(Message::Binary(_)) => {
                let err = CommandError::bad_request("binary frames are not part of the protocol");
                let _ = out_tx.send(protocol::error(None, &err));
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(Box::new(e).into()),
        }
    }
    log::info!("client {client} disconnected");
    Ok(())
}
