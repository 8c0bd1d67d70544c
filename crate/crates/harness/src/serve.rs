//! Interactive sessions over a web socket.
//!
//! Two threads: the simulation loop owns all simulation state; the
//! transport thread owns the socket. Inbound commands cross over a bounded
//! queue and are applied at the start of the next tick (the held twist is
//! last-write-wins); telemetry goes the other way through a small ring that
//! drops the oldest frame when the client falls behind. Every applied
//! command is appended to `inbound.jsonl` with its tick, which is all
//! [`replay`] needs to reproduce the session.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::config::{ScenarioConfig, BUILTIN_MODEL};
use crate::error::HarnessError;
use crate::experiment::{Command, Driver, Experiment};
use crate::output::{emit_report, ReportFormat};
use crate::protocol::{parse_inbound, Outbound, PROTOCOL_VERSION};

const INBOUND_CAPACITY: usize = 1024;
const OUTBOUND_CAPACITY: usize = 64;
const POLL: Duration = Duration::from_millis(2);

/// One line of `inbound.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub tick: u64,
    pub command: Command,
}

/// Contents of `session.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub protocol: u32,
    pub ticks: u64,
}

#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    pub out_dir: PathBuf,
    /// Ends the session after this much simulated time.
    pub max_duration: Option<f64>,
}

/// Telemetry ring shared by the two threads.
#[derive(Clone, Default)]
struct Outbox(Arc<Mutex<VecDeque<String>>>);

impl Outbox {
    fn push(&self, frame: String) {
        let mut q = self.0.lock().unwrap();
        if q.len() == OUTBOUND_CAPACITY {
            q.pop_front();
        }
        q.push_back(frame);
    }

    fn drain(&self) -> Vec<String> {
        self.0.lock().unwrap().drain(..).collect()
    }

    fn clear(&self) {
        self.0.lock().unwrap().clear();
    }
}

/// Finished session: the experiment and where its files went.
pub struct Session {
    pub experiment: Experiment,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sim: JoinHandle<Result<Session, HarnessError>>,
    transport: JoinHandle<()>,
}

impl Server {
    pub fn start(config: ScenarioConfig, options: ServeOptions) -> Result<Server, HarnessError> {
        config.validate()?;
        let listener = TcpListener::bind(&config.serve.addr)
            .map_err(|e| HarnessError::Transport(format!("bind {}: {e}", config.serve.addr)))?;
        let addr = listener.local_addr().map_err(|e| HarnessError::Transport(e.to_string()))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| HarnessError::Transport(e.to_string()))?;
        std::fs::create_dir_all(&options.out_dir).map_err(HarnessError::io(&options.out_dir))?;

        let stop = Arc::new(AtomicBool::new(false));
        let outbox = Outbox::default();
        let (tx, rx) = sync_channel(INBOUND_CAPACITY);
        let hello = Outbound::Hello {
            v: PROTOCOL_VERSION,
            dt: config.dt,
            decimation: config.serve.decimation,
            scenario: config.name.clone(),
        }
        .to_json();

        let transport = {
            let stop = stop.clone();
            let outbox = outbox.clone();
            std::thread::spawn(move || transport_loop(listener, tx, outbox, hello, stop))
        };
        let sim = {
            let stop = stop.clone();
            std::thread::spawn(move || {
                let result = simulation_loop(&config, &options, rx, &outbox, &stop);
                stop.store(true, Ordering::SeqCst);
                result
            })
        };
        Ok(Server {
            addr,
            stop,
            sim,
            transport,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Asks the session to end after the current tick.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn join(self) -> Result<Session, HarnessError> {
        let result = self
            .sim
            .join()
            .map_err(|_| HarnessError::Transport("simulation thread panicked".into()))?;
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.transport.join();
        result
    }
}

fn simulation_loop(
    config: &ScenarioConfig,
    options: &ServeOptions,
    inbound: Receiver<Command>,
    outbox: &Outbox,
    stop: &AtomicBool,
) -> Result<Session, HarnessError> {
    let dir = &options.out_dir;
    let started = Instant::now();
    let mut driver = Driver::new(config)?;
    let log_path = dir.join("inbound.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(HarnessError::io(&log_path))?);
    let limit = options.max_duration.map(|d| (d / config.dt).round() as u64);
    let pace = config.serve.realtime_factor;
    let mut k = 0u64;
    while !stop.load(Ordering::SeqCst) && limit.is_none_or(|n| k < n) {
        while let Ok(command) = inbound.try_recv() {
            driver.apply(&command)?;
            let line = serde_json::to_string(&LogEntry { tick: k, command }).expect("entry serializes");
            writeln!(log, "{line}").map_err(HarnessError::io(&log_path))?;
        }
        let tick = driver.step()?;
        if k.is_multiple_of(config.serve.decimation) {
            outbox.push(Outbound::telemetry(tick).to_json());
        }
        k += 1;
        if pace > 0.0 {
            let due = started + Duration::from_secs_f64(k as f64 * config.dt / pace);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }
    log.flush().map_err(HarnessError::io(&log_path))?;

    let mut recorded = config.clone();
    recorded.output.dir = None;
    if recorded.model != BUILTIN_MODEL {
        recorded.model = config.resolve(Path::new(&config.model)).display().to_string();
    }
    let path = dir.join("scenario.toml");
    std::fs::write(&path, recorded.to_toml()).map_err(HarnessError::io(&path))?;
    let info = SessionInfo {
        protocol: PROTOCOL_VERSION,
        ticks: k,
    };
    let path = dir.join("session.json");
    std::fs::write(&path, serde_json::to_string_pretty(&info).unwrap() + "\n").map_err(HarnessError::io(&path))?;

    let experiment = driver.finish(config, started);
    let files = emit_report(&experiment, dir, ReportFormat::Csv)?;
    Ok(Session {
        experiment,
        dir: dir.clone(),
        files,
    })
}

fn transport_loop(listener: TcpListener, inbound: SyncSender<Command>, outbox: Outbox, hello: String, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                outbox.clear();
                if let Ok(ws) = handshake(stream) {
                    client_loop(ws, &inbound, &outbox, &hello, &stop);
                }
                // safety hold: whatever the client was commanding stops
                let _ = inbound.send(Command::Disconnect);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(_) => std::thread::sleep(POLL),
        }
    }
}

fn handshake(stream: TcpStream) -> Result<WebSocket<TcpStream>, ()> {
    stream.set_nonblocking(false).map_err(|_| ())?;
    stream.set_read_timeout(Some(Duration::from_secs(2))).map_err(|_| ())?;
    let ws = tungstenite::accept(stream).map_err(|_| ())?;
    ws.get_ref().set_read_timeout(Some(POLL)).map_err(|_| ())?;
    Ok(ws)
}

fn client_loop(
    mut ws: WebSocket<TcpStream>,
    inbound: &SyncSender<Command>,
    outbox: &Outbox,
    hello: &str,
    stop: &AtomicBool,
) {
    if ws.send(Message::Text(hello.to_string())).is_err() {
        return;
    }
    loop {
        if stop.load(Ordering::SeqCst) {
            for frame in outbox.drain() {
                let _ = ws.send(Message::Text(frame));
            }
            let _ = ws.close(None);
            let _ = ws.flush();
            return;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = match parse_inbound(&text) {
                    Ok(command) => match inbound.try_send(command) {
                        Ok(()) => None,
                        Err(TrySendError::Full(_)) => Some(Outbound::reject("inbound queue full".into(), &text)),
                        Err(TrySendError::Disconnected(_)) => return,
                    },
                    Err(reason) => Some(Outbound::reject(reason, &text)),
                };
                if let Some(r) = reply {
                    if ws.send(Message::Text(r.to_json())).is_err() {
                        return;
                    }
                }
            }
            Ok(Message::Binary(_)) => {
                let r = Outbound::reject("binary frames are not supported".into(), "");
                if ws.send(Message::Text(r.to_json())).is_err() {
                    return;
                }
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
        for frame in outbox.drain() {
            if ws.send(Message::Text(frame)).is_err() {
                return;
            }
        }
    }
}

/// Re-runs a recorded session in batch and returns the experiment.
pub fn replay(session_dir: &Path) -> Result<Experiment, HarnessError> {
    let config = ScenarioConfig::load(session_dir.join("scenario.toml"))?;
    let path = session_dir.join("session.json");
    let text = std::fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
    let info: SessionInfo = serde_json::from_str(&text).map_err(|e| HarnessError::SessionLog {
        path: path.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    let path = session_dir.join("inbound.jsonl");
    let file = File::open(&path).map_err(HarnessError::io(&path))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(HarnessError::io(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(&line).map_err(|e| HarnessError::SessionLog {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    if entries.windows(2).any(|w| w[1].tick < w[0].tick) || entries.last().is_some_and(|e| e.tick >= info.ticks.max(1)) {
        return Err(HarnessError::SessionLog {
            path,
            line: 0,
            message: "ticks out of order or beyond the session length".into(),
        });
    }

    let started = Instant::now();
    let mut driver = Driver::new(&config)?;
    let mut pending = entries.iter().peekable();
    for k in 0..info.ticks {
        while let Some(e) = pending.next_if(|e| e.tick == k) {
            driver.apply(&e.command)?;
        }
        driver.step()?;
    }
    Ok(driver.finish(&config, started))
}
