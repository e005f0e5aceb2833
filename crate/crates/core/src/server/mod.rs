//! Live teleoperation loop: network ingest, fixed-rate twin tick and the
//! estimation pipeline, each on its own thread, joined by channels.

mod estimator;
mod net;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use nalgebra::Vector3;
use thiserror::Error;

use crate::control::{map_sample, set_axis_locks, set_scale, ControlConfig, EeTarget, HapticSample};
use crate::kinematics::SelectionWeights;
use crate::metrics::{write_record, LogRecord, MetricsError, SessionEvent, Target, LOG_VERSION};
use crate::pose::{EstimateMode, DEFAULT_ALPHA};
use crate::protocol::{ControlMsg, EstimateMsg, ObjectMsg, Role, ServerMsg, StateMsg, PROTOCOL_VERSION};
use crate::sim::{load_scene, step, RobotState, Scene, SceneError, SimEvent};

pub use net::TcpClient;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("could not bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("session thread panicked")]
    Panicked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    /// Bundled tube scene when `None`.
    pub scene: Option<PathBuf>,
    pub bind: SocketAddr,
    pub tick_period: Duration,
    /// Estimation frequency, Hz.
    pub estimation_rate: f64,
    pub mode: EstimateMode,
    pub alpha: f64,
    pub scale: i64,
    pub seed: u64,
    pub log: Option<PathBuf>,
    /// Stop after this long; runs until shutdown or operator exit otherwise.
    pub max_duration: Option<Duration>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            scene: None,
            bind: SocketAddr::from(([127, 0, 0, 1], 7070)),
            tick_period: Duration::from_millis(20),
            estimation_rate: 10.0,
            mode: EstimateMode::Mask,
            alpha: DEFAULT_ALPHA,
            scale: 1,
            seed: 0,
            log: None,
            max_duration: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        let bad = |s: &str| Err(ServerError::Config(s.into()));
        if self.tick_period.is_zero() {
            return bad("tick period must be positive");
        }
        let tick_rate = 1.0 / self.tick_period.as_secs_f64();
        if !(self.estimation_rate > 0.0 && self.estimation_rate <= tick_rate) {
            return bad("estimation rate must be in (0, tick rate]");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(1..=5).contains(&self.scale) {
            return bad("scale must be in 1..=5");
        }
        Ok(())
    }

    /// Ticks between estimation jobs.
    fn estimation_stride(&self) -> u64 {
        let tick_rate = 1.0 / self.tick_period.as_secs_f64();
        ((tick_rate / self.estimation_rate).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSummary {
    pub ticks: u64,
    pub elapsed: f64,
    /// Mean realized tick period, seconds.
    pub mean_period: f64,
    pub grasps: u32,
}

pub struct Session {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    tick: Option<JoinHandle<Result<SessionSummary, ServerError>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl Session {
    /// Binds the listener and starts all session threads.
    pub fn start(cfg: SessionConfig) -> Result<Session, ServerError> {
        cfg.validate()?;
        let scene = match &cfg.scene {
            Some(p) => load_scene(p)?,
            None => Scene::default_tube_scene(),
        };
        let listener = TcpListener::bind(cfg.bind).map_err(|source| ServerError::Bind {
            addr: cfg.bind,
            source,
        })?;
        let addr = listener.local_addr()?;
        let log = match &cfg.log {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Some(BufWriter::new(File::create(p)?))
            }
            None => None,
        };
        let stop = Arc::new(AtomicBool::new(false));
        let (net_tx, net_rx) = unbounded();
        let acceptor = net::spawn_acceptor(listener, net_tx, stop.clone())?;
        let tick_stop = stop.clone();
        let tick = thread::Builder::new()
            .name("teletwin-tick".into())
            .spawn(move || {
                let res = TickLoop::new(cfg, scene, net_rx, log).and_then(|mut t| t.run(&tick_stop));
                tick_stop.store(true, Ordering::Relaxed);
                res
            })?;
        log::info!("session listening on {addr}");
        Ok(Session {
            addr,
            stop,
            tick: Some(tick),
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::Relaxed);
    }

    pub fn is_finished(&self) -> bool {
        self.tick.as_ref().is_none_or(|t| t.is_finished())
    }

    /// Waits for the session to end.
    pub fn join(mut self) -> Result<SessionSummary, ServerError> {
        let res = self.tick.take().expect("joined once").join().map_err(|_| ServerError::Panicked)?;
        self.stop.store(true, Ordering::Relaxed);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        res
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

struct Client {
    id: u64,
    tx: Sender<Arc<str>>,
}

struct TickLoop {
    cfg: SessionConfig,
    scene: Scene,
    state: RobotState,
    control: ControlConfig,
    target: EeTarget,
    weights: SelectionWeights,
    net: Receiver<net::NetEvent>,
    clients: Vec<Client>,
    operator: Option<u64>,
    had_operator: bool,
    jobs: Option<Sender<estimator::Job>>,
    results: Receiver<Vec<EstimateMsg>>,
    estimator: Option<JoinHandle<()>>,
    estimates: Vec<EstimateMsg>,
    log: Option<BufWriter<File>>,
    attempt: u32,
    started: bool,
    grasped: bool,
    grasps: u32,
    last_time: f64,
}

impl TickLoop {
    fn new(
        cfg: SessionConfig,
        scene: Scene,
        net: Receiver<net::NetEvent>,
        log: Option<BufWriter<File>>,
    ) -> Result<Self, ServerError> {
        let state = RobotState::at_home(&scene);
        let control = set_scale(&ControlConfig::new(state.ee.position, state.ee.orientation), cfg.scale)
            .map_err(|e| ServerError::Config(e.to_string()))?;
        let target = EeTarget {
            position: state.ee.position,
            gripper: 0.0,
            orientation: state.ee.orientation,
        };
        let (job_tx, job_rx) = bounded::<estimator::Job>(1);
        let (res_tx, res_rx) = unbounded();
        let est = estimator::Estimator::new(scene.clone(), cfg.mode, cfg.alpha);
        let handle = thread::Builder::new()
            .name("teletwin-estimate".into())
            .spawn(move || estimator::run(est, job_rx, res_tx))?;
        Ok(TickLoop {
            cfg,
            scene,
            state,
            control,
            target,
            weights: SelectionWeights::default(),
            net,
            clients: Vec::new(),
            operator: None,
            had_operator: false,
            jobs: Some(job_tx),
            results: res_rx,
            estimator: Some(handle),
            estimates: Vec::new(),
            log,
            attempt: 0,
            started: false,
            grasped: false,
            grasps: 0,
            last_time: 0.0,
        })
    }

    fn record(&mut self, rec: &LogRecord) -> Result<(), ServerError> {
        if let Some(w) = &mut self.log {
            write_record(w, rec)?;
        }
        Ok(())
    }

    fn header(&mut self) -> Result<(), ServerError> {
        let target = self.scene.target_object().map(|o| Target {
            center: o.position.into(),
            grasp_mark: o.grasp_mark.unwrap_or(o.position).into(),
        });
        if let Some(target) = target {
            self.record(&LogRecord::Header {
                v: LOG_VERSION,
                attempt: self.attempt,
                target,
            })?;
        }
        Ok(())
    }

    fn state_msg(&self, time: f64, events: Vec<SimEvent>) -> StateMsg {
        StateMsg {
            tick: self.state.tick,
            time,
            joints: self.state.joints.0,
            ee: self.state.ee.position.into(),
            gripper: self.state.gripper_fraction,
            held: self.state.held_object(),
            estimates: self.estimates.clone(),
            objects: self
                .scene
                .objects
                .iter()
                .filter_map(|o| {
                    o.class.map(|class| ObjectMsg {
                        id: o.id,
                        class,
                        position: o.position.into(),
                    })
                })
                .collect(),
            scale: self.control.scale(),
            locks: self.control.axis_locks(),
            events,
        }
    }

    fn broadcast(&mut self, msg: &ServerMsg) {
        let text: Arc<str> = msg.encode().into();
        self.clients.retain(|c| net::offer(&c.tx, &text));
    }

    /// Handles joins and leaves; returns the newest operator control.
    fn ingest(&mut self) -> Option<ControlMsg> {
        let mut latest = None;
        while let Ok(ev) = self.net.try_recv() {
            match ev {
                net::NetEvent::Joined { id, tx } => {
                    let role = if self.operator.is_none() {
                        self.operator = Some(id);
                        self.had_operator = true;
                        Role::Operator
                    } else {
                        Role::Observer
                    };
                    let hello = ServerMsg::Hello {
                        v: PROTOCOL_VERSION,
                        role,
                        tick_period: self.cfg.tick_period.as_secs_f64(),
                    };
                    net::offer(&tx, &Arc::from(hello.encode()));
                    self.clients.push(Client { id, tx });
                }
                net::NetEvent::Control { id, msg, .. } => {
                    if self.operator == Some(id) {
                        latest = Some(msg);
                    }
                }
                net::NetEvent::Left { id } => {
                    self.clients.retain(|c| c.id != id);
                    if self.operator == Some(id) {
                        self.operator = None;
                    }
                }
            }
        }
        latest
    }

    fn apply(&mut self, msg: &ControlMsg) {
        if let Some(s) = msg.scale {
            match set_scale(&self.control, s) {
                Ok(c) => self.control = c,
                Err(e) => log::debug!("scale request ignored: {e}"),
            }
        }
        if let Some(l) = msg.locks {
            match set_axis_locks(&self.control, l) {
                Ok(c) => self.control = c,
                Err(e) => log::debug!("lock request ignored: {e}"),
            }
        }
        let sample = HapticSample {
            position: Vector3::from(msg.position),
            gripper: msg.gripper.clamp(0.0, 1.0),
            timestamp: msg.timestamp,
        }
        .clamped();
        self.target = map_sample(&sample, &self.control, &self.target);
    }

    fn run(&mut self, stop: &AtomicBool) -> Result<SessionSummary, ServerError> {
        let period = self.cfg.tick_period;
        let stride = self.cfg.estimation_stride();
        let t0 = Instant::now();

        self.header()?;
        let first = self.state_msg(0.0, Vec::new());
        self.record(&LogRecord::State { state: first.clone() })?;
        self.broadcast(&ServerMsg::state(first));

        let mut k: u64 = 0;
        let reason = loop {
            k += 1;
            let deadline = t0 + period * k as u32;
            let now = Instant::now();
            if deadline > now {
                thread::sleep(deadline - now);
            }
            if stop.load(Ordering::Relaxed) {
                break "shutdown";
            }
            if self.cfg.max_duration.is_some_and(|d| t0.elapsed() >= d) {
                break "time limit";
            }
            let control = self.ingest();
            if self.had_operator && self.operator.is_none() {
                break "operator disconnected";
            }
            if let Some(msg) = &control {
                if !self.started {
                    self.started = true;
                    let t = self.last_time;
                    self.record(&LogRecord::Event {
                        t,
                        event: SessionEvent::Start,
                    })?;
                }
                self.apply(msg);
            }

            let dt = period.as_secs_f64();
            let (next, events) = step(&mut self.scene, &self.state, &self.target, dt, &self.weights);
            self.state = next;
            let time = t0.elapsed().as_secs_f64();

            if let Some(latest) = self.results.try_iter().last() {
                for e in latest {
                    match self.estimates.iter_mut().find(|x| x.class == e.class) {
                        Some(slot) => *slot = e,
                        None => self.estimates.push(e),
                    }
                }
            }
            if self.state.tick.is_multiple_of(stride) {
                if let Some(jobs) = &self.jobs {
                    let _ = jobs.try_send(estimator::Job {
                        time,
                        ee: self.state.ee,
                        objects: self.scene.objects.clone(),
                    });
                }
            }

            let msg = self.state_msg(time, events.clone());
            self.record(&LogRecord::State { state: msg.clone() })?;
            self.broadcast(&ServerMsg::state(msg));
            self.last_time = time;
            self.log_events(&events, time)?;
        };

        if self.started && !self.grasped {
            let t = self.last_time;
            self.record(&LogRecord::Event {
                t,
                event: SessionEvent::Abort,
            })?;
        }
        self.broadcast(&ServerMsg::Bye {
            v: PROTOCOL_VERSION,
            reason: reason.into(),
        });
        if let Some(w) = &mut self.log {
            w.flush()?;
        }
        self.jobs = None;
        if let Some(h) = self.estimator.take() {
            let _ = h.join();
        }
        log::info!("session ended: {reason}");
        let ticks = self.state.tick;
        let elapsed = self.last_time;
        Ok(SessionSummary {
            ticks,
            elapsed,
            mean_period: if ticks > 0 { elapsed / ticks as f64 } else { 0.0 },
            grasps: self.grasps,
        })
    }

    fn log_events(&mut self, events: &[SimEvent], time: f64) -> Result<(), ServerError> {
        for e in events {
            match e {
                SimEvent::Grasp { point, .. } if self.started && !self.grasped => {
                    self.grasped = true;
                    self.grasps += 1;
                    self.record(&LogRecord::Event {
                        t: time,
                        event: SessionEvent::Grasp { point: (*point).into() },
                    })?;
                }
                SimEvent::Release { .. } if self.grasped => {
                    self.record(&LogRecord::Event {
                        t: time,
                        event: SessionEvent::Place,
                    })?;
                    // the next attempt starts where this one let go
                    self.attempt += 1;
                    self.grasped = false;
                    self.header()?;
                    self.record(&LogRecord::Sample {
                        t: time,
                        position: self.state.ee.position.into(),
                    })?;
                    self.record(&LogRecord::Event {
                        t: time,
                        event: SessionEvent::Start,
                    })?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Recorded states of every attempt in a session log, in order.
pub fn replay_states(path: &std::path::Path) -> Result<Vec<StateMsg>, MetricsError> {
    Ok(crate::metrics::load_log(path)?
        .into_iter()
        .flat_map(|l| l.states)
        .collect())
}

/// Re-emits recorded states, pacing by their timestamps divided by `speed`.
/// A non-finite or non-positive speed emits without pacing.
pub fn replay(states: &[StateMsg], speed: f64, mut sink: impl FnMut(&StateMsg)) {
    let paced = speed.is_finite() && speed > 0.0;
    let start = Instant::now();
    let t0 = states.first().map_or(0.0, |s| s.time);
    for s in states {
        if paced {
            let due = Duration::from_secs_f64(((s.time - t0) / speed).max(0.0));
            let now = start.elapsed();
            if due > now {
                thread::sleep(due - now);
            }
        }
        sink(s);
    }
}
