//! WebSocket endpoint for a live operator session.
//!
//! One client at a time connects to `/session`. Its `pose_input` messages
//! feed a live pose source; a blocking worker runs back-to-back episodes on
//! it and streams `frame_state`, `latency_update` and `metrics_update`
//! messages back. `training_command` switches the worker between acting
//! with the loaded policy and online (stage-2) adaptation.

use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::mpsc::UnboundedSender;

use super::commands::LoadedPolicy;
use super::config::{ExperimentConfig, PolicySpec};
use super::env::{to_rollout, PipelineEnv, TaskSource};
use super::pipeline::PipelineEvent;
use super::wire::{SeqGuard, Sequencer, TrainingAction, TrainingState, WireBody, WireMessage};
use crate::agent::{BaselineKind, Checkpoint, Environment, HorizonAction, HorizonPolicy, LogRow, PolicyParams, Rollout, Trainer};
use crate::base::derive_seed;
use crate::error::{Error, Result};
use crate::metrics::moving_average;
use crate::operator::live_channel;

const SERVE_STREAM: u64 = 0x73_6572_7665;
/// Operator samples buffered between the socket and the pipeline.
const LIVE_CAPACITY: usize = 1 << 15;

/// Seed of the `episode`-th live episode (0-based) of a session.
pub fn live_episode_seed(seed: u64, episode: u64) -> u64 {
    derive_seed(derive_seed(seed, SERVE_STREAM), episode)
}

struct ServerState {
    cfg: ExperimentConfig,
    hash: String,
    policy: LoadedPolicy,
    active: AtomicBool,
}

impl ServerState {
    fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        if matches!(cfg.policy, PolicySpec::Agent { checkpoint: None }) {
            return Err(Error::config("serve needs a checkpoint for the agent policy"));
        }
        Ok(Self {
            hash: cfg.hash()?,
            policy: LoadedPolicy::from_spec(&cfg.policy, &cfg)?,
            cfg,
            active: AtomicBool::new(false),
        })
    }
}

/// Binds `serve.host:serve.port` and serves until the process ends.
pub async fn serve(cfg: ExperimentConfig) -> Result<()> {
    let addr = format!("{}:{}", cfg.serve.host, cfg.serve.port);
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|e| Error::config(format!("cannot listen on {addr}: {e}")))?;
    log::info!("listening on ws://{addr}/session");
    serve_on(listener, cfg, std::future::pending()).await
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    cfg: ExperimentConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let state = Arc::new(ServerState::new(cfg)?);
    let app = Router::new()
        .route("/", get(|| async { "teleop-twin: connect a console to ws /session\n" }))
        .route("/session", get(upgrade))
        .with_state(state);
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<ServerState>>) -> Response {
    ws.on_upgrade(move |socket| session(socket, state))
}

struct ActiveSession(Arc<ServerState>);

impl Drop for ActiveSession {
    fn drop(&mut self) {
        self.0.active.store(false, Ordering::SeqCst);
    }
}

async fn send(socket: &mut WebSocket, msg: WireMessage) -> bool {
    match msg.to_json() {
        Ok(text) => socket.send(Message::Text(text.into())).await.is_ok(),
        Err(_) => false,
    }
}

async fn session(mut socket: WebSocket, state: Arc<ServerState>) {
    let start = Instant::now();
    let now = || start.elapsed().as_secs_f64() * 1000.0;
    let mut out_seq = Sequencer::default();
    if state.active.swap(true, Ordering::SeqCst) {
        send(&mut socket, out_seq.stamp(WireBody::error(0, "another session is active"), now())).await;
        return;
    }
    let _active = ActiveSession(state.clone());
    let cfg = &state.cfg;

    let hello = WireBody::SessionConfig {
        config_hash: state.hash.clone(),
        policy: state.policy.name().to_string(),
        operator_hz: cfg.pipeline.timing.operator_hz,
        decision_hz: cfg.pipeline.timing.decision_hz,
        duration_ms: cfg.pipeline.duration_ms,
        warmup_ms: cfg.pipeline.warmup_ms,
        max_horizon_ms: cfg.trainer.max_horizon_ms,
        delay: cfg.pipeline.delay.clone(),
        workspace: cfg.pipeline.workspace.clone(),
    };
    if !send(&mut socket, out_seq.stamp(hello, now())).await {
        return;
    }

    let (pose_tx, live) = live_channel(LIVE_CAPACITY, Duration::from_millis(cfg.serve.input_timeout_ms));
    let (out_tx, mut out_rx) = tokio::sync::mpsc::unbounded_channel();
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let closed = Arc::new(AtomicBool::new(false));
    let worker = {
        let state = state.clone();
        let closed = closed.clone();
        let source = TaskSource::Live {
            name: "live".to_string(),
            source: Box::new(live),
            offset_ms: 0.0,
        };
        tokio::task::spawn_blocking(move || {
            let mut w = LiveWorker::new(&state.cfg, state.policy.clone(), out_tx, closed);
            w.run(source, cmd_rx);
        })
    };

    let mut in_seq = SeqGuard::default();
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match WireMessage::parse(text.as_str()) {
                    Err(e) => Some(format!("malformed message: {e}")),
                    Ok(m) if !in_seq.accept(m.seq) => Some(format!("seq {} is not increasing", m.seq)),
                    Ok(m) => match (&m.body, m.pose()) {
                        (_, Some(Ok((t, pose)))) => {
                            if !pose_tx.push(t, pose) {
                                log::warn!("live input queue full; dropped pose at {t} ms");
                            }
                            None
                        }
                        (_, Some(Err(e))) => Some(format!("invalid pose: {e}")),
                        (WireBody::TrainingCommand { action }, None) => {
                            let _ = cmd_tx.send(*action);
                            None
                        }
                        _ => Some("unexpected message kind from client".to_string()),
                    },
                };
                if let Some(reason) = reply {
                    if !send(&mut socket, out_seq.stamp(WireBody::error(0, reason), now())).await {
                        break;
                    }
                }
            }
            out = out_rx.recv() => match out {
                Some(body) => if !send(&mut socket, out_seq.stamp(body, now())).await { break },
                None => break,
            },
        }
    }
    closed.store(true, Ordering::SeqCst);
    drop(pose_tx);
    drop(cmd_tx);
    let _ = worker.await;
}

enum Mode {
    Acting(LoadedPolicy),
    Training(Trainer),
    Paused(Trainer),
}

/// Live episodes as a training environment that also streams progress.
struct Observed<'a> {
    env: &'a mut PipelineEnv,
    out: &'a UnboundedSender<WireBody>,
    last_action: &'a mut Option<HorizonAction>,
}

fn forward(out: &UnboundedSender<WireBody>, last: &mut Option<HorizonAction>, e: &PipelineEvent) {
    let body = match *e {
        PipelineEvent::Displayed {
            t_ms,
            frame_id,
            twin,
            plant,
        } => WireBody::FrameState {
            t_ms,
            frame_id,
            twin,
            plant,
        },
        PipelineEvent::Decided {
            t_ms,
            action,
            t_r_ms,
            t_v_ms,
        } => {
            *last = Some(action);
            WireBody::LatencyUpdate {
                t_ms,
                t_r_ms,
                t_v_ms,
                h_r_ms: action.h_r_ms,
                h_v_ms: action.h_v_ms,
            }
        }
    };
    let _ = out.send(body);
}

impl Environment for Observed<'_> {
    fn task_count(&self) -> usize {
        1
    }

    fn task_name(&self, _task: usize) -> String {
        "live".to_string()
    }

    fn rollout(&mut self, task: usize, policy: &mut dyn HorizonPolicy, seed: u64) -> Result<Rollout> {
        let (out, last) = (self.out, &mut *self.last_action);
        let outcome = self.env.episode_observed(task, policy, seed, &mut |e| forward(out, last, e))?;
        to_rollout(&outcome, &self.env.weights)
    }
}

struct LiveWorker<'a> {
    cfg: &'a ExperimentConfig,
    out: UnboundedSender<WireBody>,
    closed: Arc<AtomicBool>,
    /// Parameters training may start from.
    agent: Option<PolicyParams>,
    mode: Mode,
    episode: u64,
    rewards: Vec<f64>,
    last_action: Option<HorizonAction>,
    trained_since_checkpoint: usize,
}

impl<'a> LiveWorker<'a> {
    fn new(cfg: &'a ExperimentConfig, policy: LoadedPolicy, out: UnboundedSender<WireBody>, closed: Arc<AtomicBool>) -> Self {
        let agent = match &policy {
            LoadedPolicy::Agent(p) => Some(p.clone()),
            LoadedPolicy::Baseline(_) => None,
        };
        Self {
            cfg,
            out,
            closed,
            agent,
            mode: Mode::Acting(policy),
            episode: 0,
            rewards: Vec::new(),
            last_action: None,
            trained_since_checkpoint: 0,
        }
    }

    fn status(&self, state: TrainingState) -> WireBody {
        let smoothed = moving_average(&self.rewards, self.cfg.trainer.convergence_window).last().copied();
        WireBody::TrainingStatus {
            state,
            episode: self.episode,
            smoothed_reward: smoothed,
            h_r_ms: self.last_action.map(|a| a.h_r_ms),
            h_v_ms: self.last_action.map(|a| a.h_v_ms),
            reason: None,
            checkpoint: None,
        }
    }

    fn emit(&self, body: WireBody) {
        let _ = self.out.send(body);
    }

    fn save(&mut self, trainer: &Trainer) -> Result<String> {
        let name = format!("stage2_{:05}.json", self.episode);
        let path: PathBuf = self.cfg.output_dir.join("serve").join(&name);
        Checkpoint::of(trainer).save(&path)?;
        self.trained_since_checkpoint = 0;
        log::info!("checkpoint written to {}", path.display());
        Ok(name)
    }

    fn command(&mut self, action: TrainingAction) {
        let mode = std::mem::replace(&mut self.mode, Mode::Acting(LoadedPolicy::Baseline(BaselineKind::Wp)));
        self.mode = match (action, mode) {
            (TrainingAction::Start, Mode::Acting(policy)) => match &self.agent {
                None => {
                    self.emit(WireBody::error(self.episode, "no checkpoint loaded"));
                    Mode::Acting(policy)
                }
                Some(params) => {
                    let seed = live_episode_seed(self.cfg.seed, self.episode);
                    self.emit(self.status(TrainingState::Training));
                    Mode::Training(Trainer::with_params(self.cfg.trainer.clone(), params.clone(), seed))
                }
            },
            (TrainingAction::Start, Mode::Paused(t)) | (TrainingAction::Start, Mode::Training(t)) => {
                self.emit(self.status(TrainingState::Training));
                Mode::Training(t)
            }
            (TrainingAction::Pause, Mode::Training(t)) | (TrainingAction::Pause, Mode::Paused(t)) => {
                self.emit(self.status(TrainingState::Paused));
                Mode::Paused(t)
            }
            (TrainingAction::Stop, Mode::Training(t)) | (TrainingAction::Stop, Mode::Paused(t)) => {
                let mut status = self.status(TrainingState::Stopped);
                match self.save(&t) {
                    Ok(id) => {
                        if let WireBody::TrainingStatus { checkpoint, .. } = &mut status {
                            *checkpoint = Some(id);
                        }
                    }
                    Err(e) => status = WireBody::error(self.episode, format!("checkpoint not written: {e}")),
                }
                self.emit(status);
                self.agent = Some(t.params.clone());
                Mode::Acting(LoadedPolicy::Agent(t.params))
            }
            (_, Mode::Acting(policy)) => {
                self.emit(WireBody::error(self.episode, "training is not running"));
                Mode::Acting(policy)
            }
        };
    }

    fn one_episode(&mut self, env: &mut PipelineEnv) -> Result<Vec<LogRow>> {
        let seed = live_episode_seed(self.cfg.seed, self.episode);
        let bins = self.cfg.trainer.bins();
        let max_h = self.cfg.trainer.max_horizon_ms;
        let mut obs = Observed {
            env,
            out: &self.out,
            last_action: &mut self.last_action,
        };
        let acting = match &mut self.mode {
            Mode::Training(t) => return t.online_iteration(&mut obs, 0),
            Mode::Paused(t) => LoadedPolicy::Agent(t.params.clone()),
            Mode::Acting(p) => p.clone(),
        };
        let (out, last) = (obs.out, &mut *obs.last_action);
        let outcome = acting.episode_observed(obs.env, 0, bins, max_h, seed, &mut |e| forward(out, last, e))?;
        let r = to_rollout(&outcome, &obs.env.weights)?;
        Ok(vec![LogRow {
            episode: self.episode + 1,
            mean_reward: r.steps.iter().map(|s| s.reward).sum::<f64>() / r.steps.len().max(1) as f64,
            e_v: r.e_v,
            e_r: r.e_r,
            t_r: r.t_r,
            t_v: r.t_v,
        }])
    }

    fn run(&mut self, source: TaskSource, commands: Receiver<TrainingAction>) {
        let mut env = match PipelineEnv::new(self.cfg.pipeline.clone(), vec![source], self.cfg.metrics) {
            Ok(env) => env,
            Err(e) => return self.emit(WireBody::error(0, e.to_string())),
        };
        self.emit(self.status(TrainingState::Idle));
        while !self.closed.load(Ordering::SeqCst) {
            while let Ok(action) = commands.try_recv() {
                self.command(action);
            }
            match self.one_episode(&mut env) {
                Ok(rows) => {
                    for row in rows {
                        self.episode += 1;
                        self.rewards.push(row.mean_reward);
                        self.emit(WireBody::MetricsUpdate {
                            episode: self.episode,
                            e_v: row.e_v,
                            e_r: row.e_r,
                            combined: row.e_v + row.e_r,
                            t_r_ms: row.t_r,
                            t_v_ms: row.t_v,
                        });
                    }
                    if let Mode::Training(t) = &self.mode {
                        self.trained_since_checkpoint += 1;
                        let t = t.clone();
                        self.emit(self.status(TrainingState::Training));
                        if self.trained_since_checkpoint >= self.cfg.serve.checkpoint_every {
                            if let Err(e) = self.save(&t) {
                                log::warn!("periodic checkpoint failed: {e}");
                            }
                        }
                    }
                }
                Err(Error::Stage2Timeout { waited_ms }) => {
                    if self.closed.load(Ordering::SeqCst) {
                        break;
                    }
                    let mut s = self.status(TrainingState::Waiting);
                    if let WireBody::TrainingStatus { reason, .. } = &mut s {
                        *reason = Some(format!("no operator input for {waited_ms} ms"));
                    }
                    self.emit(s);
                }
                Err(e) => {
                    self.emit(WireBody::error(self.episode, e.to_string()));
                    break;
                }
            }
        }
        if let Mode::Training(t) | Mode::Paused(t) = std::mem::replace(&mut self.mode, Mode::Acting(LoadedPolicy::Baseline(BaselineKind::Wp))) {
            if let Err(e) = self.save(&t) {
                log::warn!("final checkpoint failed: {e}");
            }
        }
    }
}
