//! One task execution on the event scheduler: operator sampling and
//! prediction, the uplink, the edge twins behind a freshest-packet buffer,
//! the command and feedback links to the plant, and the downlink back to the
//! operator display.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, HorizonAction, HorizonPolicy};
use crate::base::{derive_seed, map_workspace, ClockMode, Micros, NormalizationBounds, Pose, WorkspaceMap, POSE_DIM};
use crate::control::{
    plant_step, render_tick, step_sim, ControlSynthesizer, FrameState, PidGains, PlantState, RmpParams,
    SmootherState, TwinState,
};
use crate::error::{Error, Result};
use crate::metrics::{resample_linear, ActionSample, EpisodeRecord};
use crate::network::{DelayChannel, DelaySpec, FreshestBuffer, LatencyMeasurement, Offer, Stage, TimedPacket};
use crate::operator::PoseSource;
use crate::predictor::{ArmaForecaster, Forecaster, PredictorConfig};

/// Stage rates and fixed processing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub operator_hz: f64,
    pub decision_hz: f64,
    pub sim_hz: f64,
    pub render_period_ms: f64,
    /// Time from render start until the frame leaves the edge.
    pub render_time_ms: f64,
    pub plant_hz: f64,
    pub feedback_period_ms: f64,
    /// Forecast time between sampling and uplink send.
    pub predict_ms: f64,
    /// Service time of the edge buffer per operator packet.
    pub edge_service_ms: f64,
    /// Lag between a command reaching the plant and taking effect.
    pub exec_latency_ms: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            operator_hz: 120.0,
            decision_hz: 30.0,
            sim_hz: 240.0,
            render_period_ms: 16.0,
            render_time_ms: 16.0,
            plant_hz: 1000.0,
            feedback_period_ms: 8.0,
            predict_ms: 1.0,
            edge_service_ms: 3.0,
            exec_latency_ms: 28.0,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("operator_hz", self.operator_hz),
            ("decision_hz", self.decision_hz),
            ("sim_hz", self.sim_hz),
            ("render_period_ms", self.render_period_ms),
            ("plant_hz", self.plant_hz),
            ("feedback_period_ms", self.feedback_period_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("timing.{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("render_time_ms", self.render_time_ms),
            ("predict_ms", self.predict_ms),
            ("edge_service_ms", self.edge_service_ms),
            ("exec_latency_ms", self.exec_latency_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("timing.{name} must be ≥ 0, got {v}")));
            }
        }
        let ratio = self.operator_hz / self.decision_hz;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::config(format!(
                "operator rate {} Hz must be a whole multiple of the decision rate {} Hz",
                self.operator_hz, self.decision_hz
            )));
        }
        Ok(())
    }

    /// Operator samples per decision.
    pub fn samples_per_decision(&self) -> usize {
        (self.operator_hz / self.decision_hz).round() as usize
    }

    /// Fixed time spent in stages on the visual path, excluding waits for
    /// the next sim or render tick.
    pub fn visual_processing_ms(&self) -> f64 {
        self.predict_ms + self.edge_service_ms + self.render_time_ms
    }
}

/// Transport delay of the four links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkDelays {
    /// Operator to edge.
    pub uplink: DelaySpec,
    /// Edge to operator display.
    pub downlink: DelaySpec,
    /// Edge to plant.
    pub command: DelaySpec,
    /// Plant to edge.
    pub feedback: DelaySpec,
}

impl Default for LinkDelays {
    fn default() -> Self {
        Self::uniform(DelaySpec::default())
    }
}

impl LinkDelays {
    pub fn uniform(spec: DelaySpec) -> Self {
        Self {
            uplink: spec.clone(),
            downlink: spec.clone(),
            command: spec.clone(),
            feedback: spec,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [&self.uplink, &self.downlink, &self.command, &self.feedback] {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub alpha: f64,
    pub window_factor: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            window_factor: 2.0,
        }
    }
}

/// Everything needed to assemble one pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub clock: ClockMode,
    pub duration_ms: f64,
    /// Leading interval excluded from the record.
    pub warmup_ms: f64,
    pub timing: TimingConfig,
    pub delay: LinkDelays,
    pub predictor: PredictorConfig,
    pub rmp: RmpParams,
    pub smoother: SmootherConfig,
    pub pid: PidGains,
    pub workspace: WorkspaceMap,
    /// Twin–plant divergence (m) that freezes the control target.
    pub guard_radius: f64,
    pub normalization: NormalizationBounds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            clock: ClockMode::Virtual,
            duration_ms: 20_000.0,
            warmup_ms: 500.0,
            timing: TimingConfig::default(),
            delay: LinkDelays::default(),
            predictor: PredictorConfig::default(),
            rmp: RmpParams::default(),
            smoother: SmootherConfig::default(),
            pid: PidGains::default(),
            workspace: WorkspaceMap::identity(),
            guard_radius: 0.05,
            normalization: NormalizationBounds::around([0.0; 3], 0.15).expect("non-empty bounds"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ms.is_finite() && self.duration_ms > 0.0) {
            return Err(Error::config(format!("duration_ms must be > 0, got {}", self.duration_ms)));
        }
        if !(self.warmup_ms.is_finite() && self.warmup_ms >= 0.0) {
            return Err(Error::config(format!("warmup_ms must be ≥ 0, got {}", self.warmup_ms)));
        }
        if !(self.guard_radius > 0.0) {
            return Err(Error::config("guard_radius must be > 0"));
        }
        if !(self.smoother.window_factor > 0.0) {
            return Err(Error::config("smoother.window_factor must be > 0"));
        }
        self.timing.validate()?;
        self.delay.validate()?;
        self.predictor.validate()?;
        self.rmp.validate()?;
        self.pid.validate()?;
        Ok(())
    }

    pub fn with_delays(mut self, delay: LinkDelays) -> Self {
        self.delay = delay;
        self
    }

    /// Decisions per recorded episode.
    pub fn decisions_per_episode(&self) -> usize {
        (self.duration_ms * self.timing.decision_hz / 1000.0).round() as usize
    }

    /// Largest horizon the agent may request (ms).
    pub fn max_horizon_ms(&self) -> u32 {
        self.predictor.max_horizon_ms.floor() as u32
    }
}

/// One decision slot as seen by the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub t_ms: f64,
    pub state: AgentState,
    pub action: HorizonAction,
    /// First record row covered by this decision.
    pub row: usize,
}

/// Packet counts that never reach their consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropCounts {
    /// Operator packets older than one already accepted by the edge.
    pub uplink_stale: u64,
    /// Operator packets displaced from the edge buffer's waiting slot.
    pub buffer_discarded: u64,
    pub frames_stale: u64,
    pub commands_stale: u64,
    pub feedback_stale: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub record: EpisodeRecord,
    pub decisions: Vec<Decision>,
    pub drops: DropCounts,
    pub model_fits: usize,
}

/// Progress notifications for live front ends.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineEvent {
    Displayed {
        t_ms: f64,
        frame_id: u64,
        twin: Pose,
        plant: Pose,
    },
    Decided {
        t_ms: f64,
        action: HorizonAction,
        t_r_ms: f64,
        t_v_ms: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct OperatorPacket {
    p_r: Pose,
    p_v: Pose,
}

#[derive(Debug, Clone, Copy)]
struct FramePacket {
    frame: FrameState,
    /// Latest control-loop latency sample `(sequence, ms)` forwarded from the plant.
    control_sample: Option<(u64, f64)>,
    /// Whether the frame reflects an operator packet (and so can be timed).
    timed: bool,
}

#[derive(Debug, Clone, Copy)]
struct CommandPacket {
    target: [f64; POSE_DIM],
}

#[derive(Debug, Clone, Copy)]
struct FeedbackPacket {
    positions: [f64; POSE_DIM],
    control_sample: Option<(u64, f64)>,
}

enum Event {
    Sample(i64),
    Predicted(TimedPacket<OperatorPacket>),
    UplinkDue,
    EdgeServiceDone,
    SimTick(i64),
    RenderTick(i64),
    FrameReady(TimedPacket<FramePacket>),
    DownlinkDue,
    CommandDue,
    Execute(TimedPacket<CommandPacket>),
    PlantTick(i64),
    FeedbackTick(i64),
    FeedbackDue,
}

struct Scheduled {
    at: Micros,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Min-heap on (time, insertion order).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Default)]
struct Queue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, at: Micros, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled {
            at,
            seq: self.seq,
            event,
        });
    }
}

fn period(ms: f64) -> Micros {
    Micros::from_ms(ms)
}

fn grid(index: i64, hz: f64) -> Micros {
    Micros::grid(index, hz)
}

/// Runs one episode of `cfg.duration_ms` (after the warm-up) driven by
/// `source`, with `policy` choosing horizons at the decision rate.
pub fn run_episode(
    cfg: &PipelineConfig,
    source: &mut dyn PoseSource,
    policy: &mut dyn HorizonPolicy,
    seed: u64,
) -> Result<EpisodeOutcome> {
    run_episode_observed(cfg, source, policy, seed, &mut |_| {})
}

/// [`run_episode`] with a callback for displays and decisions.
pub fn run_episode_observed(
    cfg: &PipelineConfig,
    source: &mut dyn PoseSource,
    policy: &mut dyn HorizonPolicy,
    seed: u64,
    observer: &mut dyn FnMut(&PipelineEvent),
) -> Result<EpisodeOutcome> {
    cfg.validate()?;
    Pipeline::new(cfg, source, seed)?.run(policy, observer)
}

struct Pipeline<'a> {
    cfg: &'a PipelineConfig,
    source: &'a mut dyn PoseSource,
    queue: Queue,
    end: Micros,
    warmup: Micros,

    // Operator side.
    forecaster: ArmaForecaster,
    latency: LatencyMeasurement,
    action: HorizonAction,
    displayed_frame: Option<u64>,
    last_visual_origin: Option<Micros>,
    last_control_sample: Option<u64>,

    // Links.
    uplink: DelayChannel<OperatorPacket>,
    downlink: DelayChannel<FramePacket>,
    command: DelayChannel<CommandPacket>,
    feedback: DelayChannel<FeedbackPacket>,

    // Edge.
    buffer: FreshestBuffer<OperatorPacket>,
    newest_uplink: Option<Micros>,
    visual_twin: TwinState,
    command_twin: TwinState,
    synth: ControlSynthesizer,
    smoother: SmootherState,
    applied: Option<TimedPacket<()>>,
    sigma_r: [f64; POSE_DIM],
    newest_feedback: Option<Micros>,
    edge_control_sample: Option<(u64, f64)>,

    // Plant.
    plant: PlantState,
    setpoint: [f64; POSE_DIM],
    newest_command: Option<Micros>,
    last_executed_origin: Option<Micros>,
    control_seq: u64,
    plant_control_sample: Option<(u64, f64)>,

    // Recording.
    record: EpisodeRecord,
    decisions: Vec<Decision>,
    drops: DropCounts,
    display_times: Vec<f64>,
    display_poses: Vec<Pose>,
    plant_times: Vec<f64>,
    plant_poses: Vec<Pose>,
}

impl<'a> Pipeline<'a> {
    fn new(cfg: &'a PipelineConfig, source: &'a mut dyn PoseSource, seed: u64) -> Result<Self> {
        let t = &cfg.timing;
        let mut forecaster = ArmaForecaster::new(cfg.predictor.clone())?;
        if source.extends_backwards() {
            let n = (cfg.predictor.window_ms * t.operator_hz / 1000.0).floor() as i64;
            for k in (1..=n).rev() {
                let t_ms = grid(-k, t.operator_hz).as_ms();
                let pose = source.pose_at(t_ms)?;
                forecaster.observe(t_ms, pose)?;
            }
        }
        let initial = map_workspace(&source.pose_at(0.0)?, &cfg.workspace);
        let mut smoother = SmootherState::new(cfg.smoother.alpha, period(1000.0 / t.sim_hz))?;
        smoother.window_factor = cfg.smoother.window_factor;
        smoother.prime(initial.to_array());

        let mut record = EpisodeRecord {
            rate_hz: t.operator_hz,
            ..EpisodeRecord::default()
        };
        let rows = (cfg.duration_ms * t.operator_hz / 1000.0).ceil() as usize + 1;
        record.t_ms.reserve(rows);

        Ok(Self {
            cfg,
            source,
            queue: Queue::default(),
            end: period(cfg.warmup_ms + cfg.duration_ms),
            warmup: period(cfg.warmup_ms),
            forecaster,
            latency: LatencyMeasurement::default(),
            action: HorizonAction::default(),
            displayed_frame: None,
            last_visual_origin: None,
            last_control_sample: None,
            uplink: DelayChannel::new(cfg.delay.uplink.clone(), derive_seed(seed, 1))?,
            downlink: DelayChannel::new(cfg.delay.downlink.clone(), derive_seed(seed, 2))?,
            command: DelayChannel::new(cfg.delay.command.clone(), derive_seed(seed, 3))?,
            feedback: DelayChannel::new(cfg.delay.feedback.clone(), derive_seed(seed, 4))?,
            buffer: FreshestBuffer::new(),
            newest_uplink: None,
            visual_twin: TwinState::at_rest(&initial),
            command_twin: TwinState::at_rest(&initial),
            synth: ControlSynthesizer::new(cfg.workspace.clone(), cfg.guard_radius),
            smoother,
            applied: None,
            sigma_r: initial.to_array(),
            newest_feedback: None,
            edge_control_sample: None,
            plant: PlantState::at_rest(&initial),
            setpoint: initial.to_array(),
            newest_command: None,
            last_executed_origin: None,
            control_seq: 0,
            plant_control_sample: None,
            record,
            decisions: Vec::new(),
            drops: DropCounts::default(),
            display_times: vec![0.0],
            display_poses: vec![initial],
            plant_times: Vec::new(),
            plant_poses: Vec::new(),
        })
    }

    fn run(mut self, policy: &mut dyn HorizonPolicy, observer: &mut dyn FnMut(&PipelineEvent)) -> Result<EpisodeOutcome> {
        for ev in [
            Event::Sample(0),
            Event::SimTick(1),
            Event::RenderTick(0),
            Event::PlantTick(1),
            Event::FeedbackTick(0),
        ] {
            let at = match ev {
                Event::SimTick(i) => grid(i, self.cfg.timing.sim_hz),
                Event::PlantTick(i) => grid(i, self.cfg.timing.plant_hz),
                _ => Micros::ZERO,
            };
            self.queue.push(at, ev);
        }
        self.plant_times.push(0.0);
        self.plant_poses.push(self.plant.pose());

        let started = Instant::now();
        while let Some(next) = self.queue.heap.pop() {
            if next.at >= self.end {
                break;
            }
            if self.cfg.clock == ClockMode::Realtime {
                let target = Duration::from_micros(next.at.0.max(0) as u64);
                let elapsed = started.elapsed();
                if target > elapsed {
                    std::thread::sleep(target - elapsed);
                }
            }
            self.handle(next.at, next.event, policy, observer)?;
        }
        self.finish()
    }

    fn handle(
        &mut self,
        now: Micros,
        event: Event,
        policy: &mut dyn HorizonPolicy,
        observer: &mut dyn FnMut(&PipelineEvent),
    ) -> Result<()> {
        let t = &self.cfg.timing;
        match event {
            Event::Sample(k) => {
                self.queue.push(grid(k + 1, t.operator_hz), Event::Sample(k + 1));
                self.sample(k, now, policy, observer)?;
            }
            Event::Predicted(pkt) => {
                let at = self.uplink.send(pkt, now);
                self.queue.push(at, Event::UplinkDue);
            }
            Event::UplinkDue => {
                for pkt in self.uplink.deliver_due(now) {
                    if self.newest_uplink.is_some_and(|n| pkt.t_origin <= n) {
                        self.drops.uplink_stale += 1;
                        continue;
                    }
                    self.newest_uplink = Some(pkt.t_origin);
                    match self.buffer.offer(pkt) {
                        Offer::Served => self.queue.push(now + period(t.edge_service_ms), Event::EdgeServiceDone),
                        Offer::Queued => {}
                        Offer::ReplacedStale { .. } | Offer::DroppedStale { .. } => self.drops.buffer_discarded += 1,
                    }
                }
            }
            Event::EdgeServiceDone => {
                if let Some(pkt) = self.buffer.complete() {
                    self.apply(pkt, now);
                }
                if self.buffer.is_busy() {
                    self.queue.push(now + period(t.edge_service_ms), Event::EdgeServiceDone);
                }
            }
            Event::SimTick(i) => {
                self.queue.push(grid(i + 1, t.sim_hz), Event::SimTick(i + 1));
                let dt = 1.0 / t.sim_hz;
                step_sim(&mut self.visual_twin, &self.cfg.rmp, dt);
                step_sim(&mut self.command_twin, &self.cfg.rmp, dt);
                if let Some(applied) = &mut self.applied {
                    if applied.at(Stage::Simulated).is_none() {
                        applied.stamp(Stage::Simulated, now);
                    }
                    let out = self.smoother.smooth_command(&self.command_twin.positions(), now);
                    let pkt = applied.carry(CommandPacket { target: out }).stamped(Stage::CommandSent, now);
                    let at = self.command.send(pkt, now);
                    self.queue.push(at, Event::CommandDue);
                }
            }
            Event::RenderTick(k) => {
                self.queue
                    .push(period((k + 1) as f64 * t.render_period_ms), Event::RenderTick(k + 1));
                let frame = render_tick(&mut self.visual_twin, now);
                let payload = FramePacket {
                    frame,
                    control_sample: None,
                    timed: self.applied.is_some(),
                };
                let pkt = match &self.applied {
                    Some(a) => a.carry(payload),
                    None => TimedPacket::new(payload, now),
                };
                self.queue.push(now + period(t.render_time_ms), Event::FrameReady(pkt));
            }
            Event::FrameReady(mut pkt) => {
                pkt.payload.control_sample = self.edge_control_sample;
                pkt.stamp(Stage::Rendered, now);
                pkt.stamp(Stage::FrameSent, now);
                let at = self.downlink.send(pkt, now);
                self.queue.push(at, Event::DownlinkDue);
            }
            Event::DownlinkDue => {
                for pkt in self.downlink.deliver_due(now) {
                    self.display(pkt, now, observer)?;
                }
            }
            Event::CommandDue => {
                for mut pkt in self.command.deliver_due(now) {
                    let sent = pkt.require(Stage::CommandSent)?;
                    if self.newest_command.is_some_and(|n| sent <= n) {
                        self.drops.commands_stale += 1;
                        continue;
                    }
                    self.newest_command = Some(sent);
                    pkt.stamp(Stage::CommandReceived, now);
                    self.queue.push(now + period(t.exec_latency_ms), Event::Execute(pkt));
                }
            }
            Event::Execute(mut pkt) => {
                pkt.stamp(Stage::Executed, now);
                self.setpoint = pkt.payload.target;
                if self.last_executed_origin.is_none_or(|o| pkt.t_origin > o) {
                    self.last_executed_origin = Some(pkt.t_origin);
                    let raw = (pkt.require(Stage::Executed)? - pkt.require(Stage::Sampled)?).as_ms();
                    self.control_seq += 1;
                    self.plant_control_sample = Some((self.control_seq, raw));
                    if now >= self.warmup {
                        self.record.control_latencies.push(raw);
                    }
                }
            }
            Event::PlantTick(i) => {
                self.queue.push(grid(i + 1, t.plant_hz), Event::PlantTick(i + 1));
                plant_step(&mut self.plant, &self.cfg.pid, &self.setpoint, 1.0 / t.plant_hz);
                self.plant_times.push(now.as_ms());
                self.plant_poses.push(self.plant.pose());
            }
            Event::FeedbackTick(k) => {
                self.queue
                    .push(period((k + 1) as f64 * t.feedback_period_ms), Event::FeedbackTick(k + 1));
                let pkt = TimedPacket::new(
                    FeedbackPacket {
                        positions: self.plant.positions(),
                        control_sample: self.plant_control_sample,
                    },
                    now,
                );
                let at = self.feedback.send(pkt, now);
                self.queue.push(at, Event::FeedbackDue);
            }
            Event::FeedbackDue => {
                for pkt in self.feedback.deliver_due(now) {
                    if self.newest_feedback.is_some_and(|n| pkt.t_origin <= n) {
                        self.drops.feedback_stale += 1;
                        continue;
                    }
                    self.newest_feedback = Some(pkt.t_origin);
                    self.sigma_r = pkt.payload.positions;
                    if let Some(s) = pkt.payload.control_sample {
                        if self.edge_control_sample.is_none_or(|e| s.0 > e.0) {
                            self.edge_control_sample = Some(s);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn sample(
        &mut self,
        k: i64,
        now: Micros,
        policy: &mut dyn HorizonPolicy,
        observer: &mut dyn FnMut(&PipelineEvent),
    ) -> Result<()> {
        let t = &self.cfg.timing;
        let t_ms = now.as_ms();
        let pose = self.source.pose_at(t_ms)?;
        self.forecaster.observe(t_ms, pose)?;
        let recording = now >= self.warmup;

        if (k as usize).is_multiple_of(t.samples_per_decision()) {
            let state = AgentState::new(&pose, &self.cfg.normalization, self.latency.t_r, self.latency.t_v);
            self.action = policy.act(&state).clamped(self.cfg.max_horizon_ms());
            if recording {
                self.decisions.push(Decision {
                    t_ms,
                    state,
                    action: self.action,
                    row: self.record.t_ms.len(),
                });
                self.record.actions.push(ActionSample {
                    t_ms,
                    h_r_ms: self.action.h_r_ms,
                    h_v_ms: self.action.h_v_ms,
                });
            }
            observer(&PipelineEvent::Decided {
                t_ms,
                action: self.action,
                t_r_ms: self.latency.t_r,
                t_v_ms: self.latency.t_v,
            });
        }

        let (p_r, p_v) = self
            .forecaster
            .predict_pair(self.action.h_r_ms as f64, self.action.h_v_ms as f64)?;
        let pkt = TimedPacket::new(OperatorPacket { p_r, p_v }, now);
        self.queue.push(now + period(t.predict_ms), Event::Predicted(pkt));

        if recording {
            self.record.t_ms.push(t_ms);
            self.record.operator.push(map_workspace(&pose, &self.cfg.workspace));
            self.record.t_r.push(self.latency.t_r);
            self.record.t_v.push(self.latency.t_v);
        }
        Ok(())
    }

    /// Edge: an operator packet leaves service and retargets both twins.
    fn apply(&mut self, pkt: TimedPacket<OperatorPacket>, now: Micros) {
        let OperatorPacket { p_r, p_v } = pkt.payload;
        self.visual_twin
            .set_target(map_workspace(&p_v, &self.cfg.workspace).to_array());
        let target = self
            .synth
            .synthesize(&p_r, &self.command_twin.positions(), &self.sigma_r);
        self.command_twin.set_target(target);
        self.smoother.new_command(now);
        self.applied = Some(
            pkt.carry(())
                .stamped(Stage::ControlSynthesized, now)
                .stamped(Stage::VisualSynthesized, now),
        );
    }

    fn display(
        &mut self,
        mut pkt: TimedPacket<FramePacket>,
        now: Micros,
        observer: &mut dyn FnMut(&PipelineEvent),
    ) -> Result<()> {
        let frame = pkt.payload.frame;
        if self.displayed_frame.is_some_and(|d| frame.frame_id <= d) {
            self.drops.frames_stale += 1;
            return Ok(());
        }
        self.displayed_frame = Some(frame.frame_id);
        pkt.stamp(Stage::Displayed, now);
        self.display_times.push(now.as_ms());
        self.display_poses.push(frame.pose);

        if pkt.payload.timed && self.last_visual_origin.is_none_or(|o| pkt.t_origin > o) {
            self.last_visual_origin = Some(pkt.t_origin);
            let raw = self.latency.measure_visual(&pkt)?;
            if now >= self.warmup {
                self.record.visual_latencies.push(raw);
            }
        }
        if let Some((seq, raw)) = pkt.payload.control_sample {
            if self.last_control_sample.is_none_or(|s| seq > s) {
                self.last_control_sample = Some(seq);
                self.latency.observe_control(raw);
            }
        }
        observer(&PipelineEvent::Displayed {
            t_ms: now.as_ms(),
            frame_id: frame.frame_id,
            twin: frame.pose,
            plant: self.plant.pose(),
        });
        Ok(())
    }

    fn finish(mut self) -> Result<EpisodeOutcome> {
        let grid = &self.record.t_ms;
        self.record.visual = resample_linear(&self.display_times, &self.display_poses, grid);
        self.record.real = resample_linear(&self.plant_times, &self.plant_poses, grid);
        self.record.validate()?;
        Ok(EpisodeOutcome {
            record: self.record,
            decisions: self.decisions,
            drops: self.drops,
            model_fits: self.forecaster.fit_count(),
        })
    }
}
