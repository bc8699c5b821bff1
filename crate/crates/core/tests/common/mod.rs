#![allow(dead_code)]

use teleop_twin::network::{FreshestBuffer, TimedPacket};
use teleop_twin::Micros;

/// One step of a buffer scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Arrive(i64),
    Complete,
}

/// What a scenario produced: the packets that finished service, in order,
/// and how many were thrown away.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub served: Vec<i64>,
    pub discarded: u64,
    pub waiting_after: Vec<Option<i64>>,
}

/// Declarative model of the freshest-packet buffer: everything that arrives
/// while the server is busy is remembered, and when the server frees up it
/// takes the freshest of those and forgets the rest.
pub fn oracle(events: &[Event]) -> Trace {
    let mut busy: Option<i64> = None;
    let mut pending: Vec<i64> = Vec::new();
    let mut served = Vec::new();
    let mut discarded = 0;
    let mut waiting_after = Vec::new();
    for e in events {
        match *e {
            Event::Arrive(t) => {
                if busy.is_none() {
                    busy = Some(t);
                } else {
                    pending.push(t);
                }
            }
            Event::Complete => {
                if let Some(done) = busy.take() {
                    served.push(done);
                }
                if let Some(&best) = pending.iter().max() {
                    // Equal stamps keep the earlier arrival.
                    discarded += pending.len() as u64 - 1;
                    busy = Some(best);
                    pending.clear();
                }
            }
        }
        let waiting = pending.iter().max().copied();
        waiting_after.push(waiting);
    }
    discarded += pending.len().saturating_sub(1) as u64;
    Trace {
        served,
        discarded,
        waiting_after,
    }
}

pub const ALPHABET: [Event; 5] = [
    Event::Arrive(1),
    Event::Arrive(2),
    Event::Arrive(3),
    Event::Arrive(4),
    Event::Complete,
];

/// Every event sequence up to `max_len` over four distinct stamps and
/// `Complete`.
pub fn all_sequences(max_len: usize) -> Vec<Vec<Event>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for e in ALPHABET {
                let mut t: Vec<Event> = s.clone();
                t.push(e);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn simulate(events: &[Event]) -> Trace {
    let mut b: FreshestBuffer<i64> = FreshestBuffer::new();
    let mut served = Vec::new();
    let mut waiting_after = Vec::new();
    for e in events {
        match *e {
            Event::Arrive(t) => {
                b.offer(TimedPacket::new(t, Micros(t)));
            }
            Event::Complete => {
                if let Some(p) = b.complete() {
                    served.push(p.payload);
                }
            }
        }
        waiting_after.push(b.waiting().map(|p| p.t_origin.0));
    }
    Trace {
        served,
        discarded: b.discarded_count(),
        waiting_after,
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teleop_twin::agent::{
    policy_forward, ppo_loss, ppo_loss_grad, AgentState, Environment, HorizonPolicy, NetShape, PolicyParams,
    PpoCoefficients, Reduction, Rollout, RolloutStep, Sample, STATE_DIM,
};

pub fn small_shape() -> NetShape {
    NetShape {
        input: STATE_DIM,
        trunk: 8,
        head: 6,
        bins: 11,
    }
}

pub fn random_features(rng: &mut impl Rng) -> [f64; STATE_DIM] {
    std::array::from_fn(|_| rng.random_range(-1.0..1.0))
}

/// Samples whose behaviour log-probabilities sit within `spread` of the
/// current policy, so every ratio stays inside the clip band when
/// `spread < ln(1 + clip)`.
pub fn samples_near(params: &PolicyParams, n: usize, spread: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let features = random_features(&mut rng);
            let out = policy_forward(params, &features).unwrap();
            let bins = [rng.random_range(0..params.shape.bins), rng.random_range(0..params.shape.bins)];
            let old_logp = [0, 1].map(|h| out.probs[h][bins[h]].ln() + spread * rng.random_range(-1.0..1.0));
            Sample {
                features,
                bins,
                old_logp,
                advantage: rng.random_range(-2.0..2.0),
                ret: rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

/// Central-difference check of the analytic gradient. Returns the worst
/// per-tensor relative error `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖, 1e-3·‖ĝ_all‖)` and the
/// tensor name. The floor keeps blocks whose gradient is round-off sized
/// from dominating.
pub fn gradient_check(params: &PolicyParams, samples: &[Sample], c: &PpoCoefficients) -> (f64, String) {
    let (_, analytic) = ppo_loss_grad(params, samples, c, Reduction::Mean).unwrap();
    let h = 1e-6;
    let mut numeric = vec![0.0; params.len()];
    let mut p = params.clone();
    for i in 0..params.len() {
        let x = p.theta[i];
        p.theta[i] = x + h;
        let up = ppo_loss(&p, samples, c, Reduction::Mean).unwrap();
        p.theta[i] = x - h;
        let down = ppo_loss(&p, samples, c, Reduction::Mean).unwrap();
        p.theta[i] = x;
        // The analytic gradient is of the negated objective.
        numeric[i] = -(up - down) / (2.0 * h);
    }
    let floor = 1e-3 * numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut worst = (0.0, String::new());
    for (name, r) in params.tensors() {
        let diff: f64 = r.clone().map(|i| (analytic[i] - numeric[i]).powi(2)).sum::<f64>().sqrt();
        let a: f64 = r.clone().map(|i| analytic[i].powi(2)).sum::<f64>().sqrt();
        let n: f64 = r.clone().map(|i| numeric[i].powi(2)).sum::<f64>().sqrt();
        let rel = diff / a.max(n).max(floor).max(f64::MIN_POSITIVE);
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    worst
}

/// A task whose best horizons are known: reward falls off linearly with the
/// distance of each head from its target bin value.
pub struct TargetEnv {
    pub targets: Vec<(u32, u32)>,
    pub steps: usize,
}

impl Environment for TargetEnv {
    fn task_count(&self) -> usize {
        self.targets.len()
    }

    fn task_name(&self, task: usize) -> String {
        format!("target{task}")
    }

    fn rollout(&mut self, task: usize, policy: &mut dyn HorizonPolicy, seed: u64) -> teleop_twin::Result<Rollout> {
        let (tr, tv) = self.targets[task];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut steps = Vec::with_capacity(self.steps);
        let (mut sv, mut sr) = (0.0, 0.0);
        for _ in 0..self.steps {
            let state = AgentState {
                pose: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
                t_r_ms: 100,
                t_v_ms: 100,
            };
            let action = policy.act(&state);
            let e_r = (action.h_r_ms as f64 - tr as f64).abs() * 1e-5;
            let e_v = (action.h_v_ms as f64 - tv as f64).abs() * 1e-5;
            sv += e_v;
            sr += e_r;
            steps.push(RolloutStep {
                state,
                action,
                reward: -(e_v + e_r),
            });
        }
        let n = self.steps as f64;
        Ok(Rollout {
            steps,
            e_v: sv / n,
            e_r: sr / n,
            t_r: 100.0,
            t_v: 100.0,
        })
    }
}
