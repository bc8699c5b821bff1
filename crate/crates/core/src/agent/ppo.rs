use serde::{Deserialize, Serialize};

use super::net::PolicyParams;
use super::types::STATE_DIM;
use crate::error::{Error, Result};

/// Per-decision reward: the negated sum of visual and control tracking errors.
pub fn reward(e_v: f64, e_r: f64) -> f64 {
    -(e_v + e_r)
}

/// One decision as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: [f64; STATE_DIM],
    pub bins: [usize; 2],
    /// Log-probabilities of `bins` under the behaviour policy.
    pub old_logp: [f64; 2],
    pub value: f64,
    pub reward: f64,
}

/// The transitions of one episode on one task.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub task: usize,
    pub steps: Vec<Transition>,
}

/// A transition with its advantage and return attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub features: [f64; STATE_DIM],
    pub bins: [usize; 2],
    pub old_logp: [f64; 2],
    pub advantage: f64,
    pub ret: f64,
}

/// GAE(γ, λ) over one episode that terminates after its last step.
/// Returns raw advantages and the value targets `A + V`.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_v - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Rescales to zero mean and unit variance; leaves a constant batch at zero.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = if std > 1e-12 { (*x - mean) / std } else { 0.0 };
    }
}

/// Advantages and returns for a set of episodes, with advantages normalized
/// over the whole set. `reward_scale` multiplies rewards before estimation.
pub fn gae_advantage(batches: &[TrajectoryBatch], gamma: f64, lambda: f64, reward_scale: f64) -> Vec<Sample> {
    let mut samples = Vec::new();
    for b in batches {
        let rewards: Vec<f64> = b.steps.iter().map(|s| s.reward * reward_scale).collect();
        let values: Vec<f64> = b.steps.iter().map(|s| s.value).collect();
        let (adv, ret) = gae(&rewards, &values, gamma, lambda);
        for ((s, a), r) in b.steps.iter().zip(adv).zip(ret) {
            samples.push(Sample {
                features: s.features,
                bins: s.bins,
                old_logp: s.old_logp,
                advantage: a,
                ret: r,
            });
        }
    }
    let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    normalize(&mut adv);
    for (s, a) in samples.iter_mut().zip(adv) {
        s.advantage = a;
    }
    samples
}

/// Clipped surrogate for one head: `min(ρA, clip(ρ, 1−ε, 1+ε)A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Loss weights of the PPO objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoCoefficients {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
}

impl Default for PpoCoefficients {
    fn default() -> Self {
        Self {
            clip: 0.2,
            value: 0.5,
            entropy: 0.01,
        }
    }
}

/// How per-sample terms are combined into the minibatch objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    fn factor(self, n: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / n as f64,
            Reduction::Sum => 1.0,
        }
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|q| **q > 0.0).map(|q| q * q.ln()).sum::<f64>()
}

/// PPO objective to maximize: clipped surrogate summed over both heads,
/// minus `c_v·(V − R)²`, plus `c_e` times the summed head entropies.
pub fn ppo_loss(params: &PolicyParams, samples: &[Sample], c: &PpoCoefficients, reduction: Reduction) -> Result<f64> {
    Ok(objective_and_gradient(params, samples, c, reduction, false)?.0)
}

/// [`ppo_loss`] and the gradient of its negation (the quantity minimized).
pub fn ppo_loss_grad(
    params: &PolicyParams,
    samples: &[Sample],
    c: &PpoCoefficients,
    reduction: Reduction,
) -> Result<(f64, Vec<f64>)> {
    objective_and_gradient(params, samples, c, reduction, true)
}

fn objective_and_gradient(
    params: &PolicyParams,
    samples: &[Sample],
    c: &PpoCoefficients,
    reduction: Reduction,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::config("PPO objective needs at least one sample"));
    }
    let k = reduction.factor(samples.len());
    let mut total = 0.0;
    let mut grad = if with_grad { vec![0.0; params.len()] } else { Vec::new() };
    let bins = params.shape.bins;
    let mut d_logits = [vec![0.0; bins], vec![0.0; bins]];
    for s in samples {
        let cache = params.forward_cached(&s.features)?;
        let out = &cache.out;
        let mut obj = 0.0;
        for h in 0..2 {
            let p = &out.probs[h];
            let a = s.bins[h];
            let ratio = (p[a].ln() - s.old_logp[h]).exp();
            let surr = clipped_surrogate(ratio, s.advantage, c.clip);
            let ent = entropy(p);
            obj += surr + c.entropy * ent;
            if with_grad {
                // d surr / d log π(a): ρA while the unclipped branch is the minimum.
                let g_surr = if ratio * s.advantage <= surr { ratio * s.advantage } else { 0.0 };
                for j in 0..bins {
                    let ind = if j == a { 1.0 } else { 0.0 };
                    let d_obj = g_surr * (ind - p[j]) - c.entropy * p[j] * (p[j].ln() + ent);
                    d_logits[h][j] = -k * d_obj;
                }
            }
        }
        let verr = out.value - s.ret;
        obj -= c.value * verr * verr;
        total += k * obj;
        if with_grad {
            let d_value = k * 2.0 * c.value * verr;
            params.backward(&cache, [&d_logits[0], &d_logits[1]], d_value, &mut grad);
        }
    }
    if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("PPO objective"));
    }
    Ok((total, grad))
}

/// One plain gradient step on the PPO loss: `θ − α·∇(−objective)`.
pub fn inner_adapt(
    params: &PolicyParams,
    samples: &[Sample],
    c: &PpoCoefficients,
    reduction: Reduction,
    alpha: f64,
) -> Result<PolicyParams> {
    let (_, g) = ppo_loss_grad(params, samples, c, reduction)?;
    let mut out = params.clone();
    for (t, gi) in out.theta.iter_mut().zip(&g) {
        *t -= alpha * gi;
    }
    Ok(out)
}
