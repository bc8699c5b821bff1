use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::types::STATE_DIM;
use crate::error::{Error, Result};

/// Layer widths of the policy network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetShape {
    pub input: usize,
    pub trunk: usize,
    pub head: usize,
    pub bins: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            input: STATE_DIM,
            trunk: 64,
            head: 64,
            bins: 11,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

impl Dense {
    fn end(&self) -> usize {
        self.b + self.out
    }

    fn forward(&self, theta: &[f64], x: &[f64], y: &mut [f64]) {
        let w = &theta[self.w..self.w + self.inp * self.out];
        let b = &theta[self.b..self.b + self.out];
        for o in 0..self.out {
            let row = &w[o * self.inp..(o + 1) * self.inp];
            y[o] = b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients for upstream `dy` and writes the input
    /// gradient into `dx` when given.
    fn backward(&self, theta: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        for o in 0..self.out {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            grad[self.b + o] += g;
            let row = &mut grad[self.w + o * self.inp..self.w + (o + 1) * self.inp];
            for (r, v) in row.iter_mut().zip(x) {
                *r += g * v;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            let w = &theta[self.w..self.w + self.inp * self.out];
            for o in 0..self.out {
                let g = dy[o];
                let row = &w[o * self.inp..(o + 1) * self.inp];
                for (d, a) in dx.iter_mut().zip(row) {
                    *d += g * a;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    trunk1: Dense,
    trunk2: Dense,
    heads: [(Dense, Dense); 2],
    value: Dense,
    len: usize,
}

impl Layout {
    fn new(s: &NetShape) -> Self {
        let mut at = 0;
        let mut dense = |inp: usize, out: usize| {
            let d = Dense {
                w: at,
                b: at + inp * out,
                inp,
                out,
            };
            at = d.end();
            d
        };
        let trunk1 = dense(s.input, s.trunk);
        let trunk2 = dense(s.trunk, s.trunk);
        let head_r = (dense(s.trunk, s.head), dense(s.head, s.bins));
        let head_v = (dense(s.trunk, s.head), dense(s.head, s.bins));
        let value = dense(s.trunk, 1);
        Self {
            trunk1,
            trunk2,
            heads: [head_r, head_v],
            value,
            len: at,
        }
    }
}

/// Flat parameter vector of the shared-trunk, two-head policy with a value
/// head. Head 0 picks the control horizon, head 1 the visual horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub shape: NetShape,
    pub theta: Vec<f64>,
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: [Vec<f64>; 2],
    pub value: f64,
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    g: [Vec<f64>; 2],
    pub out: PolicyOutput,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl PolicyParams {
    pub fn zeros(shape: NetShape) -> Self {
        Self {
            theta: vec![0.0; Layout::new(&shape).len],
            shape,
        }
    }

    /// Xavier-normal weights, zero biases, and a small output layer on each
    /// head so the initial distributions are close to uniform.
    pub fn init(shape: NetShape, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(shape);
        let l = Layout::new(&shape);
        let mut fill = |d: Dense, gain: f64| {
            let std = gain * (2.0 / (d.inp + d.out) as f64).sqrt();
            let n = Normal::new(0.0, std).expect("finite std");
            for w in &mut p.theta[d.w..d.b] {
                *w = n.sample(rng);
            }
        };
        fill(l.trunk1, 1.0);
        fill(l.trunk2, 1.0);
        for (hidden, out) in l.heads {
            fill(hidden, 1.0);
            fill(out, 0.01);
        }
        fill(l.value, 1.0);
        p
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.shape)
    }

    /// Named weight and bias blocks of `theta`, in storage order.
    pub fn tensors(&self) -> Vec<(String, Range<usize>)> {
        let l = self.layout();
        let named = [
            ("trunk1", l.trunk1),
            ("trunk2", l.trunk2),
            ("head_r.hidden", l.heads[0].0),
            ("head_r.out", l.heads[0].1),
            ("head_v.hidden", l.heads[1].0),
            ("head_v.out", l.heads[1].1),
            ("value", l.value),
        ];
        named
            .into_iter()
            .flat_map(|(name, d)| [(format!("{name}.w"), d.w..d.b), (format!("{name}.b"), d.b..d.end())])
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.layout().len {
            return Err(Error::Version(format!(
                "parameter vector has {} entries, network shape needs {}",
                self.theta.len(),
                self.layout().len
            )));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("policy parameters"));
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        let l = self.layout();
        let t = &self.theta;
        let mut h1 = vec![0.0; l.trunk1.out];
        l.trunk1.forward(t, x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut h2 = vec![0.0; l.trunk2.out];
        l.trunk2.forward(t, &h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.tanh());

        let head = |(hidden, out): (Dense, Dense)| {
            let mut g = vec![0.0; hidden.out];
            hidden.forward(t, &h2, &mut g);
            g.iter_mut().for_each(|v| *v = v.tanh());
            let mut logits = vec![0.0; out.out];
            out.forward(t, &g, &mut logits);
            (g, softmax(&logits))
        };
        let (g0, p0) = head(l.heads[0]);
        let (g1, p1) = head(l.heads[1]);
        let mut v = [0.0];
        l.value.forward(t, &h2, &mut v);

        let finite = v[0].is_finite() && p0.iter().chain(&p1).all(|p| p.is_finite());
        if !finite {
            return Err(Error::Numerical("policy forward pass"));
        }
        Ok(ForwardCache {
            x: x.to_vec(),
            h1,
            h2,
            g: [g0, g1],
            out: PolicyOutput {
                probs: [p0, p1],
                value: v[0],
            },
        })
    }

    /// Parameter gradient for upstream gradients on the two logit vectors and
    /// the value, accumulated into `grad`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: [&[f64]; 2], d_value: f64, grad: &mut [f64]) {
        let l = self.layout();
        let t = &self.theta;
        let mut dh2 = vec![0.0; l.trunk2.out];
        let mut tmp = vec![0.0; l.trunk2.out];
        for (k, (hidden, out)) in l.heads.into_iter().enumerate() {
            let mut dg = vec![0.0; hidden.out];
            out.backward(t, &cache.g[k], d_logits[k], grad, Some(&mut dg));
            for (d, g) in dg.iter_mut().zip(&cache.g[k]) {
                *d *= 1.0 - g * g;
            }
            hidden.backward(t, &cache.h2, &dg, grad, Some(&mut tmp));
            dh2.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        l.value.backward(t, &cache.h2, &[d_value], grad, Some(&mut tmp));
        dh2.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);

        for (d, h) in dh2.iter_mut().zip(&cache.h2) {
            *d *= 1.0 - h * h;
        }
        let mut dh1 = vec![0.0; l.trunk1.out];
        l.trunk2.backward(t, &cache.h1, &dh2, grad, Some(&mut dh1));
        for (d, h) in dh1.iter_mut().zip(&cache.h1) {
            *d *= 1.0 - h * h;
        }
        l.trunk1.backward(t, &cache.x, &dh1, grad, None);
    }
}

/// `(ρ_r, ρ_v, V)` for input features `x`.
pub fn policy_forward(params: &PolicyParams, x: &[f64]) -> Result<PolicyOutput> {
    Ok(params.forward_cached(x)?.out)
}

/// Draws one bin from `probs` by inverse CDF.
pub fn sample_bin(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` slightly below 1: take the last bin with mass.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Independent draws from both heads; returns the bins and their
/// log-probabilities.
pub fn sample_action(out: &PolicyOutput, rng: &mut impl Rng) -> ([usize; 2], [f64; 2]) {
    let a = [sample_bin(&out.probs[0], rng), sample_bin(&out.probs[1], rng)];
    (a, [out.probs[0][a[0]].ln(), out.probs[1][a[1]].ln()])
}

pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, p)| if *p > bp { (i, *p) } else { (bi, bp) })
        .0
}
