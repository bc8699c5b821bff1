mod common;

use std::time::Duration;

use common::{gradient_check, random_features, samples_near, small_shape, TargetEnv};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teleop_twin::agent::*;
use teleop_twin::harness::{PipelineConfig, PipelineEnv, TaskSource};
use teleop_twin::metrics::MetricWeights;
use teleop_twin::operator::live_channel;
use teleop_twin::Error;

fn gae_oracle(r: &[f64], v: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let value = |t: usize| if t < n { v[t] } else { 0.0 };
    (0..n)
        .map(|t| {
            (t..n)
                .map(|k| {
                    let delta = r[k] + gamma * value(k + 1) - v[k];
                    (gamma * lambda).powi((k - t) as i32) * delta
                })
                .sum()
        })
        .collect()
}

proptest! {
    #[test]
    fn gae_matches_direct_summation(
        rv in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..60),
        gamma in 0.5f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let (r, v): (Vec<f64>, Vec<f64>) = rv.into_iter().unzip();
        let (adv, ret) = gae(&r, &v, gamma, lambda);
        let want = gae_oracle(&r, &v, gamma, lambda);
        for t in 0..r.len() {
            prop_assert!((adv[t] - want[t]).abs() < 1e-10);
            prop_assert!((ret[t] - (adv[t] + v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_with_unit_lambda_is_return_minus_value(
        rv in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..60),
        gamma in 0.5f64..=1.0,
    ) {
        let (r, v): (Vec<f64>, Vec<f64>) = rv.into_iter().unzip();
        let (adv, _) = gae(&r, &v, gamma, 1.0);
        for t in 0..r.len() {
            let g: f64 = (t..r.len()).map(|k| gamma.powi((k - t) as i32) * r[k]).sum();
            prop_assert!((adv[t] - (g - v[t])).abs() < 1e-10);
        }
    }

    #[test]
    fn clipped_surrogate_is_bounded(ratio in 0.0f64..10.0, adv in -10.0f64..10.0, eps in 0.01f64..0.5) {
        let s = clipped_surrogate(ratio, adv, eps);
        prop_assert!(s <= ratio * adv + 1e-12);
        prop_assert!(s <= (1.0 + eps) * adv.abs() + 1e-12);
        if adv >= 0.0 {
            prop_assert!(s <= (1.0 + eps) * adv + 1e-12);
        } else {
            prop_assert!(s <= (1.0 - eps) * adv + 1e-12);
        }
    }
}

#[test]
fn heads_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = PolicyParams::init(NetShape::default(), &mut rng);
    for _ in 0..1000 {
        let x = random_features(&mut rng);
        let out = policy_forward(&p, &x).unwrap();
        for head in &out.probs {
            assert_eq!(head.len(), 11);
            assert!((head.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(head.iter().all(|q| *q > 0.0));
        }
        assert!(out.value.is_finite());
        assert_eq!(policy_forward(&p, &x).unwrap(), out);
    }
}

#[test]
fn sampled_log_probabilities_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = PolicyParams::init(NetShape::default(), &mut rng);
    for _ in 0..200 {
        let out = policy_forward(&p, &random_features(&mut rng)).unwrap();
        let (bins, logp) = sample_action(&out, &mut rng);
        for h in 0..2 {
            assert!((logp[h].exp() - out.probs[h][bins[h]]).abs() < 1e-9);
        }
    }
}

#[test]
fn uniform_head_samples_uniformly() {
    let probs = vec![1.0 / 11.0; 11];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut counts = [0usize; 11];
    for _ in 0..n {
        counts[sample_bin(&probs, &mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 11.0).abs() < 0.005, "{counts:?}");
    }
}

#[test]
fn tensors_tile_the_parameter_vector() {
    let p = PolicyParams::zeros(NetShape::default());
    let t = p.tensors();
    assert_eq!(t.len(), 14);
    assert_eq!(t[0].1.start, 0);
    assert_eq!(t.last().unwrap().1.end, p.len());
    assert!(t.windows(2).all(|w| w[0].1.end == w[1].1.start));
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = PpoCoefficients::default();
    for shape in [small_shape(), NetShape::default()] {
        let p = PolicyParams::init(shape, &mut rng);
        let samples = samples_near(&p, if shape == small_shape() { 32 } else { 4 }, 0.1, 5);
        let (worst, name) = gradient_check(&p, &samples, &c);
        assert!(worst < 1e-4, "{name}: relative error {worst:e}");
    }
}

#[test]
fn gradient_outside_the_clip_band_has_no_surrogate_term() {
    // With every ratio far above 1 + ε and positive advantages, the
    // surrogate is flat; only value and entropy terms remain.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = PolicyParams::init(small_shape(), &mut rng);
    let mut samples = samples_near(&p, 16, 0.0, 7);
    for s in &mut samples {
        s.old_logp = s.old_logp.map(|l| l - 2.0);
        s.advantage = s.advantage.abs() + 0.1;
    }
    let flat = PpoCoefficients {
        value: 0.0,
        entropy: 0.0,
        ..PpoCoefficients::default()
    };
    let (_, g) = ppo_loss_grad(&p, &samples, &flat, Reduction::Mean).unwrap();
    assert!(g.iter().all(|v| *v == 0.0));
    let (worst, name) = gradient_check(&p, &samples, &PpoCoefficients::default());
    assert!(worst < 1e-4, "{name}: {worst:e}");
}

#[test]
fn inner_step_with_zero_rate_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = PolicyParams::init(small_shape(), &mut rng);
    let s = samples_near(&p, 16, 0.1, 9);
    let q = inner_adapt(&p, &s, &PpoCoefficients::default(), Reduction::Mean, 0.0).unwrap();
    assert_eq!(p, q);
}

#[test]
fn small_inner_step_increases_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let c = PpoCoefficients::default();
    for seed in 0..10 {
        let p = PolicyParams::init(small_shape(), &mut rng);
        let s = samples_near(&p, 32, 0.1, seed);
        let before = ppo_loss(&p, &s, &c, Reduction::Mean).unwrap();
        let q = inner_adapt(&p, &s, &c, Reduction::Mean, 1e-3).unwrap();
        let after = ppo_loss(&q, &s, &c, Reduction::Mean).unwrap();
        assert!(after > before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn identical_tasks_adapt_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = PolicyParams::init(small_shape(), &mut rng);
    let s = samples_near(&p, 16, 0.1, 12);
    let c = PpoCoefficients::default();
    let a = inner_adapt(&p, &s, &c, Reduction::Sum, 1e-2).unwrap();
    let b = inner_adapt(&p, &s.clone(), &c, Reduction::Sum, 1e-2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sum_reduction_scales_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = PolicyParams::init(small_shape(), &mut rng);
    let s = samples_near(&p, 10, 0.1, 14);
    let c = PpoCoefficients::default();
    let mean = ppo_loss(&p, &s, &c, Reduction::Mean).unwrap();
    let sum = ppo_loss(&p, &s, &c, Reduction::Sum).unwrap();
    assert!((sum - 10.0 * mean).abs() < 1e-9 * sum.abs().max(1.0));
    assert!(ppo_loss(&p, &[], &c, Reduction::Mean).is_err());
}

fn target_env() -> TargetEnv {
    TargetEnv {
        targets: vec![(400, 300), (400, 200), (500, 300)],
        steps: 40,
    }
}

fn small_trainer_cfg() -> TrainerConfig {
    TrainerConfig {
        net: small_shape(),
        minibatch: 40,
        ..TrainerConfig::default()
    }
}

fn greedy_error(params: &PolicyParams, env: &mut TargetEnv) -> f64 {
    let mut total = 0.0;
    for task in 0..env.task_count() {
        let mut pol = AgentPolicy::greedy(params, HorizonBins::default());
        let r = env.rollout(task, &mut pol, 0).unwrap();
        total += r.e_v + r.e_r;
    }
    total
}

#[test]
fn zero_meta_rate_leaves_parameters_unchanged() {
    let cfg = TrainerConfig {
        meta_lr: 0.0,
        ..small_trainer_cfg()
    };
    let mut t = Trainer::new(cfg, 15).unwrap();
    let before = t.params.clone();
    let rows = t.meta_iteration(&mut target_env()).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(t.params, before);
}

#[test]
fn meta_training_moves_toward_the_best_horizons() {
    let mut env = target_env();
    let mut t = Trainer::new(small_trainer_cfg(), 16).unwrap();
    let start = greedy_error(&t.params, &mut env);
    let report = t.run_stage1(&mut env, 6 * 50, &mut |_, _| Ok(())).unwrap();
    let r: Vec<f64> = report.rows.iter().map(|r| r.mean_reward).collect();
    let early = r[..30].iter().sum::<f64>() / 30.0;
    let late = r[r.len() - 30..].iter().sum::<f64>() / 30.0;
    let end = greedy_error(&t.params, &mut env);
    assert!(late > early, "reward {early} -> {late}");
    assert!(end < 0.5 * start, "greedy error {start} -> {end}");
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut t = Trainer::new(small_trainer_cfg(), 17).unwrap();
        let rep = t.run_stage1(&mut target_env(), 24, &mut |_, _| Ok(())).unwrap();
        (t.params, rep.rows)
    };
    let (pa, ra) = run();
    let (pb, rb) = run();
    assert_eq!(pa, pb);
    assert_eq!(ra, rb);
    let mut other = Trainer::new(small_trainer_cfg(), 18).unwrap();
    other.run_stage1(&mut target_env(), 24, &mut |_, _| Ok(())).unwrap();
    assert_ne!(other.params, pa);
}

#[test]
fn online_adaptation_only_touches_its_task() {
    let mut env = target_env();
    let mut t = Trainer::new(small_trainer_cfg(), 19).unwrap();
    let rep = t.run_stage2(&mut env, 1, 5, &mut |_, _| Ok(())).unwrap();
    assert_eq!(rep.rows.len(), 5);
    assert_eq!(t.episodes, 5);
}

#[test]
fn convergence_needs_two_windows() {
    let cfg = TrainerConfig {
        convergence_window: 5,
        ..TrainerConfig::default()
    };
    assert_eq!(convergence_episode(&[-1.0; 9], &cfg), None);
    let mut curve: Vec<f64> = (0..20).map(|i| -3.0 + 0.1 * i as f64).collect();
    curve.extend([-1.0; 30]);
    let c = convergence_episode(&curve, &cfg).unwrap();
    assert!((20..=30).contains(&c), "{c}");
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(small_trainer_cfg(), 20).unwrap();
    t.meta_iteration(&mut target_env()).unwrap();
    let path = dir.path().join("nested/ck.json");
    Checkpoint::of(&t).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.trainer, t);
    back.check_compatible(&t.cfg).unwrap();

    // Resuming from the checkpoint continues exactly where the original would.
    let mut resumed = back.trainer;
    let a = t.meta_iteration(&mut target_env()).unwrap();
    let b = resumed.meta_iteration(&mut target_env()).unwrap();
    assert_eq!(a, b);
    assert_eq!(t.params, resumed.params);
}

#[test]
fn checkpoint_version_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let t = Trainer::new(small_trainer_cfg(), 21).unwrap();
    let path = dir.path().join("ck.json");
    Checkpoint::of(&t).save(&path).unwrap();
    let mut raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    raw["version"] = serde_json::json!(CHECKPOINT_VERSION + 1);
    std::fs::write(&path, raw.to_string()).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Version(_))));

    let ck = Checkpoint::of(&t);
    let wider = TrainerConfig {
        max_horizon_ms: 1200,
        net: NetShape { bins: 13, ..small_shape() },
        ..small_trainer_cfg()
    };
    assert!(matches!(ck.check_compatible(&wider), Err(Error::Version(_))));
    assert!(matches!(ck.check_compatible(&TrainerConfig::default()), Err(Error::Version(_))));
}

#[test]
fn truncated_parameters_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(small_trainer_cfg(), 22).unwrap();
    t.params.theta.pop();
    let path = dir.path().join("ck.json");
    Checkpoint::of(&t).save(&path).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Version(_))));
}

#[test]
fn starved_live_task_times_out() {
    let (tx, input) = live_channel(16, Duration::from_millis(30));
    let cfg = PipelineConfig {
        duration_ms: 1000.0,
        ..PipelineConfig::default()
    };
    let task = TaskSource::Live {
        name: "live".into(),
        source: Box::new(input),
        offset_ms: 0.0,
    };
    let mut env = PipelineEnv::new(cfg, vec![task], MetricWeights::default()).unwrap();
    let mut t = Trainer::new(TrainerConfig::default(), 23).unwrap();
    let err = t.online_iteration(&mut env, 0).unwrap_err();
    assert!(matches!(err, Error::Stage2Timeout { waited_ms: 30 }), "{err}");
    drop(tx);
}
