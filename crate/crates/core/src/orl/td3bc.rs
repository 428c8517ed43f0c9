use ndarray::{concatenate, s, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::Td3bcConfig;
use super::data::{Batch, TrainingData};
use crate::data::UniformSampler;
use crate::features::STATE_DIM;
use crate::nn::{soft_update, Activation, Adam, Gradients, Mlp};
use crate::rng::{derive, stream, Rng, Stream};
use crate::{Error, Result};

/// Scale of the actor's output-layer init. The tanh head then starts near
/// zero, the middle of the pump range.
const ACTOR_OUTPUT_SCALE: f64 = 0.01;

pub fn make_actor(hidden: &[usize], seed: u64) -> Mlp {
    let mut dims = vec![STATE_DIM];
    dims.extend_from_slice(hidden);
    dims.push(1);
    Mlp::new(&dims, Activation::Relu, Activation::Tanh, ACTOR_OUTPUT_SCALE, seed)
}

/// Scale of the critics' output-layer init, so fresh critics start almost
/// flat in the action and their bias sets the value level.
const CRITIC_OUTPUT_SCALE: f64 = 0.01;

pub fn make_critic(hidden: &[usize], seed: u64) -> Mlp {
    let mut dims = vec![STATE_DIM + 1];
    dims.extend_from_slice(hidden);
    dims.push(1);
    Mlp::new(&dims, Activation::Relu, Activation::Identity, CRITIC_OUTPUT_SCALE, seed)
}

/// Actor, twin critics, their targets and optimisers.
#[derive(Debug, Clone)]
pub struct Networks {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub actor_opt: Adam,
    pub q1_opt: Adam,
    pub q2_opt: Adam,
    pub critic_steps: u64,
}

impl Networks {
    /// Fresh critics around the given actor.
    pub fn new(actor: Mlp, cfg: &Td3bcConfig, seed: u64) -> Self {
        let q1 = make_critic(&cfg.hidden, derive(seed, 1));
        let q2 = make_critic(&cfg.hidden, derive(seed, 2));
        Self {
            actor_target: actor.clone(),
            actor_opt: Adam::new(&actor, cfg.actor_lr),
            q1_opt: Adam::new(&q1, cfg.critic_lr),
            q2_opt: Adam::new(&q2, cfg.critic_lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            critic_steps: 0,
        }
    }

    /// Sets the output bias of both critics and their targets, so training
    /// starts from a constant value estimate instead of zero.
    pub fn set_value_baseline(&mut self, value: f64) {
        for q in [&mut self.q1, &mut self.q2, &mut self.q1_target, &mut self.q2_target] {
            let last = q.layers.len() - 1;
            q.layers[last].b.fill(value);
        }
    }
}

fn critic_input(states: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[states.view(), actions.view()]).expect("row counts agree")
}

/// `y = R + γ^m · min(Q1', Q2')(s', clamp(π'(s') + clip(ε)))`, with ε the
/// target-policy smoothing noise. Terminal views have `γ^m = 0`.
pub fn critic_targets(nets: &Networks, batch: &Batch, cfg: &Td3bcConfig, rng: &mut Rng) -> Vec<f64> {
    let mut next_a = nets.actor_target.forward(&batch.next_states).expect("state width");
    if cfg.policy_noise > 0.0 {
        next_a.mapv_inplace(|a| {
            let z: f64 = StandardNormal.sample(rng);
            (a + (cfg.policy_noise * z).clamp(-cfg.noise_clip, cfg.noise_clip)).clamp(-1.0, 1.0)
        });
    }
    let x = critic_input(&batch.next_states, &next_a);
    let t1 = nets.q1_target.forward(&x).expect("critic width");
    let t2 = nets.q2_target.forward(&x).expect("critic width");
    (0..batch.returns.len())
        .map(|i| {
            let q = t1[[i, 0]].min(t2[[i, 0]]);
            batch.returns[i] + if batch.discount[i] > 0.0 { batch.discount[i] * q } else { 0.0 }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticStats {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub max_abs_target: f64,
}

fn regress(net: &mut Mlp, opt: &mut Adam, x: &Array2<f64>, y: &[f64]) -> f64 {
    let cache = net.forward_cached(x).expect("critic width");
    let pred = cache.output();
    let n = y.len() as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, t) in grad.iter_mut().zip(y) {
        let d = *g - t;
        loss += d * d / n;
        *g = 2.0 * d / n;
    }
    let (g, _) = net.backward(&cache, &grad);
    opt.update(net, &g);
    loss
}

/// One regression step of both critics onto the shared target.
pub fn critic_update(nets: &mut Networks, batch: &Batch, cfg: &Td3bcConfig, rng: &mut Rng) -> CriticStats {
    let y = critic_targets(nets, batch, cfg, rng);
    let x = critic_input(&batch.states, &batch.actions);
    let q1_loss = regress(&mut nets.q1, &mut nets.q1_opt, &x, &y);
    let q2_loss = regress(&mut nets.q2, &mut nets.q2_opt, &x, &y);
    nets.critic_steps += 1;
    CriticStats {
        q1_loss,
        q2_loss,
        max_abs_target: y.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// What the cloning term pulls the actor towards.
#[derive(Debug, Clone, Copy)]
pub enum BcAnchor<'a> {
    /// The dataset's own actions.
    Dataset,
    /// Another policy's actions on the batch states.
    Policy(&'a Mlp),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorStats {
    pub loss: f64,
    pub bc: f64,
    pub q_mean: f64,
    pub lambda_hat: f64,
}

/// `L = −λ̂ · mean Q(s, π(s)) + mean (π(s) − anchor)²` and its gradient with
/// respect to the actor, holding `λ̂` fixed.
pub fn actor_loss_and_grad(
    actor: &Mlp,
    critic: &Mlp,
    states: &Array2<f64>,
    anchor: &Array2<f64>,
    lambda_hat: f64,
) -> (f64, Gradients, ActorStats) {
    let n = states.nrows() as f64;
    let a_cache = actor.forward_cached(states).expect("state width");
    let pi = a_cache.output();
    let q_cache = critic.forward_cached(&critic_input(states, pi)).expect("critic width");
    let q = q_cache.output();
    let q_mean = q.mean().unwrap_or(0.0);
    let diff = pi - anchor;
    let bc = diff.mapv(|v| v * v).sum() / n;
    let loss = -lambda_hat * q_mean + bc;

    let mut grad_pi = diff * (2.0 / n);
    if lambda_hat != 0.0 {
        let dq = Array2::from_elem(q.raw_dim(), -lambda_hat / n);
        let (_, gx) = critic.backward(&q_cache, &dq);
        grad_pi += &gx.slice(s![.., STATE_DIM..]);
    }
    let (g, _) = actor.backward(&a_cache, &grad_pi);
    (
        loss,
        g,
        ActorStats {
            loss,
            bc,
            q_mean,
            lambda_hat,
        },
    )
}

/// `coef / mean |Q1(s, π(s))|`, or 0 when `coef` is 0.
pub fn lambda_hat(nets: &Networks, states: &Array2<f64>, coef: f64) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    let pi = nets.actor.forward(states).expect("state width");
    let q = nets.q1.forward(&critic_input(states, &pi)).expect("critic width");
    coef / q.mapv(f64::abs).mean().unwrap_or(0.0).max(1e-8)
}

/// Delayed actor step followed by soft updates of every target network.
pub fn actor_update(nets: &mut Networks, batch: &Batch, anchor: BcAnchor<'_>, coef: f64, cfg: &Td3bcConfig) -> ActorStats {
    let target = match anchor {
        BcAnchor::Dataset => batch.actions.clone(),
        BcAnchor::Policy(p) => p.forward(&batch.states).expect("state width"),
    };
    let lam = lambda_hat(nets, &batch.states, coef);
    let (_, g, stats) = actor_loss_and_grad(&nets.actor, &nets.q1, &batch.states, &target, lam);
    nets.actor_opt.update(&mut nets.actor, &g);
    soft_update(&mut nets.actor_target, &nets.actor, cfg.tau);
    soft_update(&mut nets.q1_target, &nets.q1, cfg.tau);
    soft_update(&mut nets.q2_target, &nets.q2, cfg.tau);
    stats
}

/// Per-epoch training curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub critic_loss: Vec<f64>,
    pub actor_loss: Vec<f64>,
    pub bc_loss: Vec<f64>,
    pub max_abs_target: f64,
}

fn train(
    nets: &mut Networks,
    data: &TrainingData,
    epochs: usize,
    anchor: BcAnchor<'_>,
    coef: f64,
    cfg: &Td3bcConfig,
    seed: u64,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("no transitions to train on".into()));
    }
    let mut sampler = UniformSampler::new(data.len(), stream(seed, Stream::Sampling));
    let mut noise = stream(seed, Stream::Noise);
    let steps = data.len().div_ceil(cfg.batch_size);
    let mut log = TrainLog::default();
    for epoch in 0..epochs {
        let (mut c_acc, mut a_acc, mut bc_acc, mut a_n) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..steps {
            let batch = data.batch(&sampler.batch(cfg.batch_size));
            let cs = critic_update(nets, &batch, cfg, &mut noise);
            if !cs.max_abs_target.is_finite() || !cs.q1_loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite critic target in epoch {epoch}")));
            }
            log.max_abs_target = log.max_abs_target.max(cs.max_abs_target);
            c_acc += 0.5 * (cs.q1_loss + cs.q2_loss);
            if nets.critic_steps % cfg.policy_freq as u64 == 0 {
                let st = actor_update(nets, &batch, anchor, coef, cfg);
                a_acc += st.loss;
                bc_acc += st.bc;
                a_n += 1;
            }
        }
        log.critic_loss.push(c_acc / steps as f64);
        log.actor_loss.push(a_acc / a_n.max(1) as f64);
        log.bc_loss.push(bc_acc / a_n.max(1) as f64);
        log::debug!(
            "epoch {epoch}: critic {:.5} actor {:.5} bc {:.5}",
            log.critic_loss[epoch],
            log.actor_loss[epoch],
            log.bc_loss[epoch]
        );
    }
    if !nets.actor.all_finite() {
        return Err(Error::Diverged("actor parameters became non-finite".into()));
    }
    Ok(log)
}

/// Trains the safety policy from scratch on safety rewards, cloning the
/// dataset actions with trade-off `cfg.alpha`.
pub fn pretrain(data: &TrainingData, cfg: &Td3bcConfig, seed: u64) -> Result<(Networks, TrainLog)> {
    let actor = make_actor(&cfg.hidden, derive(seed, 0xAC70));
    let mut nets = Networks::new(actor, cfg, derive(seed, 0xC717));
    nets.set_value_baseline(data.value_baseline);
    let log = train(&mut nets, data, cfg.epochs_pretrain, BcAnchor::Dataset, cfg.alpha, cfg, seed)?;
    Ok((nets, log))
}

/// Tunes a copy of `priori` on preference rewards with fresh critics. The
/// cloning term targets `priori`'s own actions; `lambda` scales the
/// normalised Q term.
pub fn tune(data: &TrainingData, priori: &Mlp, lambda: f64, cfg: &Td3bcConfig, seed: u64) -> Result<(Networks, TrainLog)> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    let mut nets = Networks::new(priori.clone(), cfg, derive(seed, 0x7E57));
    nets.set_value_baseline(data.value_baseline);
    let log = train(&mut nets, data, cfg.epochs_tune, BcAnchor::Policy(priori), lambda, cfg, derive(seed, 2))?;
    Ok((nets, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{random_batch, relative_error};

    fn cfg() -> Td3bcConfig {
        Td3bcConfig {
            hidden: vec![16, 16],
            ..Default::default()
        }
    }

    fn batch(n: usize, rng: &mut Rng) -> Batch {
        Batch {
            states: random_batch(n, STATE_DIM, rng),
            actions: random_batch(n, 1, rng).mapv(|v| v * 0.9),
            returns: random_batch(n, 1, rng).iter().map(|v| v * 0.01).collect(),
            next_states: random_batch(n, STATE_DIM, rng),
            discount: (0..n).map(|i| if i % 4 == 3 { 0.0 } else { 0.999f64.powi(10) }).collect(),
        }
    }

    #[test]
    fn one_step_zero_discount_target_is_reward() {
        let mut rng = stream(0, Stream::Noise);
        let c = cfg();
        let nets = Networks::new(make_actor(&c.hidden, 1), &c, 2);
        let mut b = batch(8, &mut rng);
        b.discount = vec![0.0; 8];
        assert_eq!(critic_targets(&nets, &b, &c, &mut rng), b.returns);
    }

    #[test]
    fn zero_rewards_zero_critics() {
        let mut rng = stream(0, Stream::Noise);
        let c = cfg();
        let mut nets = Networks::new(make_actor(&c.hidden, 1), &c, 2);
        for q in [&mut nets.q1, &mut nets.q2, &mut nets.q1_target, &mut nets.q2_target] {
            let z = vec![0.0; q.num_params()];
            q.set_params(&z);
        }
        let mut b = batch(8, &mut rng);
        b.returns = vec![0.0; 8];
        assert!(critic_targets(&nets, &b, &c, &mut rng).iter().all(|&y| y == 0.0));
        let st = critic_update(&mut nets, &b, &c, &mut rng);
        assert_eq!((st.q1_loss, st.q2_loss), (0.0, 0.0));
    }

    #[test]
    fn targets_match_loop_oracle() {
        let mut rng = stream(5, Stream::Noise);
        let c = Td3bcConfig { policy_noise: 0.0, ..cfg() };
        let nets = Networks::new(make_actor(&c.hidden, 3), &c, 4);
        let b = batch(6, &mut rng);
        let y = critic_targets(&nets, &b, &c, &mut rng);
        for i in 0..6 {
            let s: Vec<f64> = b.next_states.row(i).to_vec();
            let a = nets.actor_target.forward_one(&s).unwrap()[0];
            let mut x = s.clone();
            x.push(a);
            let q = nets.q1_target.forward_one(&x).unwrap()[0].min(nets.q2_target.forward_one(&x).unwrap()[0]);
            let want = b.returns[i] + b.discount[i] * q;
            assert!((y[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_cloning_of_the_anchor_has_zero_gradient() {
        let mut rng = stream(1, Stream::Noise);
        let c = cfg();
        let actor = make_actor(&c.hidden, 7);
        let critic = make_critic(&c.hidden, 8);
        let s = random_batch(16, STATE_DIM, &mut rng);
        let anchor = actor.forward(&s).unwrap();
        let (loss, g, _) = actor_loss_and_grad(&actor, &critic, &s, &anchor, 0.0);
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = stream(2, Stream::Noise);
        let c = cfg();
        let mut actor = make_actor(&c.hidden, 9);
        // larger output layer so tanh is not flat
        let last = actor.layers.len() - 1;
        actor.layers[last].w.mapv_inplace(|v| v * 50.0);
        let critic = make_critic(&c.hidden, 10);
        let s = random_batch(6, STATE_DIM, &mut rng);
        let anchor = random_batch(6, 1, &mut rng);
        let lam = 1.7;
        let (_, g, _) = actor_loss_and_grad(&actor, &critic, &s, &anchor, lam);
        let analytic = g.flatten();
        let base = actor.params();
        let mut probe = actor.clone();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += eps;
            probe.set_params(&p);
            let up = actor_loss_and_grad(&probe, &critic, &s, &anchor, lam).0;
            p[k] -= 2.0 * eps;
            probe.set_params(&p);
            let dn = actor_loss_and_grad(&probe, &critic, &s, &anchor, lam).0;
            worst = worst.max(relative_error(analytic[k], (up - dn) / (2.0 * eps)));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn bc_only_decreases_action_error() {
        let mut rng = stream(3, Stream::Noise);
        let c = cfg();
        let mut nets = Networks::new(make_actor(&c.hidden, 11), &c, 12);
        let b = batch(64, &mut rng);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let st = actor_update(&mut nets, &b, BcAnchor::Dataset, 0.0, &c);
            assert!(st.bc <= prev + 1e-12);
            prev = st.bc;
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        let c = cfg();
        let data = TrainingData {
            states: Array2::zeros((2, STATE_DIM)),
            actions: vec![0.0; 2],
            start_row: vec![0],
            returns: vec![0.0],
            next_row: vec![1],
            discount: vec![0.9],
            max_basal: 0.1,
            value_baseline: 0.0,
        };
        let actor = make_actor(&c.hidden, 1);
        assert!(matches!(tune(&data, &actor, -0.1, &c, 0), Err(Error::NegativeLambda(_))));
    }
}
