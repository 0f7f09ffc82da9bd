//! Regret-minimizing learners: Hedge, EXP3, and the Blum–Mansour
//! swap-regret reduction in full-information and bandit form.
//!
//! Utilities are mapped to `[0, 1]` with the prior's utility range for the
//! learner's role. Full-information learners evaluate counterfactual
//! payoffs in their signaled game.

use rand_chacha::ChaCha8Rng;

use super::weights::{anytime_rate, softmax_into, stationary_distribution};
use super::{require_opponent, Emission, LearnerContext, Normalizer, Policy};
use crate::error::Result;
use crate::game::{sample_index, FeedbackRecord, GameMatrix, MixedStrategy, Player};

/// Counterfactual gains of every own action, normalized to `[0, 1]`.
struct Counterfactual {
    game: GameMatrix,
    role: Player,
    norm: Normalizer,
}

impl Counterfactual {
    fn new(ctx: &LearnerContext) -> Self {
        Counterfactual {
            game: ctx.prior.game(ctx.signal).clone(),
            role: ctx.role,
            norm: ctx.normalizer(),
        }
    }

    fn gains(&self, kind: &str, fb: &FeedbackRecord) -> Result<Vec<f64>> {
        let opp = require_opponent(kind, fb)?;
        Ok(self
            .game
            .payoff_vector(self.role, opp)
            .into_iter()
            .map(|u| self.norm.gain(u))
            .collect())
    }
}

pub(crate) struct Hedge {
    cf: Counterfactual,
    eta: Option<f64>,
    cumulative: Vec<f64>,
    probs: Vec<f64>,
}

impl Hedge {
    pub fn new(ctx: &LearnerContext, eta: Option<f64>) -> Self {
        let n = ctx.num_actions();
        Hedge {
            cf: Counterfactual::new(ctx),
            eta,
            cumulative: vec![0.0; n],
            probs: vec![1.0 / n as f64; n],
        }
    }
}

impl Policy for Hedge {
    fn act(&mut self, t: u64, _rng: &mut ChaCha8Rng) -> Result<Emission> {
        let rate = self
            .eta
            .unwrap_or_else(|| anytime_rate(self.probs.len(), t, 1.0));
        softmax_into(&self.cumulative, rate, &mut self.probs);
        Ok(Emission::plain(MixedStrategy::normalized(
            self.probs.clone(),
        )?))
    }

    fn observe(&mut self, _t: u64, fb: &FeedbackRecord) -> Result<()> {
        let g = self.cf.gains("multiplicative_weights", fb)?;
        self.cumulative
            .iter_mut()
            .zip(&g)
            .for_each(|(c, v)| *c += v);
        Ok(())
    }
}

fn played_action(fb: &FeedbackRecord, fallback: usize) -> usize {
    fb.own_strategy.pure_action().unwrap_or(fallback)
}

/// EXP3 on importance-weighted losses.
pub(crate) struct Exp3 {
    norm: Normalizer,
    eta: Option<f64>,
    exploration: f64,
    losses: Vec<f64>,
    weights: Vec<f64>,
    sampling: Vec<f64>,
    last_action: usize,
}

impl Exp3 {
    pub fn new(ctx: &LearnerContext, eta: Option<f64>, exploration: f64) -> Self {
        let n = ctx.num_actions();
        Exp3 {
            norm: ctx.normalizer(),
            eta,
            exploration,
            losses: vec![0.0; n],
            weights: vec![1.0 / n as f64; n],
            sampling: vec![1.0 / n as f64; n],
            last_action: 0,
        }
    }
}

impl Policy for Exp3 {
    fn act(&mut self, t: u64, rng: &mut ChaCha8Rng) -> Result<Emission> {
        let n = self.losses.len();
        let rate = self.eta.unwrap_or_else(|| anytime_rate(n, t, n as f64));
        softmax_into(&self.losses, -rate, &mut self.weights);
        let u = self.exploration / n as f64;
        for (s, w) in self.sampling.iter_mut().zip(&self.weights) {
            *s = (1.0 - self.exploration) * w + u;
        }
        let policy = MixedStrategy::normalized(self.sampling.clone())?;
        self.last_action = sample_index(policy.probs(), rng);
        Ok(Emission {
            strategy: MixedStrategy::pure(n, self.last_action),
            policy: Some(policy),
            side_signal: None,
        })
    }

    fn observe(&mut self, _t: u64, fb: &FeedbackRecord) -> Result<()> {
        let a = played_action(fb, self.last_action);
        let loss = 1.0 - self.norm.gain(fb.own_utility);
        self.losses[a] += loss / self.sampling[a].max(1e-300);
        Ok(())
    }
}

/// Blum–Mansour reduction with one Hedge expert per action; the played
/// distribution is the stationary distribution of the experts' matrix.
pub(crate) struct SwapRegretFull {
    cf: Counterfactual,
    eta: Option<f64>,
    gains: Vec<Vec<f64>>,
    experts: Vec<Vec<f64>>,
    mix: Vec<f64>,
}

impl SwapRegretFull {
    pub fn new(ctx: &LearnerContext, eta: Option<f64>) -> Self {
        let n = ctx.num_actions();
        SwapRegretFull {
            cf: Counterfactual::new(ctx),
            eta,
            gains: vec![vec![0.0; n]; n],
            experts: vec![vec![1.0 / n as f64; n]; n],
            mix: vec![1.0 / n as f64; n],
        }
    }
}

impl Policy for SwapRegretFull {
    fn act(&mut self, t: u64, _rng: &mut ChaCha8Rng) -> Result<Emission> {
        let n = self.mix.len();
        let rate = self.eta.unwrap_or_else(|| anytime_rate(n, t, 1.0));
        for (q, g) in self.experts.iter_mut().zip(&self.gains) {
            softmax_into(g, rate, q);
        }
        self.mix = stationary_distribution(&self.experts, &self.mix);
        Ok(Emission::plain(MixedStrategy::normalized(
            self.mix.clone(),
        )?))
    }

    fn observe(&mut self, _t: u64, fb: &FeedbackRecord) -> Result<()> {
        let g = self.cf.gains("no_swap_regret_full", fb)?;
        for (row, pi) in self.gains.iter_mut().zip(&self.mix) {
            row.iter_mut().zip(&g).for_each(|(c, v)| *c += pi * v);
        }
        Ok(())
    }
}

/// The bandit version: experts see importance-weighted loss estimates and
/// the sampling distribution mixes in `gamma_t` uniform exploration.
pub(crate) struct SwapRegretBandit {
    norm: Normalizer,
    eta: Option<f64>,
    exploration: Option<f64>,
    losses: Vec<Vec<f64>>,
    experts: Vec<Vec<f64>>,
    mix: Vec<f64>,
    sampling: Vec<f64>,
    last_action: usize,
}

impl SwapRegretBandit {
    pub fn new(ctx: &LearnerContext, eta: Option<f64>, exploration: Option<f64>) -> Self {
        let n = ctx.num_actions();
        SwapRegretBandit {
            norm: ctx.normalizer(),
            eta,
            exploration,
            losses: vec![vec![0.0; n]; n],
            experts: vec![vec![1.0 / n as f64; n]; n],
            mix: vec![1.0 / n as f64; n],
            sampling: vec![1.0 / n as f64; n],
            last_action: 0,
        }
    }

    /// `min(1, sqrt(n ln n / t))`.
    pub fn exploration_rate(n: usize, t: u64) -> f64 {
        let nf = n.max(2) as f64;
        (nf * nf.ln() / t as f64).sqrt().min(1.0)
    }
}

impl Policy for SwapRegretBandit {
    fn act(&mut self, t: u64, rng: &mut ChaCha8Rng) -> Result<Emission> {
        let n = self.mix.len();
        let rate = self.eta.unwrap_or_else(|| anytime_rate(n, t, 1.0));
        for (q, l) in self.experts.iter_mut().zip(&self.losses) {
            softmax_into(l, -rate, q);
        }
        self.mix = stationary_distribution(&self.experts, &self.mix);
        let gamma = if n == 1 {
            0.0
        } else {
            self.exploration
                .unwrap_or_else(|| Self::exploration_rate(n, t))
        };
        for (s, p) in self.sampling.iter_mut().zip(&self.mix) {
            *s = (1.0 - gamma) * p + gamma / n as f64;
        }
        let policy = MixedStrategy::normalized(self.sampling.clone())?;
        self.last_action = sample_index(policy.probs(), rng);
        Ok(Emission {
            strategy: MixedStrategy::pure(n, self.last_action),
            policy: Some(policy),
            side_signal: None,
        })
    }

    fn observe(&mut self, _t: u64, fb: &FeedbackRecord) -> Result<()> {
        let a = played_action(fb, self.last_action);
        let estimate = (1.0 - self.norm.gain(fb.own_utility)) / self.sampling[a].max(1e-300);
        for (row, pi) in self.losses.iter_mut().zip(&self.mix) {
            row[a] += pi * estimate;
        }
        Ok(())
    }
}
