//! The algorithm zoo: each learner maps its signal and its feedback history
//! to one strategy per round.
//!
//! A round is `act` followed by exactly one `observe`. Learners that
//! randomize over strategies (the bandit learners) emit a sampled pure
//! action and expose the distribution they sampled from as their policy.

mod adaptive;
mod regret;
mod scripted;
mod weights;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{sample_index, FeedbackRecord, MixedStrategy, Player, Prior};

pub use regret::{external_regret, swap_regret, RegretAccumulator, RegretReport};
pub use weights::stationary_distribution;

/// Default exponent of the perturbation schedule `delta = T_m^{-b}`.
pub const DEFAULT_DELTA_EXPONENT: f64 = 0.25;
/// Default first doubling-epoch horizon.
pub const DEFAULT_INITIAL_HORIZON: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Players see both strategies and their own utility.
    Full,
    /// Players see only their own strategy and utility.
    Bandit,
}

fn default_b() -> f64 {
    DEFAULT_DELTA_EXPONENT
}

fn default_horizon() -> u64 {
    DEFAULT_INITIAL_HORIZON
}

/// Declarative learner configuration. JSON form:
/// `{"kind": "<snake_case kind>", "params": {...}}`. `params` is always
/// present; it may be `{}` when every parameter has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum LearnerSpec {
    ConstantAction {
        action: usize,
    },
    /// Hedge over pure actions with full-information counterfactuals.
    MultiplicativeWeights {
        /// Fixed learning rate; `None` uses `sqrt(ln n / t)`.
        #[serde(default)]
        eta: Option<f64>,
    },
    BanditExp3 {
        /// Fixed learning rate; `None` uses `sqrt(ln n / (n t))`.
        #[serde(default)]
        eta: Option<f64>,
        /// Uniform exploration mixed into the sampling distribution.
        #[serde(default)]
        exploration: f64,
    },
    /// Swap-regret reduction over per-action Hedge experts.
    NoSwapRegretFull {
        #[serde(default)]
        eta: Option<f64>,
    },
    /// Swap-regret reduction with importance-weighted loss estimates.
    NoSwapRegretBandit {
        #[serde(default)]
        eta: Option<f64>,
        /// Fixed exploration rate; `None` uses `min(1, sqrt(n ln n / t))`.
        #[serde(default)]
        exploration: Option<f64>,
    },
    /// Commits to the signaled game's perturbed Stackelberg strategy on
    /// doubling epochs.
    StackelbergLeader {
        #[serde(default = "default_b")]
        b: f64,
        #[serde(default = "default_horizon")]
        initial_horizon: u64,
    },
    /// Best reply (in the signaled game) to the opponent's last strategy.
    BestResponder {},
    /// Runs `base` as if the signal were always `fixed_signal`.
    MimicDeviation {
        base: Box<LearnerSpec>,
        fixed_signal: usize,
    },
    /// Player 1: reveals the game in round 1, then best-responds.
    RevealThenFollowLeader {},
    /// Player 2: decodes the game from player 1's first action, then
    /// commits to its Stackelberg strategy for it.
    InferThenCommitFollower {},
    /// Commits to the perturbed Stackelberg strategy of a per-round
    /// external signal whose accuracy is `1 - 1/t`.
    ExternalSignalLeader {
        #[serde(default = "default_b")]
        b: f64,
        #[serde(default = "default_horizon")]
        initial_horizon: u64,
    },
}

impl LearnerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LearnerSpec::ConstantAction { .. } => "constant_action",
            LearnerSpec::MultiplicativeWeights { .. } => "multiplicative_weights",
            LearnerSpec::BanditExp3 { .. } => "bandit_exp3",
            LearnerSpec::NoSwapRegretFull { .. } => "no_swap_regret_full",
            LearnerSpec::NoSwapRegretBandit { .. } => "no_swap_regret_bandit",
            LearnerSpec::StackelbergLeader { .. } => "stackelberg_leader",
            LearnerSpec::BestResponder {} => "best_responder",
            LearnerSpec::MimicDeviation { .. } => "mimic_deviation",
            LearnerSpec::RevealThenFollowLeader {} => "reveal_then_follow_leader",
            LearnerSpec::InferThenCommitFollower {} => "infer_then_commit_follower",
            LearnerSpec::ExternalSignalLeader { .. } => "external_signal_leader",
        }
    }

    pub fn stackelberg_leader() -> Self {
        LearnerSpec::StackelbergLeader {
            b: DEFAULT_DELTA_EXPONENT,
            initial_horizon: DEFAULT_INITIAL_HORIZON,
        }
    }

    pub fn external_signal_leader() -> Self {
        LearnerSpec::ExternalSignalLeader {
            b: DEFAULT_DELTA_EXPONENT,
            initial_horizon: DEFAULT_INITIAL_HORIZON,
        }
    }

    pub fn no_swap_regret_full() -> Self {
        LearnerSpec::NoSwapRegretFull { eta: None }
    }

    pub fn no_swap_regret_bandit() -> Self {
        LearnerSpec::NoSwapRegretBandit {
            eta: None,
            exploration: None,
        }
    }

    pub fn mimic(base: LearnerSpec, fixed_signal: usize) -> Self {
        LearnerSpec::MimicDeviation {
            base: Box::new(base),
            fixed_signal,
        }
    }

    /// Whether the learner needs to see the opponent's strategies.
    pub fn requires_full_information(&self) -> bool {
        match self {
            LearnerSpec::MultiplicativeWeights { .. }
            | LearnerSpec::NoSwapRegretFull { .. }
            | LearnerSpec::BestResponder {}
            | LearnerSpec::RevealThenFollowLeader {}
            | LearnerSpec::InferThenCommitFollower {} => true,
            LearnerSpec::MimicDeviation { base, .. } => base.requires_full_information(),
            _ => false,
        }
    }

    /// Parameter-range checks that do not need a game.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("{}: {msg}", self.kind())));
        let check_eta = |eta: &Option<f64>| match eta {
            Some(e) if !(*e > 0.0 && e.is_finite()) => {
                bad(format!("eta must be positive, got {e}"))
            }
            _ => Ok(()),
        };
        let check_schedule = |b: f64, h: u64| {
            if !(b > 0.0 && b < 1.0) {
                bad(format!("b must lie in (0, 1), got {b}"))
            } else if h < 1 {
                bad("initial_horizon must be at least 1".into())
            } else {
                Ok(())
            }
        };
        match self {
            LearnerSpec::MultiplicativeWeights { eta } | LearnerSpec::NoSwapRegretFull { eta } => {
                check_eta(eta)
            }
            LearnerSpec::BanditExp3 { eta, exploration } => {
                check_eta(eta)?;
                if !(0.0..=1.0).contains(exploration) {
                    return bad(format!("exploration must lie in [0, 1], got {exploration}"));
                }
                Ok(())
            }
            LearnerSpec::NoSwapRegretBandit { eta, exploration } => {
                check_eta(eta)?;
                match exploration {
                    Some(g) if !(0.0..=1.0).contains(g) => {
                        bad(format!("exploration must lie in [0, 1], got {g}"))
                    }
                    _ => Ok(()),
                }
            }
            LearnerSpec::StackelbergLeader { b, initial_horizon }
            | LearnerSpec::ExternalSignalLeader { b, initial_horizon } => {
                check_schedule(*b, *initial_horizon)
            }
            LearnerSpec::MimicDeviation { base, .. } => base.validate(),
            _ => Ok(()),
        }
    }
}

/// Per-round external signal with accuracy `Pr[q^t = G] = 1 - 1/t`; on a
/// miss the signal is drawn from the prior restricted to the other games.
#[derive(Debug, Clone)]
pub struct SideSignalSource {
    realized: usize,
    others: Vec<f64>,
    rng: ChaCha8Rng,
}

impl SideSignalSource {
    pub fn new(prior: &Prior, realized: usize, rng: ChaCha8Rng) -> Self {
        let mut others = prior.weights();
        others[realized] = 0.0;
        let total: f64 = others.iter().sum();
        if total > 0.0 {
            others.iter_mut().for_each(|w| *w /= total);
        }
        SideSignalSource {
            realized,
            others,
            rng,
        }
    }

    pub fn accuracy(t: u64) -> f64 {
        1.0 - 1.0 / t as f64
    }

    /// Signal for round `t` (1-based).
    pub fn draw(&mut self, t: u64) -> usize {
        let hit: f64 = self.rng.gen();
        if hit < Self::accuracy(t) || self.others.iter().all(|w| *w == 0.0) {
            self.realized
        } else {
            sample_index(&self.others, &mut self.rng)
        }
    }
}

/// Everything a learner may condition on besides its feedback.
#[derive(Debug, Clone)]
pub struct LearnerContext {
    pub role: Player,
    pub prior: Arc<Prior>,
    pub signal: usize,
    pub feedback: FeedbackMode,
    pub side_signal: Option<SideSignalSource>,
}

impl LearnerContext {
    pub fn new(role: Player, prior: Arc<Prior>, signal: usize, feedback: FeedbackMode) -> Self {
        LearnerContext {
            role,
            prior,
            signal,
            feedback,
            side_signal: None,
        }
    }

    pub fn with_side_signal(mut self, source: SideSignalSource) -> Self {
        self.side_signal = Some(source);
        self
    }

    pub(crate) fn num_actions(&self) -> usize {
        self.prior.num_actions(self.role)
    }

    /// Affine map of own utilities onto `[0, 1]` using the prior's range.
    pub(crate) fn normalizer(&self) -> Normalizer {
        let (lo, hi) = self.prior.utility_range(self.role);
        Normalizer {
            lo,
            span: if hi > lo { hi - lo } else { 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Normalizer {
    lo: f64,
    span: f64,
}

impl Normalizer {
    #[inline]
    pub fn gain(&self, u: f64) -> f64 {
        ((u - self.lo) / self.span).clamp(0.0, 1.0)
    }
}

/// One round's output of a policy.
pub(crate) struct Emission {
    pub strategy: MixedStrategy,
    pub policy: Option<MixedStrategy>,
    pub side_signal: Option<usize>,
}

impl Emission {
    pub fn plain(strategy: MixedStrategy) -> Self {
        Emission {
            strategy,
            policy: None,
            side_signal: None,
        }
    }
}

pub(crate) trait Policy: Send {
    /// Strategy for round `t` (1-based).
    fn act(&mut self, t: u64, rng: &mut ChaCha8Rng) -> Result<Emission>;
    fn observe(&mut self, t: u64, fb: &FeedbackRecord) -> Result<()>;
}

/// A learner instance confined to one trial.
pub struct LearnerState {
    spec: LearnerSpec,
    role: Player,
    signal: usize,
    round: u64,
    awaiting_feedback: bool,
    rng: ChaCha8Rng,
    policy: Box<dyn Policy>,
    last_policy: Option<MixedStrategy>,
    last_side_signal: Option<usize>,
}

impl std::fmt::Debug for LearnerState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LearnerState")
            .field("spec", &self.spec)
            .field("role", &self.role)
            .field("signal", &self.signal)
            .field("round", &self.round)
            .finish()
    }
}

fn build_policy(spec: &LearnerSpec, ctx: &mut LearnerContext) -> Result<Box<dyn Policy>> {
    spec.validate()?;
    if spec.requires_full_information() && ctx.feedback == FeedbackMode::Bandit {
        return Err(Error::ProtocolViolation(format!(
            "{} needs full-information feedback",
            spec.kind()
        )));
    }
    if ctx.signal >= ctx.prior.len() {
        return Err(Error::InvalidArgument(format!(
            "signal {} out of range for a prior over {} games",
            ctx.signal,
            ctx.prior.len()
        )));
    }
    let n = ctx.num_actions();
    Ok(match spec {
        LearnerSpec::ConstantAction { action } => {
            if *action >= n {
                return Err(Error::InvalidArgument(format!(
                    "constant action {action} out of range for {n} actions"
                )));
            }
            Box::new(scripted::Constant::new(MixedStrategy::pure(n, *action)))
        }
        LearnerSpec::MultiplicativeWeights { eta } => Box::new(adaptive::Hedge::new(ctx, *eta)),
        LearnerSpec::BanditExp3 { eta, exploration } => {
            Box::new(adaptive::Exp3::new(ctx, *eta, *exploration))
        }
        LearnerSpec::NoSwapRegretFull { eta } => Box::new(adaptive::SwapRegretFull::new(ctx, *eta)),
        LearnerSpec::NoSwapRegretBandit { eta, exploration } => {
            Box::new(adaptive::SwapRegretBandit::new(ctx, *eta, *exploration))
        }
        LearnerSpec::StackelbergLeader { b, initial_horizon } => {
            Box::new(scripted::StackelbergLeader::new(ctx, *b, *initial_horizon)?)
        }
        LearnerSpec::BestResponder {} => Box::new(scripted::BestResponder::new(ctx)),
        LearnerSpec::MimicDeviation { base, fixed_signal } => {
            if *fixed_signal >= ctx.prior.len() {
                return Err(Error::InvalidArgument(format!(
                    "mimic signal {fixed_signal} out of range for a prior over {} games",
                    ctx.prior.len()
                )));
            }
            let mut inner = ctx.clone();
            inner.signal = *fixed_signal;
            let policy = build_policy(base, &mut inner)?;
            ctx.side_signal = inner.side_signal;
            policy
        }
        LearnerSpec::RevealThenFollowLeader {} => {
            if ctx.role != Player::P1 {
                return Err(Error::InvalidArgument(
                    "reveal_then_follow_leader plays as player 1".into(),
                ));
            }
            Box::new(scripted::RevealThenFollow::new(ctx))
        }
        LearnerSpec::InferThenCommitFollower {} => {
            if ctx.role != Player::P2 {
                return Err(Error::InvalidArgument(
                    "infer_then_commit_follower plays as player 2".into(),
                ));
            }
            Box::new(scripted::InferThenCommit::new(ctx)?)
        }
        LearnerSpec::ExternalSignalLeader { b, initial_horizon } => {
            let source = ctx.side_signal.take().ok_or_else(|| {
                Error::InvalidArgument("external_signal_leader needs a side-signal source".into())
            })?;
            Box::new(scripted::ExternalSignalLeader::new(
                ctx,
                source,
                *b,
                *initial_horizon,
            )?)
        }
    })
}

/// Builds a learner. The state is a deterministic function of the
/// arguments; `rng` is owned by the learner from here on.
pub fn learner_init(
    spec: &LearnerSpec,
    ctx: LearnerContext,
    rng: ChaCha8Rng,
) -> Result<LearnerState> {
    let mut ctx = ctx;
    let policy = build_policy(spec, &mut ctx)?;
    Ok(LearnerState {
        spec: spec.clone(),
        role: ctx.role,
        signal: ctx.signal,
        round: 0,
        awaiting_feedback: false,
        rng,
        policy,
        last_policy: None,
        last_side_signal: None,
    })
}

impl LearnerState {
    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn role(&self) -> Player {
        self.role
    }

    pub fn signal(&self) -> usize {
        self.signal
    }

    /// Rounds completed so far.
    pub fn rounds_played(&self) -> u64 {
        self.round
    }

    /// Strategy for the next round.
    pub fn act(&mut self) -> Result<MixedStrategy> {
        if self.awaiting_feedback {
            return Err(Error::ProtocolViolation(format!(
                "{} acted twice without feedback",
                self.spec.kind()
            )));
        }
        let t = self.round + 1;
        let e = self.policy.act(t, &mut self.rng)?;
        self.awaiting_feedback = true;
        self.last_policy = e.policy;
        self.last_side_signal = e.side_signal;
        Ok(e.strategy)
    }

    pub fn observe(&mut self, fb: &FeedbackRecord) -> Result<()> {
        if !self.awaiting_feedback {
            return Err(Error::ProtocolViolation(format!(
                "{} received feedback before acting",
                self.spec.kind()
            )));
        }
        let t = self.round + 1;
        self.policy.observe(t, fb)?;
        self.awaiting_feedback = false;
        self.round = t;
        Ok(())
    }

    /// Distribution the last emitted strategy was sampled from, if the
    /// learner randomizes over strategies.
    pub fn last_policy(&self) -> Option<&MixedStrategy> {
        self.last_policy.as_ref()
    }

    /// External signal consumed in the last `act`, if any.
    pub fn last_side_signal(&self) -> Option<usize> {
        self.last_side_signal
    }
}

pub fn learner_act(state: &mut LearnerState) -> Result<MixedStrategy> {
    state.act()
}

pub fn learner_observe(state: &mut LearnerState, fb: &FeedbackRecord) -> Result<()> {
    state.observe(fb)
}

pub(crate) fn require_opponent<'a>(
    kind: &str,
    fb: &'a FeedbackRecord,
) -> Result<&'a MixedStrategy> {
    fb.opponent_strategy
        .as_ref()
        .ok_or_else(|| Error::ProtocolViolation(format!("{kind} needs the opponent's strategy")))
}
