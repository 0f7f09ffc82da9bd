//! Learners that follow a fixed script: constant play, commitment leaders,
//! best responders, and the scripted reveal/infer pair.

use rand_chacha::ChaCha8Rng;

use super::{require_opponent, Emission, LearnerContext, Policy, SideSignalSource};
use crate::error::{Error, Result};
use crate::game::{argmax_first, FeedbackRecord, GameMatrix, MixedStrategy, Player};
use crate::solve::{best_response, stackelberg_value, CommitmentPlan};

pub(crate) struct Constant {
    strategy: MixedStrategy,
}

impl Constant {
    pub fn new(strategy: MixedStrategy) -> Self {
        Constant { strategy }
    }
}

impl Policy for Constant {
    fn act(&mut self, _t: u64, _rng: &mut ChaCha8Rng) -> Result<Emission> {
        Ok(Emission::plain(self.strategy.clone()))
    }

    fn observe(&mut self, _t: u64, _fb: &FeedbackRecord) -> Result<()> {
        Ok(())
    }
}

/// Doubling-epoch perturbation schedule: while `t >= T_m`, `T_m` doubles;
/// the perturbation weight is `T_m^{-b}`.
#[derive(Debug, Clone)]
pub(crate) struct EpochSchedule {
    b: f64,
    horizon: u64,
}

impl EpochSchedule {
    pub fn new(b: f64, initial_horizon: u64) -> Self {
        EpochSchedule {
            b,
            horizon: initial_horizon.max(1),
        }
    }

    /// Advances to round `t` and returns `(T_m, delta)`.
    pub fn advance(&mut self, t: u64) -> (u64, f64) {
        while t >= self.horizon {
            self.horizon *= 2;
        }
        (self.horizon, (self.horizon as f64).powf(-self.b))
    }
}

/// Perturbed commitments of one plan, cached per epoch.
struct CachedCommitment {
    plan: CommitmentPlan,
    epoch: u64,
    strategy: Option<MixedStrategy>,
}

impl CachedCommitment {
    fn new(plan: CommitmentPlan) -> Self {
        CachedCommitment {
            plan,
            epoch: 0,
            strategy: None,
        }
    }

    fn get(&mut self, epoch: u64, delta: f64) -> Result<MixedStrategy> {
        if self.epoch != epoch || self.strategy.is_none() {
            self.strategy = Some(self.plan.at(delta)?.0);
            self.epoch = epoch;
        }
        Ok(self.strategy.clone().expect("just cached"))
    }
}

pub(crate) struct StackelbergLeader {
    schedule: EpochSchedule,
    commitment: CachedCommitment,
}

impl StackelbergLeader {
    pub fn new(ctx: &LearnerContext, b: f64, initial_horizon: u64) -> Result<Self> {
        let plan = CommitmentPlan::new(ctx.prior.game(ctx.signal), ctx.role)?;
        Ok(StackelbergLeader {
            schedule: EpochSchedule::new(b, initial_horizon),
            commitment: CachedCommitment::new(plan),
        })
    }
}

impl Policy for StackelbergLeader {
    fn act(&mut self, t: u64, _rng: &mut ChaCha8Rng) -> Result<Emission> {
        let (epoch, delta) = self.schedule.advance(t);
        Ok(Emission::plain(self.commitment.get(epoch, delta)?))
    }

    fn observe(&mut self, _t: u64, _fb: &FeedbackRecord) -> Result<()> {
        Ok(())
    }
}

/// Pure best reply in the signaled game to the opponent's last strategy;
/// round 1 replies to the uniform strategy.
pub(crate) struct BestResponder {
    game: GameMatrix,
    role: Player,
    last_opponent: MixedStrategy,
}

impl BestResponder {
    pub fn new(ctx: &LearnerContext) -> Self {
        let game = ctx.prior.game(ctx.signal).clone();
        let m = game.num_actions(ctx.role.other());
        BestResponder {
            game,
            role: ctx.role,
            last_opponent: MixedStrategy::uniform(m),
        }
    }
}

impl Policy for BestResponder {
    fn act(&mut self, _t: u64, _rng: &mut ChaCha8Rng) -> Result<Emission> {
        let a = best_response(&self.game, self.role, &self.last_opponent)?;
        Ok(Emission::plain(MixedStrategy::pure(
            self.game.num_actions(self.role),
            a,
        )))
    }

    fn observe(&mut self, _t: u64, fb: &FeedbackRecord) -> Result<()> {
        self.last_opponent = require_opponent("best_responder", fb)?.clone();
        Ok(())
    }
}

/// Player 1: round 1 plays action `signal mod n1`; afterwards best-responds
/// in the signaled game to player 2's previous strategy.
pub(crate) struct RevealThenFollow {
    game: GameMatrix,
    signal: usize,
    last_opponent: Option<MixedStrategy>,
}

impl RevealThenFollow {
    pub fn new(ctx: &LearnerContext) -> Self {
        RevealThenFollow {
            game: ctx.prior.game(ctx.signal).clone(),
            signal: ctx.signal,
            last_opponent: None,
        }
    }
}

impl Policy for RevealThenFollow {
    fn act(&mut self, t: u64, _rng: &mut ChaCha8Rng) -> Result<Emission> {
        let n = self.game.n1();
        let a = match (&self.last_opponent, t) {
            (Some(y), t) if t > 1 => best_response(&self.game, Player::P1, y)?,
            _ => self.signal % n,
        };
        Ok(Emission::plain(MixedStrategy::pure(n, a)))
    }

    fn observe(&mut self, _t: u64, fb: &FeedbackRecord) -> Result<()> {
        self.last_opponent = Some(require_opponent("reveal_then_follow_leader", fb)?.clone());
        Ok(())
    }
}

/// Player 2: round 1 plays action 0; from round 2 on commits to its
/// Stackelberg strategy for the game indexed by player 1's round-1 action.
pub(crate) struct InferThenCommit {
    n: usize,
    commitments: Vec<MixedStrategy>,
    fallback: usize,
    inferred: Option<usize>,
}

impl InferThenCommit {
    pub fn new(ctx: &LearnerContext) -> Result<Self> {
        let commitments = ctx
            .prior
            .games()
            .map(|g| Ok(stackelberg_value(g, Player::P2)?.leader_strategy))
            .collect::<Result<Vec<_>>>()?;
        Ok(InferThenCommit {
            n: ctx.num_actions(),
            commitments,
            fallback: ctx.prior.mode(),
            inferred: None,
        })
    }
}

impl Policy for InferThenCommit {
    fn act(&mut self, _t: u64, _rng: &mut ChaCha8Rng) -> Result<Emission> {
        Ok(Emission::plain(match self.inferred {
            None => MixedStrategy::pure(self.n, 0),
            Some(k) => self.commitments[k].clone(),
        }))
    }

    fn observe(&mut self, t: u64, fb: &FeedbackRecord) -> Result<()> {
        let x = require_opponent("infer_then_commit_follower", fb)?;
        if t == 1 {
            let a = argmax_first(x.probs());
            self.inferred = Some(if a < self.commitments.len() {
                a
            } else {
                self.fallback
            });
        }
        Ok(())
    }
}

/// Commits each round to the perturbed Stackelberg strategy of the game
/// named by that round's external signal.
pub(crate) struct ExternalSignalLeader {
    schedule: EpochSchedule,
    source: SideSignalSource,
    commitments: Vec<CachedCommitment>,
}

impl ExternalSignalLeader {
    pub fn new(
        ctx: &LearnerContext,
        source: SideSignalSource,
        b: f64,
        initial_horizon: u64,
    ) -> Result<Self> {
        let commitments = ctx
            .prior
            .games()
            .map(|g| CommitmentPlan::new(g, ctx.role).map(CachedCommitment::new))
            .collect::<Result<Vec<_>>>()?;
        if commitments.is_empty() {
            return Err(Error::InvalidArgument("empty prior".into()));
        }
        Ok(ExternalSignalLeader {
            schedule: EpochSchedule::new(b, initial_horizon),
            source,
            commitments,
        })
    }
}

impl Policy for ExternalSignalLeader {
    fn act(&mut self, t: u64, _rng: &mut ChaCha8Rng) -> Result<Emission> {
        let (epoch, delta) = self.schedule.advance(t);
        let q = self.source.draw(t);
        Ok(Emission {
            strategy: self.commitments[q].get(epoch, delta)?,
            policy: None,
            side_signal: Some(q),
        })
    }

    fn observe(&mut self, _t: u64, _fb: &FeedbackRecord) -> Result<()> {
        Ok(())
    }
}
