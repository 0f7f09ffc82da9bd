//! Trajectory generation and Monte-Carlo estimation.
//!
//! A trial samples the realized game and both signals, builds the two
//! learners and plays `horizon` rounds. Each trial is folded into a
//! [`TrialSummary`] as it runs; reports are assembled from the summaries
//! in trial order, so the worker count never changes a result.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builtin::PriorSpec;
use crate::error::{invalid, Error, Result};
use crate::game::{
    bilinear, sample_signal, Csp, CspAccumulator, FeedbackRecord, GameMatrix, MixedStrategy,
    Player, Prior, Round, SignalModel, Trajectory,
};
use crate::learners::{
    learner_init, FeedbackMode, LearnerContext, LearnerSpec, RegretAccumulator, SideSignalSource,
};
use crate::rng::{stream_rng, Stream};
use crate::stats::MeanCi;

pub const DEFAULT_TRIALS: usize = 32;
pub const DEFAULT_TAIL_WINDOW: u64 = 10_000;
pub const DEFAULT_TAIL_THRESHOLD: f64 = 0.9;

/// Header of the per-checkpoint CSV.
pub const CSV_HEADER: &str =
    "trial,realized_game,s1,s2,t,avg_u1,avg_u2,ext_regret1,ext_regret2,swap_regret1,swap_regret2";

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_feedback() -> FeedbackMode {
    FeedbackMode::Full
}

fn default_tail_threshold() -> f64 {
    DEFAULT_TAIL_THRESHOLD
}

/// A repeated-game experiment as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub prior: PriorSpec,
    pub signal_model: SignalModel,
    pub spec1: LearnerSpec,
    pub spec2: LearnerSpec,
    pub horizon: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_feedback")]
    pub feedback_mode: FeedbackMode,
    /// Sample pure actions from the emitted strategies and pay realized
    /// utilities instead of expected ones.
    #[serde(default)]
    pub pure_realization: bool,
    #[serde(default)]
    pub master_seed: u64,
    /// Rounds at which running averages are recorded. Defaults to the
    /// powers of two below the horizon; the horizon itself is always added.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    /// Length of the final window for the tail statistics; defaults to
    /// `min(horizon, 10^4)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_window: Option<u64>,
    #[serde(default = "default_tail_threshold")]
    pub tail_threshold: f64,
    /// Retain full trajectories in the trial summaries.
    #[serde(default)]
    pub keep_trajectories: bool,
    /// Worker-pool size; `None` uses the global pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(
        prior: PriorSpec,
        signal_model: SignalModel,
        spec1: LearnerSpec,
        spec2: LearnerSpec,
        horizon: u64,
    ) -> Self {
        ExperimentConfig {
            name: None,
            prior,
            signal_model,
            spec1,
            spec2,
            horizon,
            trials: DEFAULT_TRIALS,
            feedback_mode: FeedbackMode::Full,
            pure_realization: false,
            master_seed: 0,
            checkpoints: None,
            tail_window: None,
            tail_threshold: DEFAULT_TAIL_THRESHOLD,
            keep_trajectories: false,
            threads: None,
        }
    }

    /// Parses a config and applies `key.path=value` overrides. Values are
    /// read as JSON when they parse as JSON and as strings otherwise.
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn spec(&self, player: Player) -> &LearnerSpec {
        match player {
            Player::P1 => &self.spec1,
            Player::P2 => &self.spec2,
        }
    }

    /// Copy with `player`'s learner replaced.
    pub fn with_spec(&self, player: Player, spec: LearnerSpec) -> Self {
        let mut c = self.clone();
        match player {
            Player::P1 => c.spec1 = spec,
            Player::P2 => c.spec2 = spec,
        }
        c
    }
}

/// Sets the value at a dotted path such as `signal_model.p2=0.5`. Every
/// intermediate key must already exist and be an object.
pub fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidArgument(format!("override {assignment:?} is not key=value"))
    })?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return invalid(format!("bad override path {path:?}"));
    }
    let value = serde_json::from_str(raw.trim())
        .unwrap_or_else(|_| serde_json::Value::String(raw.trim().to_string()));
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "override {path:?}: {key:?} is not inside an object"
            ))
        })?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*key)
            .ok_or_else(|| Error::InvalidArgument(format!("override {path:?}: no key {key:?}")))?;
    }
    unreachable!("path has at least one key")
}

/// A validated config with the prior resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub prior: Arc<Prior>,
    pub checkpoints: Vec<u64>,
    pub tail_window: u64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let prior = Arc::new(config.prior.resolve()?);
        let t = config.horizon;
        if t == 0 {
            return invalid("horizon must be positive");
        }
        if config.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if !(0.0..=1.0).contains(&config.tail_threshold) {
            return invalid("tail_threshold must lie in [0, 1]");
        }
        if config.threads == Some(0) {
            return invalid("threads must be positive");
        }
        config.spec1.validate()?;
        config.spec2.validate()?;
        let checkpoints = match &config.checkpoints {
            Some(c) => {
                if c.iter().any(|&r| r == 0 || r > t) {
                    return invalid(format!("checkpoints must lie in [1, {t}]"));
                }
                if c.windows(2).any(|w| w[0] >= w[1]) {
                    return invalid("checkpoints must be strictly increasing");
                }
                let mut c = c.clone();
                if c.last() != Some(&t) {
                    c.push(t);
                }
                c
            }
            None => default_checkpoints(t),
        };
        let tail_window = config.tail_window.unwrap_or(DEFAULT_TAIL_WINDOW).min(t);
        if tail_window == 0 {
            return invalid("tail_window must be positive");
        }
        Ok(Experiment {
            config,
            prior,
            checkpoints,
            tail_window,
        })
    }

    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        Self::new(config.clone())
    }

    /// Same experiment with `player`'s learner replaced.
    pub fn with_spec(&self, player: Player, spec: LearnerSpec) -> Self {
        let mut e = self.clone();
        e.config = self.config.with_spec(player, spec);
        e
    }
}

/// Powers of two below `t`, then `t`.
pub fn default_checkpoints(t: u64) -> Vec<u64> {
    let mut c: Vec<u64> = std::iter::successors(Some(1u64), |x| x.checked_mul(2))
        .take_while(|&x| x < t)
        .collect();
    c.push(t);
    c
}

/// Nature's draws for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialInfo {
    pub trial: usize,
    pub realized: usize,
    pub s1: usize,
    pub s2: usize,
}

/// One played round as seen by a trial observer.
#[derive(Debug)]
pub struct RoundEvent<'a> {
    pub t: u64,
    pub round: &'a Round,
    pub u1: f64,
    pub u2: f64,
}

impl RoundEvent<'_> {
    pub fn utility(&self, player: Player) -> f64 {
        match player {
            Player::P1 => self.u1,
            Player::P2 => self.u2,
        }
    }
}

/// Samples nature's draws for `trial`.
pub fn trial_info(exp: &Experiment, trial: usize) -> Result<TrialInfo> {
    let mut nature = stream_rng(exp.config.master_seed, trial as u64, Stream::Nature);
    let prior = &exp.prior;
    let realized = prior.sample(&mut nature);
    let sm = &exp.config.signal_model;
    let s1 = sample_signal(prior, realized, sm.precision(Player::P1), &mut nature)?;
    let s2 = sample_signal(prior, realized, sm.precision(Player::P2), &mut nature)?;
    Ok(TrialInfo {
        trial,
        realized,
        s1,
        s2,
    })
}

/// Plays one trial, calling `visit` after every round.
pub fn drive_trial(
    exp: &Experiment,
    trial: usize,
    mut visit: impl FnMut(&TrialInfo, &RoundEvent),
) -> Result<TrialInfo> {
    let cfg = &exp.config;
    let info = trial_info(exp, trial)?;
    let seed = cfg.master_seed;
    let t64 = trial as u64;
    let learner = |player: Player, signal: usize, stream: Stream, side: Stream| {
        let source = SideSignalSource::new(&exp.prior, info.realized, stream_rng(seed, t64, side));
        let ctx = LearnerContext::new(player, exp.prior.clone(), signal, cfg.feedback_mode)
            .with_side_signal(source);
        learner_init(cfg.spec(player), ctx, stream_rng(seed, t64, stream))
    };
    let mut l1 = learner(Player::P1, info.s1, Stream::Learner1, Stream::SideSignal1)?;
    let mut l2 = learner(Player::P2, info.s2, Stream::Learner2, Stream::SideSignal2)?;
    let mut env = stream_rng(seed, t64, Stream::Environment);
    let g = exp.prior.game(info.realized);
    let full = cfg.feedback_mode == FeedbackMode::Full;
    for t in 1..=cfg.horizon {
        let x = l1.act()?;
        let y = l2.act()?;
        let (mut round, xs, ys) = if cfg.pure_realization {
            let xs = MixedStrategy::pure(x.len(), x.sample(&mut env));
            let ys = MixedStrategy::pure(y.len(), y.sample(&mut env));
            let mut r = Round::new(xs.clone(), ys.clone());
            r.x_policy = Some(l1.last_policy().cloned().unwrap_or(x));
            r.y_policy = Some(l2.last_policy().cloned().unwrap_or(y));
            (r, xs, ys)
        } else {
            let mut r = Round::new(x.clone(), y.clone());
            r.x_policy = l1.last_policy().cloned();
            r.y_policy = l2.last_policy().cloned();
            (r, x, y)
        };
        round.side_signals = [l1.last_side_signal(), l2.last_side_signal()];
        let u1 = bilinear(g, xs.probs(), ys.probs(), Player::P1);
        let u2 = bilinear(g, xs.probs(), ys.probs(), Player::P2);
        l1.observe(&FeedbackRecord {
            own_strategy: xs.clone(),
            opponent_strategy: full.then(|| ys.clone()),
            own_utility: u1,
        })?;
        l2.observe(&FeedbackRecord {
            own_strategy: ys,
            opponent_strategy: full.then_some(xs),
            own_utility: u2,
        })?;
        visit(
            &info,
            &RoundEvent {
                t,
                round: &round,
                u1,
                u2,
            },
        );
    }
    Ok(info)
}

/// Plays one trial and returns its full trajectory.
pub fn run_trial(exp: &Experiment, trial: usize) -> Result<Trajectory> {
    let mut rounds = Vec::with_capacity(exp.config.horizon as usize);
    let info = drive_trial(exp, trial, |_, e| rounds.push(e.round.clone()))?;
    Trajectory::new(rounds, info.realized, (info.s1, info.s2))
}

/// Running averages at one checkpoint. Regrets are per-round averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub t: u64,
    pub avg_u1: f64,
    pub avg_u2: f64,
    pub ext_regret1: f64,
    pub ext_regret2: f64,
    pub swap_regret1: f64,
    pub swap_regret2: f64,
}

/// Everything retained from one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub info: TrialInfo,
    pub checkpoints: Vec<CheckpointRow>,
    pub csp: Csp,
    /// For each player and own action, the fraction of tail-window rounds
    /// in which the player's policy put at least `tail_threshold` on it.
    pub tail_fractions: [Vec<f64>; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
}

impl TrialSummary {
    /// Row at the horizon.
    pub fn last(&self) -> &CheckpointRow {
        self.checkpoints.last().expect("at least one checkpoint")
    }

    pub fn avg_utility(&self, player: Player) -> f64 {
        match player {
            Player::P1 => self.last().avg_u1,
            Player::P2 => self.last().avg_u2,
        }
    }
}

pub fn summarize_trial(exp: &Experiment, trial: usize) -> Result<TrialSummary> {
    let cfg = &exp.config;
    let (n1, n2) = exp.prior.shape();
    let horizon = cfg.horizon;
    let tail_start = horizon - exp.tail_window + 1;
    let mut sums = [0.0f64; 2];
    let mut regret: Option<[RegretAccumulator; 2]> = None;
    let mut csp = CspAccumulator::new(n1, n2);
    let mut tail = [vec![0u64; n1], vec![0u64; n2]];
    let mut rows = Vec::with_capacity(exp.checkpoints.len());
    let mut next = exp.checkpoints.iter().peekable();
    let mut rounds = cfg
        .keep_trajectories
        .then(|| Vec::with_capacity(horizon as usize));
    let info = drive_trial(exp, trial, |info, e| {
        let meters = regret.get_or_insert_with(|| {
            let g = exp.prior.game(info.realized);
            [
                RegretAccumulator::new(g, Player::P1),
                RegretAccumulator::new(g, Player::P2),
            ]
        });
        let r = e.round;
        sums[0] += e.u1;
        sums[1] += e.u2;
        meters[0].add(&r.x, &r.y);
        meters[1].add(&r.y, &r.x);
        csp.add(&r.x, &r.y);
        if e.t >= tail_start {
            for p in Player::both() {
                for (c, q) in tail[p.index()].iter_mut().zip(r.policy(p).probs()) {
                    *c += (*q >= cfg.tail_threshold) as u64;
                }
            }
        }
        if next.peek() == Some(&&e.t) {
            next.next();
            let t = e.t as f64;
            let r1 = meters[0].report();
            let r2 = meters[1].report();
            rows.push(CheckpointRow {
                t: e.t,
                avg_u1: sums[0] / t,
                avg_u2: sums[1] / t,
                ext_regret1: r1.external_regret / t,
                ext_regret2: r2.external_regret / t,
                swap_regret1: r1.swap_regret / t,
                swap_regret2: r2.swap_regret / t,
            });
        }
        if let Some(v) = rounds.as_mut() {
            v.push(r.clone());
        }
    })?;
    let w = exp.tail_window as f64;
    let trajectory = match rounds {
        Some(r) => Some(Trajectory::new(r, info.realized, (info.s1, info.s2))?),
        None => None,
    };
    Ok(TrialSummary {
        info,
        checkpoints: rows,
        csp: csp.finish()?,
        tail_fractions: tail.map(|v| v.into_iter().map(|c| c as f64 / w).collect()),
        trajectory,
    })
}

/// Runs `f(trial)` for every trial on the configured pool, returning
/// results in trial order.
pub fn par_trials<T: Send>(
    exp: &Experiment,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let n = exp.config.trials;
    let run = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match exp.config.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

pub fn run_trials(exp: &Experiment) -> Result<Vec<TrialSummary>> {
    par_trials(exp, |k| summarize_trial(exp, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameEstimate {
    pub game: usize,
    pub name: String,
    pub trials: usize,
    pub u1: MeanCi,
    pub u2: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPairEstimate {
    pub s1: usize,
    pub s2: usize,
    pub trials: usize,
    pub u1: MeanCi,
    pub u2: MeanCi,
}

/// Cross-trial means of one checkpoint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: u64,
    pub avg_u1: f64,
    pub avg_u2: f64,
    pub ext_regret1: f64,
    pub ext_regret2: f64,
    pub swap_regret1: f64,
    pub swap_regret2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub window: u64,
    pub threshold: f64,
    /// Per player, per own action: mean fraction of tail rounds with
    /// policy mass at least `threshold` on that action.
    pub fractions: [Vec<MeanCi>; 2],
}

/// Monte-Carlo estimates over trials. 95% intervals use the normal
/// approximation across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub trials: usize,
    pub horizon: u64,
    /// Sample means of the per-trial average utilities.
    pub u1: MeanCi,
    pub u2: MeanCi,
    /// Per-game means weighted by the prior (post-stratified over the
    /// realized game); equals the sample mean when a game never occurs.
    pub u1_weighted: MeanCi,
    pub u2_weighted: MeanCi,
    pub by_game: Vec<GameEstimate>,
    pub by_signal_pair: Vec<SignalPairEstimate>,
    /// Per-round average regrets at the horizon, indexed by player.
    pub ext_regret: [MeanCi; 2],
    pub swap_regret: [MeanCi; 2],
    pub curves: Vec<CurvePoint>,
    pub tail: TailEstimate,
}

impl EstimateReport {
    pub fn utility(&self, player: Player) -> &MeanCi {
        match player {
            Player::P1 => &self.u1,
            Player::P2 => &self.u2,
        }
    }

    pub fn weighted_utility(&self, player: Player) -> &MeanCi {
        match player {
            Player::P1 => &self.u1_weighted,
            Player::P2 => &self.u2_weighted,
        }
    }

    pub fn game(&self, index: usize) -> Option<&GameEstimate> {
        self.by_game.iter().find(|g| g.game == index)
    }

    pub fn from_summaries(exp: &Experiment, summaries: &[TrialSummary]) -> Result<Self> {
        if summaries.is_empty() {
            return invalid("no trials to aggregate");
        }
        let column =
            |f: &dyn Fn(&TrialSummary) -> f64| summaries.iter().map(f).collect::<Vec<f64>>();
        let u1 = column(&|s| s.last().avg_u1);
        let u2 = column(&|s| s.last().avg_u2);
        let groups: Vec<usize> = summaries.iter().map(|s| s.info.realized).collect();
        let weights = exp.prior.weights();

        let mut by_game = Vec::new();
        for (k, g) in exp.prior.games().enumerate() {
            let idx: Vec<usize> = (0..summaries.len()).filter(|&i| groups[i] == k).collect();
            if idx.is_empty() {
                continue;
            }
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            by_game.push(GameEstimate {
                game: k,
                name: g.name().to_string(),
                trials: idx.len(),
                u1: MeanCi::from_samples(&pick(&u1)),
                u2: MeanCi::from_samples(&pick(&u2)),
            });
        }

        let mut pairs: Vec<(usize, usize)> =
            summaries.iter().map(|s| (s.info.s1, s.info.s2)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        let by_signal_pair = pairs
            .into_iter()
            .map(|(a, b)| {
                let idx: Vec<usize> = (0..summaries.len())
                    .filter(|&i| summaries[i].info.s1 == a && summaries[i].info.s2 == b)
                    .collect();
                let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
                SignalPairEstimate {
                    s1: a,
                    s2: b,
                    trials: idx.len(),
                    u1: MeanCi::from_samples(&pick(&u1)),
                    u2: MeanCi::from_samples(&pick(&u2)),
                }
            })
            .collect();

        let n_rows = summaries[0].checkpoints.len();
        let curves = (0..n_rows)
            .map(|j| {
                let mean = |f: &dyn Fn(&CheckpointRow) -> f64| {
                    summaries.iter().map(|s| f(&s.checkpoints[j])).sum::<f64>()
                        / summaries.len() as f64
                };
                CurvePoint {
                    t: summaries[0].checkpoints[j].t,
                    avg_u1: mean(&|r| r.avg_u1),
                    avg_u2: mean(&|r| r.avg_u2),
                    ext_regret1: mean(&|r| r.ext_regret1),
                    ext_regret2: mean(&|r| r.ext_regret2),
                    swap_regret1: mean(&|r| r.swap_regret1),
                    swap_regret2: mean(&|r| r.swap_regret2),
                }
            })
            .collect();

        let tail_fracs = |p: Player| {
            (0..exp.prior.num_actions(p))
                .map(|a| MeanCi::from_samples(&column(&|s| s.tail_fractions[p.index()][a])))
                .collect::<Vec<_>>()
        };

        Ok(EstimateReport {
            trials: summaries.len(),
            horizon: exp.config.horizon,
            u1_weighted: MeanCi::stratified(&u1, &groups, &weights),
            u2_weighted: MeanCi::stratified(&u2, &groups, &weights),
            u1: MeanCi::from_samples(&u1),
            u2: MeanCi::from_samples(&u2),
            by_game,
            by_signal_pair,
            ext_regret: [
                MeanCi::from_samples(&column(&|s| s.last().ext_regret1)),
                MeanCi::from_samples(&column(&|s| s.last().ext_regret2)),
            ],
            swap_regret: [
                MeanCi::from_samples(&column(&|s| s.last().swap_regret1)),
                MeanCi::from_samples(&column(&|s| s.last().swap_regret2)),
            ],
            curves,
            tail: TailEstimate {
                window: exp.tail_window,
                threshold: exp.config.tail_threshold,
                fractions: [tail_fracs(Player::P1), tail_fracs(Player::P2)],
            },
        })
    }
}

pub fn estimate(cfg: &ExperimentConfig) -> Result<EstimateReport> {
    let exp = Experiment::from_config(cfg)?;
    EstimateReport::from_summaries(&exp, &run_trials(&exp)?)
}

/// Average CSP of the trials with realized game `game` and player-2
/// signal `signal2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspBucket {
    pub game: usize,
    pub signal2: usize,
    pub trials: usize,
    pub csp: Csp,
    /// Per-cell intervals across the bucket's trials, row-major.
    pub cells: Vec<MeanCi>,
    pub masses: std::collections::BTreeMap<String, std::collections::BTreeMap<String, f64>>,
}

/// CSP of a realized game, mixed over player 2's signal with weights
/// `phi_p2(j | game)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspMixture {
    pub game: usize,
    pub weights: Vec<f64>,
    pub csp: Csp,
    pub cells: Vec<MeanCi>,
    pub masses: std::collections::BTreeMap<String, std::collections::BTreeMap<String, f64>>,
}

impl CspMixture {
    pub fn cell(&self, a1: usize, a2: usize) -> &MeanCi {
        &self.cells[a1 * self.csp.shape().1 + a2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspReport {
    pub overall: Csp,
    pub by_signal_pair: Vec<CspBucket>,
    /// Indexed by game; `None` when a bucket the mixture needs is empty.
    pub by_game: Vec<Option<CspMixture>>,
}

impl CspReport {
    pub fn bucket(&self, game: usize, signal2: usize) -> Option<&CspBucket> {
        self.by_signal_pair
            .iter()
            .find(|b| b.game == game && b.signal2 == signal2)
    }

    pub fn from_summaries(exp: &Experiment, summaries: &[TrialSummary]) -> Result<Self> {
        if summaries.is_empty() {
            return invalid("no trials to aggregate");
        }
        let prior = &exp.prior;
        let (n1, n2) = prior.shape();
        let cells = n1 * n2;
        let average = |idx: &[usize]| -> Result<(Csp, Vec<MeanCi>)> {
            let stats: Vec<MeanCi> = (0..cells)
                .map(|c| {
                    MeanCi::from_samples(
                        &idx.iter()
                            .map(|&i| summaries[i].csp.cells()[c])
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            Ok((
                Csp::new(n1, n2, normalize(stats.iter().map(|m| m.mean).collect()))?,
                stats,
            ))
        };
        let all: Vec<usize> = (0..summaries.len()).collect();
        let (overall, _) = average(&all)?;

        let mut buckets = Vec::new();
        for g in 0..prior.len() {
            for j in 0..prior.len() {
                let idx: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|&i| summaries[i].info.realized == g && summaries[i].info.s2 == j)
                    .collect();
                if idx.is_empty() {
                    continue;
                }
                let (csp, stats) = average(&idx)?;
                buckets.push(CspBucket {
                    game: g,
                    signal2: j,
                    trials: idx.len(),
                    masses: csp.labelled(prior.game(g)),
                    csp,
                    cells: stats,
                });
            }
        }

        let p2 = exp.config.signal_model.precision(Player::P2);
        let mut by_game = Vec::with_capacity(prior.len());
        for g in 0..prior.len() {
            let weights: Vec<f64> = (0..prior.len())
                .map(|j| prior.signal_likelihood(j, g, p2))
                .collect();
            let parts: Option<Vec<(f64, &CspBucket)>> = weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(j, w)| {
                    buckets
                        .iter()
                        .find(|b| b.game == g && b.signal2 == j)
                        .map(|b| (*w, b))
                })
                .collect();
            by_game.push(match parts {
                None => None,
                Some(parts) => {
                    let n: usize = parts.iter().map(|(_, b)| b.trials).sum();
                    let stats: Vec<MeanCi> = (0..cells)
                        .map(|c| {
                            let mean: f64 = parts.iter().map(|(w, b)| w * b.cells[c].mean).sum();
                            let var: f64 = parts
                                .iter()
                                .map(|(w, b)| (w * b.cells[c].se()).powi(2))
                                .sum();
                            MeanCi::from_mean_se(mean, var.sqrt(), n)
                        })
                        .collect();
                    let csp = Csp::new(n1, n2, normalize(stats.iter().map(|m| m.mean).collect()))?;
                    Some(CspMixture {
                        game: g,
                        weights: weights.clone(),
                        masses: csp.labelled(prior.game(g)),
                        csp,
                        cells: stats,
                    })
                }
            });
        }
        Ok(CspReport {
            overall,
            by_signal_pair: buckets,
            by_game,
        })
    }
}

/// Removes floating-point drift so the cells sum to one.
fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x = x.max(0.0) / total);
    }
    v
}

pub fn estimate_csps(cfg: &ExperimentConfig) -> Result<CspReport> {
    let exp = Experiment::from_config(cfg)?;
    CspReport::from_summaries(&exp, &run_trials(&exp)?)
}

/// Writes one CSV row per (trial, checkpoint).
pub fn write_csv<W: Write>(out: &mut W, summaries: &[TrialSummary]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in summaries {
        for r in &s.checkpoints {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.info.trial,
                s.info.realized,
                s.info.s1,
                s.info.s2,
                r.t,
                r.avg_u1,
                r.avg_u2,
                r.ext_regret1,
                r.ext_regret2,
                r.swap_regret1,
                r.swap_regret2
            )?;
        }
    }
    Ok(())
}

/// The realized game of a trial.
pub fn realized_game<'a>(exp: &'a Experiment, info: &TrialInfo) -> &'a GameMatrix {
    exp.prior.game(info.realized)
}
