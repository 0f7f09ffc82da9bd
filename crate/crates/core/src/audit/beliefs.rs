use serde::{Deserialize, Serialize};

use crate::engine::{drive_trial, par_trials, Experiment, ExperimentConfig};
use crate::error::{invalid, Result};
use crate::game::{argmax_first, bilinear, GameMatrix, MixedStrategy, Player, Prior};
use crate::learners::FeedbackMode;
use crate::solve::stackelberg_value;

const CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefKind {
    /// Nearest game, in L1, whose follower response to the holder's
    /// Stackelberg commitment matches the opponent's average strategy.
    NearestBestResponse,
    /// Prior mode among the games consistent with every observed utility.
    UtilityLikelihood,
    /// The holder's latest external signal.
    ExternalSignal,
}

impl std::str::FromStr for BeliefKind {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest_best_response" => Ok(BeliefKind::NearestBestResponse),
            "utility_likelihood" => Ok(BeliefKind::UtilityLikelihood),
            "external_signal" => Ok(BeliefKind::ExternalSignal),
            _ => invalid(format!("unknown belief kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefPoint {
    pub t: u64,
    /// Fraction of trials whose belief at round `t` is not the realized game.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefTraceReport {
    pub kind: BeliefKind,
    pub player: Player,
    pub tau: f64,
    pub trials: usize,
    pub checkpoints: Vec<BeliefPoint>,
    pub final_error: f64,
    /// Last round in which some trial's belief was wrong.
    pub last_error_round: Option<u64>,
    pub success: bool,
}

/// Belief state of one holder within one trial.
enum Tracker {
    Nearest {
        responses: Vec<usize>,
        mode: usize,
        sum: Vec<f64>,
        rounds: u64,
    },
    Likelihood {
        games: Vec<GameMatrix>,
        weights: Vec<f64>,
        consistent: Vec<bool>,
        exact: bool,
    },
    External,
}

impl Tracker {
    fn new(
        kind: BeliefKind,
        prior: &Prior,
        holder: Player,
        feedback: FeedbackMode,
    ) -> Result<Self> {
        Ok(match kind {
            BeliefKind::NearestBestResponse => Tracker::Nearest {
                responses: prior
                    .games()
                    .map(|g| Ok(stackelberg_value(g, holder)?.follower_action))
                    .collect::<Result<_>>()?,
                mode: prior.mode(),
                sum: vec![0.0; prior.num_actions(holder.other())],
                rounds: 0,
            },
            BeliefKind::UtilityLikelihood => Tracker::Likelihood {
                games: prior.games().cloned().collect(),
                weights: prior.weights(),
                consistent: vec![true; prior.len()],
                exact: feedback == FeedbackMode::Full,
            },
            BeliefKind::ExternalSignal => Tracker::External,
        })
    }

    /// Belief before round `t` is played.
    fn belief(&self) -> Option<usize> {
        match self {
            Tracker::Nearest {
                responses,
                mode,
                sum,
                rounds,
            } => {
                if *rounds == 0 {
                    return Some(*mode);
                }
                let avg: Vec<f64> = sum.iter().map(|s| s / *rounds as f64).collect();
                Some(nearest_response(&avg, responses, *mode))
            }
            Tracker::Likelihood {
                weights,
                consistent,
                ..
            } => {
                let any = consistent.iter().any(|c| *c);
                let scores: Vec<f64> = weights
                    .iter()
                    .zip(consistent)
                    .map(|(w, c)| if *c || !any { *w } else { f64::NEG_INFINITY })
                    .collect();
                Some(argmax_first(&scores))
            }
            Tracker::External => None,
        }
    }

    fn update(&mut self, holder: Player, own: &MixedStrategy, opp: &MixedStrategy, u: f64) {
        match self {
            Tracker::Nearest { sum, rounds, .. } => {
                sum.iter_mut().zip(opp.probs()).for_each(|(s, p)| *s += p);
                *rounds += 1;
            }
            Tracker::Likelihood {
                games,
                consistent,
                exact,
                ..
            } => {
                for (g, c) in games.iter().zip(consistent.iter_mut()) {
                    if *c {
                        *c = consistent_with(g, holder, own, opp, u, *exact);
                    }
                }
            }
            Tracker::External => {}
        }
    }
}

/// Index of the response whose one-hot vector is nearest to `avg` in L1;
/// ties go to `mode` when it is among the nearest, else the lowest index.
pub(crate) fn nearest_response(avg: &[f64], responses: &[usize], mode: usize) -> usize {
    let dist: Vec<f64> = responses
        .iter()
        .map(|&r| {
            avg.iter()
                .enumerate()
                .map(|(b, v)| (v - if b == r { 1.0 } else { 0.0 }).abs())
                .sum()
        })
        .collect();
    let best = dist.iter().cloned().fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = (0..dist.len())
        .filter(|&k| dist[k] <= best + 1e-12)
        .collect();
    if tied.contains(&mode) {
        mode
    } else {
        tied[0]
    }
}

fn consistent_with(
    g: &GameMatrix,
    holder: Player,
    own: &MixedStrategy,
    opp: &MixedStrategy,
    u: f64,
    exact: bool,
) -> bool {
    let value = |o: &[f64]| match holder {
        Player::P1 => bilinear(g, own.probs(), o, Player::P1),
        Player::P2 => bilinear(g, o, own.probs(), Player::P2),
    };
    if exact {
        (value(opp.probs()) - u).abs() <= CONSISTENCY_TOL
    } else {
        let m = opp.len();
        let (lo, hi) = (0..m)
            .map(|b| value(MixedStrategy::pure(m, b).probs()))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        u >= lo - CONSISTENCY_TOL && u <= hi + CONSISTENCY_TOL
    }
}

/// Per-checkpoint probability, across trials, that `player`'s belief about
/// the realized game is wrong. Succeeds when the error at the horizon is
/// at most `tau`.
pub fn belief_trace(
    cfg: &ExperimentConfig,
    kind: BeliefKind,
    player: Player,
    tau: f64,
) -> Result<BeliefTraceReport> {
    if !(0.0..=1.0).contains(&tau) {
        return invalid("tau must lie in [0, 1]");
    }
    let exp = Experiment::from_config(cfg)?;
    if kind == BeliefKind::NearestBestResponse && exp.prior.len() != 2 {
        return invalid("nearest_best_response classifies between exactly two games");
    }
    let per_trial = par_trials(&exp, |trial| {
        let mut tracker = Tracker::new(kind, &exp.prior, player, cfg.feedback_mode)?;
        let mut wrong_at = Vec::with_capacity(exp.checkpoints.len());
        let mut last_wrong = None;
        let mut next = exp.checkpoints.iter().peekable();
        let mut missing_signal = false;
        drive_trial(&exp, trial, |info, e| {
            let belief = match tracker.belief() {
                Some(b) => b,
                None => e.round.side_signals[player.index()].unwrap_or_else(|| {
                    missing_signal = true;
                    usize::MAX
                }),
            };
            let wrong = belief != info.realized;
            if wrong {
                last_wrong = Some(e.t);
            }
            if next.peek() == Some(&&e.t) {
                next.next();
                wrong_at.push(wrong);
            }
            tracker.update(
                player,
                e.round.strategy(player),
                e.round.strategy(player.other()),
                e.utility(player),
            );
        })?;
        if missing_signal {
            return invalid(format!(
                "player {} receives no external signal",
                player.number()
            ));
        }
        Ok((wrong_at, last_wrong))
    })?;
    let n = per_trial.len() as f64;
    let checkpoints: Vec<BeliefPoint> = exp
        .checkpoints
        .iter()
        .enumerate()
        .map(|(j, &t)| BeliefPoint {
            t,
            error: per_trial.iter().filter(|(w, _)| w[j]).count() as f64 / n,
        })
        .collect();
    let final_error = checkpoints.last().map_or(0.0, |p| p.error);
    Ok(BeliefTraceReport {
        kind,
        player,
        tau,
        trials: per_trial.len(),
        last_error_round: per_trial.iter().filter_map(|(_, l)| *l).max(),
        success: final_error <= tau,
        final_error,
        checkpoints,
    })
}
