use serde::{Deserialize, Serialize};

use crate::game::{Player, Prior};
use crate::learners::LearnerSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub label: String,
    pub spec: LearnerSpec,
}

/// Alternative learners each player may switch to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationLibrary {
    pub player1: Vec<Deviation>,
    pub player2: Vec<Deviation>,
}

impl DeviationLibrary {
    /// Mimic deviations of the current learner for every signal, then the
    /// Stackelberg leader, the best responder, the inferring follower
    /// (player 2 only) and every constant action.
    pub fn standard(prior: &Prior, spec1: &LearnerSpec, spec2: &LearnerSpec) -> Self {
        let build = |player: Player, current: &LearnerSpec| {
            let base = match current {
                LearnerSpec::MimicDeviation { base, .. } => base.as_ref().clone(),
                other => other.clone(),
            };
            let mut out: Vec<Deviation> = (0..prior.len())
                .map(|j| Deviation {
                    label: format!("mimic:{}", prior.game(j).name()),
                    spec: LearnerSpec::mimic(base.clone(), j),
                })
                .collect();
            out.push(Deviation {
                label: "stackelberg_leader".into(),
                spec: LearnerSpec::stackelberg_leader(),
            });
            out.push(Deviation {
                label: "best_responder".into(),
                spec: LearnerSpec::BestResponder {},
            });
            if player == Player::P2 {
                out.push(Deviation {
                    label: "infer_then_commit_follower".into(),
                    spec: LearnerSpec::InferThenCommitFollower {},
                });
            }
            let labels = prior.game(0).labels(player);
            out.extend(labels.iter().enumerate().map(|(a, l)| Deviation {
                label: format!("const:{l}"),
                spec: LearnerSpec::ConstantAction { action: a },
            }));
            out
        };
        DeviationLibrary {
            player1: build(Player::P1, spec1),
            player2: build(Player::P2, spec2),
        }
    }

    pub fn for_player(&self, player: Player) -> &[Deviation] {
        match player {
            Player::P1 => &self.player1,
            Player::P2 => &self.player2,
        }
    }

    /// Library with a single deviation for one player.
    pub fn single(player: Player, deviation: Deviation) -> Self {
        let (a, b) = match player {
            Player::P1 => (vec![deviation], vec![]),
            Player::P2 => (vec![], vec![deviation]),
        };
        DeviationLibrary {
            player1: a,
            player2: b,
        }
    }
}
