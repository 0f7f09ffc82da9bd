use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::game::{Player, Prior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRevelation {
    pub action: usize,
    pub label: String,
    /// Per game, the closed range of own utilities over opponent actions.
    pub ranges: Vec<[f64; 2]>,
    /// The ranges are pairwise disjoint, so one round of own-utility
    /// feedback identifies the game.
    pub revealing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevelationReport {
    pub player: Player,
    pub games: Vec<String>,
    pub actions: Vec<ActionRevelation>,
    pub any_revealing: bool,
}

impl RevelationReport {
    pub fn action(&self, label: &str) -> Option<&ActionRevelation> {
        self.actions.iter().find(|a| a.label == label)
    }
}

pub fn revelation_analysis(prior: &Prior, player: Player) -> Result<RevelationReport> {
    if prior.len() < 2 {
        return invalid("revelation analysis needs at least two games");
    }
    let n = prior.num_actions(player);
    let m = prior.num_actions(player.other());
    let actions: Vec<ActionRevelation> = (0..n)
        .map(|a| {
            let ranges: Vec<[f64; 2]> = prior
                .games()
                .map(|g| {
                    let us = (0..m).map(|b| g.u_own(player, a, b));
                    let lo = us.clone().fold(f64::INFINITY, f64::min);
                    let hi = us.fold(f64::NEG_INFINITY, f64::max);
                    [lo, hi]
                })
                .collect();
            let revealing = (0..ranges.len()).all(|i| {
                (i + 1..ranges.len())
                    .all(|j| ranges[i][1] < ranges[j][0] || ranges[j][1] < ranges[i][0])
            });
            ActionRevelation {
                action: a,
                label: prior.game(0).labels(player)[a].clone(),
                ranges,
                revealing,
            }
        })
        .collect();
    Ok(RevelationReport {
        player,
        games: prior.games().map(|g| g.name().to_string()).collect(),
        any_revealing: actions.iter().any(|a| a.revealing),
        actions,
    })
}
