//! Regret meters over played trajectories.
//!
//! Both meters keep the running matrix `M[a][b] = sum_t x_t[a] * U(b, opp_t)`:
//! the utility that would have been earned by playing `b` whenever `a` was
//! played. External regret compares against a constant replacement, swap
//! regret against the best replacement chosen per action.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::game::{GameMatrix, MixedStrategy, Player, Trajectory};

/// Cumulative (not per-round) regrets of one player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub external_regret: f64,
    pub swap_regret: f64,
    /// Best replacement for each own action; unplayed actions map to
    /// themselves.
    pub swap_targets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RegretAccumulator {
    game: GameMatrix,
    player: Player,
    n: usize,
    m: Vec<f64>,
    rounds: u64,
}

impl RegretAccumulator {
    pub fn new(game: &GameMatrix, player: Player) -> Self {
        let n = game.num_actions(player);
        RegretAccumulator {
            game: game.clone(),
            player,
            n,
            m: vec![0.0; n * n],
            rounds: 0,
        }
    }

    pub fn add(&mut self, own: &MixedStrategy, opponent: &MixedStrategy) {
        let payoff = self.game.payoff_vector(self.player, opponent);
        for (a, &xa) in own.probs().iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            let row = &mut self.m[a * self.n..(a + 1) * self.n];
            row.iter_mut().zip(&payoff).for_each(|(c, u)| *c += xa * u);
        }
        self.rounds += 1;
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    fn realized(&self) -> f64 {
        (0..self.n).map(|a| self.m[a * self.n + a]).sum()
    }

    pub fn external(&self) -> f64 {
        let best = (0..self.n)
            .map(|b| (0..self.n).map(|a| self.m[a * self.n + b]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        best - self.realized()
    }

    pub fn swap(&self) -> f64 {
        self.report().swap_regret
    }

    pub fn report(&self) -> RegretReport {
        let mut swap = 0.0;
        let mut targets = Vec::with_capacity(self.n);
        for a in 0..self.n {
            let row = &self.m[a * self.n..(a + 1) * self.n];
            let stay = row[a];
            let mut target = a;
            let mut best = stay;
            for (b, &v) in row.iter().enumerate() {
                if v > best + 1e-12 {
                    best = v;
                    target = b;
                }
            }
            swap += best - stay;
            targets.push(target);
        }
        RegretReport {
            external_regret: self.external(),
            swap_regret: swap,
            swap_targets: targets,
        }
    }
}

fn accumulate(traj: &Trajectory, g: &GameMatrix, player: Player) -> Result<RegretAccumulator> {
    let mut acc = RegretAccumulator::new(g, player);
    for r in &traj.rounds {
        if r.x.len() != g.n1() || r.y.len() != g.n2() {
            return invalid(format!(
                "trajectory shape {}x{} does not match game {}x{}",
                r.x.len(),
                r.y.len(),
                g.n1(),
                g.n2()
            ));
        }
        acc.add(r.strategy(player), r.strategy(player.other()));
    }
    Ok(acc)
}

/// Cumulative external regret of `player` in `g` over the trajectory.
pub fn external_regret(traj: &Trajectory, g: &GameMatrix, player: Player) -> Result<f64> {
    Ok(accumulate(traj, g, player)?.external())
}

/// Cumulative external and swap regret with the optimal swap function.
pub fn swap_regret(traj: &Trajectory, g: &GameMatrix, player: Player) -> Result<RegretReport> {
    Ok(accumulate(traj, g, player)?.report())
}
