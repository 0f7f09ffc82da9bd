//! Best responses, optimistic Stackelberg commitments, weak dominance and
//! the margin-perturbed commitment that makes the follower's response
//! strictly unique.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameMatrix, MixedStrategy, Player, Prior};
use crate::lp::{LinearProgram, LpStatus};

/// Default width of the tie band for best-response sets.
pub const DEFAULT_TIE_TOL: f64 = 1e-7;
/// Dominance decision boundary on the max-min slack.
pub const DOMINANCE_TOL: f64 = 1e-9;

/// Actions of `responder` within `tie_tol` of the best reply to `opponent`.
pub fn best_response_set(
    g: &GameMatrix,
    responder: Player,
    opponent: &MixedStrategy,
    tie_tol: f64,
) -> Result<Vec<usize>> {
    g.check_strategy(responder.other(), opponent)?;
    if !(tie_tol >= 0.0) {
        return Err(Error::InvalidArgument("tie_tol must be nonnegative".into()));
    }
    let payoffs = g.payoff_vector(responder, opponent);
    let best = payoffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(payoffs
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= best - tie_tol)
        .map(|(a, _)| a)
        .collect())
}

/// Lowest-index best reply.
pub fn best_response(g: &GameMatrix, responder: Player, opponent: &MixedStrategy) -> Result<usize> {
    Ok(best_response_set(g, responder, opponent, DEFAULT_TIE_TOL)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackelbergSolution {
    pub leader: Player,
    pub value: f64,
    pub leader_strategy: MixedStrategy,
    pub follower_action: usize,
    /// Best leader value when the follower is induced to play each action;
    /// `None` marks actions that are never a best response.
    pub per_follower_action_values: Vec<Option<f64>>,
}

/// Leader utility and follower incentive of leader action `i` against
/// follower action `j`.
fn leader_follower_utils(g: &GameMatrix, leader: Player, i: usize, j: usize) -> (f64, f64) {
    let follower = leader.other();
    (g.u_own(leader, i, j), g.u_own(follower, j, i))
}

/// Best commitment that keeps `target` in the follower's best-response set.
fn commitment_lp(
    g: &GameMatrix,
    leader: Player,
    target: usize,
) -> Result<Option<(f64, MixedStrategy)>> {
    let n = g.num_actions(leader);
    let m = g.num_actions(leader.other());
    let objective = (0..n)
        .map(|i| leader_follower_utils(g, leader, i, target).0)
        .collect();
    let mut lp = LinearProgram::maximize(objective);
    lp.eq(vec![1.0; n], 1.0);
    for other in (0..m).filter(|&j| j != target) {
        let coeffs = (0..n)
            .map(|i| {
                leader_follower_utils(g, leader, i, other).1
                    - leader_follower_utils(g, leader, i, target).1
            })
            .collect();
        lp.le(coeffs, 0.0);
    }
    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => {
            let x = MixedStrategy::normalized(sol.x)?;
            let value = (0..n)
                .map(|i| x.probs()[i] * leader_follower_utils(g, leader, i, target).0)
                .sum();
            Ok(Some((value, x)))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Solver(
            "bounded commitment LP reported unbounded".into(),
        )),
    }
}

/// Optimistic Stackelberg value with `leader` committing first: one LP per
/// follower action, keeping the best.
pub fn stackelberg_value(g: &GameMatrix, leader: Player) -> Result<StackelbergSolution> {
    let m = g.num_actions(leader.other());
    let mut per_action = Vec::with_capacity(m);
    let mut best: Option<(f64, MixedStrategy, usize)> = None;
    for j in 0..m {
        match commitment_lp(g, leader, j)? {
            Some((value, x)) => {
                per_action.push(Some(value));
                if best.as_ref().is_none_or(|(bv, _, _)| value > *bv + 1e-12) {
                    best = Some((value, x, j));
                }
            }
            None => per_action.push(None),
        }
    }
    let (value, leader_strategy, follower_action) = best.ok_or_else(|| {
        Error::Solver(format!(
            "no follower action is ever a best response in {}",
            g.name()
        ))
    })?;
    Ok(StackelbergSolution {
        leader,
        value,
        leader_strategy,
        follower_action,
        per_follower_action_values: per_action,
    })
}

/// Prior-weighted average of per-game Stackelberg values.
pub fn stackval_prior(prior: &Prior, player: Player) -> Result<f64> {
    let mut total = 0.0;
    for (i, g) in prior.games().enumerate() {
        total += prior.weight(i) * stackelberg_value(g, player)?.value;
    }
    Ok(total)
}

/// Value `player` can guarantee with a mixed strategy against any reply.
pub fn maximin_value(g: &GameMatrix, player: Player) -> Result<(f64, MixedStrategy)> {
    let n = g.num_actions(player);
    let m = g.num_actions(player.other());
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    lp.set_lower(n, None);
    let mut simplex = vec![1.0; n + 1];
    simplex[n] = 0.0;
    lp.eq(simplex, 1.0);
    for j in 0..m {
        let mut coeffs: Vec<f64> = (0..n).map(|i| -g.u_own(player, i, j)).collect();
        coeffs.push(1.0);
        lp.le(coeffs, 0.0);
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver("maximin LP not optimal".into()));
    }
    let x = MixedStrategy::normalized(sol.x[..n].to_vec())?;
    Ok((sol.x[n], x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub dominated: bool,
    /// Best achievable worst-case advantage of a mixture of the other
    /// actions over `action`.
    pub max_min_slack: Option<f64>,
    /// Mixture over all of the player's actions (zero on `action`).
    pub witness: Option<MixedStrategy>,
}

/// Whether some mixture of the player's other actions matches or beats
/// `action` against every opponent action.
pub fn weakly_dominated(g: &GameMatrix, player: Player, action: usize) -> Result<DominanceCheck> {
    g.check_action(player, action)?;
    let n = g.num_actions(player);
    if n == 1 {
        return Ok(DominanceCheck {
            dominated: false,
            max_min_slack: None,
            witness: None,
        });
    }
    let m = g.num_actions(player.other());
    let others: Vec<usize> = (0..n).filter(|&k| k != action).collect();
    let k = others.len();
    let mut objective = vec![0.0; k + 1];
    objective[k] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    lp.set_lower(k, None);
    let mut simplex = vec![1.0; k + 1];
    simplex[k] = 0.0;
    lp.eq(simplex, 1.0);
    for j in 0..m {
        // slack <= sum_w w * (U(other, j) - U(action, j))
        let mut coeffs: Vec<f64> = others
            .iter()
            .map(|&o| -(g.u_own(player, o, j) - g.u_own(player, action, j)))
            .collect();
        coeffs.push(1.0);
        lp.le(coeffs, 0.0);
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver("dominance LP not optimal".into()));
    }
    let slack = sol.x[k];
    let dominated = slack >= -DOMINANCE_TOL;
    let witness = if dominated {
        let mut full = vec![0.0; n];
        for (w, &o) in sol.x[..k].iter().zip(&others) {
            full[o] = *w;
        }
        Some(MixedStrategy::normalized(full)?)
    } else {
        None
    };
    Ok(DominanceCheck {
        dominated,
        max_min_slack: Some(slack),
        witness,
    })
}

/// Ingredients of the perturbed commitment, independent of `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitmentPlan {
    pub leader: Player,
    pub stackelberg: StackelbergSolution,
    /// Leader strategy maximizing the follower's strict preference for the
    /// target response.
    pub margin_strategy: MixedStrategy,
    /// Preference margin achieved by `margin_strategy`; infinite when the
    /// follower has a single action.
    pub margin: f64,
}

impl CommitmentPlan {
    pub fn new(g: &GameMatrix, leader: Player) -> Result<Self> {
        let stackelberg = stackelberg_value(g, leader)?;
        let target = stackelberg.follower_action;
        let n = g.num_actions(leader);
        let m = g.num_actions(leader.other());
        if m == 1 {
            return Ok(CommitmentPlan {
                leader,
                margin_strategy: stackelberg.leader_strategy.clone(),
                stackelberg,
                margin: f64::INFINITY,
            });
        }
        // max c s.t. U_f(x, target) - U_f(x, j) >= c for j != target.
        let mut objective = vec![0.0; n + 1];
        objective[n] = 1.0;
        let mut lp = LinearProgram::maximize(objective);
        lp.set_lower(n, None);
        let mut simplex = vec![1.0; n + 1];
        simplex[n] = 0.0;
        lp.eq(simplex, 1.0);
        for j in (0..m).filter(|&j| j != target) {
            let mut coeffs: Vec<f64> = (0..n)
                .map(|i| {
                    leader_follower_utils(g, leader, i, j).1
                        - leader_follower_utils(g, leader, i, target).1
                })
                .collect();
            coeffs.push(1.0);
            lp.le(coeffs, 0.0);
        }
        let sol = lp.solve()?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Solver("margin LP not optimal".into()));
        }
        let margin = sol.x[n];
        if margin <= DOMINANCE_TOL {
            return Err(Error::AssumptionViolated(format!(
                "follower action {} of {} is weakly dominated (best margin {margin:.3e})",
                g.labels(leader.other())[target],
                g.name()
            )));
        }
        Ok(CommitmentPlan {
            leader,
            margin_strategy: MixedStrategy::normalized(sol.x[..n].to_vec())?,
            stackelberg,
            margin,
        })
    }

    pub fn follower_action(&self) -> usize {
        self.stackelberg.follower_action
    }

    /// `(1 - delta) x* + delta x̄` and the guaranteed margin `delta * c`.
    pub fn at(&self, delta: f64) -> Result<(MixedStrategy, f64)> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta {delta} outside (0, 1]"
            )));
        }
        let s = self
            .stackelberg
            .leader_strategy
            .blend(&self.margin_strategy, delta)?;
        Ok((s, delta * self.margin))
    }
}

/// Commitment close to the Stackelberg strategy under which the
/// Stackelberg follower response is the strict unique best response.
pub fn perturbed_commitment(
    g: &GameMatrix,
    leader: Player,
    delta: f64,
) -> Result<(MixedStrategy, f64)> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} outside (0, 1]"
        )));
    }
    CommitmentPlan::new(g, leader)?.at(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{fig1_g1, fig1_g2};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn best_response_examples() {
        let g1 = fig1_g1(1.0);
        let a = MixedStrategy::pure(2, 0);
        assert_eq!(
            best_response_set(&g1, Player::P2, &a, DEFAULT_TIE_TOL).unwrap(),
            vec![0]
        );
        let g2 = fig1_g2(1.0);
        let d = MixedStrategy::pure(2, 1);
        assert_eq!(
            best_response_set(&g2, Player::P1, &d, DEFAULT_TIE_TOL).unwrap(),
            vec![1]
        );
        let single =
            GameMatrix::from_rows("s", vec![vec![1.0, 2.0]], vec![vec![0.0, 0.0]]).unwrap();
        let y = MixedStrategy::uniform(2);
        assert_eq!(
            best_response_set(&single, Player::P1, &y, 0.0).unwrap(),
            vec![0]
        );
        // Ties within the band are all returned.
        let tie =
            GameMatrix::from_rows("t", vec![vec![1.0], vec![1.0]], vec![vec![0.0], vec![0.0]])
                .unwrap();
        let one = MixedStrategy::pure(1, 0);
        assert_eq!(
            best_response_set(&tie, Player::P1, &one, 0.0).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn stackelberg_fig1() {
        let g1 = fig1_g1(1.0);
        let s = stackelberg_value(&g1, Player::P2).unwrap();
        assert!(close(s.value, 1.0));
        assert_eq!(s.leader_strategy.probs(), &[1.0, 0.0]);
        assert_eq!(s.follower_action, 0);
        assert_eq!(s.per_follower_action_values[1], None);

        let g2 = fig1_g2(1.0);
        let s = stackelberg_value(&g2, Player::P2).unwrap();
        assert!(close(s.value, 2.0));
        assert_eq!(s.leader_strategy.probs(), &[0.0, 1.0]);
        assert_eq!(s.follower_action, 1);

        let s = stackelberg_value(&g1, Player::P1).unwrap();
        assert!(close(s.value, 16.0));
        assert_eq!(s.leader_strategy.probs(), &[1.0, 0.0]);
        assert_eq!(s.follower_action, 0);

        let s = stackelberg_value(&g2, Player::P1).unwrap();
        assert!(close(s.value, 1.0));
        assert_eq!(s.follower_action, 0);
    }

    #[test]
    fn stackval_prior_fig1() {
        let prior = crate::builtin::fig1_prior(1.0);
        assert!(close(stackval_prior(&prior, Player::P2).unwrap(), 1.5));
        assert!(close(stackval_prior(&prior, Player::P1).unwrap(), 8.5));
        let single = Prior::single(fig1_g2(1.0));
        assert!(close(stackval_prior(&single, Player::P2).unwrap(), 2.0));
    }

    #[test]
    fn dominance_examples() {
        let g1 = fig1_g1(1.0);
        assert!(!weakly_dominated(&g1, Player::P2, 1).unwrap().dominated);
        let g2 = fig1_g2(1.0);
        assert!(!weakly_dominated(&g2, Player::P1, 1).unwrap().dominated);
        let dup = GameMatrix::from_rows(
            "dup",
            vec![vec![1.0, 3.0], vec![1.0, 3.0], vec![0.0, 5.0]],
            vec![vec![0.0; 2]; 3],
        )
        .unwrap();
        for a in 0..2 {
            let d = weakly_dominated(&dup, Player::P1, a).unwrap();
            assert!(d.dominated);
            assert_eq!(d.witness.unwrap().probs()[a], 0.0);
        }
        let single =
            GameMatrix::from_rows("s", vec![vec![1.0, 2.0]], vec![vec![0.0, 0.0]]).unwrap();
        assert!(!weakly_dominated(&single, Player::P1, 0).unwrap().dominated);
        assert!(weakly_dominated(&single, Player::P1, 1).is_err());
    }

    #[test]
    fn mixture_domination_is_detected() {
        // Middle row is beaten by the half-half mix of the outer rows.
        let g = GameMatrix::from_rows(
            "mix",
            vec![vec![4.0, 0.0], vec![1.9, 1.9], vec![0.0, 4.0]],
            vec![vec![0.0; 2]; 3],
        )
        .unwrap();
        let d = weakly_dominated(&g, Player::P1, 1).unwrap();
        assert!(d.dominated);
        assert!(close(d.max_min_slack.unwrap(), 0.1));
    }

    #[test]
    fn perturbed_commitment_examples() {
        let g1 = fig1_g1(1.0);
        let (s, m) = perturbed_commitment(&g1, Player::P1, 0.1).unwrap();
        assert_eq!(s.probs(), &[1.0, 0.0]);
        assert!(close(m, 3.3));

        let g2 = fig1_g2(1.0);
        let (s, m) = perturbed_commitment(&g2, Player::P2, 0.05).unwrap();
        assert_eq!(s.probs(), &[0.0, 1.0]);
        assert!(close(m, 0.005));

        let plan = CommitmentPlan::new(&g2, Player::P2).unwrap();
        let (s, _) = plan.at(1.0).unwrap();
        assert_eq!(s, plan.margin_strategy);
        assert!(perturbed_commitment(&g1, Player::P1, 0.0).is_err());
        assert!(perturbed_commitment(&g1, Player::P1, 1.5).is_err());
    }

    #[test]
    fn perturbed_commitment_rejects_dominated_target() {
        // Follower's column 0 duplicates column 1 for the follower, so the
        // target response can never be made strict.
        let g = GameMatrix::from_rows(
            "dom",
            vec![vec![5.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        assert!(matches!(
            perturbed_commitment(&g, Player::P1, 0.1),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn maximin_matching_pennies() {
        let g = GameMatrix::from_rows(
            "mp",
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
        )
        .unwrap();
        let (v, x) = maximin_value(&g, Player::P1).unwrap();
        assert!(close(v, 0.0));
        assert!(close(x.probs()[0], 0.5));
    }
}
