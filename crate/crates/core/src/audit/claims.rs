use serde::{Deserialize, Serialize};

use super::pne::deviation_gain;
use crate::builtin::{fig1_g1, fig1_g2, gamma_for_threshold};
use crate::engine::{run_trials, CspReport, EstimateReport, Experiment, ExperimentConfig};
use crate::error::{invalid, Result};
use crate::game::{GameMatrix, Player};
use crate::learners::LearnerSpec;
use crate::solve::stackval_prior;
use crate::stats::MeanCi;

pub const DEFAULT_CLAIMS_TOL: f64 = 0.05;

/// One inequality on an estimated CSP mass, judged by a one-sided 95%
/// bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    /// `None` when a signal bucket the mass depends on never occurred.
    pub estimate: Option<MeanCi>,
    /// `"<="` or `">="`.
    pub relation: String,
    pub threshold: f64,
    pub holds: bool,
}

impl ClaimCheck {
    fn at_most(estimate: Option<MeanCi>, threshold: f64) -> Self {
        let holds = estimate.is_some_and(|m| m.upper_bound() <= threshold);
        ClaimCheck {
            estimate,
            relation: "<=".into(),
            threshold,
            holds,
        }
    }

    fn at_least(estimate: Option<MeanCi>, threshold: f64) -> Self {
        let holds = estimate.is_some_and(|m| m.lower_bound() >= threshold);
        ClaimCheck {
            estimate,
            relation: ">=".into(),
            threshold,
            holds,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        self.estimate.map(|m| m.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCheck {
    /// Player 2's optimistic Stackelberg value averaged over the prior.
    pub stackval2: f64,
    pub u2: MeanCi,
    /// Upper bound of `u2` reaches `stackval2 - tol`.
    pub achieved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsReport {
    pub gamma: f64,
    pub p_star: f64,
    pub p2: f64,
    pub tol: f64,
    /// Mass of (B, D) in the first game's CSP, at most `gamma / 8 + tol`.
    pub csp1_bd: ClaimCheck,
    /// Mass of (A, D) in the first game's CSP, at most `gamma / 8 + tol`.
    pub csp1_ad: ClaimCheck,
    /// Mass of (B, D) in the second game's CSP, at least `1/2 - tol`.
    pub csp2_bd: ClaimCheck,
    pub benchmark: BenchmarkCheck,
    /// Player 1's gain from always playing as if the first game were real.
    pub mimic_gain: MeanCi,
    /// All three CSP inequalities hold.
    pub claims_hold: bool,
    /// Benchmark achieved, inequalities hold, and the mimic deviation is
    /// profitable: the pair cannot be an equilibrium.
    pub contradiction: bool,
}

fn same_matrices(a: &GameMatrix, b: &GameMatrix) -> bool {
    a.shape() == b.shape()
        && Player::both().into_iter().all(|p| {
            a.matrix(p)
                .iter()
                .flatten()
                .zip(b.matrix(p).iter().flatten())
                .all(|(x, y)| (x - y).abs() <= 1e-9)
        })
}

/// Checks the CSP inequalities and the benchmark on the separation family
/// with threshold `p_star`, and estimates the mimic deviation's gain.
pub fn verify_claims(cfg: &ExperimentConfig, p_star: f64, tol: f64) -> Result<ClaimsReport> {
    if !(0.0..1.0).contains(&p_star) {
        return invalid(format!("p_star must lie in [0, 1), got {p_star}"));
    }
    if !(tol >= 0.0) {
        return invalid("tol must be nonnegative");
    }
    let exp = Experiment::from_config(cfg)?;
    let gamma = gamma_for_threshold(p_star);
    let prior = &exp.prior;
    let family_ok = prior.len() == 2
        && (prior.weight(0) - 0.5).abs() <= 1e-9
        && same_matrices(prior.game(0), &fig1_g1(gamma))
        && same_matrices(prior.game(1), &fig1_g2(gamma));
    if !family_ok {
        return invalid(format!(
            "claims need the uniform separation prior with gamma = {gamma} (p* = {p_star})"
        ));
    }
    let p2 = cfg.signal_model.precision(Player::P2);
    if p2 > p_star + 1e-12 {
        return invalid(format!("player 2 precision {p2} exceeds p* = {p_star}"));
    }

    let base = run_trials(&exp)?;
    let est = EstimateReport::from_summaries(&exp, &base)?;
    let csps = CspReport::from_summaries(&exp, &base)?;
    let cell = |g: usize, a1: usize, a2: usize| csps.by_game[g].as_ref().map(|m| *m.cell(a1, a2));
    let (a, b, d) = (0, 1, 1);
    let csp1_bd = ClaimCheck::at_most(cell(0, b, d), gamma / 8.0 + tol);
    let csp1_ad = ClaimCheck::at_most(cell(0, a, d), gamma / 8.0 + tol);
    let csp2_bd = ClaimCheck::at_least(cell(1, b, d), 0.5 - tol);

    let stackval2 = stackval_prior(prior, Player::P2)?;
    let benchmark = BenchmarkCheck {
        stackval2,
        u2: est.u2_weighted,
        achieved: est.u2_weighted.upper_bound() >= stackval2 - tol,
    };

    let base_spec = match &cfg.spec1 {
        LearnerSpec::MimicDeviation { base, .. } => base.as_ref().clone(),
        s => s.clone(),
    };
    let mimic = exp.with_spec(Player::P1, LearnerSpec::mimic(base_spec, 0));
    let mimic_gain = deviation_gain(&exp, &base, &run_trials(&mimic)?, Player::P1);

    let claims_hold = csp1_bd.holds && csp1_ad.holds && csp2_bd.holds;
    Ok(ClaimsReport {
        gamma,
        p_star,
        p2,
        tol,
        csp1_bd,
        csp1_ad,
        csp2_bd,
        contradiction: benchmark.achieved && claims_hold && mimic_gain.lower_bound() > 0.0,
        benchmark,
        mimic_gain,
        claims_hold,
    })
}
