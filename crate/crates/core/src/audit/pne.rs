use serde::{Deserialize, Serialize};

use super::deviations::{Deviation, DeviationLibrary};
use crate::engine::{run_trials, EstimateReport, Experiment, ExperimentConfig, TrialSummary};
use crate::error::{invalid, Error, Result};
use crate::game::Player;
use crate::learners::LearnerSpec;
use crate::stats::MeanCi;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub u1: MeanCi,
    pub u2: MeanCi,
    pub u1_weighted: MeanCi,
    pub u2_weighted: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub player: Player,
    pub label: String,
    pub spec: LearnerSpec,
    /// Prior-weighted utility of the deviating player.
    pub utility: MeanCi,
    /// Deviated minus baseline utility, paired by trial and weighted by
    /// the prior over the realized game.
    pub gain: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDeviation {
    pub player: Player,
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail {
        player: Player,
        deviation: String,
        gain: f64,
    },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epsilon: f64,
    pub trials: usize,
    pub horizon: u64,
    /// Whether deviations reuse the baseline's seeds.
    pub common_random_numbers: bool,
    pub baseline: Baseline,
    pub deviations: Vec<DeviationResult>,
    pub skipped: Vec<SkippedDeviation>,
    /// Largest estimated gain per player (index 0 is player 1).
    pub max_gain: [Option<DeviationResult>; 2],
    pub verdict: Verdict,
}

impl AuditReport {
    pub fn deviation(&self, player: Player, label: &str) -> Option<&DeviationResult> {
        self.deviations
            .iter()
            .find(|d| d.player == player && d.label == label)
    }
}

fn utilities(summaries: &[TrialSummary], player: Player) -> Vec<f64> {
    summaries.iter().map(|s| s.avg_utility(player)).collect()
}

fn groups(summaries: &[TrialSummary]) -> Vec<usize> {
    summaries.iter().map(|s| s.info.realized).collect()
}

/// Paired gain of `deviated` over `base` for `player`.
pub fn deviation_gain(
    exp: &Experiment,
    base: &[TrialSummary],
    deviated: &[TrialSummary],
    player: Player,
) -> MeanCi {
    let d: Vec<f64> = utilities(deviated, player)
        .iter()
        .zip(utilities(base, player))
        .map(|(a, b)| a - b)
        .collect();
    MeanCi::stratified(&d, &groups(base), &exp.prior.weights())
}

/// Gain of two independently seeded estimates.
fn independent_gain(
    exp: &Experiment,
    base: &[TrialSummary],
    deviated: &[TrialSummary],
    player: Player,
) -> MeanCi {
    let w = exp.prior.weights();
    let a = MeanCi::stratified(&utilities(deviated, player), &groups(deviated), &w);
    let b = MeanCi::stratified(&utilities(base, player), &groups(base), &w);
    MeanCi::from_mean_se(
        a.mean - b.mean,
        (a.se().powi(2) + b.se().powi(2)).sqrt(),
        base.len(),
    )
}

/// Deviations that cannot run in this environment are skipped rather than
/// failing the audit.
fn skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::ProtocolViolation(_) | Error::AssumptionViolated(_)
    )
}

fn audit(
    cfg: &ExperimentConfig,
    lib: &DeviationLibrary,
    epsilon: f64,
    common: bool,
) -> Result<AuditReport> {
    if !(epsilon > 0.0) {
        return invalid("epsilon must be positive");
    }
    let exp = Experiment::from_config(cfg)?;
    let base = run_trials(&exp)?;
    let report = EstimateReport::from_summaries(&exp, &base)?;
    let mut deviations = Vec::new();
    let mut skipped = Vec::new();
    for player in Player::both() {
        for Deviation { label, spec } in lib.for_player(player) {
            let mut dev = exp.with_spec(player, spec.clone());
            if !common {
                dev.config.master_seed = cfg.master_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
            }
            let runs = match run_trials(&dev) {
                Ok(r) => r,
                Err(e) if skippable(&e) => {
                    skipped.push(SkippedDeviation {
                        player,
                        label: label.clone(),
                        reason: e.to_string(),
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let gain = if common {
                deviation_gain(&exp, &base, &runs, player)
            } else {
                independent_gain(&exp, &base, &runs, player)
            };
            deviations.push(DeviationResult {
                player,
                label: label.clone(),
                spec: spec.clone(),
                utility: MeanCi::stratified(
                    &utilities(&runs, player),
                    &groups(&runs),
                    &exp.prior.weights(),
                ),
                gain,
            });
        }
    }
    let best = |player: Player| {
        deviations
            .iter()
            .filter(|d| d.player == player)
            .fold(None::<&DeviationResult>, |acc, d| match acc {
                Some(a) if a.gain.mean >= d.gain.mean => Some(a),
                _ => Some(d),
            })
            .cloned()
    };
    let verdict = deviations
        .iter()
        .filter(|d| d.gain.lo() > epsilon)
        .fold(None::<&DeviationResult>, |acc, d| match acc {
            Some(a) if a.gain.mean >= d.gain.mean => Some(a),
            _ => Some(d),
        })
        .map_or(Verdict::Pass, |d| Verdict::Fail {
            player: d.player,
            deviation: d.label.clone(),
            gain: d.gain.mean,
        });
    Ok(AuditReport {
        epsilon,
        trials: exp.config.trials,
        horizon: exp.config.horizon,
        common_random_numbers: common,
        baseline: Baseline {
            u1: report.u1,
            u2: report.u2,
            u1_weighted: report.u1_weighted,
            u2_weighted: report.u2_weighted,
        },
        max_gain: [best(Player::P1), best(Player::P2)],
        deviations,
        skipped,
        verdict,
    })
}

/// Estimates every deviation's gain with common random numbers: a
/// deviation run reuses the baseline's seeds, so the realized game, the
/// signals and the untouched learner's randomness match trial by trial.
/// Fails when some gain's 95% lower bound exceeds `epsilon`; the verdict
/// names the failing deviation with the largest estimated gain.
pub fn audit_pne(
    cfg: &ExperimentConfig,
    lib: &DeviationLibrary,
    epsilon: f64,
) -> Result<AuditReport> {
    audit(cfg, lib, epsilon, true)
}

/// [`audit_pne`] with deviations run on an independent seed.
pub fn audit_pne_independent(
    cfg: &ExperimentConfig,
    lib: &DeviationLibrary,
    epsilon: f64,
) -> Result<AuditReport> {
    audit(cfg, lib, epsilon, false)
}
