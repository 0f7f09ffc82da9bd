//! Acceptance suite. Runs every criterion in order and prints one line per
//! criterion; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use asymlab::audit::{
    audit_pne, belief_trace, revelation_analysis, verify_claims, AuditReport, BeliefKind,
    DeviationLibrary, Verdict,
};
use asymlab::builtin::{example41_prior, fig1_g1, fig1_g2, fig1_prior};
use asymlab::engine::{
    estimate, run_trials, EstimateReport, Experiment, ExperimentConfig, TrialSummary,
};
use asymlab::{stackelberg_value, stackval_prior, GameMatrix, Player};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEADER_BANDIT: &str = include_str!("../../cli/examples/leader_vs_bandit.json");
const REVEAL_FOLLOW: &str = include_str!("../../cli/examples/reveal_follow.json");
const EXAMPLE41_LIKELIHOOD: &str = include_str!("../../cli/examples/example41_likelihood.json");
const EXTERNAL_SIGNAL: &str = include_str!("../../cli/examples/external_signal.json");

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn config(text: &str, threads: Option<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json_str(text, &[]).expect("example config");
    cfg.threads = threads;
    cfg
}

fn within_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(
        elapsed <= limit,
        format!(
            "took {:.1}s, limit {:.0}s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        ),
    )
}

/// Reports kept for the determinism reruns.
#[derive(Default)]
struct Runs {
    leader_bandit: Option<String>,
    reveal: Option<String>,
    positive_audit: Option<String>,
}

fn leader_bandit_fingerprint(
    threads: Option<usize>,
) -> (String, Vec<TrialSummary>, EstimateReport) {
    let exp = Experiment::from_config(&config(LEADER_BANDIT, threads)).unwrap();
    let summaries = run_trials(&exp).unwrap();
    let report = EstimateReport::from_summaries(&exp, &summaries).unwrap();
    let text = serde_json::to_string(&(&summaries, &report)).unwrap();
    (text, summaries, report)
}

fn standard_audit(cfg: &ExperimentConfig, epsilon: f64) -> AuditReport {
    let exp = Experiment::from_config(cfg).unwrap();
    let lib = DeviationLibrary::standard(&exp.prior, &cfg.spec1, &cfg.spec2);
    audit_pne(cfg, &lib, epsilon).unwrap()
}

fn stackelberg_exactness() -> Outcome {
    let start = Instant::now();
    let g1 = fig1_g1(1.0);
    let g2 = fig1_g2(1.0);
    let prior = fig1_prior(1.0);
    let values = [
        (
            "StackVal2(G1)",
            stackelberg_value(&g1, Player::P2).unwrap().value,
            1.0,
        ),
        (
            "StackVal2(G2)",
            stackelberg_value(&g2, Player::P2).unwrap().value,
            2.0,
        ),
        (
            "StackVal2(prior)",
            stackval_prior(&prior, Player::P2).unwrap(),
            1.5,
        ),
        (
            "StackVal1(G1)",
            stackelberg_value(&g1, Player::P1).unwrap().value,
            16.0,
        ),
    ];
    for (name, got, want) in values {
        check(
            (got - want).abs() <= 1e-6,
            format!("{name} = {got}, want {want}"),
        )?;
    }
    within_time(start.elapsed(), Duration::from_secs(1))?;
    Ok("1, 2, 1.5, 16".into())
}

/// Leader (row player) value by scanning the leader's mixture on a grid,
/// with the follower breaking ties in the leader's favour.
fn grid_stackelberg(u1: &[Vec<f64>], u2: &[Vec<f64>], steps: usize) -> f64 {
    let k = u1[0].len();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        let x = i as f64 / steps as f64;
        let follower: Vec<f64> = (0..k)
            .map(|j| x * u2[0][j] + (1.0 - x) * u2[1][j])
            .collect();
        let top = follower.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let leader = (0..k)
            .filter(|&j| follower[j] >= top - 1e-12)
            .map(|j| x * u1[0][j] + (1.0 - x) * u1[1][j])
            .fold(f64::NEG_INFINITY, f64::max);
        best = best.max(leader);
    }
    best
}

/// A follower action that is a best response somewhere but a strict one
/// nowhere on the grid: the optimistic value sits on a measure-zero set.
fn degenerate(u2: &[Vec<f64>], steps: usize) -> bool {
    let k = u2[0].len();
    let value = |j: usize, x: f64| x * u2[0][j] + (1.0 - x) * u2[1][j];
    let mut candidates = vec![0.0, 1.0];
    for a in 0..k {
        for b in a + 1..k {
            let slope = (u2[0][a] - u2[1][a]) - (u2[0][b] - u2[1][b]);
            if slope != 0.0 {
                let x = (u2[1][b] - u2[1][a]) / slope;
                if (0.0..=1.0).contains(&x) {
                    candidates.push(x);
                }
            }
        }
    }
    (0..k).any(|j| {
        let weak = candidates
            .iter()
            .any(|&x| (0..k).all(|b| value(j, x) >= value(b, x) - 1e-12));
        let strict = (0..=steps).any(|i| {
            let x = i as f64 / steps as f64;
            (0..k).all(|b| b == j || value(j, x) > value(b, x) + 1e-9)
        });
        weak && !strict
    })
}

fn solver_oracle() -> Outcome {
    let start = Instant::now();
    let steps = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut filtered = 0;
    let mut worst: f64 = 0.0;
    while checked < 200 {
        let k = rng.gen_range(1..=4);
        let mut draw = || -> Vec<Vec<f64>> {
            (0..2)
                .map(|_| (0..k).map(|_| rng.gen_range(-10..=10) as f64).collect())
                .collect()
        };
        let u1 = draw();
        let u2 = draw();
        if degenerate(&u2, steps) {
            filtered += 1;
            continue;
        }
        let g = GameMatrix::from_rows(format!("r{checked}"), u1.clone(), u2.clone()).unwrap();
        let lp = stackelberg_value(&g, Player::P1).unwrap().value;
        let grid = grid_stackelberg(&u1, &u2, steps);
        let diff = (lp - grid).abs();
        check(
            diff <= 2e-3,
            format!("game {u1:?} / {u2:?}: lp {lp}, grid {grid}"),
        )?;
        worst = worst.max(diff);
        checked += 1;
    }
    within_time(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "200 games, {filtered} degenerate filtered, max diff {worst:.2e}"
    ))
}

fn leader_bandit_convergence(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let (text, summaries, report) = leader_bandit_fingerprint(Some(1));
    runs.leader_bandit = Some(text);
    let u1_g1 = report.game(0).ok_or("no trial realized G1")?.u1.mean;
    check(u1_g1 >= 15.5, format!("conditional U1(G1) = {u1_g1}"))?;
    let g1_tails: Vec<f64> = summaries
        .iter()
        .filter(|s| s.info.realized == 0)
        .map(|s| s.tail_fractions[1][0])
        .collect();
    let tail = g1_tails.iter().sum::<f64>() / g1_tails.len() as f64;
    check(
        tail >= 0.95,
        format!("follower C tail fraction in G1 = {tail}"),
    )?;
    within_time(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("U1(G1) = {u1_g1:.4}, C tail fraction = {tail:.4}"))
}

fn swap_regret_decay() -> Outcome {
    let start = Instant::now();
    let games = [
        (2, fig1_g1(1.0)),
        (
            3,
            GameMatrix::from_rows(
                "rps",
                vec![
                    vec![0.0, -1.0, 1.0],
                    vec![1.0, 0.0, -1.0],
                    vec![-1.0, 1.0, 0.0],
                ],
                vec![vec![0.0; 3]; 3],
            )
            .unwrap(),
        ),
        (
            4,
            GameMatrix::from_rows(
                "four",
                vec![
                    vec![3.0, -2.0, 5.0, 0.0],
                    vec![-4.0, 6.0, 1.0, 2.0],
                    vec![2.0, 2.0, 2.0, -1.0],
                    vec![0.0, -3.0, 4.0, 7.0],
                ],
                vec![vec![0.0; 4]; 4],
            )
            .unwrap(),
        ),
    ];
    let mut detail = Vec::new();
    for (n, game) in games {
        let (lo, hi) = game.utility_range(Player::P1);
        let range = hi - lo;
        for opp in 0..game.n2() {
            let prior = serde_json::json!({ "games": [{ "weight": 1.0, "game": game }] });
            let text = serde_json::json!({
                "prior": prior,
                "signal_model": { "p1": 0.0, "p2": 0.0 },
                "spec1": { "kind": "no_swap_regret_full", "params": {} },
                "spec2": { "kind": "constant_action", "params": { "action": opp } },
                "horizon": 100_000,
                "trials": 1,
                "checkpoints": [1000, 10_000, 100_000],
                "master_seed": 4,
            })
            .to_string();
            let report = estimate(&config(&text, None)).unwrap();
            let mut prev = f64::INFINITY;
            for row in &report.curves {
                let bound = 3.0 * range * ((n as f64) * (n as f64).ln() / row.t as f64).sqrt();
                let r = row.swap_regret1;
                check(
                    r < prev,
                    format!(
                        "n={n} opp={opp}: swap regret {r} at T={} not below {prev}",
                        row.t
                    ),
                )?;
                check(
                    r <= bound,
                    format!("n={n} opp={opp}: swap regret {r} > {bound} at T={}", row.t),
                )?;
                prev = r;
            }
            if opp == 0 {
                detail.push(format!("n={n}: {prev:.2e}"));
            }
        }
    }
    within_time(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("avg swap regret at 1e5 {}", detail.join(", ")))
}

fn reveal_audit(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let report = standard_audit(&config(REVEAL_FOLLOW, Some(1)), 0.1);
    runs.reveal = Some(serde_json::to_string(&report).unwrap());
    let u2 = report.baseline.u2_weighted.mean;
    check((u2 - 1.5).abs() <= 0.05, format!("U2 = {u2}"))?;
    match &report.verdict {
        Verdict::Fail {
            player, deviation, ..
        } => check(
            *player == Player::P1 && deviation == "mimic:G1",
            format!("failed on {deviation} of {player:?}"),
        )?,
        Verdict::Pass => return Err("audit passed".into()),
    }
    let gain = report
        .deviation(Player::P1, "mimic:G1")
        .ok_or("mimic:G1 missing")?
        .gain
        .mean;
    check((gain - 0.45).abs() <= 0.05, format!("mimic:G1 gain {gain}"))?;
    within_time(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "U2 = {u2:.4}, fail(1, mimic:G1) with gain {gain:.4}"
    ))
}

fn claims_coherence() -> Outcome {
    let r = verify_claims(&config(REVEAL_FOLLOW, None), 0.0, 0.05).unwrap();
    let limit = r.gamma / 8.0 + 0.05;
    let bd1 = r.csp1_bd.mean().ok_or("csp1_BD unestimated")?;
    let ad1 = r.csp1_ad.mean().ok_or("csp1_AD unestimated")?;
    let bd2 = r.csp2_bd.mean().ok_or("csp2_BD unestimated")?;
    check(bd1 <= limit, format!("csp1_BD = {bd1}"))?;
    check(ad1 <= limit, format!("csp1_AD = {ad1}"))?;
    check(bd2 >= 0.95, format!("csp2_BD = {bd2}"))?;
    check(r.contradiction, "reveal pair: contradiction not flagged")?;

    let t = verify_claims(&config(LEADER_BANDIT, None), 0.0, 0.05).unwrap();
    let bd2_t = t
        .csp2_bd
        .mean()
        .ok_or("leader/bandit csp2_BD unestimated")?;
    let u2_t = t.benchmark.u2.mean;
    check(bd2_t <= 0.05, format!("leader/bandit csp2_BD = {bd2_t}"))?;
    check(u2_t < 1.4, format!("leader/bandit U2 = {u2_t}"))?;
    check(
        !t.contradiction,
        "leader/bandit pair: contradiction flagged",
    )?;
    Ok(format!(
        "reveal: BD1 {bd1:.3}, AD1 {ad1:.3}, BD2 {bd2:.3}, contradiction; leader/bandit: BD2 {bd2_t:.3}, U2 {u2_t:.3}"
    ))
}

fn positive_audit(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let report = standard_audit(&config(LEADER_BANDIT, Some(1)), 0.5);
    runs.positive_audit = Some(serde_json::to_string(&report).unwrap());
    check(
        report.skipped.is_empty(),
        format!("skipped deviations: {:?}", report.skipped),
    )?;
    check(
        report.verdict.passed(),
        format!("verdict {:?}", report.verdict),
    )?;
    within_time(start.elapsed(), Duration::from_secs(600))?;
    let gains: Vec<String> = report
        .max_gain
        .iter()
        .flatten()
        .map(|d| format!("P{} {} {:+.3}", d.player.number(), d.label, d.gain.mean))
        .collect();
    Ok(format!(
        "{} deviations, largest gains {}",
        report.deviations.len(),
        gains.join(", ")
    ))
}

fn revelation() -> Outcome {
    let start = Instant::now();
    let e41 = example41_prior();
    let p2 = revelation_analysis(&e41, Player::P2).unwrap();
    check(
        p2.action("C").is_some_and(|a| a.revealing),
        "example41: P2 C not revealing",
    )?;
    let p1 = revelation_analysis(&e41, Player::P1).unwrap();
    check(!p1.any_revealing, "example41: P1 has a revealing action")?;
    let fig1 = revelation_analysis(&fig1_prior(1.0), Player::P1).unwrap();
    check(
        fig1.action("A").is_some_and(|a| a.revealing),
        "fig1: P1 A not revealing",
    )?;
    within_time(start.elapsed(), Duration::from_secs(1))?;
    Ok("example41 P2:C revealing, P1 none; fig1 P1:A revealing".into())
}

fn learning_meters() -> Outcome {
    let start = Instant::now();
    let pairs = [
        (
            "no_swap_regret_full vs infer_then_commit",
            config(EXAMPLE41_LIKELIHOOD, None),
        ),
        ("multiplicative_weights vs constant C", {
            let mut c = config(EXAMPLE41_LIKELIHOOD, None);
            c.spec1 = serde_json::from_str(r#"{"kind": "multiplicative_weights", "params": {}}"#)
                .unwrap();
            c.spec2 =
                serde_json::from_str(r#"{"kind": "constant_action", "params": {"action": 0}}"#)
                    .unwrap();
            c
        }),
        ("bandit feedback, exp3 vs constant C", {
            let mut c = config(EXAMPLE41_LIKELIHOOD, None);
            c.spec1 = serde_json::from_str(r#"{"kind": "bandit_exp3", "params": {}}"#).unwrap();
            c.spec2 =
                serde_json::from_str(r#"{"kind": "constant_action", "params": {"action": 0}}"#)
                    .unwrap();
            c.feedback_mode = asymlab::FeedbackMode::Bandit;
            c
        }),
    ];
    for (name, cfg) in &pairs {
        let trace = belief_trace(cfg, BeliefKind::UtilityLikelihood, Player::P2, 0.05).unwrap();
        check(
            trace.last_error_round.unwrap_or(0) <= 1,
            format!("{name}: wrong belief at round {:?}", trace.last_error_round),
        )?;
        check(
            trace.checkpoints.iter().all(|c| c.t < 2 || c.error == 0.0),
            format!("{name}: nonzero error after round 1"),
        )?;
    }

    let cfg = config(EXTERNAL_SIGNAL, None);
    let report = estimate(&cfg).unwrap();
    let prior = example41_prior();
    let mut detail = Vec::new();
    for (i, g) in prior.games().enumerate() {
        let target = stackelberg_value(g, Player::P2).unwrap().value;
        let (lo, hi) = g.utility_range(Player::P2);
        let got = report.game(i).ok_or("game never realized")?.u2.mean;
        check(
            got >= target - 0.1 * (hi - lo),
            format!("{}: U2 = {got}, StackVal2 = {target}", g.name()),
        )?;
        detail.push(format!("{} U2 {got:.3} vs {target}", g.name()));
    }
    let trace = belief_trace(&cfg, BeliefKind::ExternalSignal, Player::P2, 0.01).unwrap();
    check(
        trace.success,
        format!("external belief error {}", trace.final_error),
    )?;
    within_time(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "likelihood exact from round 2 on {} pairs; {}",
        pairs.len(),
        detail.join(", ")
    ))
}

fn determinism(runs: &Runs) -> Outcome {
    let same = |label: &str, a: &Option<String>, b: String| -> Result<(), String> {
        let a = a.as_ref().ok_or(format!("{label}: first run missing"))?;
        check(*a == b, format!("{label}: reports differ"))
    };
    for threads in [Some(1), Some(4)] {
        let tag = format!("{} thread(s)", threads.unwrap());
        same(
            &format!("leader/bandit run, {tag}"),
            &runs.leader_bandit,
            leader_bandit_fingerprint(threads).0,
        )?;
        let reveal = standard_audit(&config(REVEAL_FOLLOW, threads), 0.1);
        same(
            &format!("reveal audit, {tag}"),
            &runs.reveal,
            serde_json::to_string(&reveal).unwrap(),
        )?;
        let positive = standard_audit(&config(LEADER_BANDIT, threads), 0.5);
        same(
            &format!("positive audit, {tag}"),
            &runs.positive_audit,
            serde_json::to_string(&positive).unwrap(),
        )?;
    }
    Ok("criteria 3, 5, 7 bit-identical on rerun and with 4 workers".into())
}

fn main() -> ExitCode {
    let mut runs = Runs::default();
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {n}: {name}: {detail} [{secs:.1}s]");
            }
        }
    };
    report(1, "Stackelberg exactness", &mut stackelberg_exactness);
    report(2, "solver matches grid oracle", &mut solver_oracle);
    report(
        3,
        "leader vs bandit no-swap-regret convergence",
        &mut || leader_bandit_convergence(&mut runs),
    );
    report(4, "swap-regret decay", &mut swap_regret_decay);
    report(5, "negative audit of reveal/follow pair", &mut || {
        reveal_audit(&mut runs)
    });
    report(6, "claims verifier coherence", &mut claims_coherence);
    report(7, "positive audit at epsilon 0.5", &mut || {
        positive_audit(&mut runs)
    });
    report(8, "revelation analysis", &mut revelation);
    report(9, "learning meters", &mut learning_meters);
    report(10, "determinism", &mut || determinism(&runs));
    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
