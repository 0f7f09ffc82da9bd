//! `asymlab` command-line front end.
//!
//! Every command prints a JSON report on stdout. Exit status is 0 on a
//! pass verdict, 2 on a fail verdict and 1 on errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asymlab::audit::{
    audit_pne, audit_pne_independent, belief_trace, revelation_analysis, verify_claims, BeliefKind,
    DeviationLibrary,
};
use asymlab::builtin::{parse_game, parse_prior};
use asymlab::engine::{
    run_trials, write_csv, CspReport, EstimateReport, Experiment, ExperimentConfig,
};
use asymlab::solve::stackelberg_value;
use asymlab::{LearnerSpec, MixedStrategy, Player};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "asymlab",
    version,
    about = "Repeated games with asymmetric information about the game"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Worker-pool size; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Override a config value by dotted path, e.g. `signal_model.p2=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory that receives report files in addition to stdout.
    #[arg(long, env = "ASYMLAB_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimistic Stackelberg value of a game, or its expectation over a prior.
    Stackval {
        /// Game file or builtin reference such as `fig1_g2:gamma=1`.
        #[arg(long, required_unless_present = "prior", conflicts_with = "prior")]
        game: Option<String>,
        /// Prior file or builtin reference such as `fig1:gamma=1`.
        #[arg(long)]
        prior: Option<String>,
        /// Leader (1 or 2).
        #[arg(long, default_value_t = 1)]
        player: u8,
    },
    /// Run an experiment; writes per-checkpoint CSV and a JSON summary.
    Simulate {
        #[command(flatten)]
        run: RunOpts,
        /// CSV destination (`-` for stdout, in which case the summary is
        /// not printed). Defaults to `trials.csv` in the output directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Audit a learner pair against the standard deviation library.
    Audit {
        #[command(flatten)]
        run: RunOpts,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Run deviations on an independent seed instead of the baseline's.
        #[arg(long)]
        independent: bool,
    },
    /// Check the separation-family CSP inequalities and the benchmark.
    Claims {
        #[command(flatten)]
        run: RunOpts,
        #[arg(long = "p-star", default_value_t = 0.0)]
        p_star: f64,
        #[arg(long, default_value_t = asymlab::audit::DEFAULT_CLAIMS_TOL)]
        tol: f64,
    },
    /// Per-action utility ranges and which actions reveal the game.
    Reveal {
        /// Prior file or builtin reference.
        #[arg(long)]
        prior: String,
        #[arg(long)]
        player: u8,
    },
    /// Track a belief about the realized game over the rounds.
    Learn {
        #[command(flatten)]
        run: RunOpts,
        /// nearest_best_response, utility_likelihood or external_signal.
        #[arg(long)]
        belief: String,
        /// Belief holder; defaults to 1 for nearest_best_response, to the
        /// external-signal learner for external_signal, and to 2 otherwise.
        #[arg(long)]
        player: Option<u8>,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
    },
}

/// Outcome of a command: the report and whether it passed.
struct Outcome {
    name: &'static str,
    report: Value,
    pass: bool,
    /// Print the report on stdout.
    print: bool,
}

impl Outcome {
    fn new(name: &'static str, report: Value, pass: bool) -> Self {
        Outcome {
            name,
            report,
            pass,
            print: true,
        }
    }
}

fn player(n: u8) -> Result<Player> {
    match n {
        1 => Ok(Player::P1),
        2 => Ok(Player::P2),
        _ => bail!("player must be 1 or 2, got {n}"),
    }
}

/// Reads `arg` as a file when it names one, otherwise returns it verbatim.
fn file_or_ref(arg: &str) -> Result<(String, Option<&Path>)> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        Ok((text, Some(path)))
    } else {
        Ok((arg.to_string(), None))
    }
}

fn with_origin<T>(r: asymlab::Result<T>, origin: Option<&Path>) -> Result<T> {
    r.map_err(|e| match origin {
        Some(p) => anyhow::anyhow!("{}: {e}", p.display()),
        None => anyhow::anyhow!("{e}"),
    })
}

fn load_config(run: &RunOpts) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&run.config)
        .with_context(|| format!("reading {}", run.config.display()))?;
    let mut cfg = with_origin(
        ExperimentConfig::from_json_str(&text, &run.overrides),
        Some(&run.config),
    )?;
    if let Some(s) = run.seed {
        cfg.master_seed = s;
    }
    if let Some(t) = run.trials {
        cfg.trials = t;
    }
    if let Some(h) = run.horizon {
        cfg.horizon = h;
    }
    if run.threads.is_some() {
        cfg.threads = run.threads;
    }
    Ok(cfg)
}

fn labelled(s: &MixedStrategy, labels: &[String]) -> Value {
    labels
        .iter()
        .zip(s.probs())
        .map(|(l, p)| (l.clone(), json!(p)))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn stackval_game(g: &asymlab::GameMatrix, leader: Player) -> Result<Value> {
    let sol = stackelberg_value(g, leader)?;
    let follower_labels = g.labels(leader.other());
    Ok(json!({
        "game": g.name(),
        "leader": leader,
        "value": sol.value,
        "commitment": labelled(&sol.leader_strategy, g.labels(leader)),
        "follower_action": follower_labels[sol.follower_action],
        "per_follower_action_values": follower_labels
            .iter()
            .zip(&sol.per_follower_action_values)
            .map(|(l, v)| (l.clone(), json!(v)))
            .collect::<serde_json::Map<_, _>>(),
    }))
}

fn cmd_stackval(game: Option<String>, prior: Option<String>, leader: Player) -> Result<Outcome> {
    let report = if let Some(g) = game {
        let (text, origin) = file_or_ref(&g)?;
        stackval_game(&with_origin(parse_game(&text), origin)?, leader)?
    } else {
        let arg = prior.expect("clap requires --game or --prior");
        let (text, origin) = file_or_ref(&arg)?;
        let prior = with_origin(parse_prior(&text), origin)?;
        let mut games = Vec::new();
        let mut value = 0.0;
        for e in prior.entries() {
            let mut v = stackval_game(&e.game, leader)?;
            value += e.weight * v["value"].as_f64().unwrap_or(f64::NAN);
            v["weight"] = json!(e.weight);
            games.push(v);
        }
        json!({ "leader": leader, "value": value, "games": games })
    };
    Ok(Outcome::new("stackval", report, true))
}

fn cmd_simulate(run: &RunOpts, csv: Option<PathBuf>) -> Result<Outcome> {
    let cfg = load_config(run)?;
    let exp = Experiment::new(cfg.clone())?;
    let summaries = run_trials(&exp)?;
    let estimate = EstimateReport::from_summaries(&exp, &summaries)?;
    let csps = CspReport::from_summaries(&exp, &summaries)?;
    let csv_path = csv.or_else(|| run.out_dir.as_ref().map(|d| d.join("trials.csv")));
    let mut print = true;
    match csv_path {
        Some(p) if p.as_os_str() == "-" => {
            match write_csv(&mut std::io::stdout().lock(), &summaries) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
            print = false;
        }
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut f = std::io::BufWriter::new(
                fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?,
            );
            write_csv(&mut f, &summaries)?;
        }
        None => {}
    }
    let report = json!({ "config": cfg, "estimate": estimate, "csps": csps });
    Ok(Outcome {
        print,
        ..Outcome::new("simulate", report, true)
    })
}

fn cmd_audit(run: &RunOpts, epsilon: f64, independent: bool) -> Result<Outcome> {
    let cfg = load_config(run)?;
    let prior = cfg.prior.resolve()?;
    let lib = DeviationLibrary::standard(&prior, &cfg.spec1, &cfg.spec2);
    let report = if independent {
        audit_pne_independent(&cfg, &lib, epsilon)?
    } else {
        audit_pne(&cfg, &lib, epsilon)?
    };
    let pass = report.verdict.passed();
    Ok(Outcome::new("audit", serde_json::to_value(report)?, pass))
}

fn cmd_claims(run: &RunOpts, p_star: f64, tol: f64) -> Result<Outcome> {
    let cfg = load_config(run)?;
    let report = verify_claims(&cfg, p_star, tol)?;
    let pass = !report.contradiction;
    Ok(Outcome::new("claims", serde_json::to_value(report)?, pass))
}

fn cmd_reveal(prior: &str, who: Player) -> Result<Outcome> {
    let (text, origin) = file_or_ref(prior)?;
    let prior = with_origin(parse_prior(&text), origin)?;
    Ok(Outcome::new(
        "reveal",
        serde_json::to_value(revelation_analysis(&prior, who)?)?,
        true,
    ))
}

fn cmd_learn(run: &RunOpts, belief: &str, who: Option<u8>, tau: f64) -> Result<Outcome> {
    let cfg = load_config(run)?;
    let kind: BeliefKind = belief.parse()?;
    let holder = match who {
        Some(n) => player(n)?,
        None => match kind {
            BeliefKind::NearestBestResponse => Player::P1,
            BeliefKind::UtilityLikelihood => Player::P2,
            BeliefKind::ExternalSignal => {
                if matches!(cfg.spec1, LearnerSpec::ExternalSignalLeader { .. }) {
                    Player::P1
                } else {
                    Player::P2
                }
            }
        },
    };
    let report = belief_trace(&cfg, kind, holder, tau)?;
    let pass = report.success;
    Ok(Outcome::new("learn", serde_json::to_value(report)?, pass))
}

fn run(cli: Cli) -> Result<(Outcome, Option<PathBuf>)> {
    Ok(match cli.command {
        Command::Stackval {
            game,
            prior,
            player: p,
        } => (cmd_stackval(game, prior, player(p)?)?, None),
        Command::Simulate { run, csv } => (cmd_simulate(&run, csv)?, run.out_dir),
        Command::Audit {
            run,
            epsilon,
            independent,
        } => (cmd_audit(&run, epsilon, independent)?, run.out_dir),
        Command::Claims { run, p_star, tol } => (cmd_claims(&run, p_star, tol)?, run.out_dir),
        Command::Reveal { prior, player: p } => (cmd_reveal(&prior, player(p)?)?, None),
        Command::Learn {
            run,
            belief,
            player: p,
            tau,
        } => (cmd_learn(&run, &belief, p, tau)?, run.out_dir),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = run(cli).and_then(|(out, dir)| {
        let text = serde_json::to_string_pretty(&out.report)?;
        if out.print {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
        if let Some(dir) = dir {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join(format!("{}.json", out.name)), text + "\n")?;
        }
        Ok(out.pass)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
