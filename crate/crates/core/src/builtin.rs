//! Built-in game families and the string references that name them.
//!
//! Game references: `fig1_g1:gamma=<f>`, `fig1_g2:gamma=<f>`,
//! `example41_g1`, `example41_g2`. Prior references: `fig1:gamma=<f>`
//! and `example41` (both uniform over the two games of the family).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameMatrix, Prior};

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Separation family, first game. Rows A, B for player 1; columns C, D.
pub fn fig1_g1(gamma: f64) -> GameMatrix {
    GameMatrix::new(
        "G1",
        labels(&["A", "B"]),
        labels(&["C", "D"]),
        vec![vec![16.0 / gamma, 16.0 / gamma], vec![2.0, 0.0]],
        vec![vec![1.0, -32.0 / gamma], vec![0.0, 2.0]],
    )
    .expect("fig1_g1 requires gamma > 0")
}

/// Separation family, second game. Player 2's utilities equal those of
/// [`fig1_g1`].
pub fn fig1_g2(gamma: f64) -> GameMatrix {
    GameMatrix::new(
        "G2",
        labels(&["A", "B"]),
        labels(&["C", "D"]),
        vec![vec![1.0, 0.0], vec![0.9, 0.1]],
        vec![vec![1.0, -32.0 / gamma], vec![0.0, 2.0]],
    )
    .expect("fig1_g2 requires gamma > 0")
}

/// Game-revealing family, first game. Player 1's utilities are the same in
/// both games.
pub fn example41_g1() -> GameMatrix {
    GameMatrix::new(
        "G1",
        labels(&["A", "B"]),
        labels(&["C", "D"]),
        vec![vec![1.0, -1.0], vec![0.0, 2.0]],
        vec![vec![1.0, 5.0], vec![2.0, 5.0]],
    )
    .expect("static game")
}

pub fn example41_g2() -> GameMatrix {
    GameMatrix::new(
        "G2",
        labels(&["A", "B"]),
        labels(&["C", "D"]),
        vec![vec![1.0, -1.0], vec![0.0, 2.0]],
        vec![vec![3.0, 0.0], vec![7.0, 8.0]],
    )
    .expect("static game")
}

pub fn fig1_prior(gamma: f64) -> Prior {
    Prior::uniform(vec![fig1_g1(gamma), fig1_g2(gamma)]).expect("uniform prior")
}

pub fn example41_prior() -> Prior {
    Prior::uniform(vec![example41_g1(), example41_g2()]).expect("uniform prior")
}

/// `gamma = (1 - p*) / (1 + p*)`.
pub fn gamma_for_threshold(p_star: f64) -> f64 {
    (1.0 - p_star) / (1.0 + p_star)
}

fn parse_gamma(reference: &str, args: Option<&str>) -> Result<f64> {
    let args = args.ok_or_else(|| Error::Parse(format!("{reference}: expected gamma=<float>")))?;
    let value = args
        .strip_prefix("gamma=")
        .ok_or_else(|| Error::Parse(format!("{reference}: expected gamma=<float>")))?;
    let gamma: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{reference}: bad gamma {value:?}")))?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "{reference}: gamma must lie in (0, 1]"
        )));
    }
    Ok(gamma)
}

fn split_ref(reference: &str) -> (&str, Option<&str>) {
    match reference.split_once(':') {
        Some((head, tail)) => (head.trim(), Some(tail.trim())),
        None => (reference.trim(), None),
    }
}

pub fn game_by_ref(reference: &str) -> Result<GameMatrix> {
    let (head, args) = split_ref(reference);
    match head {
        "fig1_g1" => Ok(fig1_g1(parse_gamma(reference, args)?)),
        "fig1_g2" => Ok(fig1_g2(parse_gamma(reference, args)?)),
        "example41_g1" => Ok(example41_g1()),
        "example41_g2" => Ok(example41_g2()),
        _ => Err(Error::Parse(format!("unknown builtin game {reference:?}"))),
    }
}

pub fn prior_by_ref(reference: &str) -> Result<Prior> {
    let (head, args) = split_ref(reference);
    match head {
        "fig1" => Ok(fig1_prior(parse_gamma(reference, args)?)),
        "example41" => Ok(example41_prior()),
        _ => {
            // A single builtin game is also a valid prior.
            game_by_ref(reference)
                .map(Prior::single)
                .map_err(|_| Error::Parse(format!("unknown builtin prior {reference:?}")))
        }
    }
}

/// A game given inline or by builtin reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GameSpec {
    Builtin(String),
    Inline(GameMatrix),
}

impl GameSpec {
    pub fn resolve(&self) -> Result<GameMatrix> {
        match self {
            GameSpec::Builtin(r) => game_by_ref(r),
            GameSpec::Inline(g) => Ok(g.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpecEntry {
    pub weight: f64,
    pub game: GameSpec,
}

/// A prior given as `{"games": [...]}` or by builtin reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Builtin(String),
    Inline { games: Vec<PriorSpecEntry> },
}

impl PriorSpec {
    pub fn resolve(&self) -> Result<Prior> {
        match self {
            PriorSpec::Builtin(r) => prior_by_ref(r),
            PriorSpec::Inline { games } => {
                let entries = games
                    .iter()
                    .map(|e| Ok((e.game.resolve()?, e.weight)))
                    .collect::<Result<Vec<_>>>()?;
                Prior::new(entries)
            }
        }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
}

/// Parses a game file, or a bare builtin reference.
pub fn parse_game(text: &str) -> Result<GameMatrix> {
    let trimmed = text.trim();
    if !trimmed.starts_with('{') && !trimmed.starts_with('"') {
        return game_by_ref(trimmed);
    }
    parse_json::<GameSpec>(text)?.resolve()
}

/// Parses a prior file, or a bare builtin reference.
pub fn parse_prior(text: &str) -> Result<Prior> {
    let trimmed = text.trim();
    if !trimmed.starts_with('{') && !trimmed.starts_with('"') {
        return prior_by_ref(trimmed);
    }
    parse_json::<PriorSpec>(text)?.resolve()
}
