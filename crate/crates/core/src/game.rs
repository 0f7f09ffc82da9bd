//! Stage games, priors, signals, trajectories and correlated strategy
//! profiles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance for probability vectors built by callers.
pub const CONSTRUCTION_TOL: f64 = 1e-9;
/// Absolute tolerance for aggregated probability mass (long averages).
pub const AGGREGATE_TOL: f64 = 1e-6;

/// Player 1 picks rows, player 2 picks columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Player {
    P1,
    P2,
}

impl Player {
    pub fn other(self) -> Player {
        match self {
            Player::P1 => Player::P2,
            Player::P2 => Player::P1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Player::P1 => 0,
            Player::P2 => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn both() -> [Player; 2] {
        [Player::P1, Player::P2]
    }
}

impl TryFrom<u8> for Player {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Player::P1),
            2 => Ok(Player::P2),
            _ => invalid(format!("player must be 1 or 2, got {v}")),
        }
    }
}

impl From<Player> for u8 {
    fn from(p: Player) -> u8 {
        p.number()
    }
}

impl std::fmt::Display for Player {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// A probability vector over one player's actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixedStrategy(Vec<f64>);

impl MixedStrategy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("mixed strategy over zero actions");
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return invalid(format!("negative or non-finite probability in {probs:?}"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > CONSTRUCTION_TOL {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        Ok(MixedStrategy(probs))
    }

    /// Clips round-off negatives and renormalizes. Used on solver output and
    /// on the products of floating-point updates.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        for p in probs.iter_mut() {
            if *p < 0.0 && *p > -1e-7 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return invalid(format!("cannot normalize {probs:?}"));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(probs)
    }

    pub fn pure(n: usize, action: usize) -> Self {
        assert!(action < n, "action {action} out of range for {n} actions");
        let mut v = vec![0.0; n];
        v[action] = 1.0;
        MixedStrategy(v)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        MixedStrategy(vec![1.0 / n as f64; n])
    }

    /// `(1 - w) * self + w * other`.
    pub fn blend(&self, other: &MixedStrategy, w: f64) -> Result<Self> {
        if self.len() != other.len() {
            return invalid("blending strategies of different lengths");
        }
        let v = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Self::normalized(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The action with probability one, if any.
    pub fn pure_action(&self) -> Option<usize> {
        self.0.iter().position(|p| *p == 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.0, rng)
    }
}

impl TryFrom<Vec<f64>> for MixedStrategy {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        MixedStrategy::new(v)
    }
}

impl From<MixedStrategy> for Vec<f64> {
    fn from(s: MixedStrategy) -> Vec<f64> {
        s.0
    }
}

/// Inverse-CDF draw from a weight vector summing to (about) one.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Wire format of a game file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    name: String,
    actions1: Vec<String>,
    actions2: Vec<String>,
    u1: Vec<Vec<f64>>,
    u2: Vec<Vec<f64>>,
}

/// A bimatrix stage game. Utilities are stored row-major: entry
/// `(a1, a2)` lives at `a1 * n2 + a2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameFile", into = "GameFile")]
pub struct GameMatrix {
    name: String,
    labels: [Vec<String>; 2],
    n1: usize,
    n2: usize,
    u: [Vec<f64>; 2],
}

impl GameMatrix {
    pub fn new(
        name: impl Into<String>,
        actions1: Vec<String>,
        actions2: Vec<String>,
        u1: Vec<Vec<f64>>,
        u2: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let (n1, n2) = (actions1.len(), actions2.len());
        if n1 == 0 || n2 == 0 {
            return invalid("both players need at least one action");
        }
        let flatten = |m: Vec<Vec<f64>>, which: &str| -> Result<Vec<f64>> {
            if m.len() != n1 || m.iter().any(|row| row.len() != n2) {
                return invalid(format!("{which} must be {n1}x{n2}"));
            }
            let flat: Vec<f64> = m.into_iter().flatten().collect();
            if flat.iter().any(|v| !v.is_finite()) {
                return invalid(format!("{which} has a non-finite entry"));
            }
            Ok(flat)
        };
        let u1 = flatten(u1, "u1")?;
        let u2 = flatten(u2, "u2")?;
        Ok(GameMatrix {
            name: name.into(),
            labels: [actions1, actions2],
            n1,
            n2,
            u: [u1, u2],
        })
    }

    /// Builds a game with labels `A, B, ...` for rows and the following
    /// letters for columns.
    pub fn from_rows(
        name: impl Into<String>,
        u1: Vec<Vec<f64>>,
        u2: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n1 = u1.len();
        let n2 = u1.first().map_or(0, Vec::len);
        let letter = |i: usize| -> String {
            if i < 26 {
                ((b'A' + i as u8) as char).to_string()
            } else {
                format!("a{i}")
            }
        };
        let a1 = (0..n1).map(letter).collect();
        let a2 = (n1..n1 + n2).map(letter).collect();
        Self::new(name, a1, a2, u1, u2)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn num_actions(&self, player: Player) -> usize {
        match player {
            Player::P1 => self.n1,
            Player::P2 => self.n2,
        }
    }

    pub fn labels(&self, player: Player) -> &[String] {
        &self.labels[player.index()]
    }

    /// Utility of `player` at the pure profile `(a1, a2)`.
    #[inline]
    pub fn u(&self, player: Player, a1: usize, a2: usize) -> f64 {
        self.u[player.index()][a1 * self.n2 + a2]
    }

    /// Utility of `player` when it plays `own` and the opponent `opp`.
    #[inline]
    pub fn u_own(&self, player: Player, own: usize, opp: usize) -> f64 {
        match player {
            Player::P1 => self.u(player, own, opp),
            Player::P2 => self.u(player, opp, own),
        }
    }

    pub fn matrix(&self, player: Player) -> Vec<Vec<f64>> {
        self.u[player.index()]
            .chunks(self.n2)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Minimum and maximum entry of `player`'s utility matrix.
    pub fn utility_range(&self, player: Player) -> (f64, f64) {
        self.u[player.index()]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            })
    }

    /// Utilities of each of `player`'s pure actions against the opponent's
    /// mixed strategy.
    pub fn payoff_vector(&self, player: Player, opponent: &MixedStrategy) -> Vec<f64> {
        let q = opponent.probs();
        match player {
            Player::P1 => (0..self.n1)
                .map(|a| (0..self.n2).map(|b| self.u(player, a, b) * q[b]).sum())
                .collect(),
            Player::P2 => (0..self.n2)
                .map(|b| (0..self.n1).map(|a| self.u(player, a, b) * q[a]).sum())
                .collect(),
        }
    }

    /// Adds `c` to every entry of `player`'s utility matrix.
    pub fn shifted(&self, player: Player, c: f64) -> GameMatrix {
        let mut g = self.clone();
        g.u[player.index()].iter_mut().for_each(|v| *v += c);
        g
    }

    /// Multiplies every entry of `player`'s utility matrix by `c`.
    pub fn scaled(&self, player: Player, c: f64) -> GameMatrix {
        let mut g = self.clone();
        g.u[player.index()].iter_mut().for_each(|v| *v *= c);
        g
    }

    /// Swaps the roles of the two players (transposes both matrices).
    pub fn transposed(&self) -> GameMatrix {
        let t = |m: &Vec<f64>| -> Vec<Vec<f64>> {
            (0..self.n2)
                .map(|b| (0..self.n1).map(|a| m[a * self.n2 + b]).collect())
                .collect()
        };
        GameMatrix::new(
            format!("{}^T", self.name),
            self.labels[1].clone(),
            self.labels[0].clone(),
            t(&self.u[1]),
            t(&self.u[0]),
        )
        .expect("transpose of a valid game is valid")
    }

    pub(crate) fn check_strategy(&self, player: Player, s: &MixedStrategy) -> Result<()> {
        let n = self.num_actions(player);
        if s.len() != n {
            return invalid(format!(
                "player {player} strategy has {} entries, game {} has {n} actions",
                s.len(),
                self.name
            ));
        }
        Ok(())
    }

    pub(crate) fn check_action(&self, player: Player, a: usize) -> Result<()> {
        if a >= self.num_actions(player) {
            return invalid(format!(
                "action {a} out of range for player {player} in {}",
                self.name
            ));
        }
        Ok(())
    }
}

impl TryFrom<GameFile> for GameMatrix {
    type Error = Error;
    fn try_from(f: GameFile) -> Result<Self> {
        GameMatrix::new(f.name, f.actions1, f.actions2, f.u1, f.u2)
    }
}

impl From<GameMatrix> for GameFile {
    fn from(g: GameMatrix) -> GameFile {
        GameFile {
            u1: g.matrix(Player::P1),
            u2: g.matrix(Player::P2),
            name: g.name,
            actions1: g.labels[0].clone(),
            actions2: g.labels[1].clone(),
        }
    }
}

/// `x^T u_player y`.
pub fn expected_utility(
    g: &GameMatrix,
    x: &MixedStrategy,
    y: &MixedStrategy,
    player: Player,
) -> Result<f64> {
    g.check_strategy(Player::P1, x)?;
    g.check_strategy(Player::P2, y)?;
    Ok(bilinear(g, x.probs(), y.probs(), player))
}

#[inline]
pub(crate) fn bilinear(g: &GameMatrix, x: &[f64], y: &[f64], player: Player) -> f64 {
    let mut total = 0.0;
    for (a, xa) in x.iter().enumerate() {
        if *xa == 0.0 {
            continue;
        }
        let row: f64 = y
            .iter()
            .enumerate()
            .map(|(b, yb)| g.u(player, a, b) * yb)
            .sum();
        total += xa * row;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub weight: f64,
    pub game: GameMatrix,
}

/// A finite-support distribution over stage games of a common shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorFile", into = "PriorFile")]
pub struct Prior {
    entries: Vec<PriorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PriorFile {
    games: Vec<PriorEntry>,
}

impl TryFrom<PriorFile> for Prior {
    type Error = Error;
    fn try_from(f: PriorFile) -> Result<Self> {
        Prior::new(f.games.into_iter().map(|e| (e.game, e.weight)).collect())
    }
}

impl From<Prior> for PriorFile {
    fn from(p: Prior) -> PriorFile {
        PriorFile { games: p.entries }
    }
}

impl Prior {
    pub fn new(entries: Vec<(GameMatrix, f64)>) -> Result<Self> {
        let Some((first, _)) = entries.first() else {
            return invalid("prior needs at least one game");
        };
        let shape = first.shape();
        if let Some((g, _)) = entries.iter().find(|(g, _)| g.shape() != shape) {
            return invalid(format!(
                "game {} has shape {:?}, expected {:?}",
                g.name(),
                g.shape(),
                shape
            ));
        }
        if entries.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return invalid("prior weights must be nonnegative");
        }
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > CONSTRUCTION_TOL {
            return invalid(format!("prior weights sum to {total}, not 1"));
        }
        Ok(Prior {
            entries: entries
                .into_iter()
                .map(|(game, weight)| PriorEntry { weight, game })
                .collect(),
        })
    }

    pub fn uniform(games: Vec<GameMatrix>) -> Result<Self> {
        let w = 1.0 / games.len().max(1) as f64;
        Self::new(games.into_iter().map(|g| (g, w)).collect())
    }

    pub fn single(game: GameMatrix) -> Self {
        Self::new(vec![(game, 1.0)]).expect("single game prior")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn game(&self, i: usize) -> &GameMatrix {
        &self.entries[i].game
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.entries[i].weight
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn games(&self) -> impl Iterator<Item = &GameMatrix> {
        self.entries.iter().map(|e| &e.game)
    }

    pub fn entries(&self) -> &[PriorEntry] {
        &self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries[0].game.shape()
    }

    pub fn num_actions(&self, player: Player) -> usize {
        self.entries[0].game.num_actions(player)
    }

    /// Highest-weight game; ties go to the lowest index.
    pub fn mode(&self) -> usize {
        argmax_first(&self.weights())
    }

    /// `Pr[s = signal | G = game]` under precision `p`.
    pub fn signal_likelihood(&self, signal: usize, game: usize, p: f64) -> f64 {
        let hit = if signal == game { p } else { 0.0 };
        hit + (1.0 - p) * self.weight(signal)
    }

    /// Range of `player`'s utilities over every game in the support.
    pub fn utility_range(&self, player: Player) -> (f64, f64) {
        self.games()
            .map(|g| g.utility_range(player))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.weights(), rng)
    }
}

pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Signal precisions of the two players.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalModelFile", into = "SignalModelFile")]
pub struct SignalModel {
    p: [f64; 2],
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct SignalModelFile {
    p1: f64,
    p2: f64,
}

impl TryFrom<SignalModelFile> for SignalModel {
    type Error = Error;
    fn try_from(f: SignalModelFile) -> Result<Self> {
        SignalModel::new(f.p1, f.p2)
    }
}

impl From<SignalModel> for SignalModelFile {
    fn from(s: SignalModel) -> Self {
        SignalModelFile {
            p1: s.p[0],
            p2: s.p[1],
        }
    }
}

impl SignalModel {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        for p in [p1, p2] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("signal precision {p} outside [0, 1]"));
            }
        }
        Ok(SignalModel { p: [p1, p2] })
    }

    pub fn precision(&self, player: Player) -> f64 {
        self.p[player.index()]
    }
}

/// Draws a signal: the realized index with probability `precision`,
/// otherwise an independent draw from the prior.
pub fn sample_signal<R: Rng + ?Sized>(
    prior: &Prior,
    realized_index: usize,
    precision: f64,
    rng: &mut R,
) -> Result<usize> {
    if realized_index >= prior.len() {
        return invalid(format!(
            "realized index {realized_index} out of range for a prior over {} games",
            prior.len()
        ));
    }
    if !(0.0..=1.0).contains(&precision) {
        return invalid(format!("precision {precision} outside [0, 1]"));
    }
    let informative: f64 = rng.gen();
    if informative < precision {
        Ok(realized_index)
    } else {
        Ok(prior.sample(rng))
    }
}

/// One round of play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub x: MixedStrategy,
    pub y: MixedStrategy,
    /// Distribution the emitted strategy was drawn from, when a learner
    /// randomizes over strategies (bandit learners emit a sampled pure
    /// action). `None` means the emitted strategy is the distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_policy: Option<MixedStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_policy: Option<MixedStrategy>,
    /// Per-round external signals received by either player, if any.
    #[serde(default)]
    pub side_signals: [Option<usize>; 2],
}

impl Round {
    pub fn new(x: MixedStrategy, y: MixedStrategy) -> Self {
        Round {
            x,
            y,
            x_policy: None,
            y_policy: None,
            side_signals: [None, None],
        }
    }

    pub fn strategy(&self, player: Player) -> &MixedStrategy {
        match player {
            Player::P1 => &self.x,
            Player::P2 => &self.y,
        }
    }

    pub fn policy(&self, player: Player) -> &MixedStrategy {
        match player {
            Player::P1 => self.x_policy.as_ref().unwrap_or(&self.x),
            Player::P2 => self.y_policy.as_ref().unwrap_or(&self.y),
        }
    }
}

/// A played sequence of strategy profiles for one realization of
/// `(G, s1, s2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rounds: Vec<Round>,
    pub realized_game_index: usize,
    pub signal_indices: (usize, usize),
}

impl Trajectory {
    pub fn new(
        rounds: Vec<Round>,
        realized_game_index: usize,
        signal_indices: (usize, usize),
    ) -> Result<Self> {
        if let Some(first) = rounds.first() {
            let (n1, n2) = (first.x.len(), first.y.len());
            if rounds.iter().any(|r| r.x.len() != n1 || r.y.len() != n2) {
                return invalid("trajectory rounds disagree on action counts");
            }
        }
        Ok(Trajectory {
            rounds,
            realized_game_index,
            signal_indices,
        })
    }

    /// Trajectory of the given profiles with placeholder indices.
    pub fn from_profiles(profiles: Vec<(MixedStrategy, MixedStrategy)>) -> Result<Self> {
        Self::new(
            profiles
                .into_iter()
                .map(|(x, y)| Round::new(x, y))
                .collect(),
            0,
            (0, 0),
        )
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

/// A joint distribution over action pairs, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Csp {
    n1: usize,
    n2: usize,
    mass: Vec<f64>,
}

impl Csp {
    pub fn new(n1: usize, n2: usize, mass: Vec<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 || mass.len() != n1 * n2 {
            return invalid(format!(
                "csp mass has {} cells, expected {n1}x{n2}",
                mass.len()
            ));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < -AGGREGATE_TOL) {
            return invalid("csp has a negative cell");
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > AGGREGATE_TOL {
            return invalid(format!("csp mass sums to {total}"));
        }
        Ok(Csp { n1, n2, mass })
    }

    pub fn point(n1: usize, n2: usize, a1: usize, a2: usize) -> Self {
        let mut mass = vec![0.0; n1 * n2];
        mass[a1 * n2 + a2] = 1.0;
        Csp { n1, n2, mass }
    }

    /// `x ⊗ y`.
    pub fn product(x: &MixedStrategy, y: &MixedStrategy) -> Self {
        let mut mass = Vec::with_capacity(x.len() * y.len());
        for xa in x.probs() {
            for yb in y.probs() {
                mass.push(xa * yb);
            }
        }
        Csp {
            n1: x.len(),
            n2: y.len(),
            mass,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn mass(&self, a1: usize, a2: usize) -> f64 {
        self.mass[a1 * self.n2 + a2]
    }

    pub fn cells(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Expected utility of `player` under the joint distribution.
    pub fn expected_utility(&self, g: &GameMatrix, player: Player) -> Result<f64> {
        if g.shape() != self.shape() {
            return invalid("csp and game shapes differ");
        }
        let mut total = 0.0;
        for a in 0..self.n1 {
            for b in 0..self.n2 {
                total += self.mass(a, b) * g.u(player, a, b);
            }
        }
        Ok(total)
    }

    /// Cell masses keyed by row label then column label.
    pub fn labelled(
        &self,
        g: &GameMatrix,
    ) -> std::collections::BTreeMap<String, std::collections::BTreeMap<String, f64>> {
        let mut out = std::collections::BTreeMap::new();
        for a in 0..self.n1 {
            let row: std::collections::BTreeMap<String, f64> = (0..self.n2)
                .map(|b| (g.labels(Player::P2)[b].clone(), self.mass(a, b)))
                .collect();
            out.insert(g.labels(Player::P1)[a].clone(), row);
        }
        out
    }
}

/// `(1/T) Σ_t x_t ⊗ y_t`.
pub fn csp_from_trajectory(traj: &Trajectory) -> Result<Csp> {
    let Some(first) = traj.rounds.first() else {
        return invalid("empty trajectory");
    };
    let (n1, n2) = (first.x.len(), first.y.len());
    let mut acc = CspAccumulator::new(n1, n2);
    for r in &traj.rounds {
        acc.add(&r.x, &r.y);
    }
    acc.finish()
}

/// Running sum of outer products.
#[derive(Debug, Clone)]
pub(crate) struct CspAccumulator {
    n1: usize,
    n2: usize,
    sum: Vec<f64>,
    count: usize,
}

impl CspAccumulator {
    pub fn new(n1: usize, n2: usize) -> Self {
        CspAccumulator {
            n1,
            n2,
            sum: vec![0.0; n1 * n2],
            count: 0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: &MixedStrategy, y: &MixedStrategy) {
        for (a, xa) in x.probs().iter().enumerate() {
            if *xa == 0.0 {
                continue;
            }
            for (b, yb) in y.probs().iter().enumerate() {
                self.sum[a * self.n2 + b] += xa * yb;
            }
        }
        self.count += 1;
    }

    pub fn finish(&self) -> Result<Csp> {
        if self.count == 0 {
            return invalid("no rounds recorded");
        }
        let t = self.count as f64;
        Csp::new(self.n1, self.n2, self.sum.iter().map(|s| s / t).collect())
    }
}

/// Convex combination of CSPs.
pub fn mix_csps(parts: &[(f64, &Csp)]) -> Result<Csp> {
    let Some((_, first)) = parts.first() else {
        return invalid("no CSPs to mix");
    };
    let shape = first.shape();
    if parts
        .iter()
        .any(|(w, c)| c.shape() != shape || !w.is_finite() || *w < 0.0)
    {
        return invalid("mixture parts must share a shape and have nonnegative weights");
    }
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > CONSTRUCTION_TOL {
        return invalid(format!("mixture weights sum to {total}"));
    }
    let mut mass = vec![0.0; shape.0 * shape.1];
    for (w, c) in parts {
        for (m, v) in mass.iter_mut().zip(c.cells()) {
            *m += w * v;
        }
    }
    Csp::new(shape.0, shape.1, mass)
}

/// What a player observes after a round.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub own_strategy: MixedStrategy,
    /// Present exactly under full-information feedback.
    pub opponent_strategy: Option<MixedStrategy>,
    pub own_utility: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g1() -> GameMatrix {
        builtin::fig1_g1(1.0)
    }

    #[test]
    fn pure_profile_matches_entry() {
        let g = g1();
        let x = MixedStrategy::pure(2, 0);
        let y = MixedStrategy::pure(2, 0);
        assert_eq!(expected_utility(&g, &x, &y, Player::P1).unwrap(), 16.0);
        for a in 0..2 {
            for b in 0..2 {
                let x = MixedStrategy::pure(2, a);
                let y = MixedStrategy::pure(2, b);
                for p in Player::both() {
                    assert_eq!(expected_utility(&g, &x, &y, p).unwrap(), g.u(p, a, b));
                }
            }
        }
    }

    #[test]
    fn uniform_profile_by_hand() {
        let g = g1();
        let h = MixedStrategy::uniform(2);
        let v = expected_utility(&g, &h, &h, Player::P2).unwrap();
        assert!((v - (-7.25)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = g1();
        let x = MixedStrategy::uniform(3);
        let y = MixedStrategy::uniform(2);
        assert!(matches!(
            expected_utility(&g, &x, &y, Player::P1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn strategy_validation() {
        assert!(MixedStrategy::new(vec![0.5, 0.5]).is_ok());
        assert!(MixedStrategy::new(vec![0.5, 0.6]).is_err());
        assert!(MixedStrategy::new(vec![1.5, -0.5]).is_err());
        assert!(MixedStrategy::new(vec![]).is_err());
    }

    #[test]
    fn prior_validation() {
        let g = g1();
        let small = GameMatrix::from_rows("s", vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        assert!(Prior::new(vec![(g.clone(), 0.5), (small, 0.5)]).is_err());
        assert!(Prior::new(vec![(g.clone(), 0.5), (g.clone(), 0.4)]).is_err());
        assert!(Prior::new(vec![]).is_err());
        assert!(Prior::new(vec![(g.clone(), 0.25), (g, 0.75)]).is_ok());
    }

    #[test]
    fn game_file_round_trip() {
        let g = g1();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"actions1\""));
        let back: GameMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"name":"x","actions1":["A"],"actions2":["C","D"],"u1":[[1]],"u2":[[1,2]]}"#;
        assert!(serde_json::from_str::<GameMatrix>(bad).is_err());
    }

    #[test]
    fn signal_precision_one_is_exact() {
        let prior = builtin::fig1_prior(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_signal(&prior, 0, 1.0, &mut rng).unwrap(), 0);
            assert_eq!(sample_signal(&prior, 1, 1.0, &mut rng).unwrap(), 1);
        }
    }

    fn hit_rate(precision: f64, seed: u64) -> f64 {
        let prior = builtin::fig1_prior(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_signal(&prior, 0, precision, &mut rng).unwrap() == 0)
            .count();
        hits as f64 / n as f64
    }

    #[test]
    fn signal_frequencies_match_likelihood() {
        let bound = 3.0 * (0.25f64 / 100_000.0).sqrt();
        for (p, expect) in [(0.0, 0.5), (0.5, 0.75), (0.9, 0.95)] {
            let f = hit_rate(p, 11);
            assert!((f - expect).abs() < bound, "p={p}: {f} vs {expect}");
        }
    }

    #[test]
    fn signal_index_out_of_range() {
        let prior = builtin::fig1_prior(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_signal(&prior, 2, 0.5, &mut rng).is_err());
    }

    #[test]
    fn csp_examples() {
        let a = MixedStrategy::pure(2, 0);
        let b = MixedStrategy::pure(2, 1);
        let c = MixedStrategy::pure(2, 0);
        let d = MixedStrategy::pure(2, 1);

        let constant = Trajectory::from_profiles(vec![(a.clone(), c.clone()); 100]).unwrap();
        assert_eq!(
            csp_from_trajectory(&constant).unwrap(),
            Csp::point(2, 2, 0, 0)
        );

        let two = Trajectory::from_profiles(vec![(a.clone(), c.clone()), (b, d)]).unwrap();
        let csp = csp_from_trajectory(&two).unwrap();
        assert_eq!(csp.cells(), &[0.5, 0.0, 0.0, 0.5]);

        let half = Trajectory::from_profiles(vec![(MixedStrategy::uniform(2), c)]).unwrap();
        let csp = csp_from_trajectory(&half).unwrap();
        assert_eq!(csp.cells(), &[0.5, 0.0, 0.5, 0.0]);

        let empty = Trajectory::from_profiles(vec![]).unwrap();
        assert!(csp_from_trajectory(&empty).is_err());
    }

    #[test]
    fn mix_examples() {
        let ac = Csp::point(2, 2, 0, 0);
        let ad = Csp::point(2, 2, 0, 1);
        let bd = Csp::point(2, 2, 1, 1);
        assert_eq!(mix_csps(&[(1.0, &ac)]).unwrap(), ac);
        assert_eq!(
            mix_csps(&[(0.5, &ac), (0.5, &bd)]).unwrap().cells(),
            &[0.5, 0.0, 0.0, 0.5]
        );
        let p = 0.5;
        let m = mix_csps(&[((1.0 + p) / 2.0, &ac), ((1.0 - p) / 2.0, &ad)]).unwrap();
        assert_eq!(m.cells(), &[0.75, 0.25, 0.0, 0.0]);
        assert!(mix_csps(&[(0.5, &ac), (0.4, &bd)]).is_err());
    }
}
