//! Finite game model and the strategy objects built on top of it.
//!
//! Joint actions at a state are enumerated in lexicographic order of the
//! per-player admissible action indices, player 0 most significant. Every
//! other module indexes kernels, payoffs and correlated strategies with this
//! canonical flattening.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};

/// Tolerance for row stochasticity and normalisation checks on input.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Dense, index-resolved description of a game, as produced by the file
/// loader. [`GameModel::new`] validates it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescription {
    pub states: Vec<String>,
    /// Action identifiers per player.
    pub actions: Vec<Vec<String>>,
    /// `admissible[i][x]`: action indices of player `i` available at `x`.
    pub admissible: Vec<Vec<Vec<usize>>>,
    pub delta: Vec<bool>,
    pub eta: Vec<f64>,
    /// `kernel[x][joint][y]`.
    pub kernel: Vec<Vec<Vec<f64>>>,
    /// `reward[i][x][joint]`.
    pub reward: Vec<Vec<Vec<f64>>>,
    /// `cost[i][j][x][joint]`.
    pub cost: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rho[i][j]`.
    pub rho: Vec<Vec<f64>>,
}

/// A validated finite N-player absorbing game. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    admissible: Vec<Vec<Vec<usize>>>,
    delta: Vec<bool>,
    eta: Vec<f64>,
    joint: Vec<Vec<Vec<usize>>>,
    kernel: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<Vec<f64>>>,
    cost: Vec<Vec<Vec<Vec<f64>>>>,
    rho: Vec<Vec<f64>>,
    reward_bound: f64,
}

/// Enumerates the joint actions for per-player admissible lists, in canonical
/// lexicographic order. Each joint action is returned as the per-player
/// action indices.
pub fn enumerate_joint(per_player: &[&[usize]]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::with_capacity(per_player.len())];
    for options in per_player {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |&a| {
                    let mut next = prefix.clone();
                    next.push(a);
                    next
                })
            })
            .collect();
    }
    out
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

pub(crate) fn check_distribution(v: &[f64], what: &str) -> std::result::Result<(), String> {
    if let Some(bad) = v.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("{what} has invalid entry {bad}"));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("{what} sums to {sum}"));
    }
    Ok(())
}

impl GameModel {
    /// Validates a description and builds the model.
    pub fn new(desc: ModelDescription) -> Result<Self> {
        let s = desc.states.len();
        let n = desc.actions.len();
        if s == 0 {
            return Err(schema("model needs at least one state"));
        }
        if n == 0 {
            return Err(schema("model needs at least one player"));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &desc.states {
            if !seen.insert(name) {
                return Err(schema(format!("duplicate state `{name}`")));
            }
        }
        for (i, acts) in desc.actions.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            for a in acts {
                if !seen.insert(a) {
                    return Err(schema(format!("duplicate action `{a}` for player {i}")));
                }
            }
        }
        if desc.delta.len() != s || desc.eta.len() != s {
            return Err(schema("delta/eta length differs from the number of states"));
        }
        if desc.admissible.len() != n || desc.admissible.iter().any(|per| per.len() != s) {
            return Err(schema("admissible sets must be given per player and per state"));
        }
        let mut admissible = desc.admissible.clone();
        for (i, per_state) in admissible.iter_mut().enumerate() {
            for (x, set) in per_state.iter_mut().enumerate() {
                if set.is_empty() {
                    return Err(Error::EmptyActionSet {
                        player: i,
                        state: desc.states[x].clone(),
                    });
                }
                set.sort_unstable();
                if set.windows(2).any(|w| w[0] == w[1]) {
                    return Err(schema(format!(
                        "duplicate admissible action for player {i} at `{}`",
                        desc.states[x]
                    )));
                }
                if set.iter().any(|&a| a >= desc.actions[i].len()) {
                    return Err(schema(format!("admissible action index out of range for player {i}")));
                }
            }
        }
        if admissible != desc.admissible {
            return Err(schema("admissible action lists must be sorted by action index"));
        }

        let joint: Vec<Vec<Vec<usize>>> = (0..s)
            .map(|x| {
                let lists: Vec<&[usize]> = admissible.iter().map(|p| p[x].as_slice()).collect();
                enumerate_joint(&lists)
            })
            .collect();

        let p = desc.rho.first().map_or(0, Vec::len);
        if desc.rho.len() != n || desc.rho.iter().any(|r| r.len() != p) {
            return Err(schema("constraint constants must have one row of common length per player"));
        }
        if desc.rho.iter().flatten().any(|v| !v.is_finite()) {
            return Err(schema("constraint constants must be finite"));
        }
        if desc.kernel.len() != s || desc.reward.len() != n || desc.cost.len() != n {
            return Err(schema("kernel/reward/cost dimensions do not match"));
        }
        for x in 0..s {
            let j = joint[x].len();
            if desc.kernel[x].len() != j || desc.kernel[x].iter().any(|row| row.len() != s) {
                return Err(schema(format!("kernel dimensions wrong at `{}`", desc.states[x])));
            }
        }
        for i in 0..n {
            if desc.reward[i].len() != s
                || (0..s).any(|x| desc.reward[i][x].len() != joint[x].len())
            {
                return Err(schema(format!("reward dimensions wrong for player {i}")));
            }
            if desc.cost[i].len() != p {
                return Err(schema(format!("player {i} needs exactly {p} cost rows")));
            }
            for row in &desc.cost[i] {
                if row.len() != s || (0..s).any(|x| row[x].len() != joint[x].len()) {
                    return Err(schema(format!("cost dimensions wrong for player {i}")));
                }
            }
        }
        let payoff_values = desc
            .reward
            .iter()
            .flatten()
            .flatten()
            .chain(desc.cost.iter().flatten().flatten().flatten());
        let mut reward_bound: f64 = 0.0;
        for v in payoff_values {
            if !v.is_finite() {
                return Err(schema("rewards and costs must be finite"));
            }
            reward_bound = reward_bound.max(v.abs());
        }

        let model = GameModel {
            states: desc.states,
            actions: desc.actions,
            admissible,
            delta: desc.delta,
            eta: desc.eta,
            joint,
            kernel: desc.kernel,
            reward: desc.reward,
            cost: desc.cost,
            rho: desc.rho,
            reward_bound,
        };
        model.check_invariants()?;
        Ok(model)
    }

    fn check_invariants(&self) -> Result<()> {
        for x in 0..self.state_count() {
            for ja in 0..self.joint_count(x) {
                let row = &self.kernel[x][ja];
                if let Err(detail) = check_distribution(row, "row") {
                    return Err(Error::NonStochasticRow {
                        state: self.states[x].clone(),
                        action: self.joint_label(x, ja),
                        detail,
                    });
                }
                if !self.delta[x] {
                    continue;
                }
                let inside: f64 = row.iter().zip(&self.delta).filter(|(_, d)| **d).map(|(p, _)| p).sum();
                let violation = |detail: String| Error::AbsorbingViolation {
                    state: self.states[x].clone(),
                    action: self.joint_label(x, ja),
                    detail,
                };
                if (inside - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(violation(format!("only {inside} of the mass stays in the absorbing set")));
                }
                for i in 0..self.player_count() {
                    if self.reward[i][x][ja] != 0.0 {
                        return Err(violation(format!("nonzero reward for player {i}")));
                    }
                    if let Some(j) = (0..self.constraint_rows()).find(|&j| self.cost[i][j][x][ja] != 0.0) {
                        return Err(violation(format!("nonzero cost row {j} for player {i}")));
                    }
                }
            }
        }
        check_distribution(&self.eta, "initial distribution").map_err(Error::BadDistribution)
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn player_count(&self) -> usize {
        self.actions.len()
    }

    /// Number of constraint rows `p`, common to all players.
    pub fn constraint_rows(&self) -> usize {
        self.rho.first().map_or(0, Vec::len)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn actions(&self, player: usize) -> &[String] {
        &self.actions[player]
    }

    /// Sorted action indices of `player` admissible at `state`.
    pub fn admissible(&self, player: usize, state: usize) -> &[usize] {
        &self.admissible[player][state]
    }

    /// Position of `action` inside the admissible list of `player` at `state`.
    pub fn local_index(&self, player: usize, state: usize, action: usize) -> Option<usize> {
        self.admissible[player][state].binary_search(&action).ok()
    }

    pub fn joint_actions(&self, state: usize) -> &[Vec<usize>] {
        &self.joint[state]
    }

    pub fn joint_count(&self, state: usize) -> usize {
        self.joint[state].len()
    }

    /// Canonical index of the joint action whose per-player *local*
    /// (admissible-list) indices are `locals`.
    pub fn joint_index(&self, state: usize, locals: &[usize]) -> usize {
        locals
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &l)| acc * self.admissible[i][state].len() + l)
    }

    /// Local index of `player`'s component of joint action `joint` at `state`.
    pub fn joint_component(&self, state: usize, joint: usize, player: usize) -> usize {
        let radix_after: usize = (player + 1..self.player_count())
            .map(|k| self.admissible[k][state].len())
            .product();
        (joint / radix_after) % self.admissible[player][state].len()
    }

    pub fn joint_label(&self, state: usize, joint: usize) -> String {
        self.joint[state][joint]
            .iter()
            .enumerate()
            .map(|(i, &a)| self.actions[i][a].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Next-state distribution for `(state, joint)`.
    pub fn kernel(&self, state: usize, joint: usize) -> &[f64] {
        &self.kernel[state][joint]
    }

    pub fn reward(&self, player: usize, state: usize, joint: usize) -> f64 {
        self.reward[player][state][joint]
    }

    pub fn cost(&self, player: usize, row: usize, state: usize, joint: usize) -> f64 {
        self.cost[player][row][state][joint]
    }

    pub fn rho(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn is_absorbing_state(&self, state: usize) -> bool {
        self.delta[state]
    }

    /// States outside the absorbing set, ascending.
    pub fn transient_states(&self) -> Vec<usize> {
        (0..self.state_count()).filter(|&x| !self.delta[x]).collect()
    }

    /// Largest absolute reward or cost value.
    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    pub fn description(&self) -> ModelDescription {
        ModelDescription {
            states: self.states.clone(),
            actions: self.actions.clone(),
            admissible: self.admissible.clone(),
            delta: self.delta.clone(),
            eta: self.eta.clone(),
            kernel: self.kernel.clone(),
            reward: self.reward.clone(),
            cost: self.cost.clone(),
            rho: self.rho.clone(),
        }
    }

    /// Same model with different constraint constants.
    pub fn with_rho(&self, rho: Vec<Vec<f64>>) -> Result<Self> {
        let p = self.constraint_rows();
        if rho.len() != self.player_count() || rho.iter().any(|r| r.len() != p) {
            return Err(schema(format!(
                "expected {} rows of {p} constraint constants",
                self.player_count()
            )));
        }
        let mut desc = self.description();
        desc.rho = rho;
        GameModel::new(desc)
    }

    /// Same model with a different initial distribution.
    pub fn with_eta(&self, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != self.state_count() {
            return Err(Error::BadDistribution(format!(
                "expected {} entries, got {}",
                self.state_count(),
                eta.len()
            )));
        }
        let mut desc = self.description();
        desc.eta = eta;
        GameModel::new(desc)
    }

    pub(crate) fn check_eta(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.state_count() {
            return Err(Error::BadDistribution(format!(
                "expected {} entries, got {}",
                self.state_count(),
                eta.len()
            )));
        }
        check_distribution(eta, "initial distribution").map_err(Error::BadDistribution)
    }
}

/// Per-player, state-conditioned action distributions. `pi[i][x]` is indexed
/// by position in `model.admissible(i, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProfile {
    pi: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn check_player_strategy(model: &GameModel, player: usize, strategy: &[Vec<f64>]) -> Result<()> {
    if strategy.len() != model.state_count() {
        return Err(Error::ProfileModelMismatch(format!(
            "player {player}: expected {} states, got {}",
            model.state_count(),
            strategy.len()
        )));
    }
    for (x, dist) in strategy.iter().enumerate() {
        let expected = model.admissible(player, x).len();
        if dist.len() != expected {
            return Err(Error::ProfileModelMismatch(format!(
                "player {player} at `{}`: expected {expected} admissible actions, got {}",
                model.states()[x],
                dist.len()
            )));
        }
        check_distribution(dist, &format!("player {player} at `{}`", model.states()[x]))
            .map_err(Error::InvalidStrategy)?;
    }
    Ok(())
}

fn uniform_over(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

impl StationaryProfile {
    pub fn new(model: &GameModel, pi: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if pi.len() != model.player_count() {
            return Err(Error::ProfileModelMismatch(format!(
                "expected {} players, got {}",
                model.player_count(),
                pi.len()
            )));
        }
        for (i, strategy) in pi.iter().enumerate() {
            check_player_strategy(model, i, strategy)?;
        }
        Ok(StationaryProfile { pi })
    }

    /// Every player mixes uniformly over its admissible actions.
    pub fn uniform(model: &GameModel) -> Self {
        let pi = (0..model.player_count())
            .map(|i| {
                (0..model.state_count())
                    .map(|x| uniform_over(model.admissible(i, x).len()))
                    .collect()
            })
            .collect();
        StationaryProfile { pi }
    }

    /// Pure profile; `choice[i][x]` is a local admissible index.
    pub fn deterministic(model: &GameModel, choice: &[Vec<usize>]) -> Result<Self> {
        if choice.len() != model.player_count() || choice.iter().any(|c| c.len() != model.state_count()) {
            return Err(Error::ProfileModelMismatch("choice table has the wrong shape".into()));
        }
        let pi = choice
            .iter()
            .enumerate()
            .map(|(i, per_state)| {
                per_state
                    .iter()
                    .enumerate()
                    .map(|(x, &c)| {
                        let len = model.admissible(i, x).len();
                        let mut v = vec![0.0; len];
                        if c < len {
                            v[c] = 1.0;
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        StationaryProfile::new(model, pi)
    }

    /// Independent Dirichlet(1) draw for every player and state.
    pub fn random<R: Rng + ?Sized>(model: &GameModel, rng: &mut R) -> Self {
        let pi = (0..model.player_count())
            .map(|i| {
                (0..model.state_count())
                    .map(|x| dirichlet(model.admissible(i, x).len(), rng))
                    .collect()
            })
            .collect();
        StationaryProfile { pi }
    }

    pub fn player_count(&self) -> usize {
        self.pi.len()
    }

    pub fn player(&self, player: usize) -> &[Vec<f64>] {
        &self.pi[player]
    }

    pub fn get(&self, player: usize, state: usize) -> &[f64] {
        &self.pi[player][state]
    }

    pub fn players(&self) -> &[Vec<Vec<f64>>] {
        &self.pi
    }

    /// Replaces one player's strategy, i.e. the profile `(π^{-i}, σ)`.
    pub fn with_player(&self, model: &GameModel, player: usize, strategy: Vec<Vec<f64>>) -> Result<Self> {
        check_player_strategy(model, player, &strategy)?;
        let mut pi = self.pi.clone();
        pi[player] = strategy;
        Ok(StationaryProfile { pi })
    }

    pub(crate) fn from_parts_unchecked(pi: Vec<Vec<Vec<f64>>>) -> Self {
        StationaryProfile { pi }
    }

    /// Max over players and states of the total-variation distance.
    pub fn distance(&self, other: &StationaryProfile) -> f64 {
        self.pi
            .iter()
            .zip(&other.pi)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(p, q)| total_variation(p, q))
            .fold(0.0, f64::max)
    }

    pub fn into_inner(self) -> Vec<Vec<Vec<f64>>> {
        self.pi
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// State-conditioned distribution over joint actions, not necessarily a
/// product across players.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedStrategy {
    pi: Vec<Vec<f64>>,
}

impl CorrelatedStrategy {
    pub fn new(model: &GameModel, pi: Vec<Vec<f64>>) -> Result<Self> {
        if pi.len() != model.state_count() {
            return Err(Error::ProfileModelMismatch(format!(
                "expected {} states, got {}",
                model.state_count(),
                pi.len()
            )));
        }
        for (x, dist) in pi.iter().enumerate() {
            if dist.len() != model.joint_count(x) {
                return Err(Error::ProfileModelMismatch(format!(
                    "at `{}`: expected {} joint actions, got {}",
                    model.states()[x],
                    model.joint_count(x),
                    dist.len()
                )));
            }
            check_distribution(dist, &format!("joint strategy at `{}`", model.states()[x]))
                .map_err(Error::InvalidStrategy)?;
        }
        Ok(CorrelatedStrategy { pi })
    }

    pub fn uniform(model: &GameModel) -> Self {
        CorrelatedStrategy {
            pi: (0..model.state_count()).map(|x| uniform_over(model.joint_count(x))).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(model: &GameModel, rng: &mut R) -> Self {
        CorrelatedStrategy {
            pi: (0..model.state_count()).map(|x| dirichlet(model.joint_count(x), rng)).collect(),
        }
    }

    pub fn get(&self, state: usize) -> &[f64] {
        &self.pi[state]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.pi
    }
}

/// Product kernel `π(a|x) = Π_i π^i(a^i|x)`.
pub fn product_strategy(model: &GameModel, profile: &StationaryProfile) -> Result<CorrelatedStrategy> {
    if profile.player_count() != model.player_count() {
        return Err(Error::ProfileModelMismatch(format!(
            "expected {} players, got {}",
            model.player_count(),
            profile.player_count()
        )));
    }
    for i in 0..model.player_count() {
        check_player_strategy(model, i, profile.player(i))?;
    }
    let pi = (0..model.state_count())
        .map(|x| {
            (0..model.joint_count(x))
                .map(|ja| {
                    (0..model.player_count())
                        .map(|i| profile.get(i, x)[model.joint_component(x, ja, i)])
                        .product()
                })
                .collect()
        })
        .collect();
    Ok(CorrelatedStrategy { pi })
}

/// Transition matrix `Q_π` of the state chain under a correlated strategy.
pub fn induced_chain(model: &GameModel, strategy: &CorrelatedStrategy) -> Result<DMatrix<f64>> {
    if strategy.states().len() != model.state_count()
        || (0..model.state_count()).any(|x| strategy.get(x).len() != model.joint_count(x))
    {
        return Err(Error::ProfileModelMismatch("strategy shape does not match the model".into()));
    }
    let s = model.state_count();
    let mut q = DMatrix::zeros(s, s);
    for x in 0..s {
        for (ja, &w) in strategy.get(x).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (y, &p) in model.kernel(x, ja).iter().enumerate() {
                q[(x, y)] += w * p;
            }
        }
    }
    Ok(q)
}
