//! Model, profile and result documents.
//!
//! Models are TOML with a versioned header; probabilities and payoffs may be
//! decimals or exact `"p/q"` fractions. Profiles and solver results are JSON.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{EquilibriumCertificate, SolveConfig, SolveOutcome};
use crate::error::{Error, Result};
use crate::model::{enumerate_joint, GameModel, ModelDescription, StationaryProfile};
use crate::transforms::DiscountedModel;

pub const MODEL_FORMAT: &str = "absorbing-game";
pub const PROFILE_FORMAT: &str = "stationary-profile";
pub const RESULT_FORMAT: &str = "equilibrium-result";
pub const VERSION: u32 = 1;

/// Wildcard matching every admissible action of one player.
pub const ANY_ACTION: &str = "*";

/// A number written as a float, an integer, or a `"p/q"` / decimal string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Number {
    pub fn value(&self) -> Result<f64> {
        match self {
            Number::Int(v) => Ok(*v as f64),
            Number::Float(v) => Ok(*v),
            Number::Text(s) => parse_number(s),
        }
    }
}

impl From<f64> for Number {
    fn from(v: f64) -> Self {
        Number::Float(v)
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let t = s.trim();
    let value = if t.contains('/') {
        t.parse::<Ratio<i64>>()
            .ok()
            .filter(|r| *r.denom() != 0)
            .and_then(|r| r.to_f64())
    } else {
        t.parse::<f64>().ok()
    };
    value.ok_or_else(|| Error::Schema(format!("`{s}` is not a number or fraction")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub from: String,
    pub action: Vec<String>,
    pub to: String,
    pub p: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    pub player: usize,
    pub state: String,
    pub action: Vec<String>,
    pub value: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    pub player: usize,
    pub row: usize,
    pub state: String,
    pub action: Vec<String>,
    pub value: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountBlock {
    pub beta: Number,
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub players: usize,
    pub states: Vec<String>,
    #[serde(default)]
    pub delta: Vec<String>,
    /// Per player, the action names.
    pub actions: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_rows: Option<usize>,
    #[serde(default)]
    pub rho: Vec<Vec<Number>>,
    /// Initial distribution; omitted states get 0.
    pub eta: BTreeMap<String, Number>,
    /// Per state, per player admissible actions; omitted states allow all.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub admissible: BTreeMap<String, Vec<Vec<String>>>,
    #[serde(default)]
    pub kernel: Vec<KernelEntry>,
    #[serde(default)]
    pub rewards: Vec<RewardEntry>,
    #[serde(default)]
    pub costs: Vec<CostEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<DiscountBlock>,
}

/// A loaded model: absorbing, or discounted (no absorbing set, a discount block).
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedModel {
    Absorbing(GameModel),
    Discounted(DiscountedModel),
}

impl LoadedModel {
    pub fn game(&self) -> &GameModel {
        match self {
            LoadedModel::Absorbing(m) => m,
            LoadedModel::Discounted(d) => d.model(),
        }
    }

    pub fn into_absorbing(self) -> Result<GameModel> {
        match self {
            LoadedModel::Absorbing(m) => Ok(m),
            LoadedModel::Discounted(_) => Err(Error::Schema(
                "discounted model: convert it with transform-discounted first".into(),
            )),
        }
    }
}

fn index_of(names: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        if map.insert(name.clone(), k).is_some() {
            return Err(Error::Schema(format!("duplicate {what} `{name}`")));
        }
    }
    Ok(map)
}

fn lookup(map: &HashMap<String, usize>, name: &str, what: &str) -> Result<usize> {
    map.get(name)
        .copied()
        .ok_or_else(|| Error::Schema(format!("unknown {what} `{name}`")))
}

impl ModelFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Schema(format!("expected format `{MODEL_FORMAT}`, found `{}`", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::Schema(format!("unsupported version {}", file.version)));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Resolves names, expands wildcards and builds the validated model.
    pub fn into_model(self) -> Result<LoadedModel> {
        let n = self.players;
        if n == 0 || self.actions.len() != n {
            return Err(Error::Schema(format!(
                "`players = {n}` but {} action lists given",
                self.actions.len()
            )));
        }
        let s = self.states.len();
        let state_ix = index_of(&self.states, "state")?;
        let action_ix: Vec<_> = self
            .actions
            .iter()
            .enumerate()
            .map(|(i, acts)| index_of(acts, &format!("action of player {i}")))
            .collect::<Result<_>>()?;

        let mut delta = vec![false; s];
        for name in &self.delta {
            let x = lookup(&state_ix, name, "state")?;
            if delta[x] {
                return Err(Error::Schema(format!("state `{name}` listed twice in delta")));
            }
            delta[x] = true;
        }

        let mut admissible: Vec<Vec<Vec<usize>>> = (0..n)
            .map(|i| vec![(0..self.actions[i].len()).collect(); s])
            .collect();
        for (name, per_player) in &self.admissible {
            let x = lookup(&state_ix, name, "state")?;
            if per_player.len() != n {
                return Err(Error::Schema(format!("admissible sets at `{name}` must list {n} players")));
            }
            for (i, acts) in per_player.iter().enumerate() {
                let mut ids = acts
                    .iter()
                    .map(|a| lookup(&action_ix[i], a, &format!("action of player {i}")))
                    .collect::<Result<Vec<_>>>()?;
                ids.sort_unstable();
                if ids.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Schema(format!("duplicate admissible action at `{name}`")));
                }
                admissible[i][x] = ids;
            }
        }

        let p = match (self.constraint_rows, self.rho.first()) {
            (Some(p), _) => p,
            (None, Some(row)) => row.len(),
            (None, None) => 0,
        };
        let rho = if self.rho.is_empty() {
            if p > 0 {
                return Err(Error::Schema(format!("rho is required when there are {p} constraint rows")));
            }
            vec![Vec::new(); n]
        } else {
            if self.rho.len() != n {
                return Err(Error::Schema(format!("rho must have one row per player ({n})")));
            }
            self.rho
                .iter()
                .map(|row| {
                    if row.len() != p {
                        return Err(Error::Schema(format!("every rho row must have {p} entries")));
                    }
                    row.iter().map(Number::value).collect()
                })
                .collect::<Result<_>>()?
        };

        let mut eta = vec![0.0; s];
        for (name, v) in &self.eta {
            eta[lookup(&state_ix, name, "state")?] = v.value()?;
        }

        // Joint action lookup per state: local tuple -> joint index.
        let joints: Vec<Vec<Vec<usize>>> = (0..s)
            .map(|x| {
                let sets: Vec<&[usize]> = (0..n).map(|i| admissible[i][x].as_slice()).collect();
                enumerate_joint(&sets)
            })
            .collect();
        let joint_lookup: Vec<HashMap<Vec<usize>, usize>> = joints
            .iter()
            .map(|js| js.iter().enumerate().map(|(k, j)| (j.clone(), k)).collect())
            .collect();
        let resolve = |x: usize, names: &[String]| -> Result<Vec<usize>> {
            if names.len() != n {
                return Err(Error::Schema(format!(
                    "joint action {names:?} at `{}` must name {n} actions",
                    self.states[x]
                )));
            }
            let mut options: Vec<Vec<usize>> = Vec::with_capacity(n);
            for (i, name) in names.iter().enumerate() {
                if name == ANY_ACTION {
                    options.push(admissible[i][x].clone());
                } else {
                    let a = lookup(&action_ix[i], name, &format!("action of player {i}"))?;
                    if admissible[i][x].binary_search(&a).is_err() {
                        return Err(Error::Schema(format!(
                            "action `{name}` of player {i} is not admissible at `{}`",
                            self.states[x]
                        )));
                    }
                    options.push(vec![a]);
                }
            }
            let refs: Vec<&[usize]> = options.iter().map(Vec::as_slice).collect();
            Ok(enumerate_joint(&refs).iter().map(|j| joint_lookup[x][j]).collect())
        };

        let mut kernel: Vec<Vec<Vec<f64>>> = (0..s).map(|x| vec![vec![0.0; s]; joints[x].len()]).collect();
        let mut seen_kernel: Vec<Vec<Vec<bool>>> = (0..s).map(|x| vec![vec![false; s]; joints[x].len()]).collect();
        for e in &self.kernel {
            let x = lookup(&state_ix, &e.from, "state")?;
            let y = lookup(&state_ix, &e.to, "state")?;
            let p = e.p.value()?;
            for ja in resolve(x, &e.action)? {
                if std::mem::replace(&mut seen_kernel[x][ja][y], true) {
                    return Err(Error::Schema(format!(
                        "duplicate kernel entry from `{}` to `{}` for {:?}",
                        e.from, e.to, e.action
                    )));
                }
                kernel[x][ja][y] = p;
            }
        }
        // Absorbing states with no listed transitions stay put.
        for x in (0..s).filter(|&x| delta[x]) {
            for ja in 0..joints[x].len() {
                if !seen_kernel[x][ja].iter().any(|b| *b) {
                    kernel[x][ja][x] = 1.0;
                }
            }
        }

        let mut reward: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..s).map(|x| vec![0.0; joints[x].len()]).collect())
            .collect();
        let mut seen_reward = reward.iter().map(|r| r.iter().map(|v| vec![false; v.len()]).collect::<Vec<_>>()).collect::<Vec<_>>();
        for e in &self.rewards {
            if e.player >= n {
                return Err(Error::Schema(format!("unknown player {}", e.player)));
            }
            let x = lookup(&state_ix, &e.state, "state")?;
            let v = e.value.value()?;
            for ja in resolve(x, &e.action)? {
                if std::mem::replace(&mut seen_reward[e.player][x][ja], true) {
                    return Err(Error::Schema(format!(
                        "duplicate reward for player {} at `{}`, {:?}",
                        e.player, e.state, e.action
                    )));
                }
                reward[e.player][x][ja] = v;
            }
        }

        let mut cost: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
            .map(|_| (0..p).map(|_| (0..s).map(|x| vec![0.0; joints[x].len()]).collect()).collect())
            .collect();
        let mut seen_cost = cost
            .iter()
            .map(|rows| rows.iter().map(|r| r.iter().map(|v| vec![false; v.len()]).collect::<Vec<_>>()).collect::<Vec<_>>())
            .collect::<Vec<_>>();
        for e in &self.costs {
            if e.player >= n {
                return Err(Error::Schema(format!("unknown player {}", e.player)));
            }
            if e.row >= p {
                return Err(Error::Schema(format!("constraint row {} out of range ({p} rows)", e.row)));
            }
            let x = lookup(&state_ix, &e.state, "state")?;
            let v = e.value.value()?;
            for ja in resolve(x, &e.action)? {
                if std::mem::replace(&mut seen_cost[e.player][e.row][x][ja], true) {
                    return Err(Error::Schema(format!(
                        "duplicate cost for player {}, row {} at `{}`, {:?}",
                        e.player, e.row, e.state, e.action
                    )));
                }
                cost[e.player][e.row][x][ja] = v;
            }
        }

        let model = GameModel::new(ModelDescription {
            states: self.states.clone(),
            actions: self.actions.clone(),
            admissible,
            delta,
            eta,
            kernel,
            reward,
            cost,
            rho,
        })?;
        match self.discount {
            None => Ok(LoadedModel::Absorbing(model)),
            Some(d) => Ok(LoadedModel::Discounted(DiscountedModel::new(model, d.beta.value()?)?)),
        }
    }

    /// Sparse document for `model`: only nonzero entries are written.
    pub fn from_model(model: &GameModel) -> Self {
        Self::build(model, None)
    }

    pub fn from_discounted(dm: &DiscountedModel) -> Self {
        Self::build(dm.model(), Some(dm.beta()))
    }

    fn build(model: &GameModel, beta: Option<f64>) -> Self {
        let n = model.player_count();
        let s = model.state_count();
        let p = model.constraint_rows();
        let names = |x: usize, ja: usize| -> Vec<String> {
            (0..n)
                .map(|i| {
                    let a = model.admissible(i, x)[model.joint_component(x, ja, i)];
                    model.actions(i)[a].clone()
                })
                .collect()
        };
        let mut kernel = Vec::new();
        let mut rewards = Vec::new();
        let mut costs = Vec::new();
        for x in 0..s {
            for ja in 0..model.joint_count(x) {
                for (y, &q) in model.kernel(x, ja).iter().enumerate() {
                    if q != 0.0 {
                        kernel.push(KernelEntry {
                            from: model.states()[x].clone(),
                            action: names(x, ja),
                            to: model.states()[y].clone(),
                            p: q.into(),
                        });
                    }
                }
                for i in 0..n {
                    let r = model.reward(i, x, ja);
                    if r != 0.0 {
                        rewards.push(RewardEntry {
                            player: i,
                            state: model.states()[x].clone(),
                            action: names(x, ja),
                            value: r.into(),
                        });
                    }
                    for j in 0..p {
                        let c = model.cost(i, j, x, ja);
                        if c != 0.0 {
                            costs.push(CostEntry {
                                player: i,
                                row: j,
                                state: model.states()[x].clone(),
                                action: names(x, ja),
                                value: c.into(),
                            });
                        }
                    }
                }
            }
        }
        let admissible = (0..s)
            .filter(|&x| (0..n).any(|i| model.admissible(i, x).len() != model.actions(i).len()))
            .map(|x| {
                let per_player = (0..n)
                    .map(|i| model.admissible(i, x).iter().map(|&a| model.actions(i)[a].clone()).collect())
                    .collect();
                (model.states()[x].clone(), per_player)
            })
            .collect();
        let rho = if p > 0 {
            model.rho().iter().map(|row| row.iter().map(|&v| v.into()).collect()).collect()
        } else {
            Vec::new()
        };
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: VERSION,
            players: n,
            states: model.states().to_vec(),
            delta: (0..s)
                .filter(|&x| model.is_absorbing_state(x))
                .map(|x| model.states()[x].clone())
                .collect(),
            actions: (0..n).map(|i| model.actions(i).to_vec()).collect(),
            constraint_rows: Some(p),
            rho,
            eta: (0..s)
                .filter(|&x| model.eta()[x] != 0.0)
                .map(|x| (model.states()[x].clone(), model.eta()[x].into()))
                .collect(),
            admissible,
            kernel,
            rewards,
            costs,
            discount: beta.map(|b| DiscountBlock { beta: b.into() }),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    ModelFile::from_toml(&read(path)?)?.into_model()
}

pub fn parse_model(text: &str) -> Result<LoadedModel> {
    ModelFile::from_toml(text)?.into_model()
}

pub fn model_to_toml(model: &GameModel) -> Result<String> {
    ModelFile::from_model(model).to_toml()
}

/// Per player, per state, action name → probability.
pub type NamedStrategies = Vec<BTreeMap<String, BTreeMap<String, Number>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub format: String,
    pub version: u32,
    pub strategies: NamedStrategies,
}

/// Names every admissible action at every state.
pub fn named_strategies(model: &GameModel, profile: &StationaryProfile) -> NamedStrategies {
    (0..model.player_count())
        .map(|i| {
            (0..model.state_count())
                .map(|x| {
                    let dist = model
                        .admissible(i, x)
                        .iter()
                        .zip(profile.get(i, x))
                        .map(|(&a, &q)| (model.actions(i)[a].clone(), q.into()))
                        .collect();
                    (model.states()[x].clone(), dist)
                })
                .collect()
        })
        .collect()
}

/// Resolves named strategies. Absorbing states may be omitted (uniform);
/// omitted actions get probability 0.
pub fn resolve_strategies(model: &GameModel, named: &NamedStrategies) -> Result<StationaryProfile> {
    let n = model.player_count();
    if named.len() != n {
        return Err(Error::ProfileModelMismatch(format!("expected {n} players, got {}", named.len())));
    }
    let state_ix = index_of(model.states(), "state")?;
    let mut pi = Vec::with_capacity(n);
    for (i, per_state) in named.iter().enumerate() {
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; model.state_count()];
        for (state, dist) in per_state {
            let x = lookup(&state_ix, state, "state")?;
            let mut row = vec![0.0; model.admissible(i, x).len()];
            for (action, q) in dist {
                let local = model
                    .actions(i)
                    .iter()
                    .position(|a| a == action)
                    .and_then(|a| model.local_index(i, x, a))
                    .ok_or_else(|| {
                        Error::ProfileModelMismatch(format!(
                            "action `{action}` is not admissible for player {i} at `{state}`"
                        ))
                    })?;
                row[local] = q.value()?;
            }
            rows[x] = Some(row);
        }
        let full = rows
            .into_iter()
            .enumerate()
            .map(|(x, row)| match row {
                Some(r) => Ok(r),
                None if model.is_absorbing_state(x) => {
                    let k = model.admissible(i, x).len();
                    Ok(vec![1.0 / k as f64; k])
                }
                None => Err(Error::ProfileModelMismatch(format!(
                    "player {i} has no strategy at `{}`",
                    model.states()[x]
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        pi.push(full);
    }
    StationaryProfile::new(model, pi)
}

pub fn profile_to_json(model: &GameModel, profile: &StationaryProfile) -> Result<String> {
    let file = ProfileFile {
        format: PROFILE_FORMAT.into(),
        version: VERSION,
        strategies: named_strategies(model, profile),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Schema(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Constrained,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMetadata {
    pub mode: SolveMode,
    pub seed: u64,
    pub restarts: usize,
    pub winning_restart: usize,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_seconds: f64,
    pub config: SolveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub format: String,
    pub version: u32,
    pub strategies: NamedStrategies,
    pub certificate: EquilibriumCertificate,
    pub solver: SolverMetadata,
}

impl ResultFile {
    pub fn new(model: &GameModel, outcome: &SolveOutcome, mode: SolveMode, config: &SolveConfig, wall_time_seconds: f64) -> Self {
        ResultFile {
            format: RESULT_FORMAT.into(),
            version: VERSION,
            strategies: named_strategies(model, &outcome.profile),
            certificate: outcome.certificate.clone(),
            solver: SolverMetadata {
                mode,
                seed: config.seed,
                restarts: config.restarts,
                winning_restart: outcome.restart,
                iterations: outcome.iterations,
                converged: outcome.converged,
                wall_time_seconds,
                config: config.clone(),
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// A strategy document: either a bare profile or a solver result.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyDocument {
    Profile(ProfileFile),
    Result(Box<ResultFile>),
}

impl StrategyDocument {
    pub fn strategies(&self) -> &NamedStrategies {
        match self {
            StrategyDocument::Profile(p) => &p.strategies,
            StrategyDocument::Result(r) => &r.strategies,
        }
    }

    pub fn profile(&self, model: &GameModel) -> Result<StationaryProfile> {
        resolve_strategies(model, self.strategies())
    }
}

pub fn parse_strategy_document(text: &str) -> Result<StrategyDocument> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let format = value.get("format").and_then(|f| f.as_str()).unwrap_or_default().to_string();
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(VERSION as u64) {
        return Err(Error::Schema(format!("unsupported or missing version in `{format}` document")));
    }
    let schema = |e: serde_json::Error| Error::Schema(e.to_string());
    match format.as_str() {
        PROFILE_FORMAT => Ok(StrategyDocument::Profile(serde_json::from_value(value).map_err(schema)?)),
        RESULT_FORMAT => Ok(StrategyDocument::Result(Box::new(serde_json::from_value(value).map_err(schema)?))),
        other => Err(Error::Schema(format!("unexpected document format `{other}`"))),
    }
}

pub fn load_strategy_document(path: &Path) -> Result<StrategyDocument> {
    parse_strategy_document(&read(path)?)
}
