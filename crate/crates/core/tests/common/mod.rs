//! Shared test support: fixture loading, random model generators and
//! reference computations that avoid the library's linear-algebra and LP
//! code paths (plain power iteration and brute force instead).

#![allow(dead_code)]

use std::path::PathBuf;

use absorbing_games::io::{load_model, LoadedModel};
use absorbing_games::transforms::DiscountedModel;
use absorbing_games::{CorrelatedStrategy, GameModel, ModelDescription, StationaryProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ABSORBING_FIXTURES: [&str; 7] = [
    "absorbed_start",
    "two_player_constrained",
    "matching_pennies",
    "geometric",
    "constrained_single",
    "slow_fast",
    "stay_loop",
];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.toml"))
}

pub fn fixture(name: &str) -> GameModel {
    match load_model(&fixture_path(name)).unwrap() {
        LoadedModel::Absorbing(m) => m,
        LoadedModel::Discounted(_) => panic!("{name} is discounted"),
    }
}

pub fn discounted_fixture(name: &str) -> DiscountedModel {
    match load_model(&fixture_path(name)).unwrap() {
        LoadedModel::Discounted(d) => d,
        LoadedModel::Absorbing(_) => panic!("{name} is not discounted"),
    }
}

/// Fixtures that are absorbing from their initial distribution.
pub fn absorbing_fixtures() -> Vec<(&'static str, GameModel)> {
    ABSORBING_FIXTURES
        .iter()
        .filter(|n| **n != "stay_loop")
        .map(|n| (*n, fixture(n)))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_transient: usize,
    pub max_absorbing: usize,
    pub max_actions: usize,
    pub max_players: usize,
    pub max_rows: usize,
}

/// Up to 6 states, 3 actions per player, 3 players.
pub const DESK: Shape = Shape {
    max_transient: 4,
    max_absorbing: 2,
    max_actions: 3,
    max_players: 3,
    max_rows: 2,
};

/// Up to 3 states and 3 actions.
pub const SMALL: Shape = Shape {
    max_transient: 2,
    max_absorbing: 1,
    max_actions: 3,
    max_players: 2,
    max_rows: 0,
};

fn random_weights<R: Rng>(rng: &mut R, len: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..len)
            .map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.into_iter().map(|v| v / total).collect();
        }
    }
}

/// Random model in which every transient row puts probability at least
/// `0.05` on the absorbing set, so it absorbs under every strategy.
pub fn random_absorbing<R: Rng>(rng: &mut R, shape: Shape) -> GameModel {
    let transient = rng.random_range(1..=shape.max_transient);
    let absorbing = rng.random_range(1..=shape.max_absorbing);
    let s = transient + absorbing;
    let n = rng.random_range(1..=shape.max_players);
    let p = rng.random_range(0..=shape.max_rows);
    let actions: Vec<Vec<String>> = (0..n)
        .map(|i| (0..rng.random_range(1..=shape.max_actions)).map(|a| format!("p{i}a{a}")).collect())
        .collect();
    let admissible: Vec<Vec<Vec<usize>>> = actions
        .iter()
        .map(|acts| {
            (0..s)
                .map(|_| {
                    let mut set: Vec<usize> = (0..acts.len()).filter(|_| rng.random::<f64>() < 0.75).collect();
                    if set.is_empty() {
                        set.push(rng.random_range(0..acts.len()));
                    }
                    set
                })
                .collect()
        })
        .collect();
    let joint_count = |x: usize| -> usize { (0..n).map(|i| admissible[i][x].len()).product() };
    let kernel: Vec<Vec<Vec<f64>>> = (0..s)
        .map(|x| {
            (0..joint_count(x))
                .map(|_| {
                    let mut row = vec![0.0; s];
                    if x >= transient {
                        row[x] = 1.0;
                        return row;
                    }
                    let exit = 0.05 + 0.6 * rng.random::<f64>();
                    let inner = random_weights(rng, transient, 0.3);
                    let outer = random_weights(rng, absorbing, 0.3);
                    for y in 0..transient {
                        row[y] = (1.0 - exit) * inner[y];
                    }
                    for y in 0..absorbing {
                        row[transient + y] = exit * outer[y];
                    }
                    row
                })
                .collect()
        })
        .collect();
    let payoff = |rng: &mut R| -> Vec<Vec<f64>> {
        (0..s)
            .map(|x| {
                (0..joint_count(x))
                    .map(|_| if x < transient { rng.random_range(-1.0..1.0) } else { 0.0 })
                    .collect()
            })
            .collect()
    };
    let reward: Vec<_> = (0..n).map(|_| payoff(rng)).collect();
    let cost: Vec<Vec<_>> = (0..n).map(|_| (0..p).map(|_| payoff(rng)).collect()).collect();
    let mut eta = random_weights(rng, transient, 0.4);
    eta.extend(std::iter::repeat_n(0.0, absorbing));
    if rng.random::<f64>() < 0.2 {
        // Some initial mass already absorbed.
        let q = rng.random::<f64>() * 0.5;
        eta.iter_mut().for_each(|v| *v *= 1.0 - q);
        eta[transient] += q;
    }
    let rho = (0..n).map(|_| (0..p).map(|_| rng.random_range(-20.0..-10.0)).collect()).collect();
    GameModel::new(ModelDescription {
        states: (0..s).map(|x| format!("x{x}")).collect(),
        actions,
        admissible,
        delta: (0..s).map(|x| x >= transient).collect(),
        eta,
        kernel,
        reward,
        cost,
        rho,
    })
    .unwrap()
}

/// Random discounted model (no absorbing set).
pub fn random_discounted<R: Rng>(rng: &mut R, beta: f64) -> DiscountedModel {
    let s = rng.random_range(1..=4);
    let n = rng.random_range(1..=2);
    let actions: Vec<Vec<String>> = (0..n)
        .map(|i| (0..rng.random_range(1..=3)).map(|a| format!("p{i}a{a}")).collect())
        .collect();
    let admissible: Vec<Vec<Vec<usize>>> = actions.iter().map(|acts| vec![(0..acts.len()).collect(); s]).collect();
    let joints: usize = actions.iter().map(Vec::len).product();
    let kernel = (0..s)
        .map(|_| (0..joints).map(|_| random_weights(rng, s, 0.3)).collect())
        .collect();
    let reward = (0..n)
        .map(|_| (0..s).map(|_| (0..joints).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
        .collect();
    let model = GameModel::new(ModelDescription {
        states: (0..s).map(|x| format!("x{x}")).collect(),
        actions,
        admissible,
        delta: vec![false; s],
        eta: random_weights(rng, s, 0.2),
        kernel,
        reward,
        cost: vec![Vec::new(); n],
        rho: vec![Vec::new(); n],
    })
    .unwrap();
    DiscountedModel::new(model, beta).unwrap()
}

/// `π(ja|x)` for a product profile, computed directly.
pub fn joint_prob(model: &GameModel, profile: &StationaryProfile, x: usize, ja: usize) -> f64 {
    (0..model.player_count())
        .map(|i| profile.get(i, x)[model.joint_component(x, ja, i)])
        .product()
}

pub fn profile_as_correlated(model: &GameModel, profile: &StationaryProfile) -> Vec<Vec<f64>> {
    (0..model.state_count())
        .map(|x| (0..model.joint_count(x)).map(|ja| joint_prob(model, profile, x, ja)).collect())
        .collect()
}

/// Occupation weights `μ(x, ja)` by summing the state distribution of the
/// chain killed on the absorbing set, step by step, until the surviving mass
/// drops below `1e-16`.
pub fn oracle_occupation(model: &GameModel, strategy: &[Vec<f64>], eta: &[f64]) -> Vec<Vec<f64>> {
    let s = model.state_count();
    let mut dist: Vec<f64> = (0..s).map(|x| if model.is_absorbing_state(x) { 0.0 } else { eta[x] }).collect();
    let mut total = vec![0.0; s];
    for _ in 0..1_000_000 {
        let alive: f64 = dist.iter().sum();
        if alive < 1e-16 {
            break;
        }
        let mut next = vec![0.0; s];
        for x in 0..s {
            if dist[x] == 0.0 {
                continue;
            }
            total[x] += dist[x];
            for (ja, &w) in strategy[x].iter().enumerate() {
                for (y, &q) in model.kernel(x, ja).iter().enumerate() {
                    if !model.is_absorbing_state(y) {
                        next[y] += dist[x] * w * q;
                    }
                }
            }
        }
        dist = next;
    }
    (0..s)
        .map(|x| strategy[x].iter().map(|w| total[x] * w).collect())
        .collect()
}

pub fn oracle_hitting_time(model: &GameModel, strategy: &[Vec<f64>], eta: &[f64]) -> f64 {
    oracle_occupation(model, strategy, eta).iter().flatten().sum()
}

/// `(R^i, C^{i,·})` for every player under a correlated strategy.
pub fn oracle_payoffs(model: &GameModel, strategy: &[Vec<f64>], eta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mu = oracle_occupation(model, strategy, eta);
    let n = model.player_count();
    let p = model.constraint_rows();
    let integrate = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
        (0..model.state_count())
            .map(|x| mu[x].iter().enumerate().map(|(ja, w)| w * f(x, ja)).sum::<f64>())
            .sum()
    };
    let reward = (0..n).map(|i| integrate(&|x, ja| model.reward(i, x, ja))).collect();
    let cost = (0..n)
        .map(|i| (0..p).map(|j| integrate(&|x, ja| model.cost(i, j, x, ja))).collect())
        .collect();
    (reward, cost)
}

pub fn oracle_profile_payoffs(model: &GameModel, profile: &StationaryProfile) -> (Vec<f64>, Vec<Vec<f64>>) {
    oracle_payoffs(model, &profile_as_correlated(model, profile), model.eta())
}

/// `Σ_t β^t E[r^i(X_t, A_t)]` in the original discounted model, truncated once
/// the remaining tail is below `1e-12`.
pub fn oracle_discounted_reward(dm: &DiscountedModel, profile: &StationaryProfile) -> Vec<f64> {
    let model = dm.model();
    let beta = dm.beta();
    let pi = profile_as_correlated(model, profile);
    let s = model.state_count();
    let rmax = model.reward_bound().max(1e-300);
    let mut dist = model.eta().to_vec();
    let mut total = vec![0.0; model.player_count()];
    let mut weight = 1.0;
    while weight * rmax / (1.0 - beta) > 1e-12 {
        for x in 0..s {
            for (ja, &w) in pi[x].iter().enumerate() {
                for (i, t) in total.iter_mut().enumerate() {
                    *t += weight * dist[x] * w * model.reward(i, x, ja);
                }
            }
        }
        let mut next = vec![0.0; s];
        for x in 0..s {
            for (ja, &w) in pi[x].iter().enumerate() {
                for (y, &q) in model.kernel(x, ja).iter().enumerate() {
                    next[y] += dist[x] * w * q;
                }
            }
        }
        dist = next;
        weight *= beta;
    }
    total
}

/// All deterministic stationary strategies of `player`, as local action
/// indices per state.
pub fn deterministic_policies(model: &GameModel, player: usize) -> Vec<Vec<usize>> {
    let sizes: Vec<usize> = (0..model.state_count()).map(|x| model.admissible(player, x).len()).collect();
    let mut out = vec![Vec::new()];
    for &k in &sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

pub fn one_hot(len: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[k] = 1.0;
    v
}

/// `(R^i, C^i)` for `player` deviating to `own` while the rest play `profile`.
pub fn oracle_deviation(
    model: &GameModel,
    profile: &StationaryProfile,
    player: usize,
    own: Vec<Vec<f64>>,
) -> (f64, Vec<f64>) {
    let deviated = profile.with_player(model, player, own).unwrap();
    let (r, c) = oracle_profile_payoffs(model, &deviated);
    (r[player], c[player].clone())
}

/// Best deterministic unconstrained reply value, by enumeration.
pub fn oracle_best_deterministic(model: &GameModel, profile: &StationaryProfile, player: usize) -> f64 {
    deterministic_policies(model, player)
        .into_iter()
        .map(|choice| {
            let own = choice
                .iter()
                .enumerate()
                .map(|(x, &a)| one_hot(model.admissible(player, x).len(), a))
                .collect();
            oracle_deviation(model, profile, player, own).0
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Grid of about `points` mixed strategies for `player`. Only states with at
/// most two admissible actions are supported; states with one action are fixed.
pub fn strategy_mesh(model: &GameModel, player: usize, points: usize) -> Vec<Vec<Vec<f64>>> {
    let free: Vec<usize> = (0..model.state_count())
        .filter(|&x| !model.is_absorbing_state(x) && model.admissible(player, x).len() == 2)
        .collect();
    assert!((0..model.state_count())
        .filter(|&x| !model.is_absorbing_state(x))
        .all(|x| model.admissible(player, x).len() <= 2));
    let base: Vec<Vec<f64>> = (0..model.state_count())
        .map(|x| {
            let k = model.admissible(player, x).len();
            vec![1.0 / k as f64; k]
        })
        .collect();
    if free.is_empty() {
        return vec![base];
    }
    let per_axis = (points as f64).powf(1.0 / free.len() as f64).round().max(2.0) as usize;
    let mut out = vec![base];
    for &x in &free {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..per_axis).map(move |k| {
                    let t = k as f64 / (per_axis - 1) as f64;
                    let mut s = s.clone();
                    s[x] = vec![t, 1.0 - t];
                    s
                })
            })
            .collect();
    }
    out
}

/// Checks that `witness` is a genuine end component reachable from `eta`:
/// nonempty action sets, closed under the listed actions, strongly connected,
/// off the absorbing set.
pub fn witness_is_valid(model: &GameModel, witness: &[(usize, Vec<usize>)], eta: &[f64]) -> bool {
    if witness.is_empty() {
        return false;
    }
    let s = model.state_count();
    let mut member = vec![false; s];
    for (x, acts) in witness {
        if model.is_absorbing_state(*x) || acts.is_empty() || acts.iter().any(|&a| a >= model.joint_count(*x)) {
            return false;
        }
        member[*x] = true;
    }
    let succ = |x: usize, ja: usize| -> Vec<usize> { (0..s).filter(|&y| model.kernel(x, ja)[y] > 0.0).collect() };
    for (x, acts) in witness {
        if acts.iter().any(|&a| succ(*x, a).iter().any(|&y| !member[y])) {
            return false;
        }
    }
    let edges = |x: usize| -> Vec<usize> {
        let acts = &witness.iter().find(|(w, _)| *w == x).unwrap().1;
        acts.iter().flat_map(|&a| succ(x, a)).collect()
    };
    let reach_from = |start: usize, forward: bool| -> Vec<bool> {
        let mut seen = vec![false; s];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for (v, _) in witness {
                let adjacent = if forward { edges(u).contains(v) } else { edges(*v).contains(&u) };
                if adjacent && !seen[*v] {
                    seen[*v] = true;
                    stack.push(*v);
                }
            }
        }
        seen
    };
    let root = witness[0].0;
    let fwd = reach_from(root, true);
    let bwd = reach_from(root, false);
    if witness.iter().any(|(x, _)| !fwd[*x] || !bwd[*x]) {
        return false;
    }
    // Reachable from the initial distribution under some actions.
    let mut seen: Vec<bool> = (0..s).map(|x| eta[x] > 0.0 && !model.is_absorbing_state(x)).collect();
    let mut stack: Vec<usize> = (0..s).filter(|&x| seen[x]).collect();
    while let Some(x) = stack.pop() {
        for ja in 0..model.joint_count(x) {
            for y in succ(x, ja) {
                if !seen[y] && !model.is_absorbing_state(y) {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    seen[root]
}

pub fn random_correlated<R: Rng>(model: &GameModel, rng: &mut R) -> CorrelatedStrategy {
    CorrelatedStrategy::random(model, rng)
}
