//! Absorption analysis: whether every strategy reaches the absorbing set in
//! finite expected time, and the hitting-time quantities that follow.
//!
//! For a finite model, absorption under all (history-dependent, correlated)
//! strategies fails exactly when some end component of the joint-action MDP
//! on the transient states is reachable from the initial distribution: a
//! strategy can steer into it and then stay forever. The check below computes
//! maximal end components by repeated SCC refinement.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpStatus};
use crate::model::{induced_chain, CorrelatedStrategy, GameModel};
use crate::occupation::{characteristic_lp, measure_from_primal, reachable_under_any, state_occupancy, MeasureKind, OccupationMeasure};

/// A transient state together with the joint actions that keep play inside
/// an end component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub state: usize,
    pub joint_actions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub is_absorbing: bool,
    /// Present iff `is_absorbing` is false.
    pub offending_component: Option<Vec<WitnessPair>>,
    /// `sup_π E[T_Δ]`, when the model is absorbing.
    pub uniform_bound: Option<f64>,
}

/// Geometric tail bound: under every strategy, `P{T_Δ > k·period} ≤ (1 − escape)^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub period: usize,
    pub escape_probability: f64,
}

/// Maximal end components of the joint-action MDP restricted to the
/// transient states marked in `candidate`. Each component lists its states
/// (ascending) with the joint actions that stay inside it.
pub fn maximal_end_components(model: &GameModel, candidate: &[bool]) -> Vec<Vec<WitnessPair>> {
    let s = model.state_count();
    let mut in_play: Vec<bool> = (0..s).map(|x| candidate[x] && !model.is_absorbing_state(x)).collect();
    let mut actions: Vec<Vec<usize>> = (0..s)
        .map(|x| if in_play[x] { (0..model.joint_count(x)).collect() } else { Vec::new() })
        .collect();
    let successors = |x: usize, ja: usize| {
        model
            .kernel(x, ja)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(y, _)| y)
            .collect::<Vec<_>>()
    };

    loop {
        let mut changed = false;
        // Drop actions that can leave the current candidate set.
        for x in 0..s {
            if !in_play[x] {
                continue;
            }
            let before = actions[x].len();
            actions[x].retain(|&ja| successors(x, ja).iter().all(|&y| in_play[y]));
            changed |= actions[x].len() != before;
            if actions[x].is_empty() {
                in_play[x] = false;
                changed = true;
            }
        }

        let mut graph = DiGraph::<usize, ()>::new();
        let nodes: Vec<_> = (0..s).map(|x| graph.add_node(x)).collect();
        for x in (0..s).filter(|&x| in_play[x]) {
            for &ja in &actions[x] {
                for y in successors(x, ja) {
                    graph.update_edge(nodes[x], nodes[y], ());
                }
            }
        }
        let mut component = vec![usize::MAX; s];
        for (c, scc) in tarjan_scc(&graph).iter().enumerate() {
            for node in scc {
                component[graph[*node]] = c;
            }
        }
        // Drop actions that leave their SCC.
        for x in 0..s {
            if !in_play[x] {
                continue;
            }
            let before = actions[x].len();
            actions[x].retain(|&ja| successors(x, ja).iter().all(|&y| component[y] == component[x]));
            changed |= actions[x].len() != before;
            if actions[x].is_empty() {
                in_play[x] = false;
                changed = true;
            }
        }

        if !changed {
            let mut groups: std::collections::BTreeMap<usize, Vec<WitnessPair>> = Default::default();
            for x in (0..s).filter(|&x| in_play[x]) {
                groups.entry(component[x]).or_default().push(WitnessPair {
                    state: x,
                    joint_actions: actions[x].clone(),
                });
            }
            let mut out: Vec<Vec<WitnessPair>> = groups.into_values().collect();
            out.sort_by_key(|c| c[0].state);
            return out;
        }
    }
}

/// Decides absorption from the model's own initial distribution.
pub fn check_absorbing(model: &GameModel) -> AbsorptionReport {
    check_absorbing_from(model, model.eta())
}

/// Absorption from every state: the initial distribution is uniform over all
/// states.
pub fn check_absorbing_everywhere(model: &GameModel) -> AbsorptionReport {
    let s = model.state_count();
    check_absorbing_from(model, &vec![1.0 / s as f64; s])
}

pub fn check_absorbing_from(model: &GameModel, eta: &[f64]) -> AbsorptionReport {
    let reach = reachable_under_any(model, eta);
    let components = maximal_end_components(model, &reach);
    match components.into_iter().next() {
        Some(witness) => AbsorptionReport {
            is_absorbing: false,
            offending_component: Some(witness),
            uniform_bound: None,
        },
        None => AbsorptionReport {
            is_absorbing: true,
            offending_component: None,
            uniform_bound: uniform_absorption_bound(model, eta).ok(),
        },
    }
}

/// `E_{η,π}[T_Δ]`, the total mass of the occupation measure.
pub fn expected_hitting_time(model: &GameModel, strategy: &CorrelatedStrategy, eta: &[f64]) -> Result<f64> {
    Ok(state_occupancy(model, strategy, eta)?.iter().sum())
}

/// `sup_π E_{η,π}[T_Δ]` over correlated strategies, together with an
/// occupation measure attaining it.
pub fn uniform_absorption_maximizer(model: &GameModel, eta: &[f64]) -> Result<(f64, OccupationMeasure)> {
    model.check_eta(eta)?;
    let lp = characteristic_lp(model, eta, |_, _| 1.0);
    let sol = solve_lp(&lp);
    match sol.status {
        LpStatus::Optimal => {
            let mu = measure_from_primal(model, MeasureKind::Joint, &lp, &sol.primal, eta)?;
            Ok((sol.value, mu))
        }
        LpStatus::Unbounded => Err(Error::Unbounded),
        LpStatus::Infeasible => Err(Error::InfeasibleLp),
        status => Err(Error::LpFailure(status)),
    }
}

pub fn uniform_absorption_bound(model: &GameModel, eta: &[f64]) -> Result<f64> {
    uniform_absorption_maximizer(model, eta).map(|(v, _)| v)
}

/// `P{T_Δ > t}` for `t = 0..=horizon`.
pub fn tail_probabilities(model: &GameModel, strategy: &CorrelatedStrategy, eta: &[f64], horizon: usize) -> Result<Vec<f64>> {
    model.check_eta(eta)?;
    let chain = induced_chain(model, strategy)?;
    let s = model.state_count();
    let mut dist: Vec<f64> = (0..s)
        .map(|x| if model.is_absorbing_state(x) { 0.0 } else { eta[x] })
        .collect();
    let mut tails = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        tails.push(dist.iter().sum());
        let mut next = vec![0.0; s];
        for x in (0..s).filter(|&x| dist[x] > 0.0) {
            for y in (0..s).filter(|&y| !model.is_absorbing_state(y)) {
                next[y] += dist[x] * chain[(x, y)];
            }
        }
        dist = next;
    }
    Ok(tails)
}

/// For an absorbing model, a period `m` and a probability `ε > 0` such that
/// from every reachable transient state, every strategy enters the absorbing
/// set within `m` steps with probability at least `ε`.
///
/// `ε` is the finite-horizon minimum reach probability, computed by backward
/// induction minimising over joint actions (which is also the minimum over
/// history-dependent and correlated strategies). Returns `None` when the
/// model is not absorbing from `eta`.
pub fn decay_bound(model: &GameModel, eta: &[f64]) -> Option<DecayBound> {
    let reach = reachable_under_any(model, eta);
    let period = reach.iter().filter(|r| **r).count().max(1);
    let s = model.state_count();
    let mut hit: Vec<f64> = (0..s).map(|x| if model.is_absorbing_state(x) { 1.0 } else { 0.0 }).collect();
    for _ in 0..period {
        hit = (0..s)
            .map(|x| {
                if model.is_absorbing_state(x) {
                    return 1.0;
                }
                (0..model.joint_count(x))
                    .map(|ja| model.kernel(x, ja).iter().zip(&hit).map(|(p, h)| p * h).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
    }
    let escape = (0..s).filter(|&x| reach[x]).map(|x| hit[x]).fold(1.0, f64::min);
    (escape > 0.0).then_some(DecayBound {
        period,
        escape_probability: escape,
    })
}
