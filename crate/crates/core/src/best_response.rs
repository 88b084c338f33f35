//! Constrained best response of one player against frozen opponents.
//!
//! Freezing the stationary strategies of the other players turns the game
//! into a single-controller model for player `i` (kernel, reward and costs
//! averaged over `π^{-i}`). The characteristic equations of that model
//! describe exactly the occupation measures player `i` can induce with a
//! stationary strategy of its own, so every LP-feasible measure is realised
//! by the strategy obtained from disintegrating it. The best-response LP is
//! the reward-maximising measure among those meeting `C^i ≥ ρ^i`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Row, Variable};
use crate::model::{GameModel, ModelDescription, StationaryProfile};
use crate::occupation::{characteristic_lp, disintegrate_player, measure_from_primal, MeasureKind, OccupationMeasure};

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// Player strategy `pi[x][local action]`.
    pub strategy: Vec<Vec<f64>>,
    pub value: f64,
    /// Occupation measure on (state, action of the player), over the frozen view.
    pub measure: OccupationMeasure,
    pub lp_iterations: usize,
}

/// Summary of a best-response computation, as reported by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseReport {
    pub player: usize,
    pub value: f64,
    /// `None` when the player has no constraint rows.
    pub slater_slack: Option<f64>,
    /// State name → action name → probability.
    pub strategy: BTreeMap<String, BTreeMap<String, f64>>,
}

impl BestResponseReport {
    pub fn new(model: &GameModel, player: usize, br: &BestResponse, slater_slack: f64) -> Self {
        let strategy = (0..model.state_count())
            .map(|x| {
                let dist = model
                    .admissible(player, x)
                    .iter()
                    .zip(&br.strategy[x])
                    .map(|(&a, &q)| (model.actions(player)[a].clone(), q))
                    .collect();
                (model.states()[x].clone(), dist)
            })
            .collect();
        BestResponseReport {
            player,
            value: br.value,
            slater_slack: slater_slack.is_finite().then_some(slater_slack),
            strategy,
        }
    }
}

/// Single-player model seen by `player` when everyone else plays `profile`.
/// The player's own entry in `profile` is ignored.
pub fn freeze_opponents(model: &GameModel, player: usize, profile: &StationaryProfile) -> Result<GameModel> {
    if player >= model.player_count() {
        return Err(Error::ProfileModelMismatch(format!("no player {player}")));
    }
    if profile.player_count() != model.player_count() {
        return Err(Error::ProfileModelMismatch(format!(
            "expected {} players, got {}",
            model.player_count(),
            profile.player_count()
        )));
    }
    for k in (0..model.player_count()).filter(|&k| k != player) {
        crate::model::check_player_strategy(model, k, profile.player(k))?;
    }
    let s = model.state_count();
    let p = model.constraint_rows();
    let mut kernel = Vec::with_capacity(s);
    let mut reward = Vec::with_capacity(s);
    let mut cost = vec![Vec::with_capacity(s); p];
    for x in 0..s {
        let own = model.admissible(player, x).len();
        let mut kx = vec![vec![0.0; s]; own];
        let mut rx = vec![0.0; own];
        let mut cx = vec![vec![0.0; own]; p];
        for ja in 0..model.joint_count(x) {
            let a = model.joint_component(x, ja, player);
            let w: f64 = (0..model.player_count())
                .filter(|&k| k != player)
                .map(|k| profile.get(k, x)[model.joint_component(x, ja, k)])
                .product();
            if w == 0.0 {
                continue;
            }
            for (acc, q) in kx[a].iter_mut().zip(model.kernel(x, ja)) {
                *acc += w * q;
            }
            rx[a] += w * model.reward(player, x, ja);
            for (j, row) in cx.iter_mut().enumerate() {
                row[a] += w * model.cost(player, j, x, ja);
            }
        }
        kernel.push(kx);
        reward.push(rx);
        for (j, row) in cx.into_iter().enumerate() {
            cost[j].push(row);
        }
    }
    GameModel::new(ModelDescription {
        states: model.states().to_vec(),
        actions: vec![model.actions(player).to_vec()],
        admissible: vec![(0..s).map(|x| model.admissible(player, x).to_vec()).collect()],
        delta: model.delta().to_vec(),
        eta: model.eta().to_vec(),
        kernel,
        reward: vec![reward],
        cost: vec![cost],
        rho: vec![model.rho()[player].clone()],
    })
}

fn check_rho(model: &GameModel, rho_i: &[f64]) -> Result<()> {
    if !rho_i.is_empty() && rho_i.len() != model.constraint_rows() {
        return Err(Error::Schema(format!(
            "expected {} constraint constants, got {}",
            model.constraint_rows(),
            rho_i.len()
        )));
    }
    Ok(())
}

/// Best-response LP on an already frozen view. Rows with `ρ = −∞` (or an
/// empty `rho_i`) impose no constraint.
fn view_lp(view: &GameModel, eta: &[f64], rho_i: &[f64]) -> LinearProgram {
    let mut lp = characteristic_lp(view, eta, |x, a| view.reward(0, x, a));
    for (j, &rho) in rho_i.iter().enumerate() {
        if rho == f64::NEG_INFINITY {
            continue;
        }
        let coeffs = lp
            .variable_index
            .iter()
            .map(|v| match *v {
                Variable::Pair { state, action } => view.cost(0, j, state, action),
                Variable::Aux(_) => 0.0,
            })
            .collect();
        lp.ge_rows.push(Row { coeffs, rhs: rho });
    }
    lp
}

/// Linear program whose optimum is player `player`'s constrained best-response
/// value against `profile`. Variables are indexed by (state, local action).
pub fn build_br_lp(
    model: &GameModel,
    player: usize,
    profile: &StationaryProfile,
    eta: &[f64],
    rho_i: &[f64],
) -> Result<LinearProgram> {
    check_rho(model, rho_i)?;
    model.check_eta(eta)?;
    let view = freeze_opponents(model, player, profile)?;
    Ok(view_lp(&view, eta, rho_i))
}

fn lp_error(status: LpStatus, player: usize) -> Error {
    match status {
        LpStatus::Infeasible => Error::ConstraintInfeasible { player },
        LpStatus::Unbounded => Error::Unbounded,
        other => Error::LpFailure(other),
    }
}

/// Solves the best-response LP and recovers a stationary strategy attaining
/// it, with the uniform distribution on null and absorbing states.
pub fn best_response(
    model: &GameModel,
    player: usize,
    profile: &StationaryProfile,
    eta: &[f64],
    rho_i: &[f64],
) -> Result<BestResponse> {
    check_rho(model, rho_i)?;
    model.check_eta(eta)?;
    let view = freeze_opponents(model, player, profile)?;
    let lp = view_lp(&view, eta, rho_i);
    let sol = solve_lp(&lp);
    if sol.status != LpStatus::Optimal {
        return Err(lp_error(sol.status, player));
    }
    let measure = measure_from_primal(&view, MeasureKind::PlayerMarginal(player), &lp, &sol.primal, eta)?;
    let fallback: Vec<Vec<f64>> = (0..view.state_count())
        .map(|x| {
            let n = view.admissible(0, x).len();
            vec![1.0 / n as f64; n]
        })
        .collect();
    let strategy = disintegrate_player(&view, &measure, &fallback)?;
    Ok(BestResponse {
        strategy,
        value: sol.value,
        measure,
        lp_iterations: sol.iterations,
    })
}

/// Largest `s` such that some strategy of `player` achieves
/// `C^{i,j} ≥ ρ^{i,j} + s` for every row `j` against `profile`. Positive
/// values certify the strict Slater inequality; `+∞` when there are no
/// constraint rows.
pub fn slater_check(
    model: &GameModel,
    player: usize,
    profile: &StationaryProfile,
    eta: &[f64],
    rho_i: &[f64],
) -> Result<f64> {
    check_rho(model, rho_i)?;
    model.check_eta(eta)?;
    if rho_i.iter().all(|r| *r == f64::NEG_INFINITY) {
        return Ok(f64::INFINITY);
    }
    let view = freeze_opponents(model, player, profile)?;
    let mut lp = characteristic_lp(&view, eta, |_, _| 0.0);
    let n = lp.num_vars();
    lp.variable_index.push(Variable::Aux("s+".into()));
    lp.variable_index.push(Variable::Aux("s-".into()));
    lp.objective = vec![0.0; n + 2];
    lp.objective[n] = 1.0;
    lp.objective[n + 1] = -1.0;
    for row in &mut lp.eq_rows {
        row.coeffs.extend([0.0, 0.0]);
    }
    for (j, &rho) in rho_i.iter().enumerate() {
        if rho == f64::NEG_INFINITY {
            continue;
        }
        let mut coeffs: Vec<f64> = lp.variable_index[..n]
            .iter()
            .map(|v| match *v {
                Variable::Pair { state, action } => view.cost(0, j, state, action),
                Variable::Aux(_) => 0.0,
            })
            .collect();
        coeffs.extend([-1.0, 1.0]);
        lp.ge_rows.push(Row { coeffs, rhs: rho });
    }
    let sol = solve_lp(&lp);
    if sol.status != LpStatus::Optimal {
        return Err(lp_error(sol.status, player));
    }
    Ok(sol.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One player, one step: `a` pays reward 1, `b` pays constraint payoff 1.
    fn constrained_single(rho: f64) -> GameModel {
        GameModel::new(ModelDescription {
            states: vec!["s0".into(), "d".into()],
            actions: vec![vec!["a".into(), "b".into()]],
            admissible: vec![vec![vec![0, 1], vec![0]]],
            delta: vec![false, true],
            eta: vec![1.0, 0.0],
            kernel: vec![vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            reward: vec![vec![vec![1.0, 0.0], vec![0.0]]],
            cost: vec![vec![vec![vec![0.0, 1.0], vec![0.0]]]],
            rho: vec![vec![rho]],
        })
        .unwrap()
    }

    #[test]
    fn lp_transcription() {
        let m = constrained_single(0.5);
        let lp = build_br_lp(&m, 0, &StationaryProfile::uniform(&m), m.eta(), &m.rho()[0]).unwrap();
        assert_eq!(lp.num_vars(), 2);
        assert_eq!(lp.eq_rows.len(), 1);
        assert_eq!(lp.eq_rows[0].coeffs, vec![1.0, 1.0]);
        assert_eq!(lp.eq_rows[0].rhs, 1.0);
        assert_eq!(lp.ge_rows[0].coeffs, vec![0.0, 1.0]);
        assert_eq!(lp.ge_rows[0].rhs, 0.5);
        assert_eq!(lp.objective, vec![1.0, 0.0]);
    }

    #[test]
    fn constrained_value_and_strategy() {
        let m = constrained_single(0.5);
        let br = best_response(&m, 0, &StationaryProfile::uniform(&m), m.eta(), &m.rho()[0]).unwrap();
        assert!((br.value - 0.5).abs() < 1e-12);
        assert!((br.strategy[0][0] - 0.5).abs() < 1e-12);
        assert!((br.strategy[0][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_constraint() {
        let m = constrained_single(2.0);
        let err = best_response(&m, 0, &StationaryProfile::uniform(&m), m.eta(), &m.rho()[0]).unwrap_err();
        assert!(matches!(err, Error::ConstraintInfeasible { player: 0 }));
    }

    #[test]
    fn slater_slacks() {
        for (rho, expected) in [(0.5, 0.5), (1.0, 0.0), (1.5, -0.5)] {
            let m = constrained_single(rho);
            let s = slater_check(&m, 0, &StationaryProfile::uniform(&m), m.eta(), &m.rho()[0]).unwrap();
            assert!((s - expected).abs() < 1e-12, "rho {rho}: {s}");
        }
    }

    #[test]
    fn unconstrained_rows_are_dropped() {
        let m = constrained_single(0.5);
        let br = best_response(&m, 0, &StationaryProfile::uniform(&m), m.eta(), &[]).unwrap();
        assert!((br.value - 1.0).abs() < 1e-12);
        assert_eq!(br.strategy[0], vec![1.0, 0.0]);
        let s = slater_check(&m, 0, &StationaryProfile::uniform(&m), m.eta(), &[f64::NEG_INFINITY]).unwrap();
        assert_eq!(s, f64::INFINITY);
    }
}
