//! Discounted games as absorbing games.
//!
//! A β-discounted game becomes a total-reward absorbing game by adding an
//! isolated cemetery state: every step continues with probability β along
//! the original kernel and otherwise jumps to the cemetery, where play stops
//! at no reward or cost.

use crate::error::{Error, Result};
use crate::model::{GameModel, ModelDescription};

/// Reserved identifier of the cemetery state.
pub const CEMETERY_STATE: &str = "__cemetery__";
/// Reserved identifier of the single action available at the cemetery.
pub const CEMETERY_ACTION: &str = "__rest__";

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedModel {
    model: GameModel,
    beta: f64,
}

impl DiscountedModel {
    /// `model` must have an empty absorbing set.
    pub fn new(model: GameModel, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Schema(format!("discount factor {beta} must lie strictly inside (0, 1)")));
        }
        if model.delta().iter().any(|d| *d) {
            return Err(Error::Schema("a discounted model has no absorbing set".into()));
        }
        Ok(DiscountedModel { model, beta })
    }

    pub fn model(&self) -> &GameModel {
        &self.model
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Cemetery-state reduction.
pub fn discount_to_absorbing(dm: &DiscountedModel) -> Result<GameModel> {
    let src = dm.model.description();
    let beta = dm.beta;
    if src.states.iter().any(|s| s == CEMETERY_STATE) {
        return Err(Error::Schema(format!("state name `{CEMETERY_STATE}` is reserved")));
    }
    if src.actions.iter().flatten().any(|a| a == CEMETERY_ACTION) {
        return Err(Error::Schema(format!("action name `{CEMETERY_ACTION}` is reserved")));
    }
    let s = src.states.len();

    let mut states = src.states.clone();
    states.push(CEMETERY_STATE.to_string());
    let mut actions = src.actions.clone();
    let rest: Vec<usize> = actions
        .iter_mut()
        .map(|acts| {
            acts.push(CEMETERY_ACTION.to_string());
            acts.len() - 1
        })
        .collect();
    let admissible = src
        .admissible
        .iter()
        .zip(&rest)
        .map(|(per_state, &r)| {
            let mut per_state = per_state.clone();
            per_state.push(vec![r]);
            per_state
        })
        .collect();

    let mut kernel: Vec<Vec<Vec<f64>>> = src
        .kernel
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|row| {
                    let mut out: Vec<f64> = row.iter().map(|q| beta * q).collect();
                    out.push(1.0 - beta);
                    out
                })
                .collect()
        })
        .collect();
    let mut absorbing_row = vec![0.0; s + 1];
    absorbing_row[s] = 1.0;
    kernel.push(vec![absorbing_row]);

    let extend = |per_state: &Vec<Vec<f64>>| {
        let mut out = per_state.clone();
        out.push(vec![0.0]);
        out
    };
    let reward = src.reward.iter().map(extend).collect();
    let cost = src
        .cost
        .iter()
        .map(|rows| rows.iter().map(extend).collect())
        .collect();
    let mut delta = vec![false; s];
    delta.push(true);
    let mut eta = src.eta.clone();
    eta.push(0.0);

    GameModel::new(ModelDescription {
        states,
        actions,
        admissible,
        delta,
        eta,
        kernel,
        reward,
        cost,
        rho: src.rho,
    })
}
