//! Occupation measures: expected visit counts of (state, action) pairs before
//! absorption, their characteristic flow equations, disintegration back into
//! strategies, and the payoffs they integrate to.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Row, Variable};
use crate::model::{induced_chain, CorrelatedStrategy, GameModel, StationaryProfile};

/// Below this state occupancy the disintegration falls back to ϑ.
pub const ZERO_OCCUPANCY: f64 = 1e-12;

/// Pivot magnitude under which `I − Q` is declared singular.
pub const SINGULAR_PIVOT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    /// Indexed by (state, joint action).
    Joint,
    /// Indexed by (state, admissible action of the given player).
    PlayerMarginal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    kind: MeasureKind,
    weights: Vec<Vec<f64>>,
    eta: Vec<f64>,
}

/// Total expected rewards `R[i]` and constraint payoffs `C[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffVector {
    pub reward: Vec<f64>,
    pub cost: Vec<Vec<f64>>,
}

fn expected_shape(model: &GameModel, kind: MeasureKind) -> Result<Vec<usize>> {
    match kind {
        MeasureKind::Joint => Ok((0..model.state_count()).map(|x| model.joint_count(x)).collect()),
        // A one-player model may be the frozen view of any player.
        MeasureKind::PlayerMarginal(i) if i < model.player_count() || model.player_count() == 1 => {
            let i = i.min(model.player_count() - 1);
            Ok((0..model.state_count()).map(|x| model.admissible(i, x).len()).collect())
        }
        MeasureKind::PlayerMarginal(i) => Err(Error::ProfileModelMismatch(format!("no player {i}"))),
    }
}

impl OccupationMeasure {
    /// Wraps raw weights. Only the shape and finiteness are checked, so this
    /// can also hold candidate measures that violate the flow equations.
    pub fn new(model: &GameModel, kind: MeasureKind, weights: Vec<Vec<f64>>, eta: Vec<f64>) -> Result<Self> {
        let shape = expected_shape(model, kind)?;
        if weights.len() != shape.len() || weights.iter().zip(&shape).any(|(w, &len)| w.len() != len) {
            return Err(Error::ProfileModelMismatch("measure shape does not match the model".into()));
        }
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::InvalidStrategy("measure weights must be finite".into()));
        }
        Ok(OccupationMeasure { kind, weights, eta })
    }

    pub fn zero(model: &GameModel, kind: MeasureKind, eta: Vec<f64>) -> Result<Self> {
        let shape = expected_shape(model, kind)?;
        let weights = shape.into_iter().map(|len| vec![0.0; len]).collect();
        Ok(OccupationMeasure { kind, weights, eta })
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// The state marginal `μ^X`.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.iter().sum()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }

    /// `alpha·a + (1 − alpha)·b`; both must share kind and shape.
    pub fn mix(alpha: f64, a: &OccupationMeasure, b: &OccupationMeasure) -> Result<Self> {
        if a.kind != b.kind || a.weights.len() != b.weights.len() {
            return Err(Error::ProfileModelMismatch("cannot mix measures of different kinds".into()));
        }
        let weights = a
            .weights
            .iter()
            .zip(&b.weights)
            .map(|(wa, wb)| wa.iter().zip(wb).map(|(p, q)| alpha * p + (1.0 - alpha) * q).collect())
            .collect();
        let eta = a.eta.iter().zip(&b.eta).map(|(p, q)| alpha * p + (1.0 - alpha) * q).collect();
        Ok(OccupationMeasure { kind: a.kind, weights, eta })
    }

    /// True when the weights are laid out like the model's joint actions:
    /// always for joint measures, and for any marginal of a one-player model.
    fn is_joint_for(&self, model: &GameModel) -> bool {
        match self.kind {
            MeasureKind::Joint => true,
            MeasureKind::PlayerMarginal(_) => model.player_count() == 1,
        }
    }
}

/// Transient states reachable from the support of `eta` under `edge(x, y)`.
fn reachable_transient(model: &GameModel, eta: &[f64], edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let s = model.state_count();
    let mut seen = vec![false; s];
    let mut stack: Vec<usize> = (0..s).filter(|&x| eta[x] > 0.0 && !model.is_absorbing_state(x)).collect();
    for &x in &stack {
        seen[x] = true;
    }
    while let Some(x) = stack.pop() {
        for y in 0..s {
            if !seen[y] && !model.is_absorbing_state(y) && edge(x, y) {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

/// Transient states reachable from `eta` under some admissible joint action.
pub fn reachable_under_any(model: &GameModel, eta: &[f64]) -> Vec<bool> {
    reachable_transient(model, eta, |x, y| {
        (0..model.joint_count(x)).any(|ja| model.kernel(x, ja)[y] > 0.0)
    })
}

/// Expected number of visits `μ^X(x)` before absorption under a correlated
/// strategy; zero on the absorbing set and on unreachable states.
pub fn state_occupancy(model: &GameModel, strategy: &CorrelatedStrategy, eta: &[f64]) -> Result<Vec<f64>> {
    model.check_eta(eta)?;
    let chain = induced_chain(model, strategy)?;
    let s = model.state_count();
    let reach = reachable_transient(model, eta, |x, y| chain[(x, y)] > 0.0);

    // Every reachable state must lead to the absorbing set.
    let mut leads_out: Vec<bool> = (0..s).map(|x| model.is_absorbing_state(x)).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for x in 0..s {
            if !leads_out[x] && (0..s).any(|y| leads_out[y] && chain[(x, y)] > 0.0) {
                leads_out[x] = true;
                changed = true;
            }
        }
    }
    if let Some(x) = (0..s).find(|&x| reach[x] && !leads_out[x]) {
        return Err(Error::NotAbsorbingUnderStrategy {
            state: model.states()[x].clone(),
        });
    }

    let idx: Vec<usize> = (0..s).filter(|&x| reach[x]).collect();
    let k = idx.len();
    let mut occupancy = vec![0.0; s];
    if k == 0 {
        return Ok(occupancy);
    }
    // μ^X (I − P) = η on the reachable block, solved as (I − P)ᵀ m = η.
    let system = DMatrix::from_fn(k, k, |r, c| {
        let delta = if r == c { 1.0 } else { 0.0 };
        delta - chain[(idx[c], idx[r])]
    });
    let rhs = nalgebra::DVector::from_iterator(k, idx.iter().map(|&x| eta[x]));
    let lu = system.lu();
    let u = lu.u();
    if (0..k).any(|d| u[(d, d)].abs() < SINGULAR_PIVOT) {
        return Err(Error::NotAbsorbingUnderStrategy {
            state: model.states()[idx[0]].clone(),
        });
    }
    let solution = lu.solve(&rhs).ok_or_else(|| Error::NotAbsorbingUnderStrategy {
        state: model.states()[idx[0]].clone(),
    })?;
    for (r, &x) in idx.iter().enumerate() {
        occupancy[x] = solution[r].max(0.0);
    }
    Ok(occupancy)
}

/// Joint occupation measure `μ_{η,π} = μ^X ⊗ π`.
pub fn occupation_measure(model: &GameModel, strategy: &CorrelatedStrategy, eta: &[f64]) -> Result<OccupationMeasure> {
    let occupancy = state_occupancy(model, strategy, eta)?;
    let weights = (0..model.state_count())
        .map(|x| strategy.get(x).iter().map(|p| occupancy[x] * p).collect())
        .collect();
    Ok(OccupationMeasure {
        kind: MeasureKind::Joint,
        weights,
        eta: eta.to_vec(),
    })
}

/// Violation of the characteristic equations: the largest flow imbalance over
/// transient states plus any mass placed on absorbing states or negative
/// weights.
pub fn residual(model: &GameModel, mu: &OccupationMeasure, eta: &[f64]) -> Result<f64> {
    if !mu.is_joint_for(model) {
        return Err(Error::ProfileModelMismatch("residual needs a joint measure".into()));
    }
    expected_shape(model, mu.kind)?;
    let s = model.state_count();
    let marginal = mu.state_marginal();
    let mut inflow = vec![0.0; s];
    for x in 0..s {
        for (ja, &w) in mu.weights[x].iter().enumerate() {
            if w != 0.0 {
                for (y, &p) in model.kernel(x, ja).iter().enumerate() {
                    inflow[y] += w * p;
                }
            }
        }
    }
    let imbalance = (0..s)
        .filter(|&y| !model.is_absorbing_state(y))
        .map(|y| (marginal[y] - eta[y] - inflow[y]).abs())
        .fold(0.0, f64::max);
    let misplaced: f64 = (0..s)
        .flat_map(|x| mu.weights[x].iter().map(move |&w| (x, w)))
        .map(|(x, w)| if model.is_absorbing_state(x) { w.abs() } else { (-w).max(0.0) })
        .sum();
    Ok(imbalance + misplaced)
}

fn conditional(weights: &[f64], fallback: &[f64]) -> Vec<f64> {
    let mass: f64 = weights.iter().sum();
    if mass > ZERO_OCCUPANCY {
        weights.iter().map(|w| w.max(0.0) / mass).collect()
    } else {
        fallback.to_vec()
    }
}

/// Recovers a correlated strategy from a joint measure: `μ(x,·)/μ^X(x)` on
/// transient states with positive occupancy, `fallback` everywhere else
/// (including the absorbing set).
pub fn disintegrate(model: &GameModel, mu: &OccupationMeasure, fallback: &CorrelatedStrategy) -> Result<CorrelatedStrategy> {
    if !mu.is_joint_for(model) {
        return Err(Error::ProfileModelMismatch("expected a joint measure".into()));
    }
    let pi = (0..model.state_count())
        .map(|x| {
            if model.is_absorbing_state(x) {
                fallback.get(x).to_vec()
            } else {
                conditional(&mu.weights[x], fallback.get(x))
            }
        })
        .collect();
    CorrelatedStrategy::new(model, renormalise(pi))
}

/// Same as [`disintegrate`] for a player marginal; returns that player's
/// stationary strategy `pi[x][local action]`.
pub fn disintegrate_player(model: &GameModel, mu: &OccupationMeasure, fallback: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let player = match mu.kind {
        MeasureKind::PlayerMarginal(i) => i,
        MeasureKind::Joint if model.player_count() == 1 => 0,
        MeasureKind::Joint => return Err(Error::ProfileModelMismatch("expected a player marginal".into())),
    };
    let strategy: Vec<Vec<f64>> = (0..model.state_count())
        .map(|x| {
            if model.is_absorbing_state(x) {
                fallback[x].clone()
            } else {
                conditional(&mu.weights[x], &fallback[x])
            }
        })
        .collect();
    let strategy = renormalise(strategy);
    let player_model_index = if model.player_count() == 1 { 0 } else { player };
    crate::model::check_player_strategy(model, player_model_index, &strategy)?;
    Ok(strategy)
}

/// Disintegrates each player marginal of a joint measure. Agrees with the
/// joint disintegration whenever the measure came from a product strategy.
pub fn disintegrate_profile(model: &GameModel, mu: &OccupationMeasure, fallback: &StationaryProfile) -> Result<StationaryProfile> {
    let pi = (0..model.player_count())
        .map(|i| {
            let marginal = player_marginal(model, mu, i)?;
            disintegrate_player(model, &marginal, fallback.player(i))
        })
        .collect::<Result<Vec<_>>>()?;
    StationaryProfile::new(model, pi)
}

fn renormalise(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for row in &mut rows {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    rows
}

/// Marginal of a joint measure on (state, action of `player`).
pub fn player_marginal(model: &GameModel, mu: &OccupationMeasure, player: usize) -> Result<OccupationMeasure> {
    if mu.kind != MeasureKind::Joint {
        return Err(Error::ProfileModelMismatch("marginal of a non-joint measure".into()));
    }
    let mut out = OccupationMeasure::zero(model, MeasureKind::PlayerMarginal(player), mu.eta.clone())?;
    for x in 0..model.state_count() {
        for (ja, &w) in mu.weights[x].iter().enumerate() {
            out.weights[x][model.joint_component(x, ja, player)] += w;
        }
    }
    Ok(out)
}

/// Integrates rewards and costs against a joint measure.
pub fn payoffs(model: &GameModel, mu: &OccupationMeasure) -> Result<PayoffVector> {
    if !mu.is_joint_for(model) {
        return Err(Error::ProfileModelMismatch("payoffs need a joint measure".into()));
    }
    expected_shape(model, mu.kind)?;
    let integrate = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
        (0..model.state_count())
            .flat_map(|x| mu.weights[x].iter().enumerate().map(move |(ja, &w)| (x, ja, w)))
            .map(|(x, ja, w)| f(x, ja) * w)
            .sum()
    };
    let n = model.player_count();
    let reward = (0..n).map(|i| integrate(&|x, ja| model.reward(i, x, ja))).collect();
    let cost = (0..n)
        .map(|i| {
            (0..model.constraint_rows())
                .map(|j| integrate(&|x, ja| model.cost(i, j, x, ja)))
                .collect()
        })
        .collect();
    Ok(PayoffVector { reward, cost })
}

/// Payoffs of a stationary profile: occupation measure of the product
/// strategy, integrated.
pub fn profile_payoffs(model: &GameModel, profile: &StationaryProfile, eta: &[f64]) -> Result<PayoffVector> {
    let joint = crate::model::product_strategy(model, profile)?;
    payoffs(model, &occupation_measure(model, &joint, eta)?)
}

/// Linear program over the characteristic equations of `model`: one
/// nonnegative variable per (transient state, joint action) reachable from
/// `eta`, one equality row per such state,
/// `Σ_a μ(y,a) − Σ_{x,a} μ(x,a) Q(y|x,a) = η(y)`.
///
/// Its feasible set is exactly the set of occupation measures of correlated
/// stationary strategies started from `eta`. States that cannot be reached
/// from `eta` carry no variables since every occupation measure vanishes
/// there.
pub fn characteristic_lp(model: &GameModel, eta: &[f64], objective: impl Fn(usize, usize) -> f64) -> LinearProgram {
    let reach = reachable_under_any(model, eta);
    let states: Vec<usize> = (0..model.state_count()).filter(|&x| reach[x]).collect();
    let variables: Vec<Variable> = states
        .iter()
        .flat_map(|&x| (0..model.joint_count(x)).map(move |ja| Variable::Pair { state: x, action: ja }))
        .collect();
    let mut lp = LinearProgram::new(variables);
    lp.objective = lp
        .variable_index
        .iter()
        .map(|v| match *v {
            Variable::Pair { state, action } => objective(state, action),
            Variable::Aux(_) => 0.0,
        })
        .collect();
    for &y in &states {
        let coeffs = lp
            .variable_index
            .iter()
            .map(|v| match *v {
                Variable::Pair { state, action } => {
                    let own = if state == y { 1.0 } else { 0.0 };
                    own - model.kernel(state, action)[y]
                }
                Variable::Aux(_) => 0.0,
            })
            .collect();
        lp.eq_rows.push(Row { coeffs, rhs: eta[y] });
    }
    lp
}

/// Reads the (state, action) variables of an LP solution back into a measure.
pub fn measure_from_primal(
    model: &GameModel,
    kind: MeasureKind,
    lp: &LinearProgram,
    primal: &[f64],
    eta: &[f64],
) -> Result<OccupationMeasure> {
    let mut mu = OccupationMeasure::zero(model, kind, eta.to_vec())?;
    for (v, &z) in lp.variable_index.iter().zip(primal) {
        if let Variable::Pair { state, action } = *v {
            mu.weights[state][action] = z.max(0.0);
        }
    }
    Ok(mu)
}
