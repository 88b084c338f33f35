//! Equilibrium search and certification.
//!
//! The search is damped simultaneous best-response dynamics over stationary
//! profiles. It carries no convergence guarantee, so every answer is backed
//! by a certificate: for each player the exact constrained best-response
//! value against the others, compared with what the player currently gets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::absorption::{check_absorbing_from, uniform_absorption_bound};
use crate::best_response::{best_response, slater_check};
use crate::error::{Error, Result};
use crate::model::{GameModel, StationaryProfile};
use crate::occupation::{profile_payoffs, PayoffVector};

/// Slack allowed when checking `C^i ≥ ρ^i`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    /// `C^i(η,π) ≥ ρ^i` componentwise, within [`FEASIBILITY_TOL`].
    pub feasible: Vec<bool>,
    /// Best-response value minus current reward; `None` when player `i` has
    /// no feasible deviation at all.
    pub gap: Vec<Option<f64>>,
    pub best_response_value: Vec<Option<f64>>,
    /// `C^{i,j} − ρ^{i,j}`.
    pub constraint_slack: Vec<Vec<f64>>,
    /// `max_i max(gap_i, 0)` over players with a defined gap.
    pub epsilon: f64,
    pub tolerance: f64,
    pub is_equilibrium: bool,
    pub payoffs: PayoffVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `α_k = α`.
    #[default]
    Constant,
    /// `α_k = α / (k + 1)`.
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_iterations: usize,
    /// Step size `α ∈ (0, 1]`.
    pub damping: f64,
    /// Stop once no strategy moves by more than this (total variation).
    pub convergence_tol: f64,
    /// Dirichlet-initialised runs in addition to the uniform start.
    pub restarts: usize,
    pub seed: u64,
    /// Target epsilon for success.
    pub tolerance: f64,
    pub schedule: StepSchedule,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iterations: 500,
            damping: 0.5,
            convergence_tol: 1e-10,
            restarts: 10,
            seed: 0,
            tolerance: 1e-6,
            schedule: StepSchedule::Constant,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping {} outside (0, 1]", self.damping)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 || self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub iteration: usize,
    pub gap: Vec<Option<f64>>,
    pub distance: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub profile: StationaryProfile,
    pub certificate: EquilibriumCertificate,
    pub trace: Vec<TraceRecord>,
    /// Run that produced `profile` (0 is the uniform start).
    pub restart: usize,
    /// Iterations summed over all runs.
    pub iterations: usize,
    /// Whether the winning run stopped on the distance criterion.
    pub converged: bool,
}

fn certify(
    model: &GameModel,
    profile: &StationaryProfile,
    eta: &[f64],
    rho: Option<&[Vec<f64>]>,
    tolerance: f64,
) -> Result<EquilibriumCertificate> {
    let payoffs = profile_payoffs(model, profile, eta)?;
    let n = model.player_count();
    let mut feasible = Vec::with_capacity(n);
    let mut gap = Vec::with_capacity(n);
    let mut best_value = Vec::with_capacity(n);
    let mut constraint_slack = Vec::with_capacity(n);
    for i in 0..n {
        let rho_i: &[f64] = rho.map_or(&[], |r| r[i].as_slice());
        let slack: Vec<f64> = rho_i.iter().zip(&payoffs.cost[i]).map(|(r, c)| c - r).collect();
        feasible.push(slack.iter().all(|s| *s >= -FEASIBILITY_TOL));
        constraint_slack.push(slack);
        match best_response(model, i, profile, eta, rho_i) {
            Ok(br) => {
                best_value.push(Some(br.value));
                gap.push(Some(br.value - payoffs.reward[i]));
            }
            Err(Error::ConstraintInfeasible { .. }) => {
                best_value.push(None);
                gap.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let epsilon = gap.iter().flatten().fold(0.0_f64, |acc, g| acc.max(*g));
    let is_equilibrium = feasible.iter().all(|f| *f) && gap.iter().all(Option::is_some) && epsilon <= tolerance;
    Ok(EquilibriumCertificate {
        feasible,
        gap,
        best_response_value: best_value,
        constraint_slack,
        epsilon,
        tolerance,
        is_equilibrium,
        payoffs,
    })
}

/// Certifies `profile` as a constrained ε-equilibrium with `ε = tolerance`.
pub fn verify_equilibrium(
    model: &GameModel,
    profile: &StationaryProfile,
    eta: &[f64],
    rho: &[Vec<f64>],
    tolerance: f64,
) -> Result<EquilibriumCertificate> {
    if rho.len() != model.player_count() {
        return Err(Error::Schema("one row of constraint constants per player expected".into()));
    }
    certify(model, profile, eta, Some(rho), tolerance)
}

/// Certifies `profile` for the game with all constraints removed.
pub fn verify_unconstrained(
    model: &GameModel,
    profile: &StationaryProfile,
    eta: &[f64],
    tolerance: f64,
) -> Result<EquilibriumCertificate> {
    certify(model, profile, eta, None, tolerance)
}

/// Constraint constants below anything a strategy can produce:
/// `−(r̄ · sup_π E[T_Δ] + 1)` for every player and row.
pub fn unconstrained_rho(model: &GameModel, eta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let bound = uniform_absorption_bound(model, eta)?;
    let value = -(model.reward_bound() * bound + 1.0);
    Ok(vec![vec![value; model.constraint_rows()]; model.player_count()])
}

/// Scores are `(uncertified, epsilon)`; lower is better.
fn better(a: (bool, f64), b: (bool, f64)) -> bool {
    (!a.0 && b.0) || (a.0 == b.0 && a.1 < b.1)
}

struct RunResult {
    best: StationaryProfile,
    best_score: (bool, f64),
    iterations: usize,
    converged: bool,
    trace: Vec<TraceRecord>,
}

fn run_dynamics(
    model: &GameModel,
    eta: &[f64],
    rho: &[Vec<f64>],
    config: &SolveConfig,
    restart: usize,
    start: StationaryProfile,
) -> Result<RunResult> {
    let n = model.player_count();
    let mut profile = start;
    let mut best: Option<(StationaryProfile, (bool, f64))> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..config.max_iterations {
        iterations = k + 1;
        let step = match config.schedule {
            StepSchedule::Constant => config.damping,
            StepSchedule::Harmonic => config.damping / (k as f64 + 1.0),
        };
        let payoffs = profile_payoffs(model, &profile, eta)?;
        let mut next = profile.clone().into_inner();
        let mut gaps = vec![None; n];
        let mut feasible = vec![true; n];
        for i in 0..n {
            feasible[i] = rho[i]
                .iter()
                .zip(&payoffs.cost[i])
                .all(|(r, c)| *c >= r - FEASIBILITY_TOL);
            let br = match best_response(model, i, &profile, eta, &rho[i]) {
                Ok(br) => br,
                Err(Error::ConstraintInfeasible { .. }) => continue,
                Err(e) => return Err(e),
            };
            let gap = br.value - payoffs.reward[i];
            gaps[i] = Some(gap);
            // Any maximiser is a valid reply; prefer the current strategy
            // when it already is one.
            if feasible[i] && gap <= config.tolerance {
                continue;
            }
            for (cur, target) in next[i].iter_mut().zip(&br.strategy) {
                for (p, q) in cur.iter_mut().zip(target) {
                    *p = (1.0 - step) * *p + step * q;
                }
                let total: f64 = cur.iter().sum();
                cur.iter_mut().for_each(|p| *p /= total);
            }
        }
        let epsilon = gaps.iter().flatten().fold(0.0_f64, |acc, g| acc.max(*g));
        let current_score = (!(feasible.iter().all(|f| *f) && gaps.iter().all(Option::is_some)), epsilon);
        if best.as_ref().is_none_or(|(_, s)| better(current_score, *s)) {
            best = Some((profile.clone(), current_score));
        }
        let next = StationaryProfile::from_parts_unchecked(next);
        let distance = next.distance(&profile);
        trace.push(TraceRecord {
            restart,
            iteration: k,
            gap: gaps,
            distance,
            epsilon,
        });
        profile = next;
        if distance < config.convergence_tol {
            converged = true;
            break;
        }
    }
    let (best, best_score) = best.expect("at least one iteration");
    Ok(RunResult {
        best,
        best_score,
        iterations,
        converged,
        trace,
    })
}

fn ensure_absorbing(model: &GameModel, eta: &[f64]) -> Result<()> {
    match check_absorbing_from(model, eta).offending_component {
        Some(witness) => Err(Error::NotAbsorbing {
            state: model.states()[witness[0].state].clone(),
        }),
        None => Ok(()),
    }
}

/// Searches for a constrained Nash equilibrium. Runs the dynamics from the
/// uniform profile and from `config.restarts` Dirichlet(1) draws (in
/// parallel), keeps the best certified iterate, and re-verifies it from
/// scratch. Returns [`Error::NoConvergence`] with the best candidate when no
/// run reaches `config.tolerance`.
pub fn solve_equilibrium(model: &GameModel, eta: &[f64], rho: &[Vec<f64>], config: &SolveConfig) -> Result<SolveOutcome> {
    config.validate()?;
    model.check_eta(eta)?;
    if rho.len() != model.player_count() || rho.iter().any(|r| r.len() != model.constraint_rows()) {
        return Err(Error::Schema("constraint constants do not match the model".into()));
    }
    ensure_absorbing(model, eta)?;
    let uniform = StationaryProfile::uniform(model);
    for (i, rho_i) in rho.iter().enumerate() {
        let slack = slater_check(model, i, &uniform, eta, rho_i)?;
        if slack <= 0.0 {
            return Err(Error::SlaterFailure { player: i, slack });
        }
    }

    let starts: Vec<StationaryProfile> = (0..=config.restarts)
        .map(|r| {
            if r == 0 {
                uniform.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(r as u64);
                StationaryProfile::random(model, &mut rng)
            }
        })
        .collect();
    let runs: Vec<RunResult> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, start)| run_dynamics(model, eta, rho, config, r, start))
        .collect::<Result<_>>()?;

    let mut winner = 0;
    for (r, run) in runs.iter().enumerate() {
        if better(run.best_score, runs[winner].best_score) {
            winner = r;
        }
    }
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let converged = runs[winner].converged;
    let trace: Vec<TraceRecord> = runs.iter().flat_map(|r| r.trace.iter().cloned()).collect();
    let profile = runs.into_iter().nth(winner).expect("winner index").best;
    let certificate = verify_equilibrium(model, &profile, eta, rho, config.tolerance)?;
    let outcome = SolveOutcome {
        profile,
        certificate,
        trace,
        restart: winner,
        iterations,
        converged,
    };
    if outcome.certificate.is_equilibrium {
        Ok(outcome)
    } else {
        Err(Error::NoConvergence(Box::new(outcome)))
    }
}

/// The unconstrained game, solved as the constrained one with
/// [`unconstrained_rho`].
pub fn solve_unconstrained(model: &GameModel, eta: &[f64], config: &SolveConfig) -> Result<SolveOutcome> {
    model.check_eta(eta)?;
    ensure_absorbing(model, eta)?;
    let rho = unconstrained_rho(model, eta)?;
    solve_equilibrium(model, eta, &rho, config)
}
