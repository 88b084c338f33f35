//! Monte Carlo sampling of the state-action process.
//!
//! Trajectory `k` draws from its own ChaCha8 stream (`stream = k`) under the
//! master seed, so estimates are bit-identical regardless of thread count.
//! Per-trajectory results are reduced in fixed-size chunks and the chunk
//! partials are merged pairwise in index order.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{product_strategy, CorrelatedStrategy, GameModel, StationaryProfile};

pub const DEFAULT_STEP_CAP: usize = 1_000_000;
const CHUNK: usize = 1024;

/// Strategy driving the simulation.
#[derive(Debug, Clone, Copy)]
pub enum Play<'a> {
    /// Players sample independently given the state.
    Independent(&'a StationaryProfile),
    /// A joint action is sampled directly.
    Correlated(&'a CorrelatedStrategy),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(state, joint action)` pairs until the first entry into the absorbing set.
    pub steps: Vec<(usize, usize)>,
    /// State in which the trajectory ended.
    pub last_state: usize,
    /// Set when the step cap was hit before absorption.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub seed: u64,
    pub samples: usize,
    /// Trajectories cut off by the step cap; their partial sums are included.
    pub truncated: usize,
    pub hitting_time: Estimate,
    pub reward: Vec<Estimate>,
    pub cost: Vec<Vec<Estimate>>,
    /// Mean visit counts per `(state, joint action)`.
    pub occupation: Vec<Vec<Estimate>>,
}

enum ActionSampler {
    Independent(Vec<Vec<WeightedIndex<f64>>>),
    Correlated(Vec<Option<WeightedIndex<f64>>>),
}

/// Precomputed sampling tables for one (model, strategy, η) triple.
pub struct Sampler<'a> {
    model: &'a GameModel,
    initial: WeightedIndex<f64>,
    actions: ActionSampler,
    transitions: Vec<Vec<WeightedIndex<f64>>>,
    cap: usize,
}

fn weighted(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights.iter().copied())
        .map_err(|e| Error::InvalidStrategy(format!("cannot sample from {weights:?}: {e}")))
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a GameModel, play: Play<'_>, eta: &[f64], cap: usize) -> Result<Self> {
        model.check_eta(eta)?;
        let actions = match play {
            Play::Independent(profile) => {
                // Validates the profile.
                product_strategy(model, profile)?;
                let tables = (0..model.player_count())
                    .map(|i| (0..model.state_count()).map(|x| weighted(profile.get(i, x))).collect())
                    .collect::<Result<_>>()?;
                ActionSampler::Independent(tables)
            }
            Play::Correlated(strategy) => {
                CorrelatedStrategy::new(model, strategy.states().to_vec())?;
                let tables = (0..model.state_count())
                    .map(|x| {
                        if model.is_absorbing_state(x) {
                            Ok(None)
                        } else {
                            weighted(strategy.get(x)).map(Some)
                        }
                    })
                    .collect::<Result<_>>()?;
                ActionSampler::Correlated(tables)
            }
        };
        let transitions = (0..model.state_count())
            .map(|x| (0..model.joint_count(x)).map(|ja| weighted(model.kernel(x, ja))).collect())
            .collect::<Result<_>>()?;
        Ok(Sampler {
            model,
            initial: weighted(eta)?,
            actions,
            transitions,
            cap,
        })
    }

    fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        match &self.actions {
            ActionSampler::Independent(tables) => {
                let locals: Vec<usize> = tables.iter().map(|t| t[state].sample(rng)).collect();
                self.model.joint_index(state, &locals)
            }
            ActionSampler::Correlated(tables) => tables[state].as_ref().expect("transient state").sample(rng),
        }
    }

    /// Runs one trajectory, calling `visit(state, joint)` at every step before
    /// absorption. Returns the final state and whether the cap was hit.
    pub fn walk<R: Rng + ?Sized>(&self, rng: &mut R, mut visit: impl FnMut(usize, usize)) -> (usize, bool) {
        let mut state = self.initial.sample(rng);
        let mut steps = 0;
        while !self.model.is_absorbing_state(state) {
            if steps == self.cap {
                return (state, true);
            }
            let joint = self.sample_action(state, rng);
            visit(state, joint);
            state = self.transitions[state][joint].sample(rng);
            steps += 1;
        }
        (state, false)
    }
}

/// Samples one trajectory.
pub fn sample_trajectory<R: Rng + ?Sized>(
    model: &GameModel,
    play: Play<'_>,
    eta: &[f64],
    rng: &mut R,
    cap: usize,
) -> Result<Trajectory> {
    let sampler = Sampler::new(model, play, eta, cap)?;
    let mut steps = Vec::new();
    let (last_state, truncated) = sampler.walk(rng, |x, a| steps.push((x, a)));
    Ok(Trajectory {
        steps,
        last_state,
        truncated,
    })
}

/// Running mean and sum of squared deviations; merged with Chan's formula.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0.0 {
            return b;
        }
        if b.n == 0.0 {
            return a;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        Moments {
            n,
            mean: a.mean + d * b.n / n,
            m2: a.m2 + b.m2 + d * d * a.n * b.n / n,
        }
    }

    fn estimate(&self) -> Estimate {
        let std_error = if self.n > 1.0 {
            (self.m2 / (self.n - 1.0)).sqrt() / self.n.sqrt()
        } else {
            0.0
        };
        Estimate {
            mean: self.mean,
            std_error,
        }
    }
}

#[derive(Debug, Clone)]
struct Partial {
    truncated: usize,
    /// Hitting time, rewards, costs, then one slot per (state, joint) pair.
    moments: Vec<Moments>,
}

impl Partial {
    fn merge(mut a: Partial, b: Partial) -> Partial {
        a.truncated += b.truncated;
        for (x, y) in a.moments.iter_mut().zip(b.moments) {
            *x = Moments::merge(*x, y);
        }
        a
    }
}

fn merge_pairwise(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Partial::merge(a, b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Monte Carlo estimates of `E[T_Δ]`, payoffs and occupation weights from
/// `samples` independent trajectories.
pub fn estimate(model: &GameModel, play: Play<'_>, eta: &[f64], samples: usize, seed: u64) -> Result<EstimateReport> {
    estimate_with_cap(model, play, eta, samples, seed, DEFAULT_STEP_CAP)
}

pub fn estimate_with_cap(
    model: &GameModel,
    play: Play<'_>,
    eta: &[f64],
    samples: usize,
    seed: u64,
    cap: usize,
) -> Result<EstimateReport> {
    if samples == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let sampler = Sampler::new(model, play, eta, cap)?;
    let n = model.player_count();
    let p = model.constraint_rows();
    let offsets: Vec<usize> = (0..model.state_count())
        .scan(0, |acc, x| {
            let start = *acc;
            *acc += model.joint_count(x);
            Some(start)
        })
        .collect();
    let pairs: usize = (0..model.state_count()).map(|x| model.joint_count(x)).sum();
    let scalars = 1 + n + n * p;
    let master = ChaCha8Rng::seed_from_u64(seed);

    let chunks: Vec<Partial> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut part = Partial {
                truncated: 0,
                moments: vec![Moments::default(); scalars + pairs],
            };
            let mut values = vec![0.0; scalars];
            let mut counts = vec![0.0; pairs];
            let mut touched = Vec::new();
            for k in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut rng = master.clone();
                rng.set_stream(k as u64);
                rng.set_word_pos(0);
                values.iter_mut().for_each(|v| *v = 0.0);
                let (_, truncated) = sampler.walk(&mut rng, |x, ja| {
                    values[0] += 1.0;
                    for i in 0..n {
                        values[1 + i] += model.reward(i, x, ja);
                        for j in 0..p {
                            values[1 + n + i * p + j] += model.cost(i, j, x, ja);
                        }
                    }
                    let slot = offsets[x] + ja;
                    if counts[slot] == 0.0 {
                        touched.push(slot);
                    }
                    counts[slot] += 1.0;
                });
                part.truncated += usize::from(truncated);
                for (m, v) in part.moments.iter_mut().zip(&values) {
                    m.push(*v);
                }
                // Untouched slots contribute a zero observation.
                for (slot, m) in part.moments[scalars..].iter_mut().enumerate() {
                    m.push(counts[slot]);
                }
                for slot in touched.drain(..) {
                    counts[slot] = 0.0;
                }
            }
            part
        })
        .collect();
    let total = merge_pairwise(chunks);
    let est: Vec<Estimate> = total.moments.iter().map(Moments::estimate).collect();
    Ok(EstimateReport {
        seed,
        samples,
        truncated: total.truncated,
        hitting_time: est[0],
        reward: est[1..1 + n].to_vec(),
        cost: (0..n).map(|i| est[1 + n + i * p..1 + n + (i + 1) * p].to_vec()).collect(),
        occupation: (0..model.state_count())
            .map(|x| est[scalars + offsets[x]..scalars + offsets[x] + model.joint_count(x)].to_vec())
            .collect(),
    })
}
