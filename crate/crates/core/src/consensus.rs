//! Linear and W-MSR consensus over sequences of realized communication graphs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resilience::{is_rs_robust, sample_realization, DetGraph, ProbGraph, ResilienceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("weights must be positive and sum to one (sum = {sum})")]
    InvalidWeights { sum: f64 },
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("state has {values} robots but the graph has {graph}")]
    SizeMismatch { values: usize, graph: usize },
    #[error("eps must be positive and max_rounds at least 1")]
    InvalidSchedule,
    #[error(transparent)]
    Resilience(#[from] ResilienceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusMode {
    Linear,
    Wmsr,
}

impl ConsensusMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Wmsr => "wmsr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    WellBehaved,
    /// Broadcasts a fixed value and never updates.
    MaliciousConstant,
}

/// `w_own * own + Σ w_j * x_j`. `weights[0]` is the own weight.
pub fn linear_step(own: f64, neighbors: &[f64], weights: &[f64]) -> Result<f64, ConsensusError> {
    if weights.len() != neighbors.len() + 1 {
        return Err(ConsensusError::WeightCount {
            expected: neighbors.len() + 1,
            got: weights.len(),
        });
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w > 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(ConsensusError::InvalidWeights { sum });
    }
    Ok(weights[0] * own
        + neighbors
            .iter()
            .zip(&weights[1..])
            .map(|(x, w)| x * w)
            .sum::<f64>())
}

fn equal_average(own: f64, survivors: &[f64]) -> f64 {
    (own + survivors.iter().sum::<f64>()) / (survivors.len() + 1) as f64
}

/// One W-MSR update: drop the `f` largest neighbor values strictly above
/// `own` (all of them if fewer), likewise below, then average `own` with the
/// survivors using equal weights.
pub fn wmsr_step(own: f64, neighbors: &[f64], f: usize) -> f64 {
    let mut sorted = neighbors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let below = sorted.iter().take_while(|&&v| v < own).count();
    let above = sorted.iter().rev().take_while(|&&v| v > own).count();
    let lo = below.min(f);
    let hi = sorted.len() - above.min(f);
    equal_average(own, &sorted[lo..hi])
}

/// Values held by each robot (one vector per robot, same length for all).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusState {
    pub values: Vec<Vec<f64>>,
    pub behaviors: Vec<Behavior>,
    /// Assumed bound on the number of malicious robots.
    pub f: usize,
}

impl ConsensusState {
    pub fn new(values: Vec<Vec<f64>>, behaviors: Vec<Behavior>, f: usize) -> Self {
        assert_eq!(values.len(), behaviors.len());
        Self {
            values,
            behaviors,
            f,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn well_behaved(&self) -> impl Iterator<Item = usize> + '_ {
        self.behaviors
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == Behavior::WellBehaved)
            .map(|(i, _)| i)
    }

    /// Per-component `[min, max]` over well-behaved robots.
    pub fn well_behaved_hull(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|c| {
                self.well_behaved().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    (lo.min(self.values[i][c]), hi.max(self.values[i][c]))
                })
            })
            .collect()
    }

    /// Per-component spread (max - min) over well-behaved robots.
    pub fn spread(&self) -> Vec<f64> {
        self.well_behaved_hull()
            .into_iter()
            .map(|(lo, hi)| if hi >= lo { hi - lo } else { 0.0 })
            .collect()
    }

    /// Synchronous update of every well-behaved robot from its in-neighbors in `g`.
    pub fn step(&mut self, g: &DetGraph, mode: ConsensusMode) -> Result<(), ConsensusError> {
        if g.len() != self.len() {
            return Err(ConsensusError::SizeMismatch {
                values: self.len(),
                graph: g.len(),
            });
        }
        let previous = self.values.clone();
        let dim = self.dim();
        let mut incoming = Vec::new();
        for i in 0..self.len() {
            if self.behaviors[i] != Behavior::WellBehaved {
                continue;
            }
            let senders: Vec<usize> = g.in_neighbors(i).collect();
            for c in 0..dim {
                incoming.clear();
                incoming.extend(senders.iter().map(|&j| previous[j][c]));
                let own = previous[i][c];
                self.values[i][c] = match mode {
                    ConsensusMode::Wmsr => wmsr_step(own, &incoming, self.f),
                    ConsensusMode::Linear => equal_average(own, &incoming),
                };
            }
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.well_behaved()
            .flat_map(|i| self.values[i].iter())
            .fold(1.0f64, |m, v| m.max(v.abs()))
    }

    /// Well-behaved spread within `eps`, relative to the largest magnitude (at least one).
    pub fn converged(&self, eps: f64) -> bool {
        let scale = self.scale();
        self.spread().iter().all(|&s| s <= eps * scale)
    }

    fn max_change(&self, previous: &[Vec<f64>]) -> f64 {
        self.well_behaved()
            .flat_map(|i| self.values[i].iter().zip(&previous[i]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

/// Record of one meeting's communication rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub rounds: usize,
    pub realized: Vec<DetGraph>,
    pub converged: bool,
}

/// Runs rounds of consensus, drawing a fresh realization of `pg` each round,
/// until the well-behaved robots agree and stop moving (spread and per-round
/// change both within `eps`, relative to the largest magnitude floored at
/// one) or `max_rounds` is reached.
///
/// Agreement alone is not enough: under linear updates the well-behaved
/// robots can agree after a single complete round while a constant neighbor
/// keeps pulling them along.
pub fn run_meeting_consensus<R: Rng + ?Sized>(
    mut state: ConsensusState,
    pg: &ProbGraph,
    mode: ConsensusMode,
    eps: f64,
    max_rounds: usize,
    rng: &mut R,
) -> Result<(ConsensusState, RoundLog), ConsensusError> {
    if !(eps > 0.0) || max_rounds == 0 {
        return Err(ConsensusError::InvalidSchedule);
    }
    if pg.len() != state.len() {
        return Err(ConsensusError::SizeMismatch {
            values: state.len(),
            graph: pg.len(),
        });
    }
    let mut realized = Vec::new();
    let mut converged = false;
    while realized.len() < max_rounds {
        let g = sample_realization(pg, rng);
        let previous = state.values.clone();
        state.step(&g, mode)?;
        realized.push(g);
        if state.converged(eps) && state.max_change(&previous) <= eps * state.scale() {
            converged = true;
            break;
        }
    }
    Ok((
        state,
        RoundLog {
            rounds: realized.len(),
            realized,
            converged,
        },
    ))
}

/// Rounds until the union of realizations is `(r, s)`-robust, capped at `max_rounds`.
pub fn count_retransmissions<R: Rng + ?Sized>(
    pg: &ProbGraph,
    r: usize,
    s: usize,
    max_rounds: usize,
    rng: &mut R,
) -> Result<usize, ConsensusError> {
    if max_rounds == 0 {
        return Err(ConsensusError::InvalidSchedule);
    }
    let mut union = DetGraph::empty(pg.len());
    for round in 1..=max_rounds {
        union.union_with(&sample_realization(pg, rng));
        if is_rs_robust(&union, r, s)? {
            return Ok(round);
        }
    }
    Ok(max_rounds)
}
