//! Probabilistic communication graphs and their resilience.
//!
//! A [`CommField`] gives the probability that robots at two grid locations can
//! talk. Placing robots turns it into a [`ProbGraph`]; every communication
//! round draws an independent [`DetGraph`] realization from it. The
//! probability of resilience `P_r` is the probability that one realization is
//! `(r, s)`-robust, evaluated by exhaustive enumeration for small graphs and
//! by Monte Carlo otherwise.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::squared_distance;
use crate::world::GridWorld;

/// Largest node count accepted by the exact robustness check.
pub const ROBUSTNESS_NODE_CAP: usize = 10;
/// Largest number of uncertain edges accepted by exact enumeration.
pub const EXACT_EDGE_CAP: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResilienceError {
    #[error("{n} nodes exceeds the exact robustness cap of {cap}")]
    TooManyNodes { n: usize, cap: usize },
    #[error("{edges} uncertain edges exceeds the exact enumeration cap of {cap}")]
    TooManyEdges { edges: usize, cap: usize },
    #[error("invalid robustness parameters r={r}, s={s} for {n} nodes")]
    InvalidRobustness { r: usize, s: usize, n: usize },
    #[error("location id {0} is out of range")]
    UnknownLocation(usize),
    #[error("no subarea can hold {n} robots")]
    InfeasibleArea { n: usize },
    #[error("invalid communication model: {0}")]
    InvalidModel(String),
    #[error("monte carlo estimation needs at least one sample")]
    NoSamples,
}

/// Inclusive rectangle of grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Zone {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

fn default_zone_size() -> [usize; 2] {
    [3, 6]
}

/// How pairwise communication probabilities are synthesized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommModel {
    /// `p = exp(-d² / (2 ρ²))`.
    DistanceDecay { range: f64 },
    /// Distance decay, attenuated by `attenuation` whenever either endpoint
    /// lies in an interference zone. `random_zones` extra zones with side
    /// lengths in `zone_size` are placed from the field seed.
    DistanceDecayWithZones {
        range: f64,
        attenuation: f64,
        #[serde(default)]
        zones: Vec<Zone>,
        #[serde(default)]
        random_zones: usize,
        #[serde(default = "default_zone_size")]
        zone_size: [usize; 2],
    },
}

impl CommModel {
    pub fn id(&self) -> &'static str {
        match self {
            Self::DistanceDecay { .. } => "distance_decay",
            Self::DistanceDecayWithZones { .. } => "distance_decay_with_zones",
        }
    }

    pub fn validate(&self) -> Result<(), ResilienceError> {
        let range = match self {
            Self::DistanceDecay { range } => *range,
            Self::DistanceDecayWithZones {
                range,
                attenuation,
                zone_size,
                ..
            } => {
                if !(0.0..=1.0).contains(attenuation) {
                    return Err(ResilienceError::InvalidModel(format!(
                        "attenuation {attenuation} must lie in [0, 1]"
                    )));
                }
                if zone_size[0] == 0 || zone_size[0] > zone_size[1] {
                    return Err(ResilienceError::InvalidModel(format!(
                        "zone_size {zone_size:?} must satisfy 1 <= lo <= hi"
                    )));
                }
                *range
            }
        };
        if !(range > 0.0 && range.is_finite()) {
            return Err(ResilienceError::InvalidModel(format!(
                "range {range} must be positive"
            )));
        }
        Ok(())
    }
}

/// Dense matrix of communication probabilities between every pair of grid
/// locations, together with the recipe that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CommField {
    n: usize,
    prob: Vec<f64>,
    pub model: CommModel,
    pub seed: u64,
    /// All interference zones in effect, explicit and random.
    pub zones: Vec<Zone>,
}

impl CommField {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.prob[i * self.n + j]
    }
}

/// Builds the communication field for `world` under `model`.
pub fn synth_comm_field(
    world: &GridWorld,
    model: &CommModel,
    seed: u64,
) -> Result<CommField, ResilienceError> {
    model.validate()?;
    let n = world.len();
    let locs = world.locations();
    let (range, attenuation, zones) = match model {
        CommModel::DistanceDecay { range } => (*range, 1.0, Vec::new()),
        CommModel::DistanceDecayWithZones {
            range,
            attenuation,
            zones,
            random_zones,
            zone_size,
        } => {
            let mut all = zones.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..*random_zones {
                let w = rng.gen_range(zone_size[0]..=zone_size[1]).min(world.width());
                let h = rng.gen_range(zone_size[0]..=zone_size[1]).min(world.height());
                let x0 = rng.gen_range(0..=world.width() - w);
                let y0 = rng.gen_range(0..=world.height() - h);
                all.push(Zone {
                    x0,
                    y0,
                    x1: x0 + w - 1,
                    y1: y0 + h - 1,
                });
            }
            (*range, *attenuation, all)
        }
    };
    let in_zone: Vec<bool> = (0..n)
        .map(|id| {
            let (x, y) = world.coords(id);
            zones.iter().any(|z| z.contains(x, y))
        })
        .collect();
    let two_rho2 = 2.0 * range * range;
    let mut prob = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            prob[i * n + j] = if i == j {
                1.0
            } else {
                let p = (-squared_distance(&locs[i], &locs[j]) / two_rho2).exp();
                if in_zone[i] || in_zone[j] {
                    p * attenuation
                } else {
                    p
                }
            };
        }
    }
    Ok(CommField {
        n,
        prob,
        model: model.clone(),
        seed,
        zones,
    })
}

/// Independent directed edge probabilities between placed robots.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGraph {
    pub positions: Vec<usize>,
    /// `edge_prob[i][j]`: probability that `i → j` exists. Diagonal unused.
    pub edge_prob: Vec<Vec<f64>>,
}

impl ProbGraph {
    /// A graph directly from a probability matrix.
    pub fn from_matrix(edge_prob: Vec<Vec<f64>>) -> Self {
        let n = edge_prob.len();
        Self {
            positions: (0..n).collect(),
            edge_prob,
        }
    }

    pub fn len(&self) -> usize {
        self.edge_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_prob.is_empty()
    }

    /// Directed edges `(i, j)`, `i ≠ j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }
}

pub fn build_prob_graph(
    field: &CommField,
    positions: &[usize],
) -> Result<ProbGraph, ResilienceError> {
    if let Some(&bad) = positions.iter().find(|&&p| p >= field.len()) {
        return Err(ResilienceError::UnknownLocation(bad));
    }
    let edge_prob = positions
        .iter()
        .map(|&a| positions.iter().map(|&b| field.prob(a, b)).collect())
        .collect();
    Ok(ProbGraph {
        positions: positions.to_vec(),
        edge_prob,
    })
}

/// Concrete directed graph on at most 64 nodes. Bit `j` of `out[i]` marks
/// the edge `i → j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DetGraph {
    out: Vec<u64>,
}

impl DetGraph {
    pub fn empty(n: usize) -> Self {
        assert!(n <= 64, "DetGraph holds at most 64 nodes");
        Self { out: vec![0; n] }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        if from != to {
            self.out[from] |= 1 << to;
        }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.out[from] >> to & 1 == 1
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|m| m.count_ones() as usize).sum()
    }

    /// In-neighbors of `node` (senders it hears from), ascending.
    pub fn in_neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&j| self.has_edge(j, node))
    }

    pub fn in_masks(&self) -> Vec<u64> {
        let n = self.len();
        let mut masks = vec![0u64; n];
        for (i, &row) in self.out.iter().enumerate() {
            let mut bits = row;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                masks[j] |= 1 << i;
                bits &= bits - 1;
            }
        }
        masks
    }

    /// Edge-set union with another graph on the same nodes.
    pub fn union_with(&mut self, other: &DetGraph) {
        for (a, b) in self.out.iter_mut().zip(&other.out) {
            *a |= b;
        }
    }
}

/// Draws one realization: each directed edge independently with its probability.
pub fn sample_realization<R: Rng + ?Sized>(pg: &ProbGraph, rng: &mut R) -> DetGraph {
    let mut g = DetGraph::empty(pg.len());
    for (i, j) in pg.edges() {
        if rng.gen::<f64>() < pg.edge_prob[i][j] {
            g.add_edge(i, j);
        }
    }
    g
}

/// Exact `(r, s)`-robustness: for every pair of nonempty disjoint node sets
/// `S₁, S₂`, with `X_S` the members of `S` having at least `r` in-neighbors
/// outside `S`, one of `X_{S₁} = S₁`, `X_{S₂} = S₂` or `|X_{S₁}| + |X_{S₂}| ≥ s`
/// must hold.
pub fn is_rs_robust(g: &DetGraph, r: usize, s: usize) -> Result<bool, ResilienceError> {
    let n = g.len();
    if n > ROBUSTNESS_NODE_CAP {
        return Err(ResilienceError::TooManyNodes {
            n,
            cap: ROBUSTNESS_NODE_CAP,
        });
    }
    if r == 0 || s == 0 || s > n {
        return Err(ResilienceError::InvalidRobustness { r, s, n });
    }
    Ok(robust_unchecked(&g.in_masks(), r, s))
}

fn robust_unchecked(in_masks: &[u64], r: usize, s: usize) -> bool {
    let n = in_masks.len();
    let full = (1u64 << n) - 1;
    // subsets where not every member is r-reachable, with their |X_S|
    let mut deficient: Vec<(u64, u32)> = Vec::new();
    let mut reach = vec![u32::MAX; 1 << n];
    for set in 1..=full {
        let mut count = 0u32;
        let mut bits = set;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            if (in_masks[i] & !set).count_ones() as usize >= r {
                count += 1;
            }
            bits &= bits - 1;
        }
        if count != set.count_ones() {
            reach[set as usize] = count;
            deficient.push((set, count));
        }
    }
    let s = s as u32;
    for &(s1, x1) in &deficient {
        if x1 >= s {
            continue;
        }
        let rest = full & !s1;
        // enumerate nonempty submasks of the complement
        let mut s2 = rest;
        while s2 != 0 {
            let x2 = reach[s2 as usize];
            if x2 != u32::MAX && x1 + x2 < s {
                return false;
            }
            s2 = (s2 - 1) & rest;
        }
    }
    true
}

/// How to evaluate the probability of resilience.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method", deny_unknown_fields)]
pub enum PrMethod {
    Exact,
    MonteCarlo { samples: usize },
}

/// A probability with its standard error (zero for exact evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub probability: f64,
    pub std_error: f64,
}

/// Probability that one realization of `pg` is `(r, s)`-robust.
pub fn prob_resilience<R: Rng + ?Sized>(
    pg: &ProbGraph,
    r: usize,
    s: usize,
    method: PrMethod,
    rng: &mut R,
) -> Result<Estimate, ResilienceError> {
    let n = pg.len();
    if n > ROBUSTNESS_NODE_CAP {
        return Err(ResilienceError::TooManyNodes {
            n,
            cap: ROBUSTNESS_NODE_CAP,
        });
    }
    if r == 0 || s == 0 || s > n {
        return Err(ResilienceError::InvalidRobustness { r, s, n });
    }
    match method {
        PrMethod::Exact => exact_resilience(pg, r, s),
        PrMethod::MonteCarlo { samples } => {
            if samples == 0 {
                return Err(ResilienceError::NoSamples);
            }
            let hits = (0..samples)
                .filter(|_| robust_unchecked(&sample_realization(pg, rng).in_masks(), r, s))
                .count();
            let p = hits as f64 / samples as f64;
            Ok(Estimate {
                probability: p,
                std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            })
        }
    }
}

fn exact_resilience(pg: &ProbGraph, r: usize, s: usize) -> Result<Estimate, ResilienceError> {
    let mut base = DetGraph::empty(pg.len());
    let mut uncertain = Vec::new();
    for (i, j) in pg.edges() {
        let p = pg.edge_prob[i][j];
        if p >= 1.0 {
            base.add_edge(i, j);
        } else if p > 0.0 {
            uncertain.push((i, j, p));
        }
    }
    if uncertain.len() > EXACT_EDGE_CAP {
        return Err(ResilienceError::TooManyEdges {
            edges: uncertain.len(),
            cap: EXACT_EDGE_CAP,
        });
    }
    let mut total = 0.0;
    for mask in 0u32..(1u32 << uncertain.len()) {
        let mut g = base.clone();
        let mut weight = 1.0;
        for (k, &(i, j, p)) in uncertain.iter().enumerate() {
            if mask >> k & 1 == 1 {
                g.add_edge(i, j);
                weight *= p;
            } else {
                weight *= 1.0 - p;
            }
        }
        if robust_unchecked(&g.in_masks(), r, s) {
            total += weight;
        }
    }
    Ok(Estimate {
        probability: total,
        std_error: 0.0,
    })
}

/// Outcome of choosing where a team meets inside one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingChoice {
    pub subarea: usize,
    /// Mean `P_r` over the sampled placements in the chosen subarea.
    pub p_r: f64,
    /// The sampled placement with the highest `P_r`, ascending location ids.
    pub placement: Vec<usize>,
    /// Mean `P_r` per subarea; `None` where the subarea is too small.
    pub per_subarea: Vec<Option<f64>>,
}

/// Draws `n` distinct locations of `subarea`, sorted ascending.
pub fn random_placement<R: Rng + ?Sized>(subarea: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    let mut ids: Vec<usize> = index::sample(rng, subarea.len(), n)
        .into_iter()
        .map(|k| subarea[k])
        .collect();
    ids.sort_unstable();
    ids
}

/// Mean `P_r` over `placements` random placements, plus the best placement.
pub fn evaluate_subarea<R: Rng + ?Sized>(
    subarea: &[usize],
    field: &CommField,
    n: usize,
    (r, s): (usize, usize),
    placements: usize,
    method: PrMethod,
    rng: &mut R,
) -> Result<(f64, Vec<usize>, f64), ResilienceError> {
    let mut sum = 0.0;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..placements.max(1) {
        let placement = random_placement(subarea, n, rng);
        let pg = build_prob_graph(field, &placement)?;
        let p = prob_resilience(&pg, r, s, method, rng)?.probability;
        sum += p;
        if best.as_ref().map_or(true, |(b, _)| p > *b) {
            best = Some((p, placement));
        }
    }
    let (best_p, best_placement) = best.expect("at least one placement");
    Ok((sum / placements.max(1) as f64, best_placement, best_p))
}

/// Picks the subarea of highest mean `P_r` (ties: lowest index). Subareas
/// with fewer than `n` locations are skipped.
pub fn select_meeting_subarea<R: Rng + ?Sized>(
    subareas: &[Vec<usize>],
    field: &CommField,
    n: usize,
    rs: (usize, usize),
    placements: usize,
    method: PrMethod,
    rng: &mut R,
) -> Result<MeetingChoice, ResilienceError> {
    let mut per_subarea = Vec::with_capacity(subareas.len());
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for (idx, sub) in subareas.iter().enumerate() {
        if sub.len() < n {
            per_subarea.push(None);
            continue;
        }
        let (mean, placement, _) = evaluate_subarea(sub, field, n, rs, placements, method, rng)?;
        per_subarea.push(Some(mean));
        if best.as_ref().map_or(true, |(_, b, _)| mean > *b) {
            best = Some((idx, mean, placement));
        }
    }
    let (subarea, p_r, placement) = best.ok_or(ResilienceError::InfeasibleArea { n })?;
    Ok(MeetingChoice {
        subarea,
        p_r,
        placement,
        per_subarea,
    })
}
