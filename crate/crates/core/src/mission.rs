//! The resilient exploration mission.
//!
//! Offline, every area but the last gets a meeting subarea of highest
//! probability of resilience. Online, robots plan one after another: each
//! picks the unclaimed location of highest mutual-information gain in the
//! current area, routes through it to its meeting position, inflates the
//! edges it will walk and announces its path. Robots then sense every node
//! on their paths, refit their kernels from their own measurements and run
//! consensus on `(s, l)` at the meeting before replanning for the next area.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{
    run_meeting_consensus, Behavior, ConsensusError, ConsensusMode, ConsensusState, RoundLog,
};
use crate::gp::{fit_hyperparams, Bounds, EnvField, FitOptions, GpError, GpModel, Kernel, Point};
use crate::resilience::{
    build_prob_graph, select_meeting_subarea, CommField, MeetingChoice, PrMethod, ResilienceError,
};
use crate::seed;
use crate::world::{GridWorld, Path, WorldError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    #[error("robot {robot} cannot reach location {target} within its budget {budget:.3} (direct cost {direct:.3})")]
    InfeasibleBudget {
        robot: usize,
        target: usize,
        budget: f64,
        direct: f64,
    },
    #[error("invalid mission configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Resilience(#[from] ResilienceError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

/// False data injection: compromised robots add `ε ~ U[lo, hi]` to every measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub compromised: Vec<usize>,
    pub epsilon: [f64; 2],
}

impl AttackSpec {
    pub fn none() -> Self {
        Self {
            compromised: Vec::new(),
            epsilon: [0.0, 0.0],
        }
    }

    pub fn is_compromised(&self, robot: usize) -> bool {
        self.compromised.contains(&robot)
    }
}

pub fn corrupt<R: Rng + ?Sized>(measurement: f64, rng: &mut R, spec: &AttackSpec) -> f64 {
    let [lo, hi] = spec.epsilon;
    if lo >= hi {
        measurement + lo
    } else {
        measurement + rng.gen_range(lo..=hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: usize,
    pub position: usize,
    /// Own measurements `(location, value)`, in sensing order.
    pub measurements: Vec<(usize, f64)>,
    pub kernel: Kernel,
    pub compromised: bool,
    pub remaining_budget: f64,
}

impl RobotState {
    pub fn new(id: usize, position: usize, kernel: Kernel, compromised: bool) -> Self {
        Self {
            id,
            position,
            measurements: Vec::new(),
            kernel,
            compromised,
            remaining_budget: 0.0,
        }
    }

    fn has_measured(&self, location: usize) -> bool {
        self.measurements.iter().any(|(l, _)| *l == location)
    }

    /// Robot's GP: `evidence` first, then own measurements at other locations.
    pub fn model(
        &self,
        locations: &std::sync::Arc<[Point]>,
        evidence: &[(usize, f64)],
        nugget: f64,
    ) -> Result<GpModel, GpError> {
        let mut seen = HashSet::new();
        let (sensed, values): (Vec<usize>, Vec<f64>) = evidence
            .iter()
            .chain(self.measurements.iter())
            .filter(|(l, _)| seen.insert(*l))
            .copied()
            .unzip();
        GpModel::with_nugget(self.kernel, locations.clone(), sensed, values, nugget)
    }
}

/// A robot's route for one area.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub path: Path,
    /// The informative waypoint, or `None` when the robot went straight to its target.
    pub intermediate: Option<usize>,
}

/// Plans one robot's path through the highest-gain unclaimed location of
/// `area` to `meeting`, then inflates the walked edges by `alpha`.
pub fn plan_robot(
    robot: &RobotState,
    world: &mut GridWorld,
    gp: &GpModel,
    area: &[usize],
    meeting: usize,
    claimed: &BTreeSet<usize>,
    alpha: f64,
) -> Result<PlannedPath, MissionError> {
    let placed: BTreeSet<usize> = gp.sensed().iter().copied().chain(claimed.iter().copied()).collect();
    let candidates: Vec<usize> = area.iter().copied().filter(|id| !placed.contains(id)).collect();
    let budget = robot.remaining_budget;
    let slack = 1e-9 * budget.abs().max(1.0);

    let mut intermediate = None;
    if !candidates.is_empty() {
        let placed: Vec<usize> = placed.into_iter().collect();
        let gains = gp.mi_gains(&placed, &candidates)?;
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            gains[b]
                .total_cmp(&gains[a])
                .then(candidates[a].cmp(&candidates[b]))
        });
        let from = world.costs_from(robot.position)?;
        let to = world.costs_to(meeting)?;
        intermediate = order
            .into_iter()
            .map(|k| candidates[k])
            .find(|&q| from[q] + to[q] <= budget + slack);
    }

    let path = match intermediate {
        Some(q) => world
            .shortest_path(robot.position, q)?
            .concat(&world.shortest_path(q, meeting)?),
        None => {
            let direct = world.shortest_path(robot.position, meeting)?;
            if direct.cost > budget + slack {
                return Err(MissionError::InfeasibleBudget {
                    robot: robot.id,
                    target: meeting,
                    budget,
                    direct: direct.cost,
                });
            }
            direct
        }
    };
    world.inflate_traversed(&path, alpha)?;
    Ok(PlannedPath { path, intermediate })
}

/// Paths for the whole team for one area.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    pub paths: Vec<PlannedPath>,
    pub meeting: Vec<usize>,
    pub gamma: f64,
}

impl MissionPlan {
    pub fn total_cost(&self) -> f64 {
        self.paths.iter().map(|p| p.path.cost).sum()
    }
}

/// Robots plan in index order, each seeing the full paths announced before
/// it. Every robot gets an equal share `gamma / n` of the team budget.
pub fn sequential_plan(
    team: &mut [RobotState],
    world: &mut GridWorld,
    gps: &[GpModel],
    area: &[usize],
    meeting: &[usize],
    alpha: f64,
    gamma: f64,
) -> Result<MissionPlan, MissionError> {
    if team.len() != gps.len() || team.len() != meeting.len() {
        return Err(MissionError::Config(format!(
            "{} robots, {} models, {} meeting positions",
            team.len(),
            gps.len(),
            meeting.len()
        )));
    }
    let share = gamma / team.len() as f64;
    let mut claimed = BTreeSet::new();
    let mut paths = Vec::with_capacity(team.len());
    for (k, robot) in team.iter_mut().enumerate() {
        robot.remaining_budget = share;
        let planned = plan_robot(robot, world, &gps[k], area, meeting[k], &claimed, alpha)?;
        robot.remaining_budget = (share - planned.path.cost).max(0.0);
        claimed.extend(planned.path.nodes.iter().copied());
        paths.push(planned);
    }
    Ok(MissionPlan {
        paths,
        meeting: meeting.to_vec(),
        gamma,
    })
}

/// How the per-round team budget `γ` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// A fixed `γ` for every round.
    Fixed(f64),
    /// `γ` = factor × the team's total direct-route cost at the start of the round.
    Factor(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub n: usize,
    pub f: usize,
    pub robustness: (usize, usize),
    pub attack: AttackSpec,
    pub alpha: f64,
    pub budget: Budget,
    pub prior_kernel: Kernel,
    pub bounds: Bounds,
    pub fit: FitOptions,
    pub initial_evidence: usize,
    pub placements: usize,
    pub pr_method: PrMethod,
    pub consensus_eps: f64,
    pub consensus_max_rounds: usize,
}

/// Meeting subareas chosen before the mission starts, one per area except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflinePlan {
    pub meetings: Vec<MeetingChoice>,
}

pub fn offline_phase<R: Rng + ?Sized>(
    world: &GridWorld,
    field: &CommField,
    cfg: &MissionConfig,
    rng: &mut R,
) -> Result<OfflinePlan, MissionError> {
    let areas = world.subareas().len();
    let meetings = world.subareas()[..areas.saturating_sub(1)]
        .iter()
        .map(|subs| {
            select_meeting_subarea(
                subs,
                field,
                cfg.n,
                cfg.robustness,
                cfg.placements,
                cfg.pr_method,
                rng,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OfflinePlan { meetings })
}

/// Seeds for the random streams of one mission run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MissionSeeds {
    pub evidence: u64,
    pub attack: u64,
    pub consensus: u64,
}

#[derive(Debug, Clone)]
pub struct RobotOutcome {
    pub kernel: Kernel,
    pub compromised: bool,
    pub measurements: Vec<(usize, f64)>,
    pub model: GpModel,
}

#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub robots: Vec<RobotOutcome>,
    pub evidence: Vec<(usize, f64)>,
    pub plans: Vec<MissionPlan>,
    pub logs: Vec<RoundLog>,
}

/// Random initial knowledge shared by the whole team.
pub fn initial_evidence(env: &EnvField, count: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut rng = seed::stream(seed, &[]);
    let count = count.min(env.values.len());
    let mut ids: Vec<usize> = index::sample(&mut rng, env.values.len(), count).into_vec();
    ids.sort_unstable();
    ids.into_iter().map(|id| (id, env.values[id])).collect()
}

fn validate(world: &GridWorld, cfg: &MissionConfig) -> Result<(), MissionError> {
    let err = |m: String| Err(MissionError::Config(m));
    if cfg.n == 0 {
        return err("team must have at least one robot".into());
    }
    if world.starts.len() != cfg.n || world.goals.len() != cfg.n {
        return err(format!(
            "{} starts and {} goals for {} robots",
            world.starts.len(),
            world.goals.len(),
            cfg.n
        ));
    }
    if let Some(&r) = cfg.attack.compromised.iter().find(|&&r| r >= cfg.n) {
        return err(format!("compromised robot {r} does not exist"));
    }
    if !(cfg.alpha > 1.0) {
        return err(format!("alpha must exceed 1 (got {})", cfg.alpha));
    }
    Ok(())
}

/// Runs the online phase for one consensus rule.
pub fn run_mission(
    world: &GridWorld,
    offline: &OfflinePlan,
    env: &EnvField,
    field: &CommField,
    cfg: &MissionConfig,
    mode: ConsensusMode,
    seeds: MissionSeeds,
) -> Result<MissionOutcome, MissionError> {
    validate(world, cfg)?;
    let areas = world.areas().len();
    if offline.meetings.len() + 1 != areas {
        return Err(MissionError::Config(format!(
            "{} meetings for {} areas",
            offline.meetings.len(),
            areas
        )));
    }
    let mut world = world.clone();
    let locations = world.locations().clone();
    let evidence = initial_evidence(env, cfg.initial_evidence, seeds.evidence);
    let mut team: Vec<RobotState> = (0..cfg.n)
        .map(|k| {
            RobotState::new(
                k,
                world.starts[k],
                cfg.prior_kernel,
                cfg.attack.is_compromised(k),
            )
        })
        .collect();
    let mut attack_rngs: Vec<ChaCha8Rng> =
        (0..cfg.n).map(|k| seed::stream(seeds.attack, &[k as u64])).collect();
    let mut plans = Vec::with_capacity(areas);
    let mut logs = Vec::with_capacity(areas);

    for area_idx in 0..areas {
        let targets: Vec<usize> = if area_idx + 1 < areas {
            offline.meetings[area_idx].placement.clone()
        } else {
            world.goals.clone()
        };
        let gps = team
            .iter()
            .map(|r| r.model(&locations, &evidence, cfg.fit.nugget))
            .collect::<Result<Vec<_>, _>>()?;
        let gamma = match cfg.budget {
            Budget::Fixed(g) => g,
            Budget::Factor(factor) => {
                let mut direct = 0.0;
                for (robot, &t) in team.iter().zip(&targets) {
                    direct += world.shortest_path(robot.position, t)?.cost;
                }
                factor * direct
            }
        };
        let area = world.areas()[area_idx].clone();
        let plan = sequential_plan(&mut team, &mut world, &gps, &area, &targets, cfg.alpha, gamma)?;

        for (robot, planned) in team.iter_mut().zip(&plan.paths) {
            for &node in &planned.path.nodes {
                if robot.has_measured(node) {
                    continue;
                }
                let truth = env.values[node];
                let value = if robot.compromised {
                    corrupt(truth, &mut attack_rngs[robot.id], &cfg.attack)
                } else {
                    truth
                };
                robot.measurements.push((node, value));
            }
            robot.position = *planned.path.nodes.last().expect("paths are nonempty");
        }

        for robot in team.iter_mut() {
            let data: Vec<(Point, f64)> = robot
                .measurements
                .iter()
                .map(|&(l, v)| (locations[l], v))
                .collect();
            match fit_hyperparams(&data, robot.kernel, &cfg.bounds, &cfg.fit) {
                Ok(fit) => robot.kernel = fit.kernel,
                Err(GpError::TooFewMeasurements { .. }) | Err(GpError::IllConditioned) => {}
                Err(e) => return Err(e.into()),
            }
        }

        let state = ConsensusState::new(
            team.iter()
                .map(|r| vec![r.kernel.signal, r.kernel.length_scale])
                .collect(),
            team.iter()
                .map(|r| {
                    if r.compromised {
                        Behavior::MaliciousConstant
                    } else {
                        Behavior::WellBehaved
                    }
                })
                .collect(),
            cfg.f,
        );
        let pg = build_prob_graph(field, &targets)?;
        let mut rng = seed::stream(seeds.consensus, &[area_idx as u64]);
        let (state, log) = run_meeting_consensus(
            state,
            &pg,
            mode,
            cfg.consensus_eps,
            cfg.consensus_max_rounds,
            &mut rng,
        )?;
        for (robot, values) in team.iter_mut().zip(&state.values) {
            robot.kernel = Kernel::new(values[0], values[1])?;
        }
        plans.push(plan);
        logs.push(log);
    }

    let robots = team
        .iter()
        .map(|r| {
            Ok(RobotOutcome {
                kernel: r.kernel,
                compromised: r.compromised,
                measurements: r.measurements.clone(),
                model: r.model(&locations, &evidence, cfg.fit.nugget)?,
            })
        })
        .collect::<Result<Vec<_>, GpError>>()?;
    Ok(MissionOutcome {
        robots,
        evidence,
        plans,
        logs,
    })
}

/// Offline phase followed by the online phase.
pub fn execute_mission<R: Rng + ?Sized>(
    world: &GridWorld,
    env: &EnvField,
    field: &CommField,
    cfg: &MissionConfig,
    mode: ConsensusMode,
    seeds: MissionSeeds,
    rng: &mut R,
) -> Result<(OfflinePlan, MissionOutcome), MissionError> {
    let offline = offline_phase(world, field, cfg, rng)?;
    let outcome = run_mission(world, &offline, env, field, cfg, mode, seeds)?;
    Ok((offline, outcome))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn corruption_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let none = AttackSpec::none();
        assert_eq!(corrupt(1.5, &mut rng, &none), 1.5);
        let spec = AttackSpec {
            compromised: vec![0],
            epsilon: [1.0, 3.0],
        };
        for _ in 0..1000 {
            let d = corrupt(0.25, &mut rng, &spec) - 0.25;
            assert!((1.0..=3.0).contains(&d));
        }
    }

    #[test]
    fn corruption_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = AttackSpec {
            compromised: vec![0],
            epsilon: [-2.0, 2.0],
        };
        let mean: f64 = (0..10_000).map(|_| corrupt(0.0, &mut rng, &spec)).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.07, "{mean}");
    }

    fn small_world() -> GridWorld {
        let mut w = GridWorld::new(6, 4, 1.0).unwrap();
        w.partition(2, 2).unwrap();
        w
    }

    #[test]
    fn fully_claimed_area_goes_direct() {
        let mut w = small_world();
        let gp = GpModel::prior(Kernel::new(1.0, 1.5).unwrap(), w.locations().clone()).unwrap();
        let mut robot = RobotState::new(0, 0, gp.kernel(), false);
        robot.remaining_budget = 100.0;
        let area = w.areas()[0].clone();
        let claimed: BTreeSet<usize> = area.iter().copied().collect();
        let planned = plan_robot(&robot, &mut w, &gp, &area, 14, &claimed, 2.0).unwrap();
        assert_eq!(planned.intermediate, None);
        assert_eq!(planned.path.cost, small_world().shortest_path(0, 14).unwrap().cost);
    }

    #[test]
    fn budget_too_small_is_infeasible() {
        let mut w = small_world();
        let gp = GpModel::prior(Kernel::new(1.0, 1.5).unwrap(), w.locations().clone()).unwrap();
        let mut robot = RobotState::new(0, 0, gp.kernel(), false);
        robot.remaining_budget = 1.0;
        let area = w.areas()[0].clone();
        let err = plan_robot(&robot, &mut w, &gp, &area, 14, &BTreeSet::new(), 2.0).unwrap_err();
        assert!(matches!(err, MissionError::InfeasibleBudget { .. }));
    }

    #[test]
    fn tight_budget_falls_back_to_reachable_candidate() {
        let mut w = small_world();
        let gp = GpModel::prior(Kernel::new(1.0, 1.5).unwrap(), w.locations().clone()).unwrap();
        let mut robot = RobotState::new(0, 0, gp.kernel(), false);
        // direct route 0 -> 2 costs 2; only detours of total cost <= 4 fit
        robot.remaining_budget = 4.0;
        let area = w.areas()[0].clone();
        let planned = plan_robot(&robot, &mut w, &gp, &area, 2, &BTreeSet::new(), 2.0).unwrap();
        assert!(planned.path.cost <= 4.0);
        assert!(planned.intermediate.is_some());
    }

    #[test]
    fn second_robot_avoids_first_robots_path() {
        let mut w = small_world();
        let gp = GpModel::prior(Kernel::new(1.0, 1.0).unwrap(), w.locations().clone()).unwrap();
        let mut team = vec![
            RobotState::new(0, w.id(0, 0), gp.kernel(), false),
            RobotState::new(1, w.id(0, 3), gp.kernel(), false),
        ];
        let area = w.areas()[0].clone();
        let meeting = [w.id(2, 2), w.id(2, 3)];
        let plan = sequential_plan(&mut team, &mut w, &[gp.clone(), gp], &area, &meeting, 2.0, 40.0)
            .unwrap();
        let first: HashSet<usize> = plan.paths[0].path.nodes.iter().copied().collect();
        let q2 = plan.paths[1].intermediate.unwrap();
        assert!(!first.contains(&q2));
        assert_ne!(plan.paths[0].intermediate, plan.paths[1].intermediate);
        assert!(plan.total_cost() <= 40.0);
        assert!(team.iter().all(|r| r.remaining_budget >= 0.0));
    }
}
