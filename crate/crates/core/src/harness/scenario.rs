use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::consensus::ConsensusMode;
use crate::gp::{Bounds, FitOptions, Kernel, DEFAULT_NUGGET};
use crate::mission::{AttackSpec, Budget, MissionConfig};
use crate::resilience::{CommModel, PrMethod, ROBUSTNESS_NODE_CAP};
use crate::world::GridWorld;

/// One experiment, as read from a TOML scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Team size.
    pub n: usize,
    /// Number of compromised robots per trial.
    pub n_a: usize,
    /// Upper bound on compromised robots assumed by W-MSR.
    pub f_total: usize,
    /// `(r, s)` used for meeting selection and retransmission counts; `(F+1, F+1)` if absent.
    #[serde(default)]
    pub robustness: Option<[usize; 2]>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_evidence")]
    pub initial_evidence_count: usize,
    #[serde(default = "default_alpha")]
    pub alpha_inflation: f64,
    /// Fixed team budget per area. When absent, `gamma_factor` times the
    /// team's direct-route cost is used.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_gamma_factor")]
    pub gamma_factor: f64,
    /// Objective weights of the joint formulation. The decoupled planner ignores them.
    #[serde(default)]
    pub objective_weights: Option<[f64; 2]>,
    /// Fix the communication field across trials.
    #[serde(default)]
    pub comm_seed: Option<u64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub comm: CommModel,
    #[serde(default)]
    pub attack: AttackBounds,
    #[serde(default)]
    pub consensus: ConsensusSpec,
    #[serde(default)]
    pub resilience: ResilienceSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "one")]
    pub base_cost: f64,
    pub m_areas: usize,
    pub f_subareas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub bounds: Bounds,
    /// Kernel every robot starts from.
    #[serde(default = "default_init")]
    pub init: Kernel,
    /// Ground-truth `s` is drawn uniformly from this range each trial.
    #[serde(default = "default_true_signal")]
    pub true_signal: [f64; 2],
    #[serde(default = "default_true_length")]
    pub true_length_scale: [f64; 2],
    #[serde(default = "default_starts")]
    pub fit_starts: usize,
    #[serde(default = "default_fit_iterations")]
    pub fit_max_iterations: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            bounds: Bounds::default(),
            init: default_init(),
            true_signal: default_true_signal(),
            true_length_scale: default_true_length(),
            fit_starts: default_starts(),
            fit_max_iterations: default_fit_iterations(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackBounds {
    pub epsilon: [f64; 2],
}

impl Default for AttackBounds {
    fn default() -> Self {
        Self {
            epsilon: [-8.0, 8.0],
        }
    }
}

/// Which consensus rules a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Wmsr,
    Linear,
    #[default]
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> &'static [ConsensusMode] {
        match self {
            Self::Wmsr => &[ConsensusMode::Wmsr],
            Self::Linear => &[ConsensusMode::Linear],
            Self::Both => &[ConsensusMode::Wmsr, ConsensusMode::Linear],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSpec {
    #[serde(default)]
    pub mode: ModeSelection,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
}

impl Default for ConsensusSpec {
    fn default() -> Self {
        Self {
            mode: ModeSelection::Both,
            eps: default_eps(),
            max_rounds: default_max_rounds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResilienceSpec {
    /// Random placements scored per subarea.
    #[serde(default = "default_placements")]
    pub placements: usize,
    #[serde(default = "default_method")]
    pub method: PrMethod,
    /// Cap on counted retransmission rounds.
    #[serde(default = "default_retransmission_cap")]
    pub retransmission_cap: usize,
}

impl Default for ResilienceSpec {
    fn default() -> Self {
        Self {
            placements: default_placements(),
            method: default_method(),
            retransmission_cap: default_retransmission_cap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Ground truth vs learned grids are written for the first `field_dumps` trials.
    #[serde(default = "default_field_dumps")]
    pub field_dumps: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            field_dumps: default_field_dumps(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_trials() -> usize {
    100
}
fn default_evidence() -> usize {
    5
}
fn default_alpha() -> f64 {
    2.0
}
fn default_gamma_factor() -> f64 {
    3.0
}
fn default_init() -> Kernel {
    Kernel {
        signal: 1.0,
        length_scale: 2.0,
    }
}
fn default_true_signal() -> [f64; 2] {
    [1.0, 3.0]
}
fn default_true_length() -> [f64; 2] {
    [2.0, 5.0]
}
fn default_starts() -> usize {
    FitOptions::default().starts
}
fn default_fit_iterations() -> usize {
    FitOptions::default().max_iterations
}
fn default_eps() -> f64 {
    1e-4
}
fn default_max_rounds() -> usize {
    100
}
fn default_placements() -> usize {
    10
}
fn default_method() -> PrMethod {
    PrMethod::MonteCarlo { samples: 2000 }
}
fn default_retransmission_cap() -> usize {
    50
}
fn default_field_dumps() -> usize {
    3
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn robustness(&self) -> (usize, usize) {
        match self.robustness {
            Some([r, s]) => (r, s),
            None => (self.f_total + 1, self.f_total + 1),
        }
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_a > self.f_total {
            out.push(format!(
                "outside attack model: n_a = {} exceeds f_total = {}",
                self.n_a, self.f_total
            ));
        }
        if self.objective_weights.is_some() {
            out.push("objective_weights are recorded but unused by the decoupled planner".into());
        }
        out
    }

    /// A partitioned world with starts in the first column and goals in the last.
    pub fn world(&self) -> Result<GridWorld, HarnessError> {
        let g = &self.grid;
        let grid_err = |e: crate::world::WorldError| HarnessError::Config(format!("grid: {e}"));
        let mut world = GridWorld::new(g.width, g.height, g.base_cost).map_err(grid_err)?;
        world.partition(g.m_areas, g.f_subareas).map_err(grid_err)?;
        let n = self.n;
        world.starts = (0..n)
            .map(|k| world.id(0, (2 * k + 1) * g.height / (2 * n)))
            .collect();
        let first = (g.height - n) / 2;
        world.goals = (0..n).map(|k| world.id(g.width - 1, first + k)).collect();
        Ok(world)
    }

    pub fn mission_config(&self, compromised: Vec<usize>) -> MissionConfig {
        MissionConfig {
            n: self.n,
            f: self.f_total,
            robustness: self.robustness(),
            attack: AttackSpec {
                compromised,
                epsilon: self.attack.epsilon,
            },
            alpha: self.alpha_inflation,
            budget: match self.gamma {
                Some(g) => Budget::Fixed(g),
                None => Budget::Factor(self.gamma_factor),
            },
            prior_kernel: self.kernel.init,
            bounds: self.kernel.bounds,
            fit: FitOptions {
                starts: self.kernel.fit_starts,
                max_iterations: self.kernel.fit_max_iterations,
                nugget: DEFAULT_NUGGET,
                ..FitOptions::default()
            },
            initial_evidence: self.initial_evidence_count,
            placements: self.resilience.placements,
            pr_method: self.resilience.method,
            consensus_eps: self.consensus.eps,
            consensus_max_rounds: self.consensus.max_rounds,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |field: &str, msg: String| Err(HarnessError::Config(format!("{field}: {msg}")));
        if self.n == 0 || self.n > ROBUSTNESS_NODE_CAP {
            return fail("n", format!("must lie in 1..={ROBUSTNESS_NODE_CAP} (got {})", self.n));
        }
        if self.n_a > self.n {
            return fail("n_a", format!("{} exceeds the team size {}", self.n_a, self.n));
        }
        let (r, s) = self.robustness();
        if r == 0 || s == 0 || s > self.n {
            return fail("robustness", format!("({r}, {s}) needs r >= 1 and 1 <= s <= n"));
        }
        if self.trials == 0 {
            return fail("trials", "must be at least 1".into());
        }
        if !(self.alpha_inflation > 1.0 && self.alpha_inflation.is_finite()) {
            return fail("alpha_inflation", format!("must exceed 1 (got {})", self.alpha_inflation));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return fail("gamma", format!("must be positive (got {g})"));
            }
        }
        if !(self.gamma_factor >= 1.0 && self.gamma_factor.is_finite()) {
            return fail("gamma_factor", format!("must be at least 1 (got {})", self.gamma_factor));
        }
        if self.grid.height < self.n {
            return fail("grid.height", format!("{} rows cannot hold {} distinct starts", self.grid.height, self.n));
        }
        let k = &self.kernel;
        k.bounds.validate().map_err(|e| HarnessError::Config(format!("kernel.bounds: {e}")))?;
        k.init.validate().map_err(|e| HarnessError::Config(format!("kernel.init: {e}")))?;
        for (field, [lo, hi]) in [
            ("kernel.true_signal", k.true_signal),
            ("kernel.true_length_scale", k.true_length_scale),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return fail(field, format!("[{lo}, {hi}] must satisfy 0 < lo <= hi"));
            }
        }
        if k.fit_starts == 0 || k.fit_max_iterations == 0 {
            return fail("kernel.fit_starts", "fit needs at least one start and one iteration".into());
        }
        let [lo, hi] = self.attack.epsilon;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return fail("attack.epsilon", format!("[{lo}, {hi}] must satisfy lo <= hi"));
        }
        if !(self.consensus.eps > 0.0) || self.consensus.max_rounds == 0 {
            return fail("consensus", "eps must be positive and max_rounds at least 1".into());
        }
        let res = &self.resilience;
        if res.placements == 0 || res.retransmission_cap == 0 {
            return fail("resilience", "placements and retransmission_cap must be at least 1".into());
        }
        if res.method == (PrMethod::MonteCarlo { samples: 0 }) {
            return fail("resilience.method", "samples must be at least 1".into());
        }
        self.comm
            .validate()
            .map_err(|e| HarnessError::Config(format!("comm: {e}")))?;

        let world = self.world()?;
        for (i, subs) in world.subareas().iter().enumerate() {
            if subs.iter().all(|s| s.len() < self.n) {
                return Err(HarnessError::Infeasible(format!(
                    "area {i}: no subarea holds {} robots",
                    self.n
                )));
            }
        }
        Ok(())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    Scenario::from_toml(&text)
}
