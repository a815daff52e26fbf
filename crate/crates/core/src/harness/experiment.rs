use rand::Rng;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HarnessError, ModeSelection, Scenario};
use crate::consensus::{count_retransmissions, ConsensusMode};
use crate::gp::{sample_environment, EnvField, Kernel};
use crate::mission::{offline_phase, run_mission, MissionOutcome, MissionSeeds};
use crate::resilience::{build_prob_graph, prob_resilience, random_placement, synth_comm_field};
use crate::seed::{self, tag};

/// Learning errors of one mission run, averaged over well-behaved robots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub err_sk: f64,
    pub err_lk: f64,
    pub err_y: f64,
    /// Mean consensus rounds per meeting.
    pub consensus_rounds: f64,
}

/// Everything measured in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub valid: bool,
    pub error: Option<String>,
    pub true_signal: f64,
    pub true_length_scale: f64,
    pub compromised: Vec<usize>,
    pub wmsr: Option<ModeMetrics>,
    pub linear: Option<ModeMetrics>,
    /// `P_r` at the chosen meeting placements, averaged over meetings.
    pub p_r_star: f64,
    /// `P_r` at a random placement in a random subarea of the same areas.
    pub p_r_rand: f64,
    pub rounds_star: f64,
    pub rounds_rand: f64,
}

impl TrialRecord {
    pub fn mode(&self, mode: ConsensusMode) -> Option<&ModeMetrics> {
        match mode {
            ConsensusMode::Wmsr => self.wmsr.as_ref(),
            ConsensusMode::Linear => self.linear.as_ref(),
        }
    }
}

/// Row-major ground truth and learned posterior means of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub trial: usize,
    pub width: usize,
    pub height: usize,
    pub truth: Vec<f64>,
    /// Posterior mean of the first well-behaved robot, per mode run.
    pub learned: Vec<(ConsensusMode, Vec<f64>)>,
}

fn mode_metrics(outcome: &MissionOutcome, env: &EnvField) -> Result<ModeMetrics, HarnessError> {
    let truth = env.generator_kernel;
    let honest: Vec<_> = outcome.robots.iter().filter(|r| !r.compromised).collect();
    let k = honest.len().max(1) as f64;
    let mut m = ModeMetrics {
        err_sk: 0.0,
        err_lk: 0.0,
        err_y: 0.0,
        consensus_rounds: 0.0,
    };
    for robot in &honest {
        m.err_sk += (robot.kernel.signal - truth.signal).abs() / k;
        m.err_lk += (robot.kernel.length_scale - truth.length_scale).abs() / k;
        let mean = robot.model.mean_field().map_err(|e| HarnessError::Infeasible(e.to_string()))?;
        let err: f64 = mean.iter().zip(&env.values).map(|(a, b)| (a - b).abs()).sum();
        m.err_y += err / env.values.len() as f64 / k;
    }
    m.consensus_rounds =
        outcome.logs.iter().map(|l| l.rounds as f64).sum::<f64>() / outcome.logs.len().max(1) as f64;
    Ok(m)
}

pub fn run_trial(s: &Scenario, trial: usize) -> TrialRecord {
    run_trial_detailed(s, trial, s.consensus.mode, false).0
}

/// Runs one trial. Missions for every selected mode share the environment,
/// evidence, attack draws, meeting plan and communication realizations.
pub fn run_trial_detailed(
    s: &Scenario,
    trial: usize,
    modes: ModeSelection,
    dump: bool,
) -> (TrialRecord, Option<FieldDump>) {
    let trial_seed = seed::derive_seed(s.master_seed, &[trial as u64]);
    let mut krng = seed::stream(trial_seed, &[tag::KERNEL]);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, [lo, hi]: [f64; 2]| {
        if lo < hi {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };
    let true_kernel = Kernel {
        signal: draw(&mut krng, s.kernel.true_signal),
        length_scale: draw(&mut krng, s.kernel.true_length_scale),
    };
    let mut crng = seed::stream(trial_seed, &[tag::COMPROMISED]);
    let mut compromised = index::sample(&mut crng, s.n, s.n_a).into_vec();
    compromised.sort_unstable();

    let mut record = TrialRecord {
        trial,
        seed: trial_seed,
        valid: false,
        error: None,
        true_signal: true_kernel.signal,
        true_length_scale: true_kernel.length_scale,
        compromised: compromised.clone(),
        wmsr: None,
        linear: None,
        p_r_star: 0.0,
        p_r_rand: 0.0,
        rounds_star: 0.0,
        rounds_rand: 0.0,
    };
    match trial_body(s, trial, trial_seed, true_kernel, compromised, modes, dump, &mut record) {
        Ok(fields) => {
            record.valid = true;
            (record, fields)
        }
        Err(e) => {
            record.error = Some(e.to_string());
            record.wmsr = None;
            record.linear = None;
            (record, None)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn trial_body(
    s: &Scenario,
    trial: usize,
    trial_seed: u64,
    true_kernel: Kernel,
    compromised: Vec<usize>,
    modes: ModeSelection,
    dump: bool,
    record: &mut TrialRecord,
) -> Result<Option<FieldDump>, HarnessError> {
    let sub = |t: u64| seed::derive_seed(trial_seed, &[t]);
    let world = s.world()?;
    let env = sample_environment(true_kernel, world.locations(), sub(tag::ENVIRONMENT))
        .map_err(|e| HarnessError::Infeasible(e.to_string()))?;
    let field_seed = s.comm_seed.unwrap_or_else(|| sub(tag::COMM_FIELD));
    let field = synth_comm_field(&world, &s.comm, field_seed).map_err(|e| HarnessError::Config(e.to_string()))?;
    let cfg = s.mission_config(compromised);
    let infeasible = |e: crate::mission::MissionError| HarnessError::Infeasible(e.to_string());

    let mut mrng = seed::stream(trial_seed, &[tag::MEETINGS]);
    let offline = offline_phase(&world, &field, &cfg, &mut mrng).map_err(infeasible)?;

    // communication quality at the chosen vs random meeting spots
    let (r, rs) = cfg.robustness;
    let meetings = offline.meetings.len().max(1) as f64;
    let mut prng = seed::stream(trial_seed, &[tag::COMM_EVAL]);
    for (area, choice) in offline.meetings.iter().enumerate() {
        let subs: Vec<&Vec<usize>> = world.subareas()[area].iter().filter(|sb| sb.len() >= s.n).collect();
        let pick = subs[prng.gen_range(0..subs.len())];
        let random = random_placement(pick, s.n, &mut prng);
        let eval_seed = prng.gen::<u64>();
        let cap = s.resilience.retransmission_cap;
        for (placement, p_acc, t_acc) in [
            (&choice.placement, &mut record.p_r_star, &mut record.rounds_star),
            (&random, &mut record.p_r_rand, &mut record.rounds_rand),
        ] {
            let pg = build_prob_graph(&field, placement).map_err(|e| HarnessError::Infeasible(e.to_string()))?;
            let mut rng = seed::stream(eval_seed, &[0]);
            let est = prob_resilience(&pg, r, rs, s.resilience.method, &mut rng)
                .map_err(|e| HarnessError::Infeasible(e.to_string()))?;
            let mut rng = seed::stream(eval_seed, &[1]);
            let rounds = count_retransmissions(&pg, r, rs, cap, &mut rng)
                .map_err(|e| HarnessError::Infeasible(e.to_string()))?;
            *p_acc += est.probability / meetings;
            *t_acc += rounds as f64 / meetings;
        }
    }

    let seeds = MissionSeeds {
        evidence: sub(tag::EVIDENCE),
        attack: sub(tag::ATTACK),
        consensus: sub(tag::CONSENSUS),
    };
    let mut learned = Vec::new();
    for &mode in modes.modes() {
        let outcome = run_mission(&world, &offline, &env, &field, &cfg, mode, seeds).map_err(infeasible)?;
        let metrics = mode_metrics(&outcome, &env)?;
        match mode {
            ConsensusMode::Wmsr => record.wmsr = Some(metrics),
            ConsensusMode::Linear => record.linear = Some(metrics),
        }
        if dump {
            if let Some(robot) = outcome.robots.iter().find(|r| !r.compromised) {
                let mean = robot
                    .model
                    .mean_field()
                    .map_err(|e| HarnessError::Infeasible(e.to_string()))?;
                learned.push((mode, mean));
            }
        }
    }
    Ok(dump.then(|| FieldDump {
        trial,
        width: world.width(),
        height: world.height(),
        truth: env.values.clone(),
        learned,
    }))
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            se: (var / n as f64).sqrt(),
        }
    }
}

/// Learning errors per consensus rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub n: usize,
    pub n_a: usize,
    pub f_total: usize,
    pub variant: String,
    pub trials: usize,
    pub err_sk: f64,
    pub err_sk_se: f64,
    pub err_lk: f64,
    pub err_lk_se: f64,
    pub err_y: f64,
    pub err_y_se: f64,
}

/// Communication quality at optimized vs random meeting subareas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub n: usize,
    pub r: usize,
    pub s: usize,
    pub subarea: String,
    pub trials: usize,
    pub p_r: f64,
    pub p_r_se: f64,
    pub rounds: f64,
    pub rounds_se: f64,
}

/// Paired differences between the two rules or the two subarea choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paired {
    /// `err_y(linear) - err_y(wmsr)`.
    pub err_y_gain: Option<Stat>,
    /// `P_r(sb*) - P_r(sb^r)`.
    pub p_r_gain: Stat,
    /// `rounds(sb^r) - rounds(sb*)`.
    pub rounds_gain: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub trials: usize,
    pub valid: usize,
    pub invalid: usize,
    /// More than a tenth of the trials were infeasible.
    pub unreliable: bool,
    pub warnings: Vec<String>,
    pub comm_model: String,
    pub table1: Vec<Table1Row>,
    pub table2: Vec<Table2Row>,
    pub paired: Paired,
    pub records: Vec<TrialRecord>,
}

pub fn aggregate(s: &Scenario, records: Vec<TrialRecord>) -> Report {
    let valid: Vec<&TrialRecord> = records.iter().filter(|r| r.valid).collect();
    let invalid = records.len() - valid.len();
    let col = |f: &dyn Fn(&TrialRecord) -> Option<f64>| -> Vec<f64> { valid.iter().filter_map(|r| f(r)).collect() };

    let mut table1 = Vec::new();
    for (mode, variant) in [(ConsensusMode::Wmsr, "resilient"), (ConsensusMode::Linear, "non_resilient")] {
        let sk = col(&|r| r.mode(mode).map(|m| m.err_sk));
        if sk.is_empty() {
            continue;
        }
        let (sk, lk, y) = (
            Stat::of(&sk),
            Stat::of(&col(&|r| r.mode(mode).map(|m| m.err_lk))),
            Stat::of(&col(&|r| r.mode(mode).map(|m| m.err_y))),
        );
        table1.push(Table1Row {
            n: s.n,
            n_a: s.n_a,
            f_total: s.f_total,
            variant: variant.into(),
            trials: valid.len(),
            err_sk: sk.mean,
            err_sk_se: sk.se,
            err_lk: lk.mean,
            err_lk_se: lk.se,
            err_y: y.mean,
            err_y_se: y.se,
        });
    }

    let (r, rs) = s.robustness();
    let mut table2 = Vec::new();
    for (name, p, t) in [
        ("optimized", col(&|r| Some(r.p_r_star)), col(&|r| Some(r.rounds_star))),
        ("random", col(&|r| Some(r.p_r_rand)), col(&|r| Some(r.rounds_rand))),
    ] {
        let (p, t) = (Stat::of(&p), Stat::of(&t));
        table2.push(Table2Row {
            n: s.n,
            r,
            s: rs,
            subarea: name.into(),
            trials: valid.len(),
            p_r: p.mean,
            p_r_se: p.se,
            rounds: t.mean,
            rounds_se: t.se,
        });
    }

    let err_y_diff = col(&|r| Some(r.linear?.err_y - r.wmsr?.err_y));
    let paired = Paired {
        err_y_gain: (!err_y_diff.is_empty()).then(|| Stat::of(&err_y_diff)),
        p_r_gain: Stat::of(&col(&|r| Some(r.p_r_star - r.p_r_rand))),
        rounds_gain: Stat::of(&col(&|r| Some(r.rounds_rand - r.rounds_star))),
    };

    let mut warnings = s.warnings();
    warnings.push("communication field is synthetic (distance decay with interference zones)".into());
    Report {
        trials: records.len(),
        valid: valid.len(),
        invalid,
        unreliable: invalid * 10 > records.len(),
        warnings,
        comm_model: s.comm.id().into(),
        table1,
        table2,
        paired,
        records,
    }
}

/// Runs every trial on a pool of `workers` threads and aggregates in trial order.
pub fn run_experiment(s: &Scenario, workers: usize) -> Result<Report, HarnessError> {
    Ok(run_experiment_with_fields(s, workers)?.0)
}

pub fn run_experiment_with_fields(
    s: &Scenario,
    workers: usize,
) -> Result<(Report, Vec<FieldDump>), HarnessError> {
    if workers == 0 {
        return Err(HarnessError::Config("workers must be at least 1".into()));
    }
    s.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<(TrialRecord, Option<FieldDump>)> = pool.install(|| {
        (0..s.trials)
            .into_par_iter()
            .map(|t| run_trial_detailed(s, t, s.consensus.mode, t < s.output.field_dumps))
            .collect()
    });
    let (records, dumps): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((aggregate(s, records), dumps.into_iter().flatten().collect()))
}
