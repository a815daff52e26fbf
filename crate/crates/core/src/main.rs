use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mipp::harness::{
    emit_outputs, load_scenario, print_report, run_experiment_with_fields, run_trial_detailed,
    Format, HarnessError, ModeSelection, Scenario,
};
use mipp::resilience::{build_prob_graph, prob_resilience, synth_comm_field, PrMethod};
use mipp::seed::{self, tag};

#[derive(Parser)]
#[command(name = "mipp", version, about = "Resilient multi-robot informative path planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Wmsr,
    Linear,
    Both,
}

impl From<ModeArg> for ModeSelection {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Wmsr => ModeSelection::Wmsr,
            ModeArg::Linear => ModeSelection::Linear,
            ModeArg::Both => ModeSelection::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of a scenario and write the report tables.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Override the scenario's trial count.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run a single trial and print its record as JSON.
    Trial {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Also write ground truth and learned grids here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability of resilience for robots placed at given locations.
    Presilience {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated location ids.
        #[arg(long, value_delimiter = ',', required = true)]
        positions: Vec<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        s: Option<usize>,
        /// Use exact enumeration instead of the scenario's method.
        #[arg(long)]
        exact: bool,
        /// Trial whose communication field is used (ignored when the scenario fixes `comm_seed`).
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Check a scenario file and print its warnings.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<Scenario, HarnessError> {
    let mut s = load_scenario(path)?;
    if let Ok(text) = std::env::var("MIPP_SEED") {
        s.master_seed = text
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("MIPP_SEED: `{text}` is not an unsigned integer")))?;
    }
    for w in s.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            workers,
            format,
            trials,
            mode,
        } => {
            let mut s = load(&scenario)?;
            if let Some(t) = trials {
                s.trials = t;
            }
            if let Some(m) = mode {
                s.consensus.mode = m.into();
            }
            s.validate()?;
            let (report, fields) = run_experiment_with_fields(&s, workers)?;
            let format = match format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            };
            emit_outputs(&report, &fields, format, &out)?;
            print_report(&report, std::io::stdout()).map_err(|e| HarnessError::Io(e.to_string()))?;
            if report.valid == 0 {
                return Err(HarnessError::Infeasible("every trial was infeasible".into()));
            }
            Ok(())
        }
        Command::Trial {
            scenario,
            index,
            mode,
            out,
        } => {
            let s = load(&scenario)?;
            let modes = mode.map(Into::into).unwrap_or(s.consensus.mode);
            let (record, dump) = run_trial_detailed(&s, index, modes, out.is_some());
            println!("{}", serde_json::to_string_pretty(&record).expect("records serialize"));
            if let (Some(dir), Some(dump)) = (out, dump) {
                let report = mipp::harness::aggregate(&s, vec![record.clone()]);
                emit_outputs(&report, &[dump], Format::Json, &dir)?;
            }
            match record.error {
                Some(e) => Err(HarnessError::Infeasible(e)),
                None => Ok(()),
            }
        }
        Command::Presilience {
            scenario,
            positions,
            r,
            s: s_arg,
            exact,
            trial,
        } => {
            let sc = load(&scenario)?;
            let world = sc.world()?;
            let trial_seed = seed::derive_seed(sc.master_seed, &[trial as u64]);
            let field_seed = sc
                .comm_seed
                .unwrap_or_else(|| seed::derive_seed(trial_seed, &[tag::COMM_FIELD]));
            let field = synth_comm_field(&world, &sc.comm, field_seed)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let (dr, ds) = sc.robustness();
            let (r, s) = (r.unwrap_or(dr), s_arg.unwrap_or(ds));
            let method = if exact { PrMethod::Exact } else { sc.resilience.method };
            let pg = build_prob_graph(&field, &positions).map_err(|e| HarnessError::Config(e.to_string()))?;
            let mut rng = seed::stream(trial_seed, &[tag::COMM_EVAL]);
            let est = prob_resilience(&pg, r, s, method, &mut rng)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            println!(
                "{}",
                serde_json::json!({
                    "positions": positions,
                    "r": r,
                    "s": s,
                    "probability": est.probability,
                    "std_error": est.std_error,
                })
            );
            Ok(())
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            let (r, rs) = s.robustness();
            println!(
                "ok: {}x{} grid, {} areas x {} subareas, n={} n_a={} F={} (r,s)=({r},{rs}), {} trials",
                s.grid.width, s.grid.height, s.grid.m_areas, s.grid.f_subareas, s.n, s.n_a, s.f_total, s.trials
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
