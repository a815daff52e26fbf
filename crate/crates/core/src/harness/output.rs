use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldDump, HarnessError, Report, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

pub const TABLE1_COLUMNS: [&str; 11] = [
    "n", "n_a", "f_total", "variant", "trials", "err_sk", "err_sk_se", "err_lk", "err_lk_se",
    "err_y", "err_y_se",
];

pub const TABLE2_COLUMNS: [&str; 9] = [
    "n", "r", "s", "subarea", "trials", "p_r", "p_r_se", "rounds", "rounds_se",
];

pub const TRIAL_COLUMNS: [&str; 19] = [
    "trial", "seed", "valid", "error", "true_signal", "true_length_scale", "compromised",
    "wmsr_err_sk", "wmsr_err_lk", "wmsr_err_y", "wmsr_consensus_rounds",
    "linear_err_sk", "linear_err_lk", "linear_err_y", "linear_consensus_rounds",
    "p_r_star", "p_r_rand", "rounds_star", "rounds_rand",
];

fn io(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io(path))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io(path))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn trial_row(r: &TrialRecord) -> Vec<String> {
    let mode = |m: Option<&super::ModeMetrics>| -> [String; 4] {
        [
            opt(m.map(|m| m.err_sk)),
            opt(m.map(|m| m.err_lk)),
            opt(m.map(|m| m.err_y)),
            opt(m.map(|m| m.consensus_rounds)),
        ]
    };
    let mut row = vec![
        r.trial.to_string(),
        r.seed.to_string(),
        r.valid.to_string(),
        r.error.clone().unwrap_or_default(),
        r.true_signal.to_string(),
        r.true_length_scale.to_string(),
        r.compromised
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    ];
    row.extend(mode(r.wmsr.as_ref()));
    row.extend(mode(r.linear.as_ref()));
    row.extend(
        [r.p_r_star, r.p_r_rand, r.rounds_star, r.rounds_rand]
            .iter()
            .map(|x| x.to_string()),
    );
    row
}

/// Writes a grid as `height` lines of `width` comma-separated values.
pub fn write_matrix(path: &Path, values: &[f64], width: usize) -> Result<(), HarnessError> {
    let mut out = String::with_capacity(values.len() * 20);
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io(path))
}

/// Writes tables, per-trial records, a summary and field grids under `out`.
pub fn emit_outputs(
    report: &Report,
    fields: &[FieldDump],
    format: Format,
    out: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io(out))?;
    match format {
        Format::Csv => {
            write_csv(&out.join("table1.csv"), &report.table1, &TABLE1_COLUMNS)?;
            write_csv(&out.join("table2.csv"), &report.table2, &TABLE2_COLUMNS)?;
            let path = out.join("trials.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::Io(e.to_string()))?;
            let csv_err = |e: csv::Error| HarnessError::Io(format!("{}: {e}", path.display()));
            w.write_record(TRIAL_COLUMNS).map_err(csv_err)?;
            for r in &report.records {
                w.write_record(trial_row(r)).map_err(csv_err)?;
            }
            w.flush().map_err(io(&path))?;
        }
        Format::Json => {
            write_json(&out.join("table1.json"), &report.table1)?;
            write_json(&out.join("table2.json"), &report.table2)?;
            write_json(&out.join("trials.json"), &report.records)?;
        }
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        trials: usize,
        valid: usize,
        invalid: usize,
        unreliable: bool,
        warnings: &'a [String],
        comm_model: &'a str,
        paired: &'a super::Paired,
    }
    write_json(
        &out.join("summary.json"),
        &Summary {
            trials: report.trials,
            valid: report.valid,
            invalid: report.invalid,
            unreliable: report.unreliable,
            warnings: &report.warnings,
            comm_model: &report.comm_model,
            paired: &report.paired,
        },
    )?;

    if !fields.is_empty() {
        let dir = out.join("fields");
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        for dump in fields {
            let stem = format!("trial_{:04}", dump.trial);
            write_matrix(&dir.join(format!("{stem}_truth.csv")), &dump.truth, dump.width)?;
            for (mode, values) in &dump.learned {
                write_matrix(
                    &dir.join(format!("{stem}_{}.csv", mode.as_str())),
                    values,
                    dump.width,
                )?;
            }
        }
    }
    Ok(())
}

/// Prints a compact human-readable summary.
pub fn print_report(report: &Report, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "trials {} (valid {}, invalid {}){}", report.trials, report.valid, report.invalid,
        if report.unreliable { "  UNRELIABLE" } else { "" })?;
    for warning in &report.warnings {
        writeln!(w, "warning: {warning}")?;
    }
    writeln!(w, "{:<14} {:>16} {:>16} {:>16}", "variant", "err(s_k)", "err(l_k)", "err(y)")?;
    for row in &report.table1 {
        writeln!(
            w,
            "{:<14} {:>8.4} ±{:<7.4} {:>8.4} ±{:<7.4} {:>8.4} ±{:<7.4}",
            row.variant, row.err_sk, row.err_sk_se, row.err_lk, row.err_lk_se, row.err_y, row.err_y_se
        )?;
    }
    writeln!(w, "{:<14} {:>16} {:>16}", "subarea", "P_r", "rounds")?;
    for row in &report.table2 {
        writeln!(
            w,
            "{:<14} {:>8.4} ±{:<7.4} {:>8.4} ±{:<7.4}",
            row.subarea, row.p_r, row.p_r_se, row.rounds, row.rounds_se
        )?;
    }
    Ok(())
}
