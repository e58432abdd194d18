//! CSV and JSON emission.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which is
//! enough to round-trip every `f64`. Failed sweep points keep their row in
//! the CSV summary with the numeric result fields left empty; the JSON
//! document carries the full error payload.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{Format, Mode};
use crate::run::{Outcome, RunRecord};
use crate::CliError;

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "v_over_c",
    "gamma_lorentz",
    "decay_rate_si",
    "term_static",
    "term_motion_left",
    "term_recoil_right",
    "term_cross",
    "lamb_shift_si",
    "omega_cutoff",
    "quad_error",
    "wall_time_s",
];

pub const TRAJECTORY_COLUMNS: [&str; 5] = ["t_s", "re_C", "im_C", "survival", "markov_survival"];

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_error(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    match path {
        Some(p) => CliError::Io(format!("{}: {e}", p.display())),
        None => CliError::Io(format!("stdout: {e}")),
    }
}

fn summary_row(r: &RunRecord) -> Vec<String> {
    let mut row = vec![float(r.v_over_c), float(r.gamma_lorentz)];
    match &r.outcome {
        Outcome::Emission(e) => {
            row.push(float(e.decay_rate_si));
            row.extend(e.terms_si.iter().map(|&x| float(x)));
            row.push(e.lamb_shift_si.map(float).unwrap_or_default());
            row.push(float(e.omega_cutoff_si));
            row.push(float(e.quad_error));
        }
        _ => row.extend(std::iter::repeat_n(String::new(), 8)),
    }
    row.push(float(r.wall_time_s));
    row
}

pub fn write_summary_csv<W: Write>(records: &[RunRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in records {
        w.write_record(summary_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Trajectory of one record; records without a trajectory write the
/// header only.
pub fn write_trajectory_csv<W: Write>(record: &RunRecord, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    if let Outcome::Dynamics(d) = &record.outcome {
        let t = &d.trajectory;
        for i in 0..t.t_s.len() {
            w.write_record(
                [
                    t.t_s[i],
                    t.re_c[i],
                    t.im_c[i],
                    t.survival[i],
                    t.markov_survival[i],
                ]
                .map(float),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(records: &[RunRecord], mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, records)?;
    writeln!(out)
}

/// `run.csv` → `run.3.csv` for the trajectory of sweep point 3.
pub fn indexed_path(path: &Path, index: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{index}"),
    };
    path.with_file_name(name)
}

fn with_output<F>(path: Option<&Path>, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), String>,
{
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| io_error(Some(p), e))?;
            let mut w = BufWriter::new(file);
            f(&mut w).map_err(|e| io_error(Some(p), e))?;
            w.flush().map_err(|e| io_error(Some(p), e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).map_err(|e| io_error(None, e))
        }
    }
}

/// Writes the records: a summary CSV for decay and shift runs, one
/// trajectory CSV per point for dynamics runs (suffixed with the point
/// index when the sweep has several), or a single JSON array.
pub fn emit(
    records: &[RunRecord],
    mode: Mode,
    format: Format,
    path: Option<&Path>,
) -> Result<(), CliError> {
    if records.is_empty() {
        return Err(CliError::Validation("nothing to write: no records".into()));
    }
    match (format, mode) {
        (Format::Json, _) => {
            with_output(path, |w| write_json(records, w).map_err(|e| e.to_string()))
        }
        (Format::Csv, Mode::Decay | Mode::Shift) => with_output(path, |w| {
            write_summary_csv(records, w).map_err(|e| e.to_string())
        }),
        (Format::Csv, Mode::Dynamics) => {
            for r in records {
                let target = match path {
                    Some(p) if records.len() > 1 => Some(indexed_path(p, r.index)),
                    Some(p) => Some(p.to_path_buf()),
                    None => None,
                };
                with_output(target.as_deref(), |w| {
                    write_trajectory_csv(r, w).map_err(|e| e.to_string())
                })?;
            }
            Ok(())
        }
    }
}
