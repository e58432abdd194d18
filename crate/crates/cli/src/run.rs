//! Sweep execution: one [`RunRecord`] per sweep point.

use std::time::Instant;

use rayon::prelude::*;
use rqed_core::dynamics::{build_memory_kernel, evolve_amplitude, DynamicsOptions, TauGrid};
use rqed_core::emission::{decay_rate, emission, EmissionResult};
use rqed_core::tensor::SHELL_NORMALIZATION;
use rqed_core::units::ConversionFactors;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, Scenario, ScenarioConfig, SweepField};
use crate::CliError;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest number of trajectory rows written per point; longer
/// trajectories are decimated with a fixed stride, always keeping the
/// final sample.
pub const MAX_TRAJECTORY_ROWS: usize = 2001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub field: SweepField,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub sweep: Option<SweepPoint>,
    pub v_over_c: f64,
    pub gamma_lorentz: f64,
    pub config: ScenarioConfig,
    pub conversion: Option<ConversionFactors>,
    pub outcome: Outcome,
    /// Zero unless timing was requested.
    pub wall_time_s: f64,
    pub library_version: String,
    /// Normalization constant of the vacuum shell weight in force.
    pub shell_normalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Emission(EmissionRecord),
    Dynamics(DynamicsRecord),
    Failed(Failure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    /// Library result in scaled units.
    pub result: EmissionResult,
    /// Γ in 1/s.
    pub decay_rate_si: f64,
    /// Static, motion-left, recoil-right and cross contributions, 1/s.
    pub terms_si: [f64; 4],
    /// δω in rad/s, when computed.
    pub lamb_shift_si: Option<f64>,
    pub omega_cutoff_si: f64,
    /// Relative quadrature error estimate of Γ.
    pub quad_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub markov_rate_si: f64,
    pub markov_shift_si: f64,
    pub kernel_step_s: f64,
    pub kernel_samples: usize,
    pub mode_count: usize,
    pub warnings: Vec<String>,
    pub trajectory: TrajectorySi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySi {
    pub t_s: Vec<f64>,
    pub re_c: Vec<f64>,
    pub im_c: Vec<f64>,
    pub survival: Vec<f64>,
    pub markov_survival: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub exit_code: i32,
    pub message: String,
}

impl RunRecord {
    pub fn failure(&self) -> Option<&Failure> {
        match &self.outcome {
            Outcome::Failed(f) => Some(f),
            _ => None,
        }
    }
}

/// Evaluates every sweep point concurrently; records come back in sweep
/// order and a failing point does not stop the others.
pub fn run_sweep(config: &ScenarioConfig) -> Result<Vec<RunRecord>, CliError> {
    config.validate()?;
    let points: Vec<Option<(SweepField, f64)>> = match config.sweep()? {
        Some(s) => s.points().into_iter().map(|v| Some((s.field, v))).collect(),
        None => vec![None],
    };
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_point(config, i, *p))
        .collect())
}

fn run_point(config: &ScenarioConfig, index: usize, point: Option<(SweepField, f64)>) -> RunRecord {
    let start = Instant::now();
    let mut record = RunRecord {
        index,
        sweep: point.map(|(field, value)| SweepPoint { field, value }),
        v_over_c: f64::NAN,
        gamma_lorentz: f64::NAN,
        config: config.clone(),
        conversion: None,
        outcome: Outcome::Failed(Failure {
            exit_code: 1,
            message: String::new(),
        }),
        wall_time_s: 0.0,
        library_version: LIBRARY_VERSION.into(),
        shell_normalization: SHELL_NORMALIZATION,
    };
    let outcome = config.resolve(point).and_then(|s| {
        record.v_over_c = s.atom.velocity.norm();
        record.gamma_lorentz = s.atom.gamma()?;
        record.conversion = Some(s.scale.factors());
        match config.run.mode {
            Mode::Decay | Mode::Shift => emission_point(config, &s),
            Mode::Dynamics => dynamics_point(config, &s),
        }
    });
    record.outcome = outcome.unwrap_or_else(|e| {
        Outcome::Failed(Failure {
            exit_code: e.exit_code(),
            message: e.to_string(),
        })
    });
    if record.v_over_c.is_nan() {
        // resolution failed before the atom existed
        record.v_over_c = 0.0;
        record.gamma_lorentz = 1.0;
    }
    if config.run.timing {
        record.wall_time_s = start.elapsed().as_secs_f64();
    }
    record
}

fn emission_point(config: &ScenarioConfig, s: &Scenario) -> Result<Outcome, CliError> {
    let result = match config.run.mode {
        Mode::Shift => emission(&s.atom, &s.source, &s.quadrature, s.options)?,
        _ => decay_rate(&s.atom, &s.source, &s.quadrature, s.options)?,
    };
    let si = |x: f64| s.scale.frequency_to_si(x);
    let t = result.gamma_terms.as_array();
    Ok(Outcome::Emission(EmissionRecord {
        decay_rate_si: si(result.gamma_total),
        terms_si: [si(t[0]), si(t[1]), si(t[2]), si(t[3])],
        lamb_shift_si: result.lamb_shift.map(si),
        omega_cutoff_si: si(result.omega_cutoff),
        quad_error: result.quadrature_error_estimate,
        result,
    }))
}

fn dynamics_point(config: &ScenarioConfig, s: &Scenario) -> Result<Outcome, CliError> {
    let dy = &config.dynamics;
    let step = dy.step_fraction * TauGrid::max_step(s.quadrature.omega_cutoff);
    let horizon = dy.memory_horizon_cycles * 2.0 * std::f64::consts::PI;
    let grid = TauGrid::with_horizon(step, horizon)?;
    let options = DynamicsOptions {
        emission: s.options,
        markov_phase: dy.markov_phase,
    };
    let kernel = build_memory_kernel(&s.atom, &s.source, &grid, &s.quadrature, options)?;
    if !(kernel.markov_rate > 0.0) {
        return Err(CliError::Validation(format!(
            "dynamics: Markov rate {} is not positive; no lifetime to scale t_end",
            kernel.markov_rate
        )));
    }
    let traj = evolve_amplitude(&kernel, dy.t_end_lifetimes / kernel.markov_rate, step)?;
    let last = traj.times.len() - 1;
    let stride = last.div_ceil(MAX_TRAJECTORY_ROWS - 1).max(1);
    let survival = traj.survival();
    let markov = traj.markov_survival();
    let keep: Vec<usize> = (0..last)
        .step_by(stride)
        .chain(std::iter::once(last))
        .collect();
    let t = |x: f64| s.scale.time_to_si(x);
    Ok(Outcome::Dynamics(DynamicsRecord {
        markov_rate_si: s.scale.frequency_to_si(kernel.markov_rate),
        markov_shift_si: s.scale.frequency_to_si(kernel.markov_shift),
        kernel_step_s: t(kernel.step),
        kernel_samples: kernel.samples.len(),
        mode_count: kernel.mode_count,
        warnings: kernel.warnings.clone(),
        trajectory: TrajectorySi {
            t_s: keep.iter().map(|&i| t(traj.times[i])).collect(),
            re_c: keep.iter().map(|&i| traj.amplitude[i].re).collect(),
            im_c: keep.iter().map(|&i| traj.amplitude[i].im).collect(),
            survival: keep.iter().map(|&i| survival[i]).collect(),
            markov_survival: keep.iter().map(|&i| markov[i]).collect(),
        },
    }))
}
