//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[atom]`, `[medium]`,
//! `[quadrature]`, `[run]` and `[dynamics]`. Physical inputs are SI; the
//! quadrature block is in units of the transition frequency, like the
//! library it configures. Unknown keys are rejected everywhere.
//!
//! | key | default |
//! |-----|---------|
//! | `atom.velocity` | `[0, 0, 0]` m/s |
//! | `medium.kind` | `"vacuum"` |
//! | `medium.path` (vacuum) | `"shell"` |
//! | `medium.quadrature_loss` (vacuum, quadrature path) | `1e-6` |
//! | `quadrature.*` | `QuadratureSpec::default()` |
//! | `run.mode` | `"decay"` |
//! | `run.shift_mode` | `"zero"` |
//! | `run.exact_spinor` | `false` |
//! | `run.format` | `"csv"` |
//! | `run.timing` | `false` (wall time written as 0 for reproducible files) |
//! | `dynamics.t_end_lifetimes` | `5` |
//! | `dynamics.memory_horizon_cycles` | `50` |
//! | `dynamics.step_fraction` | `1` |
//! | `dynamics.markov_phase` | `"positive_shift"` |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rqed_core::dynamics::MarkovPhase;
use rqed_core::emission::{EmissionOptions, QuadratureSpec, ShiftMode, SpinorMode};
use rqed_core::kinematics::AtomState;
use rqed_core::material::{presets, DispersiveMedium, LorentzPole};
use rqed_core::tensor::GreenSource;
use rqed_core::units::{UnitScale, SPEED_OF_LIGHT};
use rqed_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub atom: AtomConfig,
    #[serde(default)]
    pub medium: MediumConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    /// Transition frequency ω_A, rad/s.
    pub transition_frequency: f64,
    /// Rest-frame transition dipole, C·m.
    pub dipole: [f64; 3],
    /// Mass, kg.
    pub mass: f64,
    /// Centre-of-mass velocity, m/s.
    #[serde(default)]
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacuumPath {
    /// Analytic collapse onto the light cone.
    #[default]
    Shell,
    /// Radial quadrature through a barely absorbing medium.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MediumConfig {
    Vacuum {
        #[serde(default)]
        path: VacuumPath,
        /// Strength of the weak pole at ω_A used by the quadrature path,
        /// in units of ω_A².
        #[serde(default = "default_quadrature_loss")]
        quadrature_loss: f64,
    },
    Bulk {
        /// Name of a shipped medium (in units of ω_A) instead of pole lists.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<String>,
        #[serde(default)]
        electric: Vec<PoleConfig>,
        #[serde(default)]
        magnetic: Vec<PoleConfig>,
    },
}

fn default_quadrature_loss() -> f64 {
    1e-6
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig::Vacuum {
            path: VacuumPath::Shell,
            quadrature_loss: default_quadrature_loss(),
        }
    }
}

/// Lorentz pole in SI: strength in rad²/s², resonance and damping in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleConfig {
    pub strength: f64,
    pub resonance: f64,
    pub damping: f64,
}

/// Mirror of [`QuadratureSpec`] with per-field defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub n_polar: usize,
    pub n_azimuthal: usize,
    pub radial_nodes: usize,
    pub k_max: f64,
    pub omega_cutoff: f64,
    pub pv_window: f64,
    pub radial_tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureSpec::default().into()
    }
}

impl From<QuadratureSpec> for QuadratureConfig {
    fn from(q: QuadratureSpec) -> Self {
        Self {
            n_polar: q.n_polar,
            n_azimuthal: q.n_azimuthal,
            radial_nodes: q.radial_nodes,
            k_max: q.k_max,
            omega_cutoff: q.omega_cutoff,
            pv_window: q.pv_window,
            radial_tolerance: q.radial_tolerance,
        }
    }
}

impl From<QuadratureConfig> for QuadratureSpec {
    fn from(q: QuadratureConfig) -> Self {
        Self {
            n_polar: q.n_polar,
            n_azimuthal: q.n_azimuthal,
            radial_nodes: q.radial_nodes,
            k_max: q.k_max,
            omega_cutoff: q.omega_cutoff,
            pv_window: q.pv_window,
            radial_tolerance: q.radial_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Decay,
    Shift,
    Dynamics,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?}; expected csv or json")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// `field=start:stop:step`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<String>,
    /// `zero`, `fixed:<rad/s>` or `self-consistent`.
    pub shift_mode: String,
    pub exact_spinor: bool,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Record wall-clock time per point. Off by default so that repeated
    /// runs produce identical files.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Decay,
            sweep: None,
            shift_mode: "zero".into(),
            exact_spinor: false,
            format: Format::Csv,
            out: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// End time in Markov lifetimes `1/Γ`.
    pub t_end_lifetimes: f64,
    /// Memory horizon of the kernel in optical cycles `2π/ω_A`.
    pub memory_horizon_cycles: f64,
    /// Time step as a fraction of the largest step the cut-off allows.
    pub step_fraction: f64,
    pub markov_phase: MarkovPhase,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            t_end_lifetimes: 5.0,
            memory_horizon_cycles: 50.0,
            step_fraction: 1.0,
            markov_phase: MarkovPhase::PositiveShift,
        }
    }
}

/// Level-shift mode as written on the command line, with the fixed value
/// in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftModeSi {
    Zero,
    Fixed(f64),
    SelfConsistent,
}

impl FromStr for ShiftModeSi {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(ShiftModeSi::Zero),
            "self-consistent" => Ok(ShiftModeSi::SelfConsistent),
            _ => match s.strip_prefix("fixed:") {
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(ShiftModeSi::Fixed)
                    .ok_or_else(|| format!("fixed shift {v:?} is not a finite number")),
                None => Err(format!(
                    "unknown shift mode {s:?}; expected zero, fixed:<rad/s> or self-consistent"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepField {
    VOverC,
    OmegaCutoff,
    KMax,
}

impl fmt::Display for SweepField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepField::VOverC => "v_over_c",
            SweepField::OmegaCutoff => "omega_cutoff",
            SweepField::KMax => "k_max",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub field: SweepField,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl FromStr for SweepSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (field, range) = s
            .split_once('=')
            .ok_or_else(|| format!("sweep {s:?} is not field=start:stop:step"))?;
        let field = match field.trim() {
            "v_over_c" => SweepField::VOverC,
            "omega_cutoff" => SweepField::OmegaCutoff,
            "k_max" => SweepField::KMax,
            other => {
                return Err(format!(
                    "unknown sweep field {other:?}; expected v_over_c, omega_cutoff or k_max"
                ))
            }
        };
        let parts: Vec<f64> = range
            .split(':')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("sweep bound {p:?}: {e}"))
            })
            .collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(format!("sweep range {range:?} needs start:stop:step"));
        };
        if !(start.is_finite() && stop.is_finite() && step > 0.0 && step.is_finite())
            || stop < start
        {
            return Err(format!(
                "sweep {s:?} needs finite start <= stop and step > 0"
            ));
        }
        Ok(Self {
            field,
            start,
            stop,
            step,
        })
    }
}

impl SweepSpec {
    /// Points `start + i·step` up to `stop`, with a relative slack of 10⁻⁹
    /// steps so that `0:0.9:0.1` includes 0.9.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// A fully resolved sweep point in scaled units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub atom: AtomState,
    pub scale: UnitScale,
    pub source: GreenSource,
    pub quadrature: QuadratureSpec,
    pub options: EmissionOptions,
}

fn validation(field: &str, message: impl fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {message}"))
}

fn positive(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(validation(
            field,
            format!("must be positive and finite, got {x}"),
        ))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn sweep(&self) -> Result<Option<SweepSpec>, CliError> {
        self.run
            .sweep
            .as_deref()
            .map(|s| s.parse().map_err(|e| validation("run.sweep", e)))
            .transpose()
    }

    pub fn shift_mode(&self) -> Result<ShiftModeSi, CliError> {
        self.run
            .shift_mode
            .parse()
            .map_err(|e| validation("run.shift_mode", e))
    }

    /// Checks every field; messages name the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        let a = &self.atom;
        positive("atom.transition_frequency", a.transition_frequency)?;
        positive("atom.mass", a.mass)?;
        let d = Vec3::from(a.dipole);
        if !(d.norm() > 0.0 && d.iter().all(|x| x.is_finite())) {
            return Err(validation("atom.dipole", "must be nonzero and finite"));
        }
        let beta = Vec3::from(a.velocity).norm() / SPEED_OF_LIGHT;
        if !(beta < 1.0) {
            return Err(validation(
                "atom.velocity",
                format!("|v|/c = {beta} must be below 1"),
            ));
        }
        self.medium_source(&UnitScale::new(a.transition_frequency))?;
        QuadratureSpec::from(self.quadrature)
            .validate()
            .map_err(|e| validation("quadrature", e))?;
        self.shift_mode()?;
        if let Some(sweep) = self.sweep()? {
            let points = sweep.points();
            let last = *points.last().expect("sweeps have at least one point");
            match sweep.field {
                SweepField::VOverC if !(sweep.start >= 0.0 && last < 1.0) => {
                    return Err(validation(
                        "run.sweep",
                        format!("v_over_c must stay in [0, 1), got up to {last}"),
                    ))
                }
                SweepField::OmegaCutoff | SweepField::KMax if !(sweep.start > 1.0) => {
                    return Err(validation(
                        "run.sweep",
                        format!("{} must stay above 1, got {}", sweep.field, sweep.start),
                    ))
                }
                _ => {}
            }
        }
        let dy = &self.dynamics;
        positive("dynamics.t_end_lifetimes", dy.t_end_lifetimes)?;
        positive("dynamics.memory_horizon_cycles", dy.memory_horizon_cycles)?;
        if !(dy.step_fraction > 0.0 && dy.step_fraction <= 1.0) {
            return Err(validation(
                "dynamics.step_fraction",
                format!("must lie in (0, 1], got {}", dy.step_fraction),
            ));
        }
        Ok(())
    }

    fn medium_source(&self, scale: &UnitScale) -> Result<GreenSource, CliError> {
        match &self.medium {
            MediumConfig::Vacuum {
                path: VacuumPath::Shell,
                ..
            } => Ok(GreenSource::VacuumShell),
            MediumConfig::Vacuum {
                path: VacuumPath::Quadrature,
                quadrature_loss,
            } => {
                if !(*quadrature_loss > 0.0 && *quadrature_loss <= 1e-2) {
                    return Err(validation(
                        "medium.quadrature_loss",
                        format!("must lie in (0, 1e-2], got {quadrature_loss}"),
                    ));
                }
                Ok(GreenSource::SmoothBulk(presets::near_vacuum(
                    *quadrature_loss,
                )))
            }
            MediumConfig::Bulk {
                preset: Some(name),
                electric,
                magnetic,
            } => {
                if !electric.is_empty() || !magnetic.is_empty() {
                    return Err(validation(
                        "medium.preset",
                        "give either a preset or pole lists, not both",
                    ));
                }
                let medium = presets::all()
                    .into_iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, m)| m)
                    .ok_or_else(|| {
                        validation("medium.preset", format!("unknown preset {name:?}"))
                    })?;
                Ok(GreenSource::SmoothBulk(medium))
            }
            MediumConfig::Bulk {
                preset: None,
                electric,
                magnetic,
            } => {
                let poles =
                    |list: &[PoleConfig], name: &str| -> Result<Vec<LorentzPole>, CliError> {
                        list.iter()
                            .enumerate()
                            .map(|(i, p)| {
                                LorentzPole::new(
                                    scale.strength_to_scaled(p.strength),
                                    scale.frequency_to_scaled(p.resonance),
                                    scale.frequency_to_scaled(p.damping),
                                )
                                .map_err(|e| validation(&format!("medium.{name}[{i}]"), e))
                            })
                            .collect()
                    };
                let medium = DispersiveMedium::new(
                    poles(electric, "electric")?,
                    poles(magnetic, "magnetic")?,
                )
                .map_err(|e| validation("medium", e))?;
                let source = GreenSource::SmoothBulk(medium);
                source.validate().map_err(|e| validation("medium", e))?;
                Ok(source)
            }
        }
    }

    /// Scaled scenario at one sweep point (`None` for the config values).
    pub fn resolve(&self, point: Option<(SweepField, f64)>) -> Result<Scenario, CliError> {
        let a = &self.atom;
        let mut velocity = Vec3::from(a.velocity);
        let mut quadrature = QuadratureSpec::from(self.quadrature);
        match point {
            Some((SweepField::VOverC, beta)) => {
                let dir = velocity.try_normalize(0.0).unwrap_or_else(Vec3::z);
                velocity = dir * (beta * SPEED_OF_LIGHT);
            }
            Some((SweepField::OmegaCutoff, x)) => quadrature.omega_cutoff = x,
            Some((SweepField::KMax, x)) => quadrature.k_max = x,
            None => {}
        }
        let (atom, scale) = AtomState::from_si(
            a.transition_frequency,
            Vec3::from(a.dipole),
            a.mass,
            velocity,
        )
        .map_err(|e| validation("atom", e))?;
        let source = self.medium_source(&scale)?;
        if let MediumConfig::Vacuum {
            path: VacuumPath::Quadrature,
            ..
        } = self.medium
        {
            // The barely absorbing stand-in concentrates Im G on the light
            // cone, whose Doppler-shifted radius reaches √((1+β)/(1−β)) along
            // the motion; a shorter k range would silently cut the shell.
            let beta = atom.velocity.norm();
            quadrature.k_max = quadrature
                .k_max
                .max(VACUUM_SHELL_MARGIN * ((1.0 + beta) / (1.0 - beta)).sqrt());
        }
        let shift_mode = match self.shift_mode()? {
            ShiftModeSi::Zero => ShiftMode::Zero,
            ShiftModeSi::Fixed(x) => ShiftMode::Fixed(scale.frequency_to_scaled(x)),
            ShiftModeSi::SelfConsistent => ShiftMode::SelfConsistent,
        };
        let spinor = if self.run.exact_spinor {
            SpinorMode::Exact
        } else {
            SpinorMode::EqualVelocity
        };
        Ok(Scenario {
            atom,
            scale,
            source,
            quadrature,
            options: EmissionOptions { shift_mode, spinor },
        })
    }
}

/// Radial head-room kept beyond the Doppler-shifted light cone on the
/// vacuum quadrature path.
pub const VACUUM_SHELL_MARGIN: f64 = 1.5;

/// Reads and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}
