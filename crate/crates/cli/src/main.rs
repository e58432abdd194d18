use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rqed_cli::config::{load_config, Format, Mode, ScenarioConfig};
use rqed_cli::output::emit;
use rqed_cli::run::run_sweep;
use rqed_cli::CliError;
use rqed_core::emission::{decay_rate, QuadratureSpec};
use rqed_core::kinematics::AtomState;
use rqed_core::material::presets;
use rqed_core::tensor::{GreenSource, SHELL_NORMALIZATION};
use rqed_core::units::free_space_rate_si;
use rqed_core::Vec3;

#[derive(Parser)]
#[command(
    name = "rqed",
    version,
    about = "Spontaneous emission of moving atoms in dispersive media"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sweep specification `field=start:stop:step`; field is v_over_c,
    /// omega_cutoff or k_max.
    #[arg(long, global = true)]
    sweep: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the full spinor overlap factor with recoil.
    #[arg(long, global = true)]
    exact_spinor: bool,
    /// zero, fixed:<rad/s> or self-consistent.
    #[arg(long, global = true)]
    shift_mode: Option<String>,
    /// Record per-point wall time (makes output files run-dependent).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Decay rate and its term decomposition.
    Decay,
    /// Decay rate and level shift.
    Shift,
    /// Non-Markovian amplitude trajectory.
    Dynamics,
    /// Check the vacuum rate against the free-space formula and print the
    /// normalization constant in force.
    Calibrate,
}

fn apply_flags(
    cli: &Cli,
    mut config: ScenarioConfig,
    mode: Mode,
) -> Result<ScenarioConfig, CliError> {
    config.run.mode = mode;
    if let Some(s) = &cli.sweep {
        config.run.sweep = Some(s.clone());
    }
    if let Some(p) = &cli.out {
        config.run.out = Some(p.clone());
    }
    if let Some(f) = cli.format {
        config.run.format = f;
    }
    if let Some(m) = &cli.shift_mode {
        config.run.shift_mode = m.clone();
    }
    config.run.exact_spinor |= cli.exact_spinor;
    config.run.timing |= cli.timing;
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli, mode: Mode) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config <path> is required".into()))?;
    let config = apply_flags(cli, load_config(path)?, mode)?;
    let records = run_sweep(&config)?;
    emit(
        &records,
        config.run.mode,
        config.run.format,
        config.run.out.as_deref(),
    )?;
    let failures: Vec<_> = records
        .iter()
        .filter_map(|r| r.failure().map(|f| (r.index, f)))
        .collect();
    for (i, f) in &failures {
        eprintln!("sweep point {i} failed: {}", f.message);
    }
    match failures.first() {
        Some((_, f)) if f.exit_code == 2 => Err(CliError::Convergence(format!(
            "{} sweep point(s) failed",
            failures.len()
        ))),
        Some(_) => Err(CliError::Validation(format!(
            "{} sweep point(s) failed",
            failures.len()
        ))),
        None => Ok(()),
    }
}

fn calibrate(cli: &Cli) -> Result<(), CliError> {
    let (omega_a, dipole, mass) = match &cli.config {
        Some(p) => {
            let c = load_config(p)?;
            (
                c.atom.transition_frequency,
                Vec3::from(c.atom.dipole),
                c.atom.mass,
            )
        }
        // sodium D line
        None => (3.2e15, Vec3::new(0.0, 0.0, 2.1e-29), 3.82e-26),
    };
    let (atom, scale) = AtomState::from_si(omega_a, dipole, mass, Vec3::zeros())?;
    let gamma0 = free_space_rate_si(omega_a, &dipole);
    let q = QuadratureSpec::default();
    let shell = scale.frequency_to_si(
        decay_rate(&atom, &GreenSource::VacuumShell, &q, Default::default())?.gamma_total,
    );
    let near = GreenSource::SmoothBulk(presets::near_vacuum(1e-6));
    let quad = scale.frequency_to_si(decay_rate(&atom, &near, &q, Default::default())?.gamma_total);
    let (rs, rq) = (shell / gamma0 - 1.0, quad / gamma0 - 1.0);
    println!("shell_normalization = {SHELL_NORMALIZATION}");
    println!("gamma0_si = {gamma0:.16e}");
    println!("shell_relative_error = {rs:.3e}");
    println!("quadrature_relative_error = {rq:.3e}");
    if rs.abs() < 1e-9 && rq.abs() < 1e-3 {
        println!("calibration ok");
        Ok(())
    } else {
        Err(CliError::Convergence(
            "vacuum calibration outside tolerance (1e-9 shell, 1e-3 quadrature)".into(),
        ))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: --threads {n}: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Decay => run(&cli, Mode::Decay),
        Command::Shift => run(&cli, Mode::Shift),
        Command::Dynamics => run(&cli, Mode::Dynamics),
        Command::Calibrate => calibrate(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
