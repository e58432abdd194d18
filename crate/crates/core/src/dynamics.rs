//! Non-Markovian amplitude dynamics of the excited state.
//!
//! The excited-state amplitude obeys the Volterra equation
//!
//! ```text
//! Ċ(t) = −iδω C(t) + ∫₀^t M(t − t′) C(t′) dt′,   C(0) = 1,
//! M(τ) = −(S/2)/((2π)³π) ∫d³k ∫₀^Λ dω B(k, ω) e^{−i(ω − Ω(k))τ},
//! Ω(k) = ω_A/γ − δω + |E_q| − |E_{q−k}|,   q = γMv,
//! ```
//!
//! where `B` is the Röntgen bracket shared with [`crate::emission`]. With
//! `∫₀^∞ e^{−ixτ}dτ = πδ(x) − i P/x` the Markov limit of the memory
//! integral is `(−Γ/2 + iδω)C` with exactly the `Γ` and `δω` of the
//! emission module.
//!
//! The kernel is tabulated as a sum of modes `M(τ) = Σ A_m e^{−iν_m τ}`,
//! one mode per quadrature node in `(k, ω)`; for smooth sources with many
//! modes the spectral weights are first binned on a fine `ν` grid.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::emission::{
    decay_rate, lamb_shift, polar_nodes, EmissionOptions, Emitter, PolarNode, QuadratureSpec,
    ShiftMode,
};
use crate::kinematics::{energy_difference_stable, AtomState};
use crate::quadrature::{
    composite_gauss_legendre, integrate_adaptive, pairwise_sum, AdaptiveTolerance,
};
use crate::tensor::{
    green_scalars, longitudinal_projector, transverse_projector, vacuum_im_green_shell, GreenSource,
};
use crate::{Error, Result, Vec3};

const KERNEL_PREFACTOR: f64 = 1.0 / (8.0 * PI * PI * PI * PI);

/// Sign of the level-shift phase in the Markov amplitude.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovPhase {
    /// `exp((−Γ/2 + iδω)t)`.
    #[default]
    PositiveShift,
    /// `exp((−Γ/2 − iδω)t)`, the sign usually paired with a phase
    /// convention `e^{−iωt}` for the state vector.
    NegativeShift,
}

/// Markov amplitude `exp((−Γ/2 + iδω)t)`.
pub fn markov_amplitude(gamma: f64, delta_omega: f64, t: f64) -> Complex64 {
    markov_amplitude_with(gamma, delta_omega, t, MarkovPhase::PositiveShift)
}

pub fn markov_amplitude_with(
    gamma: f64,
    delta_omega: f64,
    t: f64,
    phase: MarkovPhase,
) -> Complex64 {
    let sign = match phase {
        MarkovPhase::PositiveShift => 1.0,
        MarkovPhase::NegativeShift => -1.0,
    };
    (Complex64::new(-0.5 * gamma, sign * delta_omega) * t).exp()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOptions {
    pub emission: EmissionOptions,
    pub markov_phase: MarkovPhase,
}

/// Uniform grid `τ_j = j·step`, `j = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub step: f64,
    pub len: usize,
}

impl TauGrid {
    pub fn new(step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || len < 2 {
            return Err(Error::Configuration(format!(
                "kernel grid needs step > 0 and at least 2 samples, got step {step}, {len} samples"
            )));
        }
        Ok(Self { step, len })
    }

    /// Grid of the given step covering a memory horizon.
    pub fn with_horizon(step: f64, horizon: f64) -> Result<Self> {
        Self::new(step, (horizon / step).ceil() as usize + 1)
    }

    /// Largest step resolving the cut-off frequency with 50 samples per
    /// period.
    pub fn max_step(omega_cutoff: f64) -> f64 {
        2.0 * PI / (50.0 * omega_cutoff)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryKernel {
    pub step: f64,
    pub samples: Vec<Complex64>,
    /// Shift inserted into the phases and the `−iδω C` term.
    pub delta_omega: f64,
    pub omega_cutoff: f64,
    /// Markov reference rate.
    pub markov_rate: f64,
    /// Markov reference shift relative to the frame of the solver.
    pub markov_shift: f64,
    pub markov_phase: MarkovPhase,
    pub mode_count: usize,
    pub warnings: Vec<String>,
}

impl MemoryKernel {
    /// Kernel from explicit samples, for model studies.
    pub fn from_samples(step: f64, samples: Vec<Complex64>, delta_omega: f64) -> Result<Self> {
        TauGrid::new(step, samples.len())?;
        Ok(Self {
            step,
            samples,
            delta_omega,
            omega_cutoff: f64::INFINITY,
            markov_rate: 0.0,
            markov_shift: 0.0,
            markov_phase: MarkovPhase::PositiveShift,
            mode_count: 0,
            warnings: Vec::new(),
        })
    }

    pub fn with_markov_reference(mut self, rate: f64, shift: f64) -> Self {
        self.markov_rate = rate;
        self.markov_shift = shift;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.step * (self.samples.len() - 1) as f64
    }

    /// Trapezoidal `∫₀^horizon M(τ)dτ`, the truncated Markov transform whose
    /// limit is `−Γ/2 + iδω`.
    pub fn markov_transform(&self) -> Complex64 {
        let n = self.samples.len();
        let re: Vec<f64> = self.samples.iter().map(|z| z.re).collect();
        let im: Vec<f64> = self.samples.iter().map(|z| z.im).collect();
        let ends = 0.5 * (self.samples[0] + self.samples[n - 1]);
        (Complex64::new(pairwise_sum(&re), pairwise_sum(&im)) - ends) * self.step
    }
}

/// One `d³k` density of the kernel at wave vector `k` and lag `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSample {
    pub value: Complex64,
    /// Set when the bracket has not decayed at the frequency cut-off.
    pub warning: Option<String>,
}

fn phase_frequency(e: &Emitter, q: &Vec3, k: &Vec3) -> f64 {
    let recoil = if e.mass.is_finite() {
        energy_difference_stable(q, k, e.mass)
    } else {
        e.velocity.dot(k)
    };
    e.omega0 + recoil
}

fn momentum(e: &Emitter) -> Vec3 {
    if e.mass.is_finite() {
        e.velocity * (e.gamma * e.mass)
    } else {
        Vec3::zeros()
    }
}

fn shift_for(
    atom: &AtomState,
    source: &GreenSource,
    quad: &QuadratureSpec,
    options: &EmissionOptions,
) -> Result<f64> {
    Ok(match options.shift_mode {
        ShiftMode::Zero => 0.0,
        ShiftMode::Fixed(x) => x,
        ShiftMode::SelfConsistent => {
            crate::emission::self_consistent_shift(atom, source, quad, options.spinor)?.delta_omega
        }
    })
}

/// Kernel density `−(S/2)/((2π)³π) ∫₀^Λ dω B(k, ω) e^{−i(ω − Ω(k))τ}`. For
/// the vacuum shell the ω integral collapses onto `ω = |k|` and the value
/// is a density with the radial delta already integrated.
pub fn kernel_at(
    atom: &AtomState,
    source: &GreenSource,
    k: &Vec3,
    tau: f64,
    quad: &QuadratureSpec,
    options: EmissionOptions,
) -> Result<KernelSample> {
    quad.validate()?;
    source.validate()?;
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("lag must be >= 0, got {tau}")));
    }
    let delta = shift_for(atom, source, quad, &options)?;
    let e = Emitter::new(atom, delta, options.spinor)?;
    let big_omega = phase_frequency(&e, &momentum(&e), k);
    let cutoff = quad.omega_cutoff;
    let kn = k.norm();
    match source {
        GreenSource::VacuumShell => {
            if kn == 0.0 || kn > cutoff {
                return Ok(KernelSample {
                    value: Complex64::new(0.0, 0.0),
                    warning: None,
                });
            }
            let im_g = vacuum_im_green_shell(kn)?.tensor(&(k / kn));
            let b: f64 = e.terms(k, kn, &im_g)?.iter().sum();
            let phase = Complex64::from_polar(1.0, -(kn - big_omega) * tau);
            Ok(KernelSample {
                value: -KERNEL_PREFACTOR * b * phase,
                warning: None,
            })
        }
        _ => {
            let bracket = |w: f64| -> Result<f64> {
                Ok(e.terms(k, w, &source.im_green(k, w)?)?.iter().sum())
            };
            let mut failure = None;
            let r = integrate_adaptive(
                |w| match bracket(w) {
                    Ok(b) => {
                        let p = Complex64::from_polar(b, -(w - big_omega) * tau);
                        [p.re, p.im]
                    }
                    Err(err) => {
                        failure.get_or_insert(err);
                        [0.0, 0.0]
                    }
                },
                &[0.0, 0.5 * cutoff, cutoff],
                AdaptiveTolerance {
                    relative: 1e-9,
                    ..AdaptiveTolerance::default()
                },
            )?;
            if let Some(err) = failure {
                return Err(err);
            }
            let peak = (1..=64)
                .map(|i| bracket(cutoff * i as f64 / 64.0).map(f64::abs))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            let edge = bracket(cutoff)?.abs();
            let warning = (edge > 1e-2 * peak).then(|| {
                format!(
                    "bracket at the cut-off {cutoff} is {:.2e} of its peak; raise omega_cutoff",
                    edge / peak
                )
            });
            Ok(KernelSample {
                value: -KERNEL_PREFACTOR * Complex64::new(r.value[0], r.value[1]),
                warning,
            })
        }
    }
}

/// Quadrature plan for the kernel modes. Radial and frequency panels are
/// refined with the memory horizon so that the mode phases change by at
/// most about one turn across a 16-point panel at the largest lag; a
/// coarser grid would alias and make the tabulated kernel recur.
struct ModePlan {
    omegas: Vec<(f64, f64)>,
    radii: Vec<(f64, f64)>,
}

const PANEL_ORDER: usize = 16;

fn panels(min: usize, frequency_span: f64, horizon: f64) -> usize {
    min.max((frequency_span * horizon / (2.0 * PI)).ceil() as usize)
}

impl ModePlan {
    fn new(e: &Emitter, source: &GreenSource, quad: &QuadratureSpec, horizon: f64) -> Self {
        let cutoff = quad.omega_cutoff;
        match source {
            GreenSource::VacuumShell => {
                let p = panels(quad.radial_nodes, cutoff * (1.0 + e.beta), horizon);
                Self {
                    omegas: Vec::new(),
                    radii: composite_gauss_legendre(0.0, cutoff, p, PANEL_ORDER),
                }
            }
            _ => {
                let pw = panels(quad.radial_nodes, cutoff, horizon);
                let pk = panels(quad.radial_nodes, quad.k_max * e.beta, horizon);
                Self {
                    omegas: composite_gauss_legendre(0.0, cutoff, pw, PANEL_ORDER),
                    radii: composite_gauss_legendre(0.0, quad.k_max, pk, PANEL_ORDER),
                }
            }
        }
    }

    fn modes_per_node(&self) -> usize {
        self.radii.len() * self.omegas.len().max(1)
    }
}

/// Material response on the frequency nodes, shared by all polar nodes.
type MaterialTable = Vec<(Complex64, Complex64)>;

fn material_table(source: &GreenSource, plan: &ModePlan) -> Result<MaterialTable> {
    match source {
        GreenSource::SmoothBulk(m) => plan
            .omegas
            .iter()
            .map(|&(w, _)| Ok((m.permittivity(w)?, m.permeability(w)?)))
            .collect(),
        _ => Ok(Vec::new()),
    }
}

/// Range of `ν = ω − Ω(k)` over a polar node.
fn nu_range(
    e: &Emitter,
    q: &Vec3,
    plan: &ModePlan,
    source: &GreenSource,
    along: &Vec3,
) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let (w_lo, w_hi) = match source {
        GreenSource::VacuumShell => (0.0, 0.0),
        _ => (plan.omegas[0].0, plan.omegas[plan.omegas.len() - 1].0),
    };
    for &(k, _) in &plan.radii {
        let big_omega = phase_frequency(e, q, &(along * k));
        let base = if matches!(source, GreenSource::VacuumShell) {
            k
        } else {
            0.0
        };
        lo = lo.min(base + w_lo - big_omega);
        hi = hi.max(base + w_hi - big_omega);
    }
    (lo, hi)
}

/// Feeds every mode `(ν, A)` of one polar node to `sink`.
fn node_modes(
    e: &Emitter,
    source: &GreenSource,
    plan: &ModePlan,
    material: &MaterialTable,
    node: &PolarNode,
    sink: &mut impl FnMut(f64, f64),
) -> Result<()> {
    let q = momentum(e);
    // Ω depends on k only through |k| and q·k, constant on the ring
    let along = node.directions[0];
    match source {
        GreenSource::VacuumShell => {
            for &(k, wk) in &plan.radii {
                let ring: f64 = e.ring_sum(source, node, k, k)?.iter().sum();
                let nu = k - phase_frequency(e, &q, &(along * k));
                sink(nu, -KERNEL_PREFACTOR * ring * k * k * wk * node.weight);
            }
        }
        GreenSource::SmoothBulk(_) => {
            for &(k, wk) in &plan.radii {
                let parts = projector_parts(e, node, k)?;
                let big_omega = phase_frequency(e, &q, &(along * k));
                let outer = -KERNEL_PREFACTOR * k * k * wk * node.weight;
                for (&(w, ww), &(eps, mu)) in plan.omegas.iter().zip(material) {
                    let (gt, gl) = green_scalars(eps, mu, k * k, w)?;
                    let b = gt.im * (w * w * parts[0][0] + w * parts[0][1] + parts[0][2])
                        + gl.im * (w * w * parts[1][0] + w * parts[1][1] + parts[1][2]);
                    sink(w - big_omega, outer * ww * b);
                }
            }
        }
        GreenSource::Custom(_) => {
            for &(k, wk) in &plan.radii {
                let big_omega = phase_frequency(e, &q, &(along * k));
                for &(w, ww) in &plan.omegas {
                    let b: f64 = e.ring_sum(source, node, k, w)?.iter().sum();
                    sink(
                        w - big_omega,
                        -KERNEL_PREFACTOR * k * k * wk * node.weight * ww * b,
                    );
                }
            }
        }
    }
    Ok(())
}

/// Ring-summed bracket coefficients `[ω², ω¹, ω⁰]` for the transverse and
/// longitudinal projectors at radius `k`, including `S/2`.
fn projector_parts(e: &Emitter, node: &PolarNode, k: f64) -> Result<[[f64; 3]; 2]> {
    let mut out = [[0.0; 3]; 2];
    for n in &node.directions {
        let kv = n * k;
        for (slot, p) in [transverse_projector(n), longitudinal_projector(n)]
            .iter()
            .enumerate()
        {
            let t = e.terms(&kv, 1.0, p)?;
            out[slot][0] += t[0];
            out[slot][1] += t[1] + t[2];
            out[slot][2] += t[3];
        }
    }
    Ok(out)
}

/// Largest number of spectral bins held per polar node.
const MAX_BINS: usize = 2_000_000;
/// Bin width times horizon. Linear sharing between neighbouring bins
/// smooths the spectral weight with a triangle of this width; the phase
/// error of an isolated mode at the horizon is at most `(0.05)²/8`.
const BIN_WIDTH_HORIZON: f64 = 0.05;
/// Raw mode sets up to this size are merged exactly before deciding to bin.
const EXACT_MERGE_LIMIT: usize = 1 << 21;
/// Merged mode sets up to this size are tabulated exactly even when binning
/// would be cheaper.
const EXACT_MODE_LIMIT: usize = 1 << 15;

/// Kernel modes `(ν, A)` ready for tabulation, plus the raw mode count.
/// Equal frequencies are merged; when there are more raw modes than bins
/// of width `BIN_WIDTH_HORIZON/horizon` the spectral weight is binned
/// instead. Node contributions are always reduced in node order, so the
/// result does not depend on the thread count.
fn kernel_spectrum(
    e: &Emitter,
    source: &GreenSource,
    quad: &QuadratureSpec,
    horizon: f64,
) -> Result<(Vec<(f64, f64)>, usize)> {
    let nodes = polar_nodes(&e.frame, e.beta, quad.n_polar, quad.n_azimuthal);
    let plan = ModePlan::new(e, source, quad, horizon);
    let material = material_table(source, &plan)?;
    let q = momentum(e);
    let raw_count = nodes.len() * plan.modes_per_node();

    let (lo, hi) = nodes
        .iter()
        .map(|n| nu_range(e, &q, &plan, source, &n.directions[0]))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| {
            (a.0.min(b.0), a.1.max(b.1))
        });
    let width = if horizon > 0.0 {
        (BIN_WIDTH_HORIZON / horizon).max((hi - lo) / (MAX_BINS - 2) as f64)
    } else {
        f64::INFINITY
    };
    let bins = if width.is_finite() && hi > lo {
        ((hi - lo) / width).ceil() as usize + 2
    } else {
        usize::MAX
    };

    let cic = |w: &mut [f64], nu: f64, a: f64| {
        let pos = (nu - lo) / width;
        let i = (pos.floor().max(0.0) as usize).min(bins - 2);
        let f = pos - i as f64;
        w[i] += a * (1.0 - f);
        w[i + 1] += a * f;
    };
    let mut weights;
    if bins >= raw_count || raw_count <= EXACT_MERGE_LIMIT {
        let per_node: Vec<Vec<(f64, f64)>> = nodes
            .par_iter()
            .map(|node| {
                let mut modes = Vec::with_capacity(plan.modes_per_node());
                node_modes(e, source, &plan, &material, node, &mut |nu, a| {
                    modes.push((nu, a))
                })?;
                Ok(modes)
            })
            .collect::<Result<_>>()?;
        let mut modes: Vec<(f64, f64)> = per_node.into_iter().flatten().collect();
        modes.sort_by(|a, b| a.0.total_cmp(&b.0));
        // frequencies equal up to rounding (e.g. all directions of an atom
        // at rest) are merged; the phase error is at most 10⁻⁹ at the horizon
        let tie = 1e-9 / horizon;
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(modes.len());
        for (nu, a) in modes {
            match merged.last_mut() {
                Some(last) if nu - last.0 <= tie => last.1 += a,
                _ => merged.push((nu, a)),
            }
        }
        if merged.len() <= bins.max(EXACT_MODE_LIMIT) {
            return Ok((merged, raw_count));
        }
        weights = vec![0.0; bins];
        for (nu, a) in merged {
            cic(&mut weights, nu, a);
        }
    } else {
        weights = vec![0.0; bins];
        const BATCH: usize = 8;
        for batch in nodes.chunks(BATCH) {
            let partial: Vec<Vec<f64>> = batch
                .par_iter()
                .map(|node| {
                    let mut w = vec![0.0; bins];
                    node_modes(e, source, &plan, &material, node, &mut |nu, a| {
                        cic(&mut w, nu, a)
                    })?;
                    Ok(w)
                })
                .collect::<Result<_>>()?;
            for w in partial {
                for (acc, x) in weights.iter_mut().zip(w) {
                    *acc += x;
                }
            }
        }
    }
    let modes = weights
        .into_iter()
        .enumerate()
        .filter(|(_, a)| *a != 0.0)
        .map(|(i, a)| (lo + width * i as f64, a))
        .collect();
    Ok((modes, raw_count))
}

fn tabulate(modes: &[(f64, f64)], grid: &TauGrid) -> Vec<Complex64> {
    const CHUNK: usize = 256;
    let chunks: Vec<usize> = (0..grid.len).step_by(CHUNK).collect();
    chunks
        .par_iter()
        .map(|&start| {
            let n = CHUNK.min(grid.len - start);
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            let t0 = start as f64 * grid.step;
            for &(nu, a) in modes {
                let mut p = Complex64::from_polar(a, -nu * t0);
                let r = Complex64::from_polar(1.0, -nu * grid.step);
                for slot in acc.iter_mut() {
                    *slot += p;
                    p *= r;
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Tabulates `M(τ)` on `grid` and attaches the Markov reference computed by
/// the emission module with the same options.
pub fn build_memory_kernel(
    atom: &AtomState,
    source: &GreenSource,
    grid: &TauGrid,
    quad: &QuadratureSpec,
    options: DynamicsOptions,
) -> Result<MemoryKernel> {
    quad.validate()?;
    source.validate()?;
    let max_step = TauGrid::max_step(quad.omega_cutoff);
    if grid.step > max_step * (1.0 + 1e-12) {
        return Err(Error::Configuration(format!(
            "kernel step {} exceeds 2π/(50·omega_cutoff) = {max_step}",
            grid.step
        )));
    }
    let delta = shift_for(atom, source, quad, &options.emission)?;
    let e = Emitter::new(atom, delta, options.emission.spinor)?;
    let horizon = grid.step * (grid.len - 1) as f64;
    let (modes, mode_count) = kernel_spectrum(&e, source, quad, horizon)?;
    let samples = tabulate(&modes, grid);

    let fixed = EmissionOptions {
        shift_mode: ShiftMode::Fixed(delta),
        ..options.emission
    };
    let rate = decay_rate(atom, source, quad, fixed)?.gamma_total;
    let shift = lamb_shift(atom, source, quad, fixed)?.value;
    let mut warnings = Vec::new();
    let forward = e.omega0 / (1.0 - e.beta);
    if forward >= quad.omega_cutoff {
        warnings.push(format!(
            "Doppler-shifted resonance reaches {forward:.4} at or above omega_cutoff {}; forward emission is cut off",
            quad.omega_cutoff
        ));
    }
    if !matches!(source, GreenSource::VacuumShell) {
        let probe = kernel_at(atom, source, &Vec3::new(0.0, 0.0, 1.0), 0.0, quad, fixed)?;
        warnings.extend(probe.warning);
    }
    Ok(MemoryKernel {
        step: grid.step,
        samples,
        delta_omega: delta,
        omega_cutoff: quad.omega_cutoff,
        markov_rate: rate,
        markov_shift: shift - delta,
        markov_phase: options.markov_phase,
        mode_count,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTrajectory {
    pub times: Vec<f64>,
    pub amplitude: Vec<Complex64>,
    pub markov: Vec<Complex64>,
}

impl AmplitudeTrajectory {
    pub fn survival(&self) -> Vec<f64> {
        self.amplitude.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn markov_survival(&self) -> Vec<f64> {
        self.markov.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `max_t | |C(t)|² − |C_Markov(t)|² |`.
    pub fn max_survival_deviation(&self) -> f64 {
        self.amplitude
            .iter()
            .zip(&self.markov)
            .map(|(c, m)| (c.norm_sqr() - m.norm_sqr()).abs())
            .fold(0.0, f64::max)
    }
}

/// Trapezoidal Volterra predictor–corrector on the kernel grid. Memory
/// older than the kernel horizon is dropped. The last sample lies at or just
/// past `t_end`.
pub fn evolve_amplitude(
    kernel: &MemoryKernel,
    t_end: f64,
    step: f64,
) -> Result<AmplitudeTrajectory> {
    let h = kernel.step;
    if ((step - h) / h).abs() > 1e-12 {
        return Err(Error::Configuration(format!(
            "solver step {step} must equal the kernel step {h}"
        )));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::domain(format!("t_end must be >= 0, got {t_end}")));
    }
    let steps = (t_end / h - 1e-9).ceil().max(0.0) as usize;
    let m = &kernel.samples;
    let len = m.len();
    let rot = Complex64::new(0.0, -kernel.delta_omega);
    let half_m0 = 0.5 * h * m[0];

    let mut c = Vec::with_capacity(steps + 1);
    c.push(Complex64::new(1.0, 0.0));
    let mut f_prev = rot * c[0];
    for n in 0..steps {
        // history of ∫₀^{t_{n+1}} M(t_{n+1} − s) C(s) ds without the s = t_{n+1} end
        let next = n + 1;
        let reach = next.min(len - 1);
        let mut hist = Complex64::new(0.0, 0.0);
        if reach >= 1 {
            for (mj, cj) in m[1..reach]
                .iter()
                .zip(c[next - reach + 1..next].iter().rev())
            {
                hist += mj * cj;
            }
            hist += 0.5 * m[reach] * c[next - reach];
        }
        let hist = hist * h;
        let cn = c[n];
        let predictor = cn + h * f_prev;
        let f_pred = rot * predictor + hist + half_m0 * predictor;
        let corrected = cn + 0.5 * h * (f_prev + f_pred);
        let magnitude = corrected.norm();
        if !(magnitude <= 1.0 + 1e-3) {
            return Err(Error::Instability {
                time: next as f64 * h,
                magnitude,
            });
        }
        f_prev = rot * corrected + hist + half_m0 * corrected;
        c.push(corrected);
    }
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let markov = times
        .iter()
        .map(|&t| {
            markov_amplitude_with(
                kernel.markov_rate,
                kernel.markov_shift,
                t,
                kernel.markov_phase,
            )
        })
        .collect();
    Ok(AmplitudeTrajectory {
        times,
        amplitude: c,
        markov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::presets;
    use approx::assert_relative_eq;

    fn vacuum_atom(gamma0: f64, v: Vec3) -> AtomState {
        AtomState::new(
            1.0,
            Vec3::new(0.0, 0.0, (3.0 * PI * gamma0).sqrt()),
            1e10,
            v,
        )
        .unwrap()
    }

    fn vacuum_quad(cutoff: f64) -> QuadratureSpec {
        QuadratureSpec {
            omega_cutoff: cutoff,
            ..QuadratureSpec::default()
        }
    }

    #[test]
    fn markov_amplitude_examples() {
        assert_eq!(markov_amplitude(0.3, 0.2, 0.0), Complex64::new(1.0, 0.0));
        let t = 2.0 * 2f64.ln() / 0.7;
        assert_relative_eq!(
            markov_amplitude(0.7, 0.0, t).norm_sqr(),
            0.25,
            max_relative = 1e-14
        );
        let a = markov_amplitude(0.7, 0.0, 1.3).norm();
        let b = markov_amplitude(0.7, 5.0, 1.3).norm();
        assert_relative_eq!(a, b, max_relative = 1e-14);
        let p = markov_amplitude(0.0, 0.5, 1.0);
        let q = markov_amplitude_with(0.0, 0.5, 1.0, MarkovPhase::NegativeShift);
        assert_relative_eq!(p.im, -q.im, max_relative = 1e-14);
    }

    #[test]
    fn zero_kernel_keeps_amplitude() {
        let k = MemoryKernel::from_samples(0.01, vec![Complex64::new(0.0, 0.0); 10], 0.0).unwrap();
        let tr = evolve_amplitude(&k, 5.0, 0.01).unwrap();
        assert!(tr.amplitude.iter().all(|c| *c == Complex64::new(1.0, 0.0)));
        assert_eq!(tr.times.len(), 501);
    }

    fn exponential_kernel(rate: f64, b: f64, h: f64, horizon: f64) -> MemoryKernel {
        let n = (horizon / h).round() as usize + 1;
        let samples = (0..n)
            .map(|j| Complex64::new(-0.5 * rate * b * (-b * j as f64 * h).exp(), 0.0))
            .collect();
        MemoryKernel::from_samples(h, samples, 0.0).unwrap()
    }

    /// Exact solution for `M(τ) = −(Γ/2) b e^{−bτ}`:
    /// `C(s) = (s + b)/(s² + bs + Γb/2)`.
    fn exponential_exact(rate: f64, b: f64, t: f64) -> f64 {
        let disc = (b * b - 2.0 * rate * b).sqrt();
        let (s1, s2) = (0.5 * (-b + disc), 0.5 * (-b - disc));
        ((s1 + b) * (s1 * t).exp() - (s2 + b) * (s2 * t).exp()) / (s1 - s2)
    }

    #[test]
    fn narrow_kernel_gives_exponential_decay() {
        let (rate, b, h) = (1.0, 200.0, 5e-4);
        let k = exponential_kernel(rate, b, h, 1.0);
        let tr = evolve_amplitude(&k, 4.0, h).unwrap();
        for (t, c) in tr.times.iter().zip(&tr.amplitude) {
            let target = (-0.5 * rate * t).exp();
            assert!(
                (c.norm() - target).abs() < 0.01 * target,
                "t={t}: {} vs {target}",
                c.norm()
            );
        }
    }

    #[test]
    fn volterra_scheme_is_second_order() {
        let (rate, b) = (1.0, 4.0);
        let t_end = 3.0;
        let err = |h: f64| {
            let k = exponential_kernel(rate, b, h, 20.0);
            let tr = evolve_amplitude(&k, t_end, h).unwrap();
            (tr.amplitude.last().unwrap().re - exponential_exact(rate, b, t_end)).abs()
        };
        let (e1, e2, e3) = (err(0.04), err(0.02), err(0.01));
        let (r1, r2) = (e1 / e2, e2 / e3);
        assert!(
            (3.0..5.0).contains(&r1) && (3.0..5.0).contains(&r2),
            "{e1} {e2} {e3}"
        );
    }

    #[test]
    fn instability_is_reported() {
        let samples = vec![Complex64::new(5.0, 0.0); 100];
        let k = MemoryKernel::from_samples(0.01, samples, 0.0).unwrap();
        assert!(matches!(
            evolve_amplitude(&k, 1.0, 0.01),
            Err(Error::Instability { .. })
        ));
    }

    #[test]
    fn step_mismatch_is_rejected() {
        let k = MemoryKernel::from_samples(0.01, vec![Complex64::new(0.0, 0.0); 4], 0.0).unwrap();
        assert!(matches!(
            evolve_amplitude(&k, 1.0, 0.02),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn coarse_kernel_grid_is_rejected() {
        let q = vacuum_quad(2.0);
        let grid = TauGrid::new(1.1 * TauGrid::max_step(2.0), 10).unwrap();
        let r = build_memory_kernel(
            &vacuum_atom(1e-3, Vec3::zeros()),
            &GreenSource::VacuumShell,
            &grid,
            &q,
            Default::default(),
        );
        assert!(matches!(r, Err(Error::Configuration(_))));
    }

    #[test]
    fn kernel_is_quadratic_in_the_dipole() {
        let q = QuadratureSpec {
            n_polar: 8,
            n_azimuthal: 8,
            radial_nodes: 8,
            omega_cutoff: 2.0,
            ..Default::default()
        };
        let grid = TauGrid::new(TauGrid::max_step(2.0), 64).unwrap();
        let a = vacuum_atom(1e-3, Vec3::new(0.3, 0.0, 0.0));
        let b = a.with_dipole(a.dipole * 2.0);
        let ka = build_memory_kernel(&a, &GreenSource::VacuumShell, &grid, &q, Default::default())
            .unwrap();
        let kb = build_memory_kernel(&b, &GreenSource::VacuumShell, &grid, &q, Default::default())
            .unwrap();
        for (x, y) in ka.samples.iter().zip(&kb.samples) {
            assert!((y - 4.0 * x).norm() <= 1e-12 * y.norm());
        }
    }

    #[test]
    fn kernel_matches_pointwise_density() {
        // independent Gauss–Legendre cubature of kernel_at over the ball
        let q = QuadratureSpec {
            omega_cutoff: 1.5,
            ..Default::default()
        };
        let a = vacuum_atom(1e-3, Vec3::zeros());
        let grid = TauGrid::new(TauGrid::max_step(1.5), 200).unwrap();
        let k = build_memory_kernel(&a, &GreenSource::VacuumShell, &grid, &q, Default::default())
            .unwrap();
        let radial = composite_gauss_legendre(0.0, 1.5, 40, 10);
        let polar = crate::quadrature::gauss_legendre(12);
        for j in [0, 50, 199] {
            let tau = j as f64 * grid.step;
            let mut total = Complex64::new(0.0, 0.0);
            for &(r, wr) in &radial {
                for &(x, wx) in &polar {
                    for p in 0..12 {
                        let phi = 2.0 * PI * p as f64 / 12.0;
                        let s = (1.0 - x * x).sqrt();
                        let n = Vec3::new(s * phi.cos(), s * phi.sin(), x);
                        let v = kernel_at(
                            &a,
                            &GreenSource::VacuumShell,
                            &(n * r),
                            tau,
                            &q,
                            Default::default(),
                        )
                        .unwrap()
                        .value;
                        total += v * (wr * r * r * wx * 2.0 * PI / 12.0);
                    }
                }
            }
            assert!(
                (total - k.samples[j]).norm() < 1e-6 * k.samples[0].norm(),
                "τ={tau} {} {} {}",
                (total - k.samples[j]).norm() / k.samples[0].norm(),
                k.mode_count,
                k.samples.len()
            );
        }
    }

    #[test]
    fn heavy_atom_at_rest_has_bare_phase() {
        let a = AtomState::new(1.0, Vec3::x() * 0.05, f64::INFINITY, Vec3::zeros()).unwrap();
        let q = QuadratureSpec::default();
        let kv = Vec3::new(0.0, 0.7, 0.0);
        let s0 = kernel_at(
            &a,
            &GreenSource::VacuumShell,
            &kv,
            0.0,
            &q,
            Default::default(),
        )
        .unwrap()
        .value;
        let tau = 3.3;
        let s1 = kernel_at(
            &a,
            &GreenSource::VacuumShell,
            &kv,
            tau,
            &q,
            Default::default(),
        )
        .unwrap()
        .value;
        let expected = s0 * Complex64::from_polar(1.0, -(0.7 - 1.0) * tau);
        assert!((s1 - expected).norm() < 1e-15 * s0.norm());
    }

    #[test]
    fn markov_transform_reproduces_decay_rate() {
        let q = vacuum_quad(1.5);
        let a = vacuum_atom(1e-3, Vec3::zeros());
        let grid = TauGrid::with_horizon(TauGrid::max_step(1.5), 300.0).unwrap();
        let k = build_memory_kernel(&a, &GreenSource::VacuumShell, &grid, &q, Default::default())
            .unwrap();
        let transform = k.markov_transform();
        let gamma = k.markov_rate;
        assert!(
            ((-2.0 * transform.re - gamma) / gamma).abs() < 0.05,
            "{transform} vs {gamma}"
        );
    }

    #[test]
    fn vacuum_weak_coupling_follows_markov_decay() {
        let gamma0 = 1e-3;
        let q = vacuum_quad(1.5);
        let a = vacuum_atom(gamma0, Vec3::zeros());
        let h = TauGrid::max_step(1.5);
        let grid = TauGrid::with_horizon(h, 300.0).unwrap();
        let k = build_memory_kernel(&a, &GreenSource::VacuumShell, &grid, &q, Default::default())
            .unwrap();
        let tr = evolve_amplitude(&k, 5.0 / k.markov_rate, h).unwrap();
        let dev = tr
            .times
            .iter()
            .zip(tr.survival())
            .map(|(t, s)| (s - (-k.markov_rate * t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.05, "{dev}");
        let surv = tr.survival();
        assert!(surv.windows(2).all(|w| w[1] <= w[0] + 1e-7));
    }

    #[test]
    fn markov_agreement_improves_with_weaker_coupling() {
        let q = vacuum_quad(1.5);
        let h = TauGrid::max_step(1.5);
        let grid = TauGrid::with_horizon(h, 300.0).unwrap();
        let deviations: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&g| {
                let a = vacuum_atom(g, Vec3::zeros());
                let k = build_memory_kernel(
                    &a,
                    &GreenSource::VacuumShell,
                    &grid,
                    &q,
                    Default::default(),
                )
                .unwrap();
                evolve_amplitude(&k, 5.0 / k.markov_rate, h)
                    .unwrap()
                    .max_survival_deviation()
            })
            .collect();
        assert!(
            deviations[0] > deviations[1] && deviations[1] > deviations[2],
            "{deviations:?}"
        );
    }

    #[test]
    fn bulk_kernel_refinement_and_linearity() {
        let src = GreenSource::SmoothBulk(presets::lossy_dielectric());
        let q = QuadratureSpec {
            n_polar: 8,
            n_azimuthal: 8,
            radial_nodes: 8,
            omega_cutoff: 4.0,
            ..Default::default()
        };
        let a = AtomState::new(
            1.0,
            Vec3::new(0.05, 0.0, 0.0),
            1e10,
            Vec3::new(0.0, 0.0, 0.3),
        )
        .unwrap();
        let h = TauGrid::max_step(4.0);
        let k1 = build_memory_kernel(
            &a,
            &src,
            &TauGrid::new(h, 101).unwrap(),
            &q,
            Default::default(),
        )
        .unwrap();
        let k2 = build_memory_kernel(
            &a,
            &src,
            &TauGrid::new(h / 2.0, 201).unwrap(),
            &q,
            Default::default(),
        )
        .unwrap();
        let scale = k1.samples[0].norm();
        for j in 0..101 {
            assert!((k1.samples[j] - k2.samples[2 * j]).norm() < 1e-3 * scale);
        }
    }
}
