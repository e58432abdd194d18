//! Decay rate and level shift of a moving atom in the Markov limit.
//!
//! With `S` the spinor overlap factor (2 for equal velocities) both
//! quantities are integrals of the Röntgen bracket `B(k, ω)` over photon
//! wave vectors:
//!
//! ```text
//! Γ  = (S/2) · 2/(2π)³ ∫d³k ∫dω δ(ω − ω*(k)) B(k, ω)
//! δω = (S/2) · 1/((2π)³π) ∫d³k P∫₀^Λ dω B(k, ω)/(ω − ω*(k))
//! ω*(k) = ω_A/γ − δω₀ + v·k
//! ```
//!
//! The angular grid is Gauss–Legendre in the rest-frame emission cosine,
//! mapped to the laboratory cosine by aberration, times a uniform azimuth
//! about the velocity. For the vacuum shell the radial integral collapses as
//! well and the angular integrand becomes a polynomial of the rest-frame
//! cosine, so the shell path is exact to rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::kinematics::{recoil_velocity, resonance_frequency, spinor_overlap_factor, AtomState};
use crate::quadrature::{
    aberration_map, add, composite_gauss_legendre, gauss_legendre, integrate_adaptive,
    pairwise_sum, pairwise_sum_array, principal_value, scale, AdaptiveTolerance,
};
use crate::tensor::{
    green_scalars, left_cross, longitudinal_projector, right_cross, transverse_projector,
    vacuum_im_green_shell, GreenSource, RealTensor3,
};
use crate::{Error, Result, Vec3};

/// The four terms of the Röntgen bracket
/// `d·[ω + v×k×]·Im G·[ω + ×k×v₂]·d`, with `v₂ = v − k/(γM)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoentgenBracket {
    /// `ω² d·Im G·d`
    pub static_term: f64,
    /// `ω d·(v×k×Im G)·d`
    pub motion_left: f64,
    /// `ω d·(Im G×k×v₂)·d`
    pub recoil_right: f64,
    /// `d·(v×k×Im G×k×v₂)·d`
    pub cross: f64,
}

impl RoentgenBracket {
    pub fn total(&self) -> f64 {
        ((self.static_term + self.motion_left) + self.recoil_right) + self.cross
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.static_term,
            self.motion_left,
            self.recoil_right,
            self.cross,
        ]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            static_term: a[0],
            motion_left: a[1],
            recoil_right: a[2],
            cross: a[3],
        }
    }
}

pub fn roentgen_bracket(
    dipole: &Vec3,
    velocity: &Vec3,
    k: &Vec3,
    omega: f64,
    im_g: &RealTensor3,
    mass: f64,
    gamma: f64,
) -> RoentgenBracket {
    let v2 = recoil_velocity(velocity, k, gamma, mass);
    let left = left_cross(velocity, &left_cross(k, im_g));
    let right = right_cross(&right_cross(im_g, k), &v2);
    let both = right_cross(&right_cross(&left, k), &v2);
    let form = |t: &RealTensor3| dipole.dot(&(t * dipole));
    RoentgenBracket {
        static_term: omega * omega * form(im_g),
        motion_left: omega * form(&left),
        recoil_right: omega * form(&right),
        cross: form(&both),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes in the emission cosine.
    pub n_polar: usize,
    /// Uniform nodes in the azimuth about the velocity.
    pub n_azimuthal: usize,
    /// Radial resolution: fixed-rule node count for the level shift and the
    /// memory kernel; the decay-rate radial integral is adaptive.
    pub radial_nodes: usize,
    /// Radial cut-off of smooth Green tensors, in units of `ω_A/c`.
    pub k_max: f64,
    /// Frequency cut-off of the level shift and memory kernel, in units of
    /// `ω_A`.
    pub omega_cutoff: f64,
    /// Half-width of the principal-value window relative to the pole.
    pub pv_window: f64,
    /// Relative tolerance of the adaptive radial integrals.
    pub radial_tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            n_polar: 32,
            n_azimuthal: 16,
            radial_nodes: 64,
            k_max: 4.0,
            omega_cutoff: 10.0,
            pv_window: 0.05,
            radial_tolerance: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        for (name, n) in [
            ("n_polar", self.n_polar),
            ("n_azimuthal", self.n_azimuthal),
            ("radial_nodes", self.radial_nodes),
        ] {
            if n < 2 {
                return bad(format!("{name} must be >= 2, got {n}"));
            }
        }
        if !(self.k_max > 1.0 && self.k_max.is_finite()) {
            return bad(format!("k_max must be > 1, got {}", self.k_max));
        }
        if !(self.omega_cutoff > 1.0 && self.omega_cutoff.is_finite()) {
            return bad(format!(
                "omega_cutoff must be > 1, got {}",
                self.omega_cutoff
            ));
        }
        if !(self.pv_window > 0.0 && self.pv_window < 0.5) {
            return bad(format!(
                "pv_window must lie in (0, 0.5), got {}",
                self.pv_window
            ));
        }
        if !(self.radial_tolerance > 0.0 && self.radial_tolerance < 1e-2) {
            return bad(format!(
                "radial_tolerance must lie in (0, 1e-2), got {}",
                self.radial_tolerance
            ));
        }
        Ok(())
    }

    /// Every node count doubled.
    pub fn refined(&self) -> Self {
        Self {
            n_polar: 2 * self.n_polar,
            n_azimuthal: 2 * self.n_azimuthal,
            radial_nodes: 2 * self.radial_nodes,
            ..*self
        }
    }

    fn coarse(&self) -> Self {
        Self {
            n_polar: (self.n_polar / 2).max(2),
            n_azimuthal: (self.n_azimuthal / 2).max(2),
            radial_nodes: (self.radial_nodes / 2).max(2),
            ..*self
        }
    }

    pub(crate) fn radial_rule(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let order = self.radial_nodes.min(16);
        let panels = self.radial_nodes.div_ceil(order);
        composite_gauss_legendre(a, b, panels, order)
    }

    fn adaptive(&self) -> AdaptiveTolerance {
        AdaptiveTolerance {
            relative: self.radial_tolerance,
            ..AdaptiveTolerance::default()
        }
    }
}

/// Level shift used inside the resonance condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ShiftMode {
    /// `δω = 0`; appropriate at weak coupling.
    #[default]
    Zero,
    Fixed(f64),
    /// Iterate the level shift to a fixed point first.
    SelfConsistent,
}

/// Treatment of the spinor overlap factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinorMode {
    /// Constant factor 2, as for equal velocities before and after emission.
    #[default]
    EqualVelocity,
    /// Full overlap factor with the recoil velocity after emission.
    Exact,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionOptions {
    pub shift_mode: ShiftMode,
    pub spinor: SpinorMode,
}

impl From<ShiftMode> for EmissionOptions {
    fn from(shift_mode: ShiftMode) -> Self {
        Self {
            shift_mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounts {
    pub polar: usize,
    pub azimuthal: usize,
    /// Integrand evaluations per angular direction, summed over directions.
    pub radial_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionResult {
    /// Decay rate in units of the scaled frequency.
    pub gamma_total: f64,
    /// Per-term contributions; `gamma_total` is their sum in field order.
    pub gamma_terms: RoentgenBracket,
    /// Level shift, when it was computed.
    pub lamb_shift: Option<f64>,
    /// Shift inserted into the resonance condition.
    pub delta_omega_used: f64,
    pub omega_cutoff: f64,
    /// Relative error estimate of `gamma_total`.
    pub quadrature_error_estimate: f64,
    pub node_counts: NodeCounts,
    pub shift_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambShift {
    pub value: f64,
    /// Absolute error estimate.
    pub error_estimate: f64,
    pub omega_cutoff: f64,
    pub delta_omega_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistentShift {
    pub delta_omega: f64,
    pub gamma: f64,
    pub iterations: usize,
    /// Iterates `δω₁, δω₂, …` (the seed `δω₀ = 0` is omitted).
    pub history: Vec<f64>,
}

/// Orthonormal frame whose third axis is the velocity direction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    e1: Vec3,
    e2: Vec3,
    e3: Vec3,
}

impl Frame {
    pub(crate) fn along(v: &Vec3) -> Self {
        let e3 = if v.norm() > 0.0 {
            v.normalize()
        } else {
            Vec3::z()
        };
        let trial = if e3.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let e1 = (trial - e3 * e3.dot(&trial)).normalize();
        let e2 = e3.cross(&e1);
        Self { e1, e2, e3 }
    }
}

/// One polar node with its azimuthal ring of directions. `weight` includes
/// the Gauss–Legendre weight, the aberration Jacobian and the azimuthal
/// weight `2π/n_az`.
#[derive(Debug, Clone)]
pub(crate) struct PolarNode {
    /// Laboratory cosine to the velocity.
    pub x: f64,
    pub weight: f64,
    pub directions: Vec<Vec3>,
}

pub(crate) fn polar_nodes(frame: &Frame, beta: f64, n_polar: usize, n_az: usize) -> Vec<PolarNode> {
    let az_weight = 2.0 * PI / n_az as f64;
    gauss_legendre(n_polar)
        .into_iter()
        .map(|(u, w)| {
            let (x, dx) = aberration_map(u, beta);
            let s = (1.0 - x * x).max(0.0).sqrt();
            let directions = (0..n_az)
                .map(|j| {
                    let phi = az_weight * (j as f64 + 0.5);
                    frame.e3 * x + (frame.e1 * phi.cos() + frame.e2 * phi.sin()) * s
                })
                .collect();
            PolarNode {
                x,
                weight: w * dx * az_weight,
                directions,
            }
        })
        .collect()
}

/// Everything about the atom that the integrands need.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Emitter {
    pub dipole: Vec3,
    pub velocity: Vec3,
    pub beta: f64,
    pub gamma: f64,
    pub mass: f64,
    /// `ω_A/γ − δω`.
    pub omega0: f64,
    pub spinor: SpinorMode,
    pub frame: Frame,
}

impl Emitter {
    pub(crate) fn new(atom: &AtomState, delta_omega: f64, spinor: SpinorMode) -> Result<Self> {
        atom.validate()?;
        Ok(Self {
            dipole: atom.lab_dipole()?,
            velocity: atom.velocity,
            beta: atom.velocity.norm(),
            gamma: atom.gamma()?,
            mass: atom.mass,
            omega0: resonance_frequency(atom, delta_omega, &Vec3::zeros())?,
            spinor,
            frame: Frame::along(&atom.velocity),
        })
    }

    /// `S/2`.
    pub(crate) fn spinor_weight(&self, k: &Vec3) -> Result<f64> {
        match self.spinor {
            SpinorMode::EqualVelocity => Ok(1.0),
            SpinorMode::Exact => {
                let v2 = recoil_velocity(&self.velocity, k, self.gamma, self.mass);
                Ok(0.5 * spinor_overlap_factor(&self.velocity, &v2)?)
            }
        }
    }

    /// Bracket times `S/2`.
    pub(crate) fn terms(&self, k: &Vec3, omega: f64, im_g: &RealTensor3) -> Result<[f64; 4]> {
        let b = roentgen_bracket(
            &self.dipole,
            &self.velocity,
            k,
            omega,
            im_g,
            self.mass,
            self.gamma,
        );
        Ok(scale(b.as_array(), self.spinor_weight(k)?))
    }

    /// `Σ_φ w_φ (S/2) B(k k̂_φ, ω)` over the ring of a polar node; `k_mag`
    /// is the radius.
    pub(crate) fn ring_sum(
        &self,
        source: &GreenSource,
        node: &PolarNode,
        k_mag: f64,
        omega: f64,
    ) -> Result<[f64; 4]> {
        let mut acc = [0.0; 4];
        match source {
            GreenSource::SmoothBulk(m) => {
                let eps = m.permittivity(omega)?;
                let mu = m.permeability(omega)?;
                let (gt, gl) = green_scalars(eps, mu, k_mag * k_mag, omega)?;
                for n in &node.directions {
                    let im_g = if k_mag > 0.0 {
                        transverse_projector(n) * gt.im + longitudinal_projector(n) * gl.im
                    } else {
                        RealTensor3::identity() * gl.im
                    };
                    acc = add(acc, self.terms(&(n * k_mag), omega, &im_g)?);
                }
            }
            GreenSource::Custom(g) => {
                for n in &node.directions {
                    let k = n * k_mag;
                    acc = add(acc, self.terms(&k, omega, &g.im_green(&k, omega)?)?);
                }
            }
            GreenSource::VacuumShell => {
                let shell = vacuum_im_green_shell(omega)?;
                for n in &node.directions {
                    acc = add(acc, self.terms(&(n * k_mag), omega, &shell.tensor(n))?);
                }
            }
        }
        Ok(acc)
    }

    /// Radius at which `ω*` reaches zero along a direction with cosine `x`.
    fn drop_radius(&self, x: f64) -> f64 {
        let slope = self.beta * x;
        if slope < 0.0 {
            self.omega0 / -slope
        } else {
            f64::INFINITY
        }
    }
}

const RATE_PREFACTOR: f64 = 2.0 / (8.0 * PI * PI * PI);
const SHIFT_PREFACTOR: f64 = 1.0 / (8.0 * PI * PI * PI * PI);

/// Decay-rate density in `d³k`: `(S/2)·2/(2π)³·B(k, ω*(k))`, zero where
/// `ω*(k) ≤ 0`. Smooth sources only.
pub fn decay_integrand(
    atom: &AtomState,
    source: &GreenSource,
    options: &EmissionOptions,
    delta_omega: f64,
    k: &Vec3,
) -> Result<RoentgenBracket> {
    let e = Emitter::new(atom, delta_omega, options.spinor)?;
    let omega = e.omega0 + e.velocity.dot(k);
    if omega <= 0.0 {
        return Ok(RoentgenBracket::default());
    }
    let im_g = source.im_green(k, omega)?;
    Ok(RoentgenBracket::from_array(scale(
        e.terms(k, omega, &im_g)?,
        RATE_PREFACTOR,
    )))
}

struct AngularSum {
    terms: [f64; 4],
    abs_error: f64,
    evaluations: usize,
}

fn collect_nodes(parts: Vec<([f64; 4], f64, usize)>) -> AngularSum {
    let values: Vec<[f64; 4]> = parts.iter().map(|p| p.0).collect();
    let errors: Vec<f64> = parts.iter().map(|p| p.1).collect();
    AngularSum {
        terms: pairwise_sum_array(&values),
        abs_error: pairwise_sum(&errors),
        evaluations: parts.iter().map(|p| p.2).sum(),
    }
}

fn rate_terms(e: &Emitter, source: &GreenSource, quad: &QuadratureSpec) -> Result<AngularSum> {
    let nodes = polar_nodes(&e.frame, e.beta, quad.n_polar, quad.n_azimuthal);
    if e.omega0 <= 0.0 {
        return Ok(AngularSum {
            terms: [0.0; 4],
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let parts: Vec<([f64; 4], f64, usize)> = nodes
        .par_iter()
        .map(|node| match source {
            GreenSource::VacuumShell => {
                let denom = 1.0 - e.beta * node.x;
                let k_res = e.omega0 / denom;
                let ring = e.ring_sum(source, node, k_res, k_res)?;
                let jac = RATE_PREFACTOR * k_res * k_res / denom * node.weight;
                Ok((scale(ring, jac), 0.0, node.directions.len()))
            }
            _ => rate_radial(e, source, quad, node),
        })
        .collect::<Result<_>>()?;
    Ok(collect_nodes(parts))
}

fn rate_radial(
    e: &Emitter,
    source: &GreenSource,
    quad: &QuadratureSpec,
    node: &PolarNode,
) -> Result<([f64; 4], f64, usize)> {
    let k_hi = quad.k_max.min(e.drop_radius(node.x));
    let slope = e.beta * node.x;
    let omega_at = |k: f64| e.omega0 + slope * k;
    let points = radial_breakpoints(source, 0.0, k_hi, |k| (k, omega_at(k)));
    let mut failure = None;
    let result = integrate_adaptive(
        |k| {
            let w = omega_at(k);
            if w <= 0.0 || failure.is_some() {
                return [0.0; 4];
            }
            match e.ring_sum(source, node, k, w) {
                Ok(v) => scale(v, k * k),
                Err(err) => {
                    failure = Some(err);
                    [0.0; 4]
                }
            }
        },
        &points,
        quad.adaptive(),
    )
    .map_err(|err| radial_failure(err, node.x, quad.k_max))?;
    if let Some(err) = failure {
        return Err(err);
    }
    let w = RATE_PREFACTOR * node.weight;
    Ok((
        scale(result.value, w),
        result.error * w.abs(),
        result.evaluations,
    ))
}

fn radial_failure(err: Error, x: f64, k_max: f64) -> Error {
    match err {
        Error::Convergence {
            message,
            error_estimate,
            tolerance,
        } => Error::Convergence {
            message: format!("radial integral at cosine {x:.6} up to k_max = {k_max}: {message}"),
            error_estimate,
            tolerance,
        },
        other => other,
    }
}

/// Breakpoints for a radial integral on `[a, b]`: the ends plus the
/// transverse polariton resonances `k² = Re(εμ)ω²` along the path
/// `k ↦ (k, ω(k))`, each bracketed by windows of a few resonance widths.
fn radial_breakpoints(
    source: &GreenSource,
    a: f64,
    b: f64,
    path: impl Fn(f64) -> (f64, f64),
) -> Vec<f64> {
    let mut points = vec![a, b];
    let dispersion = |t: f64| -> Option<num_complex::Complex64> {
        let (k, w) = path(t);
        if w <= 0.0 {
            return None;
        }
        source.index_squared(w).map(|n2| k * k - n2 * w * w)
    };
    const SCAN: usize = 128;
    let ts: Vec<f64> = (0..=SCAN)
        .map(|i| a + (b - a) * i as f64 / SCAN as f64)
        .collect();
    let vals: Vec<Option<f64>> = ts.iter().map(|&t| dispersion(t).map(|d| d.re)).collect();
    for i in 0..SCAN {
        let (Some(f0), Some(f1)) = (vals[i], vals[i + 1]) else {
            continue;
        };
        if f0.signum() == f1.signum() {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (ts[i], ts[i + 1], f0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let fm = dispersion(mid).map(|d| d.re).unwrap_or(flo);
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        points.push(root);
        // width from |Im D| / |dRe D/dk|
        let h = 1e-6 * (b - a);
        if let (Some(d0), Some(dp), Some(dm)) =
            (dispersion(root), dispersion(root + h), dispersion(root - h))
        {
            let slope = ((dp.re - dm.re) / (2.0 * h)).abs();
            if slope > 0.0 {
                let width = d0.im.abs() / slope;
                for m in [1.0, 4.0, 16.0] {
                    points.push(root - m * width);
                    points.push(root + m * width);
                }
            }
        }
    }
    points.retain(|p| *p >= a && *p <= b && p.is_finite());
    points.sort_by(|x, y| x.total_cmp(y));
    points.dedup();
    points
}

fn resolve_shift(
    atom: &AtomState,
    source: &GreenSource,
    quad: &QuadratureSpec,
    options: &EmissionOptions,
) -> Result<(f64, usize, Option<f64>)> {
    match options.shift_mode {
        ShiftMode::Zero => Ok((0.0, 0, None)),
        ShiftMode::Fixed(x) => Ok((x, 0, None)),
        ShiftMode::SelfConsistent => {
            let sc = self_consistent_shift(atom, source, quad, options.spinor)?;
            Ok((sc.delta_omega, sc.iterations, Some(sc.delta_omega)))
        }
    }
}

fn check_inputs(atom: &AtomState, source: &GreenSource, quad: &QuadratureSpec) -> Result<()> {
    atom.validate()?;
    quad.validate()?;
    source.validate()
}

/// Decay rate with the level shift in the resonance chosen by
/// `options.shift_mode`.
pub fn decay_rate(
    atom: &AtomState,
    source: &GreenSource,
    quad: &QuadratureSpec,
    options: EmissionOptions,
) -> Result<EmissionResult> {
    check_inputs(atom, source, quad)?;
    let (delta, iterations, shift) = resolve_shift(atom, source, quad, &options)?;
    let mut result = decay_rate_at(atom, source, quad, options.spinor, delta)?;
    result.lamb_shift = shift;
    result.shift_iterations = iterations;
    Ok(result)
}

/// Decay rate and level shift together.
pub fn emission(
    atom: &AtomState,
    source: &GreenSource,
    quad: &QuadratureSpec,
    options: EmissionOptions,
) -> Result<EmissionResult> {
    let mut result = decay_rate(atom, source, quad, options)?;
    if result.lamb_shift.is_none() {
        result.lamb_shift =
            Some(lamb_shift_at(atom, source, quad, options.spinor, result.delta_omega_used)?.value);
    }
    Ok(result)
}

fn decay_rate_at(
    atom: &AtomState,
    source: &GreenSource,
    quad: &QuadratureSpec,
    spinor: SpinorMode,
    delta: f64,
) -> Result<EmissionResult> {
    let e = Emitter::new(atom, delta, spinor)?;
    let fine = rate_terms(&e, source, quad)?;
    let coarse = rate_terms(&e, source, &quad.coarse())?;
    let terms = RoentgenBracket::from_array(fine.terms);
    let total = terms.total();
    let angular = (total - RoentgenBracket::from_array(coarse.terms).total()).abs();
    let error = if total != 0.0 {
        (angular + fine.abs_error) / total.abs()
    } else {
        angular + fine.abs_error
    };
    Ok(EmissionResult {
        gamma_total: total,
        gamma_terms: terms,
        lamb_shift: None,
        delta_omega_used: delta,
        omega_cutoff: quad.omega_cutoff,
        quadrature_error_estimate: error,
        node_counts: NodeCounts {
            polar: quad.n_polar,
            azimuthal: quad.n_azimuthal,
            radial_evaluations: fine.evaluations,
        },
        shift_iterations: 0,
    })
}

/// Level shift with a hard frequency cut-off `quad.omega_cutoff`.
pub fn lamb_shift(
    atom: &AtomState,
    source: &GreenSource,
    quad: &QuadratureSpec,
    options: EmissionOptions,
) -> Result<LambShift> {
    check_inputs(atom, source, quad)?;
    match options.shift_mode {
        ShiftMode::SelfConsistent => {
            let sc = self_consistent_shift(atom, source, quad, options.spinor)?;
            lamb_shift_at(atom, source, quad, options.spinor, sc.delta_omega)
        }
        ShiftMode::Zero => lamb_shift_at(atom, source, quad, options.spinor, 0.0),
        ShiftMode::Fixed(x) => lamb_shift_at(atom, source, quad, options.spinor, x),
    }
}

fn lamb_shift_at(
    atom: &AtomState,
    source: &GreenSource,
    quad: &QuadratureSpec,
    spinor: SpinorMode,
    delta: f64,
) -> Result<LambShift> {
    let e = Emitter::new(atom, delta, spinor)?;
    let cutoff = quad.omega_cutoff;
    if cutoff - e.omega0 < quad.pv_window * e.omega0.abs() {
        return Err(Error::Configuration(format!(
            "resonance {} lies within the principal-value window of the cut-off {cutoff}",
            e.omega0
        )));
    }
    let fine = shift_terms(&e, source, quad)?;
    let coarse = shift_terms(&e, source, &quad.coarse())?;
    Ok(LambShift {
        value: fine.0,
        error_estimate: (fine.0 - coarse.0).abs() + fine.1,
        omega_cutoff: cutoff,
        delta_omega_used: delta,
    })
}

/// `(value, absolute error)` of the level-shift integral.
fn shift_terms(e: &Emitter, source: &GreenSource, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    let nodes = polar_nodes(&e.frame, e.beta, quad.n_polar, quad.n_azimuthal);
    let cutoff = quad.omega_cutoff;
    let tol = quad.adaptive();
    let parts: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|node| -> Result<(f64, f64)> {
            let slope = e.beta * node.x;
            match source {
                GreenSource::VacuumShell => {
                    // ω = |k| on the shell; ω − ω* = (1 − βx)(k − k₀)
                    let denom = 1.0 - slope;
                    let pole = e.omega0 / denom;
                    let mut failure = None;
                    let r = principal_value(
                        |k| {
                            if k <= 0.0 || failure.is_some() {
                                return [0.0];
                            }
                            match e.ring_sum(source, node, k, k) {
                                Ok(v) => [v.iter().sum::<f64>() * k * k / denom],
                                Err(err) => {
                                    failure = Some(err);
                                    [0.0]
                                }
                            }
                        },
                        0.0,
                        cutoff,
                        pole,
                        quad.pv_window * pole,
                        tol,
                    )?;
                    if let Some(err) = failure {
                        return Err(err);
                    }
                    let w = SHIFT_PREFACTOR * node.weight;
                    Ok((r.value[0] * w, r.error * w.abs()))
                }
                _ => {
                    let mut values = Vec::new();
                    let mut errors = Vec::new();
                    for (k, wk) in quad.radial_rule(0.0, quad.k_max) {
                        let pole = e.omega0 + slope * k;
                        let mut failure = None;
                        let r = principal_value(
                            |w| {
                                if w <= 0.0 || failure.is_some() {
                                    return [0.0];
                                }
                                match e.ring_sum(source, node, k, w) {
                                    Ok(v) => [v.iter().sum::<f64>()],
                                    Err(err) => {
                                        failure = Some(err);
                                        [0.0]
                                    }
                                }
                            },
                            0.0,
                            cutoff,
                            pole,
                            quad.pv_window * pole.abs(),
                            tol,
                        )?;
                        if let Some(err) = failure {
                            return Err(err);
                        }
                        values.push(r.value[0] * wk * k * k);
                        errors.push(r.error * wk * k * k);
                    }
                    let w = SHIFT_PREFACTOR * node.weight;
                    Ok((pairwise_sum(&values) * w, pairwise_sum(&errors) * w.abs()))
                }
            }
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let errors: Vec<f64> = parts.iter().map(|p| p.1).collect();
    Ok((pairwise_sum(&values), pairwise_sum(&errors)))
}

/// Fixed-point iteration `δω_{n+1} = δω(δω_n)` from `δω₀ = 0`, stopping when
/// successive iterates agree to `10⁻⁸ ω_A`; at most 20 iterations.
pub fn self_consistent_shift(
    atom: &AtomState,
    source: &GreenSource,
    quad: &QuadratureSpec,
    spinor: SpinorMode,
) -> Result<SelfConsistentShift> {
    check_inputs(atom, source, quad)?;
    let tol = 1e-8 * atom.transition_frequency;
    let mut history = Vec::new();
    let mut current = 0.0;
    for iteration in 1..=20 {
        let next = lamb_shift_at(atom, source, quad, spinor, current)?.value;
        history.push(next);
        if !next.is_finite() {
            break;
        }
        if (next - current).abs() < tol {
            let gamma = decay_rate_at(atom, source, quad, spinor, next)?.gamma_total;
            return Ok(SelfConsistentShift {
                delta_omega: next,
                gamma,
                iterations: iteration,
                history,
            });
        }
        current = next;
    }
    Err(Error::ShiftNotConverged { history })
}

/// `Γ₀ = ω_A³|d|²/(3π)` in scaled units.
pub fn free_space_rate(atom: &AtomState) -> f64 {
    atom.free_space_rate()
}
