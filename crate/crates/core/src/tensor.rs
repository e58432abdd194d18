//! k-space dyadic Green tensors and the cross-product algebra of the
//! Röntgen interaction.
//!
//! Fourier convention: `f(k) = ∫d³r e^{−ik·r} f(r)`, inverse with `(2π)⁻³`.
//! For a homogeneous medium the Helmholtz operator
//! `∇×μ⁻¹∇× − ω²ε` becomes `μ⁻¹(k²I − kk) − ω²ε` and inverts to
//!
//! ```text
//! G(k, ω) = g_T (I − k̂k̂) + g_L k̂k̂,   g_T = μ/(k² − εμω²),   g_L = −1/(εω²).
//! ```
//!
//! In vacuum `Im g_T = π δ(k² − ω²)` collapses onto the light-cone shell
//! `|k| = ω` with weight `π/(2ω)` per unit radial length, which is what
//! [`vacuum_im_green_shell`] returns.

use nalgebra::{ComplexField, Matrix3};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use crate::material::DispersiveMedium;
use crate::{Error, Result, Vec3};

pub type ComplexTensor3 = Matrix3<Complex64>;
pub type RealTensor3 = Matrix3<f64>;

/// Overall normalization applied to the shell weight `π/(2ωc)`.
///
/// With `c = 1` that weight and the Jacobian of `δ(k² − ω²/c²)`,
/// `πc/(2ω)`, coincide; the vacuum calibration `Γ(0) = Γ₀` holds with this
/// constant equal to one.
pub const SHELL_NORMALIZATION: f64 = 1.0;

/// A photon wave vector with cached magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveVector {
    components: Vec3,
    magnitude: f64,
}

impl WaveVector {
    pub fn new(components: Vec3) -> Self {
        Self {
            components,
            magnitude: components.norm(),
        }
    }

    pub fn from_polar(magnitude: f64, direction: &Vec3) -> Self {
        Self {
            components: direction * magnitude,
            magnitude,
        }
    }

    pub fn components(&self) -> &Vec3 {
        &self.components
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    /// Unit direction, `None` for the zero vector.
    pub fn direction(&self) -> Option<Vec3> {
        (self.magnitude > 0.0).then(|| self.components / self.magnitude)
    }
}

/// `k̂k̂` for a unit vector.
pub fn longitudinal_projector(direction: &Vec3) -> RealTensor3 {
    direction * direction.transpose()
}

/// `I − k̂k̂` for a unit vector.
pub fn transverse_projector(direction: &Vec3) -> RealTensor3 {
    RealTensor3::identity() - longitudinal_projector(direction)
}

/// Homogeneous-medium Green tensor split into its transverse and
/// longitudinal blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkGreen {
    pub transverse: Complex64,
    pub longitudinal: Complex64,
    /// `None` at `k = 0`, where both blocks coincide.
    pub direction: Option<Vec3>,
}

impl BulkGreen {
    pub fn tensor(&self) -> ComplexTensor3 {
        match self.direction {
            Some(n) => {
                let l = longitudinal_projector(&n).map(Complex64::from);
                let t = transverse_projector(&n).map(Complex64::from);
                t * self.transverse + l * self.longitudinal
            }
            None => ComplexTensor3::identity() * self.transverse,
        }
    }

    /// `Im G`, real and symmetric.
    pub fn im_tensor(&self) -> RealTensor3 {
        match self.direction {
            Some(n) => {
                transverse_projector(&n) * self.transverse.im
                    + longitudinal_projector(&n) * self.longitudinal.im
            }
            None => RealTensor3::identity() * self.transverse.im,
        }
    }
}

/// Transverse and longitudinal Green scalars for given `ε`, `μ`.
pub fn green_scalars(
    eps: Complex64,
    mu: Complex64,
    k_squared: f64,
    omega: f64,
) -> Result<(Complex64, Complex64)> {
    let den = k_squared - eps * mu * omega * omega;
    if den == Complex64::new(0.0, 0.0) {
        return Err(Error::Singular(format!(
            "k² = εμω² exactly at k² = {k_squared}, ω = {omega}"
        )));
    }
    let eps_w2 = eps * omega * omega;
    if eps_w2 == Complex64::new(0.0, 0.0) {
        return Err(Error::Singular(format!("ε(ω) = 0 exactly at ω = {omega}")));
    }
    Ok((mu / den, -1.0 / eps_w2))
}

pub fn bulk_green_k(medium: &DispersiveMedium, k: &WaveVector, omega: f64) -> Result<BulkGreen> {
    let eps = medium.permittivity(omega)?;
    let mu = medium.permeability(omega)?;
    let (transverse, longitudinal) = green_scalars(eps, mu, k.magnitude() * k.magnitude(), omega)?;
    let direction = k.direction();
    // at k = 0 the two blocks agree and G is isotropic
    let transverse = if direction.is_some() {
        transverse
    } else {
        longitudinal
    };
    Ok(BulkGreen {
        transverse,
        longitudinal,
        direction,
    })
}

/// Shell-delta form of the vacuum `Im G`: `W(k̂) δ(|k| − radius)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellWeight {
    pub radius: f64,
    /// Scalar multiplying the transverse projector, `π/(2ω)` times
    /// [`SHELL_NORMALIZATION`].
    pub strength: f64,
}

impl ShellWeight {
    pub fn tensor(&self, direction: &Vec3) -> RealTensor3 {
        transverse_projector(direction) * self.strength
    }
}

pub fn vacuum_im_green_shell(omega: f64) -> Result<ShellWeight> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::domain(format!(
            "frequency must be positive, got {omega}"
        )));
    }
    Ok(ShellWeight {
        radius: omega,
        strength: SHELL_NORMALIZATION * PI / (2.0 * omega),
    })
}

fn cross_matrix<N: ComplexField<RealField = f64> + Copy>(a: &Vec3) -> Matrix3<N> {
    let z = N::zero();
    let [x, y, w] = [N::from_real(a.x), N::from_real(a.y), N::from_real(a.z)];
    Matrix3::new(z, -w, y, w, z, -x, -y, x, z)
}

/// `(a × T)_{ij} = ε_{ikl} a_k T_{lj}`.
pub fn left_cross<N: ComplexField<RealField = f64> + Copy>(a: &Vec3, t: &Matrix3<N>) -> Matrix3<N> {
    cross_matrix::<N>(a) * t
}

/// `(T × a)_{ij} = T_{ik} ε_{kjl} a_l`.
pub fn right_cross<N: ComplexField<RealField = f64> + Copy>(
    t: &Matrix3<N>,
    a: &Vec3,
) -> Matrix3<N> {
    -(t * cross_matrix::<N>(a))
}

/// Relative residual of the k-space diagonal form of the Green-tensor
/// integral identity, `Im g = |g|²(ω² Im ε + k² Im μ/|μ|²)` for the
/// transverse block and `Im g_L = |g_L|² ω² Im ε` for the longitudinal one.
pub fn fluctuation_identity_residual(
    medium: &DispersiveMedium,
    k: &WaveVector,
    omega: f64,
) -> Result<f64> {
    let eps = medium.permittivity(omega)?;
    let mu = medium.permeability(omega)?;
    fluctuation_identity_residual_for(eps, mu, k.magnitude(), omega)
}

/// As [`fluctuation_identity_residual`] for explicit `ε`, `μ`.
pub fn fluctuation_identity_residual_for(
    eps: Complex64,
    mu: Complex64,
    k: f64,
    omega: f64,
) -> Result<f64> {
    let (gt, gl) = green_scalars(eps, mu, k * k, omega)?;
    let w2 = omega * omega;
    let rhs_t = gt.norm_sqr() * (w2 * eps.im + k * k * mu.im / mu.norm_sqr());
    let rhs_l = gl.norm_sqr() * w2 * eps.im;
    let rel = |lhs: f64, rhs: f64| {
        if lhs == 0.0 && rhs == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / lhs.abs()
        }
    };
    Ok(rel(gt.im, rhs_t).max(rel(gl.im, rhs_l)))
}

/// User-supplied smooth k-space `Im G(k, ω)`.
pub trait SmoothGreen: Send + Sync + Debug {
    /// Real symmetric `Im G` at wave vector `k` and frequency `ω > 0`.
    fn im_green(&self, k: &Vec3, omega: f64) -> Result<RealTensor3>;

    /// `εμ(ω)`, if the tensor has a transverse polariton pole; used only to
    /// place quadrature breakpoints.
    fn index_squared(&self, _omega: f64) -> Option<Complex64> {
        None
    }
}

/// Source of `Im G` for the emission and dynamics integrals.
#[derive(Debug, Clone)]
pub enum GreenSource {
    /// Homogeneous absorbing bulk medium, sampled pointwise in `(k, ω)`.
    SmoothBulk(DispersiveMedium),
    /// Vacuum; `Im G` is a shell delta and is collapsed analytically.
    VacuumShell,
    /// Extension point for other smooth tensors.
    Custom(Arc<dyn SmoothGreen>),
}

impl GreenSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            GreenSource::SmoothBulk(m) if !m.is_lossy() => Err(Error::Model(
                "bulk Green tensor needs an absorbing medium; use the vacuum shell for free space"
                    .into(),
            )),
            _ => Ok(()),
        }
    }

    /// Pointwise `Im G`; the vacuum shell has no pointwise value.
    pub fn im_green(&self, k: &Vec3, omega: f64) -> Result<RealTensor3> {
        match self {
            GreenSource::SmoothBulk(m) => {
                Ok(bulk_green_k(m, &WaveVector::new(*k), omega)?.im_tensor())
            }
            GreenSource::Custom(g) => g.im_green(k, omega),
            GreenSource::VacuumShell => Err(Error::Configuration(
                "the vacuum Green tensor is a shell delta and has no pointwise value".into(),
            )),
        }
    }

    pub(crate) fn index_squared(&self, omega: f64) -> Option<Complex64> {
        match self {
            GreenSource::SmoothBulk(m) => {
                Some(m.permittivity(omega).ok()? * m.permeability(omega).ok()?)
            }
            GreenSource::Custom(g) => g.index_squared(omega),
            GreenSource::VacuumShell => None,
        }
    }
}
