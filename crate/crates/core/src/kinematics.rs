//! Relativistic centre-of-mass kinematics in scaled units (`c = ħ = 1`).
//!
//! The Lorentz factor is the standard `γ = 1/sqrt(1 − v²) ≥ 1`, so that
//! `ω_A/γ` is a time-dilated frequency and `Γ₀/γ` a slowed-down rate.

use serde::{Deserialize, Serialize};

use crate::units::UnitScale;
use crate::{Error, Result, Vec3};

fn check_subluminal(v: &Vec3, name: &str) -> Result<f64> {
    let v2 = v.norm_squared();
    if v2 < 1.0 && v2.is_finite() {
        Ok(v2)
    } else {
        Err(Error::domain(format!(
            "{name} must be below the speed of light, |v|/c = {}",
            v2.sqrt()
        )))
    }
}

pub fn lorentz_gamma(v: &Vec3) -> Result<f64> {
    let v2 = check_subluminal(v, "velocity")?;
    Ok(1.0 / (1.0 - v2).sqrt())
}

/// Positive-branch Dirac energy `sqrt(q² + M²)`.
pub fn dirac_energy(q: &Vec3, mass: f64) -> f64 {
    q.norm().hypot(mass)
}

/// `|E_q| − |E_{q−k}|` without cancellation:
/// `(2q·k − k²)/(|E_q| + |E_{q−k}|)`.
///
/// The numerator is accumulated with error-free products and sums, so it
/// stays accurate when the components of `q·k` cancel each other.
pub fn energy_difference_stable(q: &Vec3, k: &Vec3, mass: f64) -> f64 {
    let mut sum = 0.0;
    let mut err = 0.0;
    for i in 0..3 {
        for (a, b) in [(2.0 * q[i], k[i]), (-k[i], k[i])] {
            let p = a * b;
            let p_err = a.mul_add(b, -p);
            let t = sum + p;
            let z = t - sum;
            err += (sum - (t - z)) + (p - z) + p_err;
            sum = t;
        }
    }
    (sum + err) / (dirac_energy(q, mass) + dirac_energy(&(q - k), mass))
}

/// `1 + sqrt((1 − v₁²)(1 − v₂²)) + v₁·v₂`, the trace of the spinor overlap
/// before and after emission.
pub fn spinor_overlap_factor(v1: &Vec3, v2: &Vec3) -> Result<f64> {
    check_subluminal(v1, "velocity before emission")?;
    check_subluminal(v2, "velocity after emission")?;
    // Written as 2 + (sqrt(a₁a₂) − b) with b = 1 − v₁·v₂: for v₁ = v₂ both
    // a's equal b bit for bit and sqrt(a·a) = a, so the value is exactly 2.
    let a1 = 1.0 - v1.dot(v1);
    let a2 = 1.0 - v2.dot(v2);
    let b = 1.0 - v1.dot(v2);
    Ok(2.0 + ((a1 * a2).sqrt() - b))
}

/// Two-level atom with a centre-of-mass velocity, in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub transition_frequency: f64,
    /// Transition dipole in the atom's rest frame.
    pub dipole: Vec3,
    pub mass: f64,
    /// Velocity in units of `c`.
    pub velocity: Vec3,
}

impl AtomState {
    pub fn new(transition_frequency: f64, dipole: Vec3, mass: f64, velocity: Vec3) -> Result<Self> {
        let atom = Self {
            transition_frequency,
            dipole,
            mass,
            velocity,
        };
        atom.validate()?;
        Ok(atom)
    }

    /// Builds the scaled atom from SI inputs, anchoring the unit system at
    /// the transition frequency.
    pub fn from_si(
        omega_a: f64,
        dipole: Vec3,
        mass: f64,
        velocity: Vec3,
    ) -> Result<(Self, UnitScale)> {
        if !(omega_a > 0.0 && omega_a.is_finite()) {
            return Err(Error::domain(format!(
                "transition frequency must be > 0, got {omega_a}"
            )));
        }
        let scale = UnitScale::new(omega_a);
        let atom = Self::new(
            1.0,
            scale.dipole_to_scaled(&dipole),
            scale.mass_to_scaled(mass),
            scale.velocity_to_scaled(&velocity),
        )?;
        Ok((atom, scale))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.transition_frequency > 0.0 && self.transition_frequency.is_finite()) {
            return Err(Error::domain("transition frequency must be > 0"));
        }
        if !(self.mass > 0.0) {
            return Err(Error::domain("mass must be > 0"));
        }
        if !(self.dipole.norm() > 0.0 && self.dipole.iter().all(|c| c.is_finite())) {
            return Err(Error::domain("dipole must be nonzero and finite"));
        }
        check_subluminal(&self.velocity, "velocity")?;
        Ok(())
    }

    pub fn gamma(&self) -> Result<f64> {
        lorentz_gamma(&self.velocity)
    }

    pub fn with_velocity(&self, velocity: Vec3) -> Self {
        Self { velocity, ..*self }
    }

    pub fn with_dipole(&self, dipole: Vec3) -> Self {
        Self { dipole, ..*self }
    }

    /// Canonical momentum `q = γMv`.
    pub fn momentum(&self) -> Result<Vec3> {
        Ok(self.velocity * (self.gamma()? * self.mass))
    }

    /// Laboratory-frame dipole: the component along the velocity is
    /// contracted by `1/γ`, `d = d₀ − γ/(γ+1) v (v·d₀)`.
    pub fn lab_dipole(&self) -> Result<Vec3> {
        let g = self.gamma()?;
        Ok(self.dipole - self.velocity * (g / (g + 1.0) * self.velocity.dot(&self.dipole)))
    }

    /// Free-space rate `ω_A³|d₀|²/(3π)` of the atom at rest.
    pub fn free_space_rate(&self) -> f64 {
        self.transition_frequency.powi(3) * self.dipole.norm_squared()
            / (3.0 * std::f64::consts::PI)
    }
}

/// `ω* = ω_A/γ − δω + v·k`. May be non-positive, in which case the mode
/// cannot be resonant.
pub fn resonance_frequency(atom: &AtomState, delta_omega: f64, k: &Vec3) -> Result<f64> {
    Ok(atom.transition_frequency / atom.gamma()? - delta_omega + atom.velocity.dot(k))
}

/// Velocity after emitting a photon of wave vector `k`, `v − k/(γM)`.
pub fn recoil_velocity(velocity: &Vec3, k: &Vec3, gamma: f64, mass: f64) -> Vec3 {
    velocity - k / (gamma * mass)
}

/// Kinematic data of one emission event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionKinematics {
    pub wave_vector: Vec3,
    pub velocity_before: Vec3,
    pub velocity_after: Vec3,
    pub resonance: f64,
}

impl EmissionKinematics {
    pub fn new(atom: &AtomState, delta_omega: f64, k: &Vec3) -> Result<Self> {
        let gamma = atom.gamma()?;
        Ok(Self {
            wave_vector: *k,
            velocity_before: atom.velocity,
            velocity_after: recoil_velocity(&atom.velocity, k, gamma, atom.mass),
            resonance: resonance_frequency(atom, delta_omega, k)?,
        })
    }

    pub fn spinor_factor(&self) -> Result<f64> {
        spinor_overlap_factor(&self.velocity_before, &self.velocity_after)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vec_strategy(max: f64) -> impl Strategy<Value = Vec3> {
        (-max..max, -max..max, -max..max).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn subluminal() -> impl Strategy<Value = Vec3> {
        (vec_strategy(1.0), 0.0f64..0.999_999).prop_map(|(d, s)| {
            let n = d.norm();
            if n == 0.0 {
                Vec3::zeros()
            } else {
                d / n * s
            }
        })
    }

    fn atom(v: Vec3) -> AtomState {
        AtomState::new(1.0, Vec3::x(), 1e9, v).unwrap()
    }

    #[test]
    fn lorentz_gamma_examples() {
        assert_eq!(lorentz_gamma(&Vec3::zeros()).unwrap(), 1.0);
        assert_relative_eq!(
            lorentz_gamma(&Vec3::new(0.6, 0.0, 0.0)).unwrap(),
            1.25,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            lorentz_gamma(&Vec3::new(0.0, 0.99, 0.0)).unwrap(),
            7.088_812_050_083_354,
            max_relative = 1e-13
        );
        assert!(lorentz_gamma(&Vec3::new(1.0, 0.0, 0.0)).is_err());
        assert!(lorentz_gamma(&Vec3::new(0.8, 0.7, 0.0)).is_err());
    }

    #[test]
    fn dirac_energy_examples() {
        assert_eq!(dirac_energy(&Vec3::zeros(), 3.0), 3.0);
        let q = Vec3::new(0.0, 3e7, 4e7);
        assert_relative_eq!(dirac_energy(&q, 1.0), 5e7, max_relative = 1e-6);
        let q = Vec3::new(0.3, -2.0, 1.1);
        assert_eq!(dirac_energy(&q, 2.5), dirac_energy(&-q, 2.5));
    }

    #[test]
    fn energy_difference_examples() {
        let q = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(energy_difference_stable(&q, &Vec3::zeros(), 10.0), 0.0);
        let k = Vec3::new(0.0, 0.0, 1.5);
        let m = 4.0;
        let de = energy_difference_stable(&Vec3::zeros(), &k, m);
        let expected = -k.norm_squared() / (m + (k.norm_squared() + m * m).sqrt());
        assert!(de < 0.0);
        assert_relative_eq!(de, expected, max_relative = 1e-15);
    }

    #[test]
    fn spinor_factor_examples() {
        assert_eq!(
            spinor_overlap_factor(&Vec3::zeros(), &Vec3::zeros()).unwrap(),
            2.0
        );
        let v = Vec3::new(0.9, 0.0, 0.0);
        assert_eq!(spinor_overlap_factor(&v, &v).unwrap(), 2.0);
        let f =
            spinor_overlap_factor(&Vec3::new(0.5, 0.0, 0.0), &Vec3::new(0.0, 0.5, 0.0)).unwrap();
        assert_eq!(f, 1.75);
        assert!(spinor_overlap_factor(&Vec3::new(1.0, 0.0, 0.0), &Vec3::zeros()).is_err());
    }

    #[test]
    fn resonance_examples() {
        assert_eq!(
            resonance_frequency(&atom(Vec3::zeros()), 0.0, &Vec3::new(0.3, 0.2, 1.0)).unwrap(),
            1.0
        );
        let a = atom(Vec3::new(0.6, 0.0, 0.0));
        let r = resonance_frequency(&a, 0.0, &Vec3::new(0.0, 2.0, 0.0)).unwrap();
        assert_relative_eq!(r, 0.8, max_relative = 1e-15);
        let a = atom(Vec3::new(0.5, 0.0, 0.0));
        let r = resonance_frequency(&a, 0.0, &Vec3::x()).unwrap();
        assert_relative_eq!(r, 1.0 / a.gamma().unwrap() + 0.5, max_relative = 1e-15);
    }

    #[test]
    fn lab_dipole_contracts_parallel_component() {
        let a =
            AtomState::new(1.0, Vec3::new(1.0, 2.0, 0.0), 1.0, Vec3::new(0.6, 0.0, 0.0)).unwrap();
        let d = a.lab_dipole().unwrap();
        assert_relative_eq!(d.x, 0.8, max_relative = 1e-15);
        assert_eq!(d.y, 2.0);
    }

    #[test]
    fn emission_kinematics_recoil() {
        let a = AtomState::new(1.0, Vec3::x(), 10.0, Vec3::new(0.6, 0.0, 0.0)).unwrap();
        let k = Vec3::new(1.0, 0.0, 0.0);
        let e = EmissionKinematics::new(&a, 0.0, &k).unwrap();
        assert_relative_eq!(e.velocity_after.x, 0.6 - 1.0 / 12.5, max_relative = 1e-15);
        assert!(e.spinor_factor().unwrap() < 2.0);
    }

    #[test]
    fn invalid_atoms_are_rejected() {
        assert!(AtomState::new(1.0, Vec3::x(), 1.0, Vec3::new(1.1, 0.0, 0.0)).is_err());
        assert!(AtomState::new(0.0, Vec3::x(), 1.0, Vec3::zeros()).is_err());
        assert!(AtomState::new(1.0, Vec3::zeros(), 1.0, Vec3::zeros()).is_err());
        assert!(AtomState::new(1.0, Vec3::x(), 0.0, Vec3::zeros()).is_err());
    }

    proptest! {
        #[test]
        fn spinor_factor_equal_velocities(v in subluminal()) {
            prop_assert_eq!(spinor_overlap_factor(&v, &v).unwrap(), 2.0);
        }

        #[test]
        fn spinor_factor_range(v1 in subluminal(), v2 in subluminal()) {
            let f = spinor_overlap_factor(&v1, &v2).unwrap();
            prop_assert!(f > 0.0 && f < 3.0);
        }

        #[test]
        fn energy_difference_antisymmetric(q in vec_strategy(50.0), k in vec_strategy(50.0), m in 0.1f64..100.0) {
            let forward = energy_difference_stable(&q, &k, m);
            let backward = energy_difference_stable(&(q - k), &(-k), m);
            // rounding of 2q·k − k² sets the scale
            let conditioning = (2.0 * q.dot(&k).abs() + k.norm_squared())
                / (dirac_energy(&q, m) + dirac_energy(&(q - k), m));
            prop_assert!((forward + backward).abs() <= 1e-14 * conditioning);
        }

        #[test]
        fn resonance_is_affine_in_k(v in subluminal(), k1 in vec_strategy(10.0), k2 in vec_strategy(10.0), dw in -0.1f64..0.1) {
            let a = atom(v);
            let r0 = resonance_frequency(&a, dw, &Vec3::zeros()).unwrap();
            let r1 = resonance_frequency(&a, dw, &k1).unwrap() - r0;
            let r2 = resonance_frequency(&a, dw, &k2).unwrap() - r0;
            let r12 = resonance_frequency(&a, dw, &(k1 + k2)).unwrap() - r0;
            prop_assert!((r12 - r1 - r2).abs() < 1e-12 * (1.0 + r1.abs() + r2.abs()));
        }
    }
}
