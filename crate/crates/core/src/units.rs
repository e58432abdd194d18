//! SI constants and the scaled unit system used internally.
//!
//! Internally `c = ħ = ε₀ = 1` and the transition frequency `ω_A = 1`, so a
//! time unit is `1/ω_A`, a length unit is `c/ω_A`, and a dipole moment `d`
//! maps to `d ω_A / sqrt(ε₀ ħ c³)`. In these units the free-space rate is
//! `Γ₀ = |d|²/(3π)`.

use serde::{Deserialize, Serialize};

use crate::Vec3;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Conversion between SI quantities and the scaled units of the crate,
/// anchored at one transition frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScale {
    /// Transition frequency ω_A in rad/s.
    pub omega_a: f64,
}

/// Multiplicative SI-per-scaled-unit factors, recorded with every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionFactors {
    pub frequency_rad_per_s: f64,
    pub time_s: f64,
    pub wavenumber_per_m: f64,
    pub velocity_m_per_s: f64,
    pub mass_kg: f64,
    pub dipole_c_m: f64,
    pub pole_strength_rad2_per_s2: f64,
}

impl UnitScale {
    pub fn new(omega_a: f64) -> Self {
        Self { omega_a }
    }

    pub fn factors(&self) -> ConversionFactors {
        ConversionFactors {
            frequency_rad_per_s: self.omega_a,
            time_s: 1.0 / self.omega_a,
            wavenumber_per_m: self.omega_a / SPEED_OF_LIGHT,
            velocity_m_per_s: SPEED_OF_LIGHT,
            mass_kg: HBAR * self.omega_a / (SPEED_OF_LIGHT * SPEED_OF_LIGHT),
            dipole_c_m: (EPSILON_0 * HBAR * SPEED_OF_LIGHT.powi(3)).sqrt() / self.omega_a,
            pole_strength_rad2_per_s2: self.omega_a * self.omega_a,
        }
    }

    pub fn frequency_to_scaled(&self, omega: f64) -> f64 {
        omega / self.omega_a
    }

    pub fn frequency_to_si(&self, omega: f64) -> f64 {
        omega * self.omega_a
    }

    pub fn time_to_scaled(&self, t: f64) -> f64 {
        t * self.omega_a
    }

    pub fn time_to_si(&self, t: f64) -> f64 {
        t / self.omega_a
    }

    pub fn wavenumber_to_scaled(&self, k: f64) -> f64 {
        k * SPEED_OF_LIGHT / self.omega_a
    }

    pub fn wavenumber_to_si(&self, k: f64) -> f64 {
        k * self.omega_a / SPEED_OF_LIGHT
    }

    pub fn velocity_to_scaled(&self, v: &Vec3) -> Vec3 {
        v / SPEED_OF_LIGHT
    }

    pub fn velocity_to_si(&self, beta: &Vec3) -> Vec3 {
        beta * SPEED_OF_LIGHT
    }

    /// `M c² / (ħ ω_A)`.
    pub fn mass_to_scaled(&self, mass: f64) -> f64 {
        mass / self.factors().mass_kg
    }

    pub fn mass_to_si(&self, mass: f64) -> f64 {
        mass * self.factors().mass_kg
    }

    pub fn dipole_to_scaled(&self, d: &Vec3) -> Vec3 {
        d / self.factors().dipole_c_m
    }

    pub fn dipole_to_si(&self, d: &Vec3) -> Vec3 {
        d * self.factors().dipole_c_m
    }

    /// Lorentz-pole oscillator strengths carry (rad/s)².
    pub fn strength_to_scaled(&self, s: f64) -> f64 {
        s / (self.omega_a * self.omega_a)
    }

    pub fn strength_to_si(&self, s: f64) -> f64 {
        s * self.omega_a * self.omega_a
    }
}

/// Free-space decay rate `ω³|d|²/(3π ε₀ ħ c³)` in SI units.
pub fn free_space_rate_si(omega_a: f64, dipole: &Vec3) -> f64 {
    omega_a.powi(3) * dipole.norm_squared()
        / (3.0 * std::f64::consts::PI * EPSILON_0 * HBAR * SPEED_OF_LIGHT.powi(3))
}
