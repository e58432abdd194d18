//! Spontaneous emission of a relativistically moving two-level atom in
//! dispersive, absorbing magnetodielectric media.
//!
//! Everything in this crate works in scaled units: `c = ħ = ε₀ = 1` and
//! frequencies are usually measured in units of the atomic transition
//! frequency. [`units::UnitScale`] converts to and from SI.
//!
//! The modules build on each other bottom-up:
//!
//! * [`material`]: Lorentz-pole permittivity and permeability, coupling
//!   functions and a Kramers–Kronig audit.
//! * [`tensor`]: k-space dyadic Green tensors and the cross-product algebra
//!   of the Röntgen interaction.
//! * [`kinematics`]: Lorentz factor, Dirac energies, recoil and Doppler shift.
//! * [`emission`]: decay rate and level shift in the Markov limit.
//! * [`dynamics`]: memory kernel and the non-Markovian amplitude equation.

pub mod dynamics;
pub mod emission;
mod error;
pub mod kinematics;
pub mod material;
pub mod quadrature;
pub mod tensor;
pub mod units;

pub use error::{Error, Result};

/// Real 3-vector used for velocities, dipoles and wave vectors.
pub type Vec3 = nalgebra::Vector3<f64>;
