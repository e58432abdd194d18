//! End-to-end properties of the decay rate through the public API.

use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use rqed_core::emission::{decay_integrand, decay_rate, EmissionOptions, QuadratureSpec};
use rqed_core::kinematics::{lorentz_gamma, AtomState};
use rqed_core::material::presets;
use rqed_core::tensor::GreenSource;
use rqed_core::Vec3;

const MASS: f64 = 1e10;

fn unit(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    )
}

/// Plain Monte-Carlo estimate of `∫_{|k|<k_max} d³k` of the decay density,
/// returning (mean, standard error).
fn monte_carlo_rate(
    atom: &AtomState,
    source: &GreenSource,
    k_max: f64,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    const CHUNK: usize = 50_000;
    let options = EmissionOptions::default();
    let chunks = samples.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                // uniform in the ball by rejection from the cube
                let k = loop {
                    let k = Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    );
                    if k.norm_squared() <= 1.0 {
                        break k * k_max;
                    }
                };
                let f = decay_integrand(atom, source, &options, 0.0, &k)
                    .unwrap()
                    .total();
                s += f;
                s2 += f * f;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let volume = 4.0 / 3.0 * std::f64::consts::PI * k_max.powi(3);
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    (volume * mean, volume * (var / n).sqrt())
}

#[test]
fn dilation_law_on_a_velocity_sweep() {
    let q = QuadratureSpec::default();
    for i in 0..10 {
        let beta = 0.1 * i as f64;
        for d in [Vec3::z(), Vec3::x(), Vec3::new(1.0, 1.0, 1.0).normalize()] {
            let atom = AtomState::new(1.0, d * 0.02, MASS, Vec3::z() * beta).unwrap();
            let r = decay_rate(&atom, &GreenSource::VacuumShell, &q, Default::default()).unwrap();
            let product =
                r.gamma_total * lorentz_gamma(&atom.velocity).unwrap() / atom.free_space_rate();
            assert!((product - 1.0).abs() < 1e-9, "β={beta} d={d:?}: {product}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Γ·γ = Γ₀ for arbitrary directions of both the dipole and the motion.
    #[test]
    fn dilation_law_for_random_geometry(
        beta in 0.0f64..0.95,
        (tv, pv, td, pd) in (0.0f64..PI, 0.0f64..TAU, 0.0f64..PI, 0.0f64..TAU),
    ) {
        let atom = AtomState::new(1.0, unit(td, pd) * 0.03, MASS, unit(tv, pv) * beta).unwrap();
        let r = decay_rate(&atom, &GreenSource::VacuumShell, &QuadratureSpec::default(), Default::default()).unwrap();
        let product = r.gamma_total * atom.gamma().unwrap() / atom.free_space_rate();
        prop_assert!((product - 1.0).abs() < 1e-6, "{}", product);
    }
}

#[test]
fn dilation_in_an_absorbing_medium_is_not_universal() {
    // In a medium the rest frame is no longer equivalent to the lab frame,
    // so Γ·γ varies with velocity and orientation.
    let src = GreenSource::SmoothBulk(presets::lossy_dielectric());
    let q = QuadratureSpec::default();
    let product = |d: Vec3, beta: f64| {
        let atom = AtomState::new(1.0, d * 0.05, MASS, Vec3::z() * beta).unwrap();
        decay_rate(&atom, &src, &q, Default::default())
            .unwrap()
            .gamma_total
            * atom.gamma().unwrap()
    };
    let rest = product(Vec3::x(), 0.0);
    assert!((product(Vec3::z(), 0.0) / rest - 1.0).abs() < 1e-6);
    let par = product(Vec3::z(), 0.5);
    let perp = product(Vec3::x(), 0.5);
    assert!((par / rest - 1.0).abs() > 0.05);
    assert!((perp / par - 1.0).abs() > 0.1);
}

#[test]
fn orientation_sensitivity_exceeds_error_estimate() {
    let src = GreenSource::SmoothBulk(presets::lossy_magnetodielectric());
    let q = QuadratureSpec::default();
    let rate = |d: Vec3| {
        let atom = AtomState::new(1.0, d * 0.05, MASS, Vec3::z() * 0.5).unwrap();
        decay_rate(&atom, &src, &q, Default::default()).unwrap()
    };
    let (par, perp) = (rate(Vec3::z()), rate(Vec3::y()));
    let rel = (par.gamma_total - perp.gamma_total).abs() / perp.gamma_total;
    let err = par
        .quadrature_error_estimate
        .max(perp.quadrature_error_estimate);
    assert!(rel > 10.0 * err, "difference {rel}, error {err}");
}

#[test]
fn quadrature_agrees_with_monte_carlo_at_rest() {
    let src = GreenSource::SmoothBulk(presets::lossy_magnetodielectric());
    let atom = AtomState::new(1.0, Vec3::new(0.02, -0.01, 0.03), MASS, Vec3::zeros()).unwrap();
    let q = QuadratureSpec {
        k_max: 3.0,
        ..Default::default()
    };
    let r = decay_rate(&atom, &src, &q, Default::default()).unwrap();
    let (mc, sigma) = monte_carlo_rate(&atom, &src, q.k_max, 1_000_000, 17);
    assert!(
        (r.gamma_total - mc).abs() < 4.0 * sigma,
        "quadrature {} vs MC {mc} ± {sigma}",
        r.gamma_total
    );
    assert!(sigma < 0.02 * mc);
}

#[test]
fn quadrature_agrees_with_monte_carlo_in_motion() {
    let src = GreenSource::SmoothBulk(presets::lossy_dielectric());
    let atom = AtomState::new(
        1.0,
        Vec3::new(0.05, 0.0, 0.02),
        MASS,
        Vec3::new(0.0, 0.3, 0.6),
    )
    .unwrap();
    let q = QuadratureSpec::default();
    let r = decay_rate(&atom, &src, &q, Default::default()).unwrap();
    let (mc, sigma) = monte_carlo_rate(&atom, &src, q.k_max, 1_000_000, 23);
    assert!(
        (r.gamma_total - mc).abs() < 4.0 * sigma,
        "quadrature {} vs MC {mc} ± {sigma}",
        r.gamma_total
    );
}

#[test]
fn bulk_rate_converges_under_refinement() {
    let src = GreenSource::SmoothBulk(presets::lossy_magnetodielectric());
    let atom = AtomState::new(1.0, Vec3::x() * 0.05, MASS, Vec3::z() * 0.7).unwrap();
    let q = QuadratureSpec::default();
    let coarse = decay_rate(&atom, &src, &q, Default::default()).unwrap();
    let fine = decay_rate(&atom, &src, &q.refined(), Default::default()).unwrap();
    let change = (fine.gamma_total / coarse.gamma_total - 1.0).abs();
    assert!(
        change < coarse.quadrature_error_estimate,
        "{change} vs {}",
        coarse.quadrature_error_estimate
    );
}

#[test]
fn bulk_rate_grows_with_k_max_for_a_moving_atom() {
    // The Doppler-shifted resonance keeps sampling the absorptive
    // continuum at large |k|, so the moving-atom rate depends on the cutoff.
    let src = GreenSource::SmoothBulk(presets::lossy_dielectric());
    let atom = AtomState::new(1.0, Vec3::x() * 0.05, MASS, Vec3::z() * 0.5).unwrap();
    let rates: Vec<f64> = [2.0, 4.0, 8.0]
        .iter()
        .map(|&k_max| {
            let q = QuadratureSpec {
                k_max,
                ..Default::default()
            };
            decay_rate(&atom, &src, &q, Default::default())
                .unwrap()
                .gamma_total
        })
        .collect();
    assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
}
