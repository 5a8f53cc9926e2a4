//! Von Mises sampling by Best-Fisher rejection from a wrapped Cauchy
//! envelope. Phases are handled as unit complex numbers throughout.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Below this concentration the distribution is uniform to double precision.
const UNIFORM_LIMIT: f64 = 1e-8;

/// Draws one von Mises phase with the given mean direction (unit modulus)
/// and concentration kappa > 0.
pub fn sample_von_mises<R: Rng + ?Sized>(
    rng: &mut R,
    mean: Complex64,
    kappa: f64,
) -> Result<Complex64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must be finite and > 0")));
    }
    if (mean.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("mean direction must have unit modulus".into()));
    }
    if kappa < UNIFORM_LIMIT {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        return Ok(Complex64::from_polar(1.0, theta));
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let b = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (std::f64::consts::PI * u1).cos();
        let f = (1.0 + b * z) / (b + z);
        let c = kappa * (b - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let theta = if u3 > 0.5 { f.acos() } else { -f.acos() };
            return Ok(mean * Complex64::from_polar(1.0, theta));
        }
    }
}

/// Draws `count` independent phases around `mean`.
pub fn sample_von_mises_many<R: Rng + ?Sized>(
    rng: &mut R,
    mean: Complex64,
    kappa: f64,
    count: usize,
) -> Result<Vec<Complex64>> {
    (0..count).map(|_| sample_von_mises(rng, mean, kappa)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::bessel::bessel_ratio;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn resultant_matches_bessel_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 40_000;
        let tol = 4.0 / (n as f64).sqrt();
        for kappa in [0.5, 2.0, 5.0] {
            let samples =
                sample_von_mises_many(&mut rng, Complex64::new(1.0, 0.0), kappa, n).unwrap();
            let mean: Complex64 = samples.iter().sum::<Complex64>() / n as f64;
            assert!(
                (mean.re - bessel_ratio(kappa).unwrap()).abs() < tol,
                "kappa {kappa}: resultant {} vs {}",
                mean.re,
                bessel_ratio(kappa).unwrap()
            );
            assert!(mean.im.abs() < tol, "kappa {kappa}: asymmetry {}", mean.im);
        }
    }

    #[test]
    fn samples_are_unit_modulus_and_mean_rotates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mu = Complex64::from_polar(1.0, 1.3);
        let samples = sample_von_mises_many(&mut rng, mu, 4.0, 5_000).unwrap();
        for s in &samples {
            assert_relative_eq!(s.norm(), 1.0, epsilon = 1e-12);
        }
        let mean: Complex64 = samples.iter().sum::<Complex64>() / 5_000.0;
        // Rotating the mean direction rotates the resultant with it.
        assert_relative_eq!(mean.arg(), 1.3, epsilon = 0.05);
    }

    #[test]
    fn near_zero_concentration_falls_back_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples =
            sample_von_mises_many(&mut rng, Complex64::new(1.0, 0.0), 1e-12, 20_000).unwrap();
        let mean: Complex64 = samples.iter().sum::<Complex64>() / 20_000.0;
        assert!(mean.norm() < 0.02);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_von_mises(&mut rng, Complex64::new(1.0, 0.0), 0.0).is_err());
        assert!(sample_von_mises(&mut rng, Complex64::new(2.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_von_mises_many(&mut rng, Complex64::new(1.0, 0.0), 3.0, 16).unwrap()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }
}
