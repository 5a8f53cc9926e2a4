//! Modified Bessel kernels needed by the von Mises model: the ratio
//! I1/I0 (mean resultant length) and ln I0 (normalizing constant).

use crate::error::{Error, Result};

/// Crossover between the ascending series and the continued fraction.
const SERIES_LIMIT: f64 = 15.0;
/// ln I0 switches to the asymptotic form where the series would overflow.
const LN_I0_SERIES_LIMIT: f64 = 600.0;

/// I1(kappa) / I0(kappa) for kappa > 0.
///
/// Ascending power series below the crossover; Gauss continued fraction
/// (modified Lentz) above it. Both branches agree to ~1e-14 at the seam.
pub fn bessel_ratio(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must be finite and > 0")));
    }
    if kappa < SERIES_LIMIT {
        let (i0, i1) = bessel_i0_i1_series(kappa);
        Ok(i1 / i0)
    } else {
        Ok(ratio_continued_fraction(kappa))
    }
}

/// ln I0(kappa) for kappa >= 0.
pub fn ln_bessel_i0(kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must be finite and >= 0")));
    }
    if kappa <= LN_I0_SERIES_LIMIT {
        let (i0, _) = bessel_i0_i1_series(kappa);
        Ok(i0.ln())
    } else {
        // I0(z) ~ e^z / sqrt(2 pi z) * (1 + 1/(8z) + 9/(128 z^2) + ...);
        // at z > 600 four correction terms leave ~1e-13 relative error.
        let z = kappa;
        let correction = 1.0 / (8.0 * z) + 9.0 / (128.0 * z * z)
            + 75.0 / (1024.0 * z * z * z)
            + 11025.0 / (98304.0 * z * z * z * z);
        Ok(z - 0.5 * (2.0 * std::f64::consts::PI * z).ln() + correction.ln_1p())
    }
}

fn bessel_i0_i1_series(kappa: f64) -> (f64, f64) {
    let t = kappa * kappa / 4.0;
    let mut i0 = 1.0;
    let mut i1 = 1.0; // I1 / (kappa / 2)
    let mut term0 = 1.0;
    let mut term1 = 1.0;
    for k in 1..1000 {
        let kf = k as f64;
        term0 *= t / (kf * kf);
        term1 *= t / (kf * (kf + 1.0));
        i0 += term0;
        i1 += term1;
        if term0 < 1e-18 * i0 && term1 < 1e-18 * i1 {
            break;
        }
    }
    (i0, i1 * kappa / 2.0)
}

/// I1/I0 = 1 / (2/k + 1 / (4/k + 1 / (6/k + ...))), evaluated by the
/// modified Lentz algorithm. Depth grows like O(kappa); terms are ratios,
/// so nothing overflows at any concentration.
fn ratio_continued_fraction(kappa: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    let max_iter = (4.0 * kappa) as usize + 200;
    for j in 1..=max_iter {
        let b = 2.0 * j as f64 / kappa;
        d = b + d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + 1.0 / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}
