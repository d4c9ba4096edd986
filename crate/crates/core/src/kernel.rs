//! The smaller root y1(z) of the quadratic kernel
//! rho y (1 - y) + (y - 1 + q - q z) = 0 (scaled by the phase-1 rate),
//! and its Taylor expansion at any point where the discriminant is positive.
//!
//! The single-server model uses rho = lambda/mu1; the multiserver tail uses
//! r = lambda/(m mu1). Both kernels have the same shape.

use crate::error::{Error, Result};
use crate::series::PowerSeries;

/// Discriminant (1 - rho)^2 - 4 rho q (z - 1).
pub fn discriminant(rho: f64, q: f64, z: f64) -> f64 {
    (1.0 - rho).powi(2) - 4.0 * rho * q * (z - 1.0)
}

/// y1(z), written in a form that stays accurate as rho -> 0.
pub fn y1(rho: f64, q: f64, z: f64) -> Result<f64> {
    let disc = discriminant(rho, q, z);
    if !(disc > 0.0) {
        return Err(Error::Discriminant { z });
    }
    Ok(2.0 * (1.0 - q + q * z) / ((1.0 + rho) + disc.sqrt()))
}

/// The larger root y2(z) = (1 + rho)/rho - y1(z); infinite at rho = 0.
pub fn y2(rho: f64, q: f64, z: f64) -> Result<f64> {
    Ok((1.0 + rho) / rho - y1(rho, q, z)?)
}

/// Taylor coefficients of y1 at `z0`, `len` terms.
///
/// The constant term is y1(z0), the slope is q / sqrt(disc), and each further
/// derivative is the previous one times 2(2n-3) rho q / disc.
pub fn y1_series(rho: f64, q: f64, z0: f64, len: usize) -> Result<PowerSeries> {
    let disc = discriminant(rho, q, z0);
    if !(disc > 0.0) {
        return Err(Error::Discriminant { z: z0 });
    }
    let mut c = vec![0.0; len];
    if len > 0 {
        c[0] = 2.0 * (1.0 - q + q * z0) / ((1.0 + rho) + disc.sqrt());
    }
    if len > 1 {
        c[1] = q / disc.sqrt();
    }
    for n in 2..len {
        let nf = n as f64;
        c[n] = c[n - 1] * 2.0 * (2.0 * nf - 3.0) * rho * q / (disc * nf);
    }
    Ok(PowerSeries::from_coeffs(c))
}
