//! Array responses of a half-wavelength uniform linear array.
//!
//! Element `n` (0-based) of an `N`-element array sits at offset
//! `delta_n * lambda / 2` from the array centre, `delta_n = n - (N - 1) / 2`.

use ndarray::Array1;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Signed element offsets `delta_n` in units of the element spacing.
pub fn element_offsets(antennas: usize) -> impl Iterator<Item = f64> {
    let centre = (antennas as f64 - 1.0) / 2.0;
    (0..antennas).map(move |n| n as f64 - centre)
}

/// Path-length difference `r_n - r` between element `n` and the array centre
/// for a point at angle `aod` and distance `dist`.
///
/// Evaluated as `(r_n^2 - r^2) / (r_n + r)` so it stays accurate when
/// `dist` is many orders of magnitude larger than the aperture.
pub fn path_difference(aod: f64, dist: f64, delta: f64, wavelength: f64) -> f64 {
    let d = wavelength / 2.0;
    let num = delta * delta * d * d - 2.0 * dist * delta * d * aod.sin();
    let rn = (dist * dist + num).max(0.0).sqrt();
    num / (rn + dist)
}

/// Near-field steering vector `b(aod, dist)`, unit norm.
///
/// Entry `n` is `exp(j 2 pi (r_n - r) / lambda) / sqrt(N)`; the channel rows
/// use its conjugate. For `dist` far beyond the Rayleigh distance it tends to
/// `exp(-j pi delta_n sin(aod)) / sqrt(N)`.
pub fn near_field_steering(aod: f64, dist: f64, antennas: usize, wavelength: f64) -> Array1<Complex64> {
    let norm = 1.0 / (antennas as f64).sqrt();
    element_offsets(antennas)
        .map(|delta| {
            let phase = 2.0 * PI * path_difference(aod, dist, delta, wavelength) / wavelength;
            Complex64::from_polar(norm, phase)
        })
        .collect()
}

/// Far-field steering vector referenced to the first element:
/// `[1, e^{-j pi sin}, ..., e^{-j pi (N-1) sin}] / sqrt(N)`.
pub fn far_field_steering(aod: f64, antennas: usize) -> Array1<Complex64> {
    let norm = 1.0 / (antennas as f64).sqrt();
    let s = aod.sin();
    (0..antennas)
        .map(|n| Complex64::from_polar(norm, -PI * n as f64 * s))
        .collect()
}

/// Far-field steering vector referenced to the array centre. Equal to
/// [`far_field_steering`] up to the global phase `e^{j pi (N-1) sin / 2}`
/// and to the far-field limit of [`near_field_steering`].
pub fn far_field_steering_centred(aod: f64, antennas: usize) -> Array1<Complex64> {
    let norm = 1.0 / (antennas as f64).sqrt();
    let s = aod.sin();
    element_offsets(antennas)
        .map(|delta| Complex64::from_polar(norm, -PI * delta * s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SPEED_OF_LIGHT;

    fn norm(v: &Array1<Complex64>) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn unit_norm() {
        let lambda = SPEED_OF_LIGHT / 73e9;
        for &n in &[1usize, 2, 7, 64, 256] {
            for &(a, r) in &[(0.0, 1.0), (0.7, 0.05), (-1.2, 30.0), (1.5, 1e6)] {
                assert!((norm(&near_field_steering(a, r, n, lambda)) - 1.0).abs() < 1e-12);
            }
            assert!((norm(&far_field_steering(0.3, n)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn broadside_far_field_is_flat() {
        let v = far_field_steering(0.0, 8);
        let expected = 1.0 / 8f64.sqrt();
        for z in v.iter() {
            assert!((z.re - expected).abs() < 1e-15 && z.im.abs() < 1e-15);
        }
    }

    #[test]
    fn path_difference_matches_direct_form() {
        let lambda = 0.01;
        for &(a, r, delta) in &[(0.3, 2.0, 3.5), (-0.9, 0.4, -7.5), (0.0, 10.0, 0.5)] {
            let d = lambda / 2.0;
            let direct =
                (r * r + delta * delta * d * d - 2.0 * r * delta * d * f64::sin(a)).sqrt() - r;
            assert!((path_difference(a, r, delta, lambda) - direct).abs() < 1e-12);
        }
    }
}
