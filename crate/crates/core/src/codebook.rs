//! Polar near-field codebook.
//!
//! Beam `(n, s)` points at angle `theta_n = asin((2n - N - 1) / N)` and
//! distance `r_{n,s} = (1 - sin^2 theta_n) N^2 d^2 / (2 s beta^2 lambda)`
//! with half-wavelength spacing `d`. Indices are 1-based throughout the
//! public API; `s` starts at 1 (there is no far-field ring).

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::array::near_field_steering;
use crate::config::SystemConfig;
use crate::error::CodebookError;

/// 1-based `(n, s)` beam coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeamIndex {
    pub n: usize,
    pub s: usize,
}

impl BeamIndex {
    pub fn new(n: usize, s: usize) -> Self {
        Self { n, s }
    }
}

impl fmt::Display for BeamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.n, self.s)
    }
}

#[derive(Debug, Clone)]
pub struct PolarCodebook {
    /// One beam per row, row `(n - 1) * S + (s - 1)`.
    beams: Array2<Complex64>,
    angles: Vec<f64>,
    /// `N x S`, entry `[n - 1][s - 1]`.
    distances: Array2<f64>,
    antennas: usize,
    rings: usize,
    beta: f64,
    wavelength: f64,
}

/// `sin(theta_n)` for `n = 1..=N`, evaluated from the rational form.
pub fn angle_sines(antennas: usize) -> impl Iterator<Item = f64> {
    let nf = antennas as f64;
    (1..=antennas).map(move |n| (2.0 * n as f64 - nf - 1.0) / nf)
}

/// Ring distance for one angle sector.
pub fn ring_distance(sin_theta: f64, s: usize, antennas: usize, beta: f64, wavelength: f64) -> f64 {
    let nf = antennas as f64;
    let d = wavelength / 2.0;
    (1.0 - sin_theta * sin_theta) * nf * nf * d * d / (2.0 * s as f64 * beta * beta * wavelength)
}

impl PolarCodebook {
    pub fn build(config: &SystemConfig) -> Result<Self, CodebookError> {
        Self::with_params(config.antennas, config.rings, config.beta, config.wavelength())
    }

    pub fn with_params(antennas: usize, rings: usize, beta: f64, wavelength: f64) -> Result<Self, CodebookError> {
        if antennas < 2 || rings < 1 {
            return Err(CodebookError::Size { antennas, rings });
        }
        let sines: Vec<f64> = angle_sines(antennas).collect();
        let angles: Vec<f64> = sines.iter().map(|s| s.asin()).collect();
        let distances = Array2::from_shape_fn((antennas, rings), |(n, s)| {
            ring_distance(sines[n], s + 1, antennas, beta, wavelength)
        });
        let mut beams = Array2::zeros((antennas * rings, antennas));
        for n in 0..antennas {
            for s in 0..rings {
                let b = near_field_steering(angles[n], distances[(n, s)], antennas, wavelength);
                beams.row_mut(n * rings + s).assign(&b);
            }
        }
        Ok(Self {
            beams,
            angles,
            distances,
            antennas,
            rings,
            beta,
            wavelength,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn rings(&self) -> usize {
        self.rings
    }

    pub fn len(&self) -> usize {
        self.antennas * self.rings
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn distances(&self) -> &Array2<f64> {
        &self.distances
    }

    /// All beams, one per row in flat order.
    pub fn beams(&self) -> &Array2<Complex64> {
        &self.beams
    }

    pub fn flat_index(&self, idx: BeamIndex) -> Result<usize, CodebookError> {
        if idx.n == 0 || idx.n > self.antennas || idx.s == 0 || idx.s > self.rings {
            return Err(CodebookError::Index {
                n: idx.n,
                s: idx.s,
                antennas: self.antennas,
                rings: self.rings,
            });
        }
        Ok((idx.n - 1) * self.rings + (idx.s - 1))
    }

    /// Inverse of [`Self::flat_index`]; `k` must be below [`Self::len`].
    pub fn beam_index(&self, k: usize) -> BeamIndex {
        debug_assert!(k < self.len());
        BeamIndex::new(k / self.rings + 1, k % self.rings + 1)
    }

    pub fn beam_at(&self, n: usize, s: usize) -> Result<ArrayView1<'_, Complex64>, CodebookError> {
        let k = self.flat_index(BeamIndex::new(n, s))?;
        Ok(self.beams.row(k))
    }

    pub fn angle(&self, n: usize) -> f64 {
        self.angles[n - 1]
    }

    pub fn distance(&self, n: usize, s: usize) -> f64 {
        self.distances[(n - 1, s - 1)]
    }

    /// CSV dump of the grid: `n,s,theta,r`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,s,theta_rad,r_m")?;
        for n in 1..=self.antennas {
            for s in 1..=self.rings {
                writeln!(out, "{},{},{:.17e},{:.17e}", n, s, self.angle(n), self.distance(n, s))?;
            }
        }
        Ok(())
    }
}
