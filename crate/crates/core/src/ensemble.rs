//! Seeded random band-limited fields for calibration and property checks.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral::{Field, Grid};

/// Shape of a random trigonometric field on the grid's period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandLimited {
    /// Highest mode number (in units of the fundamental `2 pi / L`).
    pub max_mode: usize,
    /// Amplitude of mode `m` is drawn from `[-1, 1] * amplitude / m^decay`.
    pub decay: f64,
    pub amplitude: f64,
    /// Include a random mean.
    pub with_mean: bool,
}

impl BandLimited {
    pub fn new(max_mode: usize, decay: f64, amplitude: f64) -> BandLimited {
        BandLimited {
            max_mode,
            decay,
            amplitude,
            with_mean: false,
        }
    }

    pub fn with_mean(mut self) -> Self {
        self.with_mean = true;
        self
    }

    /// Mode amplitudes and phases; independent of the grid, so the same seed
    /// gives the same continuous function on every resolution.
    pub fn coefficients(&self, rng: &mut impl Rng) -> (f64, Vec<(usize, f64, f64)>) {
        let mean = if self.with_mean {
            self.amplitude * rng.gen_range(-1.0..1.0)
        } else {
            0.0
        };
        let modes = (1..=self.max_mode)
            .map(|m| {
                let a = self.amplitude * rng.gen_range(-1.0..1.0) / (m as f64).powf(self.decay);
                let phase = rng.gen_range(0.0..2.0 * PI);
                (m, a, phase)
            })
            .collect();
        (mean, modes)
    }

    pub fn sample(&self, grid: &Arc<Grid>, rng: &mut impl Rng) -> Field {
        let (mean, modes) = self.coefficients(rng);
        let k1 = 2.0 * PI / grid.period();
        Field::from_fn(grid, |x| {
            mean + modes
                .iter()
                .map(|&(m, a, ph)| a * (k1 * m as f64 * x + ph).cos())
                .sum::<f64>()
        })
    }
}

/// Deterministic generator for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` pairs of fields drawn from one seeded stream.
pub fn pairs(grid: &Arc<Grid>, shape: &BandLimited, count: usize, seed: u64) -> Vec<(Field, Field)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| (shape.sample(grid, &mut r), shape.sample(grid, &mut r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_function_across_grids() {
        let coarse = Grid::new(64, 2.0 * PI).unwrap();
        let fine = Grid::new(256, 2.0 * PI).unwrap();
        let shape = BandLimited::new(8, 1.0, 0.5).with_mean();
        let a = shape.sample(&coarse, &mut rng(7));
        let b = shape.sample(&fine, &mut rng(7));
        for i in 0..64 {
            assert!((a.values()[i] - b.values()[4 * i]).abs() < 1e-13);
        }
        let c = shape.sample(&coarse, &mut rng(8));
        assert!(a.max_diff(&c).unwrap() > 1e-3);
    }
}
