//! Seeded Gaussian sampling.
//!
//! Uniforms come from ChaCha8, a counter-based stream cipher generator, and
//! are turned into standard normals with the Box-Muller transform. Outputs are
//! bit-identical for a given seed within one build of this crate.
//!
//! Independent streams for a trial are derived from `(master_seed, index, tag)`
//! by [`substream_seed`], so trials can run in any order or in parallel.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose of a derived stream. Distinct tags give unrelated streams for the
/// same `(master_seed, index)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Environment = 1,
    Init = 2,
    Tasks = 3,
    Check = 4,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash `(master, index, tag)` into a 64-bit seed.
pub fn substream_seed(master: u64, index: u64, tag: StreamTag) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ index.wrapping_mul(GOLDEN));
    splitmix64(h ^ (tag as u64).rotate_left(32))
}

/// Source of uniform and standard normal variates.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn substream(master: u64, index: u64, tag: StreamTag) -> Self {
        Self::from_seed(substream_seed(master, index, tag))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn normal_vector(&mut self, len: usize) -> DVector<f64> {
        let mut v = DVector::zeros(len);
        for x in v.iter_mut() {
            *x = self.normal();
        }
        v
    }

    /// `rows x cols` matrix of i.i.d. standard normals, filled row by row.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.normal();
            }
        }
        m
    }
}
