//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived
//! from the run seed, so enabling one component never shifts the draws
//! of another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub type SeededRng = ChaCha8Rng;

/// Named stream identifiers.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const KI_SAMPLES: u64 = 3;
    pub const GENERATOR_INIT: u64 = 4;
    pub const GENERATOR_TRAIN: u64 = 5;
    pub const MMD_PROBE: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const INDUCTIVE: u64 = 8;
    pub const SBM_EDGES: u64 = 9;
    pub const SBM_FEATURES: u64 = 10;
    pub const SBM_LABELS: u64 = 11;
}

pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for sub-step `index` of a component, e.g. one training phase.
pub fn substream(seed: u64, stream_id: u64, index: u64) -> SeededRng {
    stream(seed, stream_id.wrapping_mul(1 << 20).wrapping_add(index))
}

pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix<T> {
    let data = (0..rows * cols)
        .map(|_| T::lit(StandardNormal.sample(rng)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

pub fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix<T> {
    let dist = Uniform::new_inclusive(lo, hi).expect("valid uniform bounds");
    let data = (0..rows * cols).map(|_| T::lit(dist.sample(rng))).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}
