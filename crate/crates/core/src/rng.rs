//! Reproducible, splittable random streams.
//!
//! Ensemble runs derive one stream per trajectory from `(base_seed, stream
//! index)`, so results are independent of execution order and reproducible in
//! parallel. Streams with identical parameters produce bitwise-identical
//! sequences; distinct parameters give statistically independent sequences.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{SymMatrix, Vector};

/// A counter-based random stream identified by `(base_seed, stream_index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    base_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        let mut state = base_seed ^ 0xa076_1d64_78bd_642f;
        let a = splitmix64(&mut state);
        let mut state2 = stream_index ^ splitmix64(&mut state);
        let mut seed = [0u8; 32];
        for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
            let word = splitmix64(&mut state2) ^ a.rotate_left(8 * i as u32);
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        RngStream {
            base_seed,
            stream_index,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Derives an independent stream for child `index`, e.g. one per
    /// trajectory of an ensemble. Children of distinct parents stay distinct.
    pub fn substream(&self, index: u64) -> RngStream {
        let mut state = self
            .stream_index
            .rotate_left(17)
            .wrapping_add(0x517c_c1b7_2722_0a95);
        let mixed = splitmix64(&mut state) ^ index.wrapping_mul(0xd134_2543_de82_ef95);
        RngStream::new(self.base_seed, mixed.wrapping_add(index))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // rejection sampling to keep the draw unbiased
        let zone = (u64::MAX / n as u64) * n as u64;
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return (v % n as u64) as usize;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Draws `cov_sqrt * w` with `w` standard normal of dimension `d`.
pub fn gaussian_vector(rng: &mut RngStream, d: usize, cov_sqrt: &SymMatrix) -> Vector {
    assert_eq!(cov_sqrt.dim(), d, "cov_sqrt must be d x d");
    let mut w = Vector::zeros(d);
    rng.fill_standard_normal(w.as_mut_slice());
    cov_sqrt.mul_vec(&w)
}
