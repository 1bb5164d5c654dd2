//! Seeded, counter-based random streams.
//!
//! A [`Rng`] is a ChaCha12 keystream. The 64-bit run seed fixes the key; each
//! stream is addressed by a 64-bit stream id derived from the path of labels
//! used to reach it. Two streams with different paths never share keystream,
//! and the same `(seed, path)` reproduces the same numbers on every platform.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn string labels into stream labels.
fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    core: ChaCha12Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    /// Root stream for `seed`.
    pub fn new(seed: u64) -> Self {
        Self::at(seed, 0)
    }

    fn at(seed: u64, stream: u64) -> Self {
        let mut core = ChaCha12Rng::seed_from_u64(seed);
        core.set_stream(stream);
        Self {
            seed,
            stream,
            core,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream id of this generator (0 for the root).
    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Independent child stream keyed by `label`.
    ///
    /// Depends only on `(seed, this stream's id, label)`, never on how many
    /// numbers have already been drawn from `self`.
    pub fn child(&self, label: u64) -> Rng {
        let id = splitmix64(self.stream ^ splitmix64(label.wrapping_add(GOLDEN)));
        Self::at(self.seed, id)
    }

    pub fn child_named(&self, label: &str) -> Rng {
        self.child(fnv1a(label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.core.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.core.gen_range(0..n as u64) as usize
    }

    /// Standard normal via the Box–Muller transform; pairs are cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping ln finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in random order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot choose {k} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
