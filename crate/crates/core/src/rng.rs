use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Well-known stream ids. Parameters draw from a per-name stream instead, see
/// [`RngStream::for_name`].
pub mod streams {
    pub const DATA_ORDER: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const SYNTHETIC: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const GRADCHECK: u64 = 5;
}

/// Seeded, platform-independent random stream.
///
/// ChaCha8 keyed by `seed` with the `stream_id` selecting an independent
/// keystream, so `(seed, stream_id)` pins the draw sequence everywhere.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream keyed by a name (FNV-1a), so a parameter's initial value depends
    /// only on the seed and its own name, not on construction order.
    pub fn for_name(seed: u64, name: &str) -> Self {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in name.bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // Keep clear of the small reserved ids in `streams`.
        Self::new(seed, hash | (1 << 63))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform<T: Scalar>(&mut self, low: f64, high: f64) -> T {
        T::lit(low + (high - low) * self.unit())
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
