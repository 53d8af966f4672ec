//! Counter-based, splittable random streams.
//!
//! Every random draw in the pipeline comes from a [`Stream`], a keyed
//! counter-based generator in the SplitMix64 family: the output at counter
//! `i` is `mix(key + i * GAMMA)` where `mix` is the SplitMix64 finalizer.
//! Streams are derived from an explicit path of integers (e.g.
//! `(global_seed, epoch, sample_index)`), so any sample's randomness is a
//! pure function of that path, independent of thread scheduling or how many
//! draws other samples consumed.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic random stream identified by a key; draws advance a counter.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: mix(seed.wrapping_add(GAMMA)),
            counter: 0,
        }
    }

    /// Derive a child stream from a path of ids. Children with distinct
    /// paths are statistically independent.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut key = mix(seed.wrapping_add(GAMMA));
        for &p in path {
            key = mix(key ^ mix(p.wrapping_add(GAMMA)));
        }
        Stream { key, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let z = self.key.wrapping_add(self.counter.wrapping_mul(GAMMA));
        self.counter += 1;
        mix(z)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform integer in [0, n). n must be > 0.
    pub fn below(&mut self, n: u64) -> u64 {
        // Lemire-style rejection keeps the draw unbiased.
        debug_assert!(n > 0);
        loop {
            let x = self.next_u64();
            let (hi, lo) = {
                let wide = (x as u128) * (n as u128);
                ((wide >> 64) as u64, wide as u64)
            };
            if lo >= n || lo >= n.wrapping_neg() % n {
                return hi;
            }
        }
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
