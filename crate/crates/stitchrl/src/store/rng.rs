//! Seeded, portable random number streams.
//!
//! All randomness in the crate flows through [`RngStream`]: a master seed
//! plus a `(name, index)` pair derive an independent child generator, so
//! every pipeline stage and worker owns its own stream and runs are
//! reproducible bit for bit. The derivation and the generator itself are
//! fully specified in `docs/formats.md` so other implementations can match
//! the byte stream exactly:
//!
//! * name hash: FNV-1a over the UTF-8 bytes of the stream name,
//! * key mix: `splitmix64(splitmix64(splitmix64(master) ^ name_hash) ^ index)`,
//! * generator: xoshiro256++ seeded with four successive splitmix64 outputs
//!   of the key.

/// SplitMix64 step; `state` advances by the Weyl constant each call.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// xoshiro256++ generator. Plain value type; clone to fork deliberately.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Seeds the state from four successive splitmix64 outputs of `key`.
    pub fn from_key(key: u64) -> Self {
        let mut sm = key;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Unbiased-enough bounded integer via 128-bit fixed-point multiply.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller. Two uniforms are consumed per draw
    /// and the second output is discarded: slightly wasteful, trivially
    /// portable.
    pub fn normal(&mut self) -> f64 {
        let mut u = self.next_f64();
        while u <= 0.0 {
            u = self.next_f64();
        }
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Master seed with named, indexed child streams.
#[derive(Debug, Clone, Copy)]
pub struct RngStream {
    master: u64,
}

impl RngStream {
    pub fn new(master: u64) -> Self {
        RngStream { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derives the child key for `(name, index)`.
    pub fn derive_key(&self, name: &str, index: u64) -> u64 {
        let mut sm = self.master;
        let a = splitmix64(&mut sm);
        let mut sm2 = a ^ fnv1a64(name.as_bytes());
        let b = splitmix64(&mut sm2);
        let mut sm3 = b ^ index;
        splitmix64(&mut sm3)
    }

    /// Independent child generator for `(name, index)`.
    pub fn derive(&self, name: &str, index: u64) -> Rng {
        Rng::from_key(self.derive_key(name, index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let s = RngStream::new(7);
        let mut a = s.derive("rollout", 3);
        let mut b = s.derive("rollout", 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_names_and_indices_differ() {
        // Collision scan across a thousand seeds: the first draw of
        // ("env", 0) and ("env", 1) must differ, as must ("env", 0) and
        // ("policy-init", 0).
        for seed in 0..1000u64 {
            let s = RngStream::new(seed);
            let d0 = s.derive("env", 0).next_u64();
            let d1 = s.derive("env", 1).next_u64();
            let p0 = s.derive("policy-init", 0).next_u64();
            assert_ne!(d0, d1, "seed {seed}");
            assert_ne!(d0, p0, "seed {seed}");
        }
    }

    #[test]
    fn golden_values_seed1_eval0() {
        // Frozen cross-implementation values: first 5 u64 draws of
        // (seed=1, "eval", 0) under the documented derivation.
        let mut g = RngStream::new(1).derive("eval", 0);
        let got: Vec<u64> = (0..5).map(|_| g.next_u64()).collect();
        assert_eq!(got, GOLDEN_SEED1_EVAL0);
    }

    // Generated once with this implementation of the documented algorithm,
    // then frozen. See docs/formats.md.
    const GOLDEN_SEED1_EVAL0: [u64; 5] = [
        13740410170859170933,
        14810106473349547358,
        4151069641999453526,
        8702479435203865386,
        1990034376004588905,
    ];

    #[test]
    fn uniform_in_range() {
        let mut g = RngStream::new(9).derive("t", 0);
        for _ in 0..1000 {
            let x = g.uniform(4.0, 6.0);
            assert!((4.0..6.0).contains(&x));
        }
    }

    #[test]
    fn normal_moments() {
        let mut g = RngStream::new(11).derive("t", 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| g.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn below_is_in_bounds_and_covers() {
        let mut g = RngStream::new(3).derive("t", 0);
        let mut seen = [false; 10];
        for _ in 0..1000 {
            let k = g.below(10);
            assert!(k < 10);
            seen[k] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
