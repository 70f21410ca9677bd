//! Counter-based SplitMix64 random streams.
//!
//! Every random draw in the crate comes from this generator so that suites,
//! synthetic activations, cross-validation splits and permutation nulls are
//! reproducible bit-for-bit on any platform and from any language.
//!
//! # Construction
//!
//! All arithmetic is wrapping `u64`.
//!
//! ```text
//! GOLDEN = 0x9E37_79B9_7F4A_7C15
//! mix(z):
//!     z = (z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9
//!     z = (z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB
//!     z ^ (z >> 31)
//! derive(seed, index) = mix(seed + GOLDEN * (index + 1))
//! stream state s0 = derive(seed, index)
//! next():  s = s + GOLDEN; return mix(s)
//! ```
//!
//! Keys with several components fold left: `derive(derive(seed, a), b)`.
//!
//! Derived values:
//!
//! * `uniform()` = `(next() >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)` = high 64 bits of the 128-bit product `next() * n`.
//! * `gaussian()` = Box-Muller cosine branch with `u1 = 1 - uniform()`,
//!   `u2 = uniform()`: `sqrt(-2 ln u1) * cos(2π u2)`. One draw per pair.
//! * `shuffle` is Fisher-Yates from the top: for `i` in `(1..len).rev()`,
//!   swap `i` with `below(i + 1)`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child key from `(seed, index)`.
#[inline]
pub fn derive(seed: u64, index: u64) -> u64 {
    mix(seed.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

/// Folds a multi-component key into one seed.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |acc, &i| derive(acc, i))
}

/// 64-bit FNV-1a, used to turn labels into stable keys.
pub fn fnv1a(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    /// Stream keyed by `(seed, index)`.
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            state: derive(seed, index),
        }
    }

    /// Stream keyed by a multi-component path.
    pub fn keyed(seed: u64, path: &[u64]) -> Self {
        match path.split_last() {
            Some((last, head)) => Self::new(derive_path(seed, head), *last),
            None => Self::new(seed, 0),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
