//! Deterministic randomness utilities.
//!
//! All randomness in this crate flows through one of two mechanisms:
//!
//! * a sequential [`rand_chacha::ChaCha8Rng`] stream seeded from a `u64`
//!   (used by the direct-method simulation loop), or
//! * *keyed* draws, where the value is a pure function of a seed and a small
//!   integer key tuple.
//!
//! Keyed draws make lazily grown structures reproducible: the offspring count
//! of a tree vertex, or the i-th exponential of particle i at level l, is the
//! same no matter in which order the program asks for it.
//!
//! Replica seeds are derived as
//! `replica_seed(base, i) = splitmix64(base ^ splitmix64(GAMMA * (i + 1)))`,
//! so replica 0 differs from the base stream and replicas never collide for
//! distinct indices of the same base.

/// Weyl-sequence increment used by splitmix64.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finalizer. Bijective on `u64`.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replica `index` of a base seed.
#[inline]
pub fn replica_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Mixes a seed with up to three integer keys into a single word.
///
/// Each key is folded in through an extra splitmix64 round, so `(a, b)` and
/// `(b, a)` land in unrelated states.
#[inline]
pub fn mix_keys(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0x6A09_E667_F3BC_C909);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b.wrapping_mul(0x9E37_79B9));
    h = splitmix64(h ^ c.wrapping_mul(0x85EB_CA77_C2B2_AE63));
    h
}

/// Uniform in the open interval (0, 1), built from the top 52 bits.
///
/// The half offset stays exactly representable at 52 bits, so the result
/// never rounds to 0.0 or 1.0 and `-ln(u)` is always finite and positive.
#[inline]
pub fn u64_to_open01(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Keyed uniform in (0, 1).
#[inline]
pub fn uniform_from_keys(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    u64_to_open01(mix_keys(seed, a, b, c))
}

/// Keyed standard exponential (rate 1).
#[inline]
pub fn exp_from_keys(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    -uniform_from_keys(seed, a, b, c).ln()
}
