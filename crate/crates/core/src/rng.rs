//! Deterministic random streams.
//!
//! Every stochastic choice in the crate flows through a ChaCha8 generator
//! seeded from an explicit `u64`. Substreams are derived with splitmix64 so
//! that independent components (noise draws, weight init, scene sampling)
//! never share or race on one generator. Gaussian values are always sampled
//! in f64 and converted, so f32 and f64 pipelines see the same draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// splitmix64 step; the standard seed-expansion permutation.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the tag string, used to separate named substreams.
fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a substream seed from a base seed and a tag.
pub fn subseed(base: u64, tag: &str) -> u64 {
    splitmix64(base ^ tag_hash(tag))
}

/// Derive an indexed substream seed (per image, per sample, ...).
pub fn subseed_indexed(base: u64, tag: &str, index: u64) -> u64 {
    splitmix64(subseed(base, tag) ^ splitmix64(index))
}

/// The deterministic generator used everywhere in this crate.
pub type Prng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Prng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard normal draw, taken in f64 regardless of the element type.
pub fn normal<E: Scalar>(rng: &mut Prng) -> E {
    let v: f64 = StandardNormal.sample(rng);
    E::from_f64(v)
}

/// Tensor of i.i.d. N(0, std^2) entries.
pub fn normal_tensor<E: Scalar>(rng: &mut Prng, shape: Vec<usize>, std: f64) -> Tensor<E> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = StandardNormal.sample(rng);
        E::from_f64(v * std)
    })
}

/// Uniform integer in `[lo, hi]`.
pub fn uniform_usize(rng: &mut Prng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

/// Sample `k` distinct indices from `0..n` without replacement (partial
/// Fisher-Yates over an index vector; deterministic for a given generator).
pub fn sample_without_replacement(rng: &mut Prng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n} without replacement");
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}
