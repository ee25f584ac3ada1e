//! Per-unit RNG streams and data-parallel helpers.
//!
//! Every chain or particle owns a stream keyed by `(seed, unit, step)`, so
//! results do not depend on how work is split across threads. With the
//! `parallel` feature off the helpers fall back to plain iterators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for `unit` at `step` under a run-level `seed`.
pub fn stream(seed: u64, unit: u64, step: u64) -> StreamRng {
    let k = splitmix64(splitmix64(splitmix64(seed) ^ unit) ^ step.rotate_left(32));
    StreamRng::seed_from_u64(k)
}

/// `f(i)` for `i in 0..n`, collected in index order.
pub fn map_units<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Apply `f(i, &mut item)` to every element.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}
