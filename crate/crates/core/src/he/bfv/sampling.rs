use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::context::BfvContext;

const SIGMA: f64 = 3.19;
const TAIL: f64 = 6.0 * SIGMA;

/// Uniform ternary coefficients in `{-1, 0, 1}`.
pub(crate) fn ternary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

/// Rounded Gaussian with the customary width 3.19, tail-cut at six sigma.
pub(crate) fn gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    let normal = Normal::new(0.0, SIGMA).expect("valid deviation");
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= TAIL {
                break x.round() as i64;
            }
        })
        .collect()
}

/// A uniform polynomial modulo `Q`, already in NTT form (uniformity is
/// preserved by the transform).
pub(crate) fn uniform<R: Rng + ?Sized>(ctx: &BfvContext, rng: &mut R) -> Vec<u64> {
    let mut out = Vec::with_capacity(ctx.n * ctx.limbs());
    for m in &ctx.q {
        let q = m.value();
        out.extend((0..ctx.n).map(|_| rng.random_range(0..q)));
    }
    out
}
