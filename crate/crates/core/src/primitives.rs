//! Probabilistic building blocks: encrypted L1 distance, the doubly-blinded
//! coin toss, and the coin-sum moment estimator.

use rand::Rng;
use rayon::prelude::*;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::he::Cipher;
use crate::interp::is_smaller;
use crate::ring::isqrt;
use crate::seed;

/// Increasing function whose mean a coin sum estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoinFn {
    Identity,
    Square,
}

impl CoinFn {
    pub fn apply(self, x: u64) -> u128 {
        match self {
            CoinFn::Identity => x as u128,
            CoinFn::Square => x as u128 * x as u128,
        }
    }

    /// ⌊f⁻¹(r)⌋, integer exact.
    pub fn inverse_floor(self, r: u64) -> u64 {
        match self {
            CoinFn::Identity => r,
            CoinFn::Square => isqrt(r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoinSpec {
    pub f: CoinFn,
    /// Probability denominator.
    pub m: u64,
    pub rng_seed: u64,
}

impl CoinSpec {
    pub fn new(f: CoinFn, m: u64, rng_seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("coin denominator m must be >= 1"));
        }
        Ok(CoinSpec { f, m, rng_seed })
    }

    /// Probability that a toss on `x` comes up 1.
    pub fn probability(&self, x: u64) -> f64 {
        (self.f.apply(x).min(self.m as u128) as f64) / self.m as f64
    }
}

/// Encrypted L1 distance between an encrypted query and a plaintext point:
/// `Σ (1 - 2·[q_i < s_i]) · (q_i - s_i)`.
pub fn compute_dist_l1(c: &Circuit, q: &[Cipher], s: &[u64]) -> Result<Cipher> {
    let dim = c.ring().dim();
    if q.len() != dim || s.len() != dim {
        return Err(Error::param(format!(
            "distance needs {dim} coordinates, got query {} and point {}",
            q.len(),
            s.len()
        )));
    }
    let bound = c.ring().coord_bound();
    if let Some(&v) = s.iter().find(|&&v| v >= bound) {
        return Err(Error::Range { value: v, bound });
    }
    let ev = c.ev();
    let minus_two = c.ring().embed_signed(-2);
    let terms = q
        .iter()
        .zip(s)
        .map(|(qi, &si)| {
            let lt = is_smaller(ev, c.tables(), qi, si)?;
            let sign = ev.add(&ev.mul(&lt, minus_two)?, 1u64)?;
            let diff = ev.sub(qi, si)?;
            ev.mul(&sign, &diff)
        })
        .collect::<Result<Vec<_>>>()?;
    ev.sum(&terms)
}

/// Draws the plaintext cut point of one toss.
///
/// `r` is uniform on `{0, …, m-1}` and the cut is `⌊f⁻¹(r)⌋`, clamped to the
/// distance bound (which leaves every in-range comparison unchanged). For
/// integer `x`, `cut < x` iff `r < f(x)`, which has probability
/// `min(f(x), m) / m`.
pub fn draw_cut(f: CoinFn, m: u64, dist_bound: u64, rng: &mut impl Rng) -> u64 {
    let r = rng.random_range(0..m);
    f.inverse_floor(r).min(dist_bound)
}

/// The toss circuit for a fixed cut: encrypted `[cut < x]`.
pub fn coin_toss_at(c: &Circuit, x: &Cipher, cut: u64) -> Result<Cipher> {
    is_smaller(c.ev(), c.tables(), cut, x)
}

/// One doubly-blinded coin toss with probability `f(x)/m`, drawing its cut
/// from `spec.rng_seed`.
pub fn coin_toss(c: &Circuit, x: &Cipher, spec: &CoinSpec) -> Result<Cipher> {
    let mut rng = seed::rng(spec.rng_seed);
    let cut = draw_cut(spec.f, spec.m, c.ring().dist_bound(), &mut rng);
    coin_toss_at(c, x, cut)
}

/// Estimates `(1/m) Σ f(x_i)` as the encrypted sum of independent coin tosses.
///
/// All cuts are drawn sequentially from `spec.rng_seed` before any toss is
/// evaluated, so the output does not depend on thread scheduling. The
/// result never exceeds `n`.
pub fn prob_avg(c: &Circuit, xs: &[Cipher], spec: &CoinSpec) -> Result<Cipher> {
    if xs.is_empty() {
        return Err(Error::param("prob_avg needs at least one input"));
    }
    let mut rng = seed::rng(spec.rng_seed);
    let bound = c.ring().dist_bound();
    let cuts: Vec<u64> = xs.iter().map(|_| draw_cut(spec.f, spec.m, bound, &mut rng)).collect();

    #[cfg(feature = "trapdoor")]
    diagnostics::note_saturation(xs, spec);

    let bits = xs
        .par_iter()
        .zip(cuts.par_iter())
        .map(|(x, &cut)| coin_toss_at(c, x, cut))
        .collect::<Result<Vec<_>>>()?;
    c.ev().sum(&bits)
}

/// Plaintext diagnostics that read through the ciphertext boundary.
#[cfg(feature = "trapdoor")]
pub mod diagnostics {
    use std::sync::atomic::{AtomicU64, Ordering};

    use super::CoinSpec;
    use crate::he::Cipher;

    static SATURATED: AtomicU64 = AtomicU64::new(0);

    /// Tosses so far whose probability `f(x)/m` exceeded 1 and was clamped.
    pub fn saturated_tosses() -> u64 {
        SATURATED.load(Ordering::Relaxed)
    }

    pub(super) fn note_saturation(xs: &[Cipher], spec: &CoinSpec) {
        let over =
            xs.iter().filter(|x| spec.f.apply(x.trapdoor_value()) > spec.m as u128).count();
        SATURATED.fetch_add(over as u64, Ordering::Relaxed);
    }
}
