//! Arithmetic in the evaluation ring Z_℘.
//!
//! All server-side values (coordinates, distances, moments, thresholds and
//! comparison bits) live in a single prime ring whose modulus exceeds twice
//! the largest possible L1 distance. Differences of in-range values are then
//! unambiguous: the lower half of the ring holds non-negative numbers and the
//! upper half holds negative ones.

use crate::error::{Error, Result};

/// Parameters of the evaluation ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RingParams {
    modulus: u64,
    coord_bound: u64,
    dim: usize,
    dist_bound: u64,
    n: usize,
}

impl RingParams {
    /// Builds ring parameters from an explicit modulus.
    ///
    /// The modulus must be prime and exceed `2 * dim * (coord_bound - 1)`.
    pub fn new(modulus: u64, coord_bound: u64, dim: usize, n: usize) -> Result<Self> {
        if coord_bound < 2 {
            return Err(Error::param(format!("coord_bound must be >= 2, got {coord_bound}")));
        }
        if dim == 0 {
            return Err(Error::param("dimension must be >= 1"));
        }
        if n == 0 {
            return Err(Error::param("database size must be >= 1"));
        }
        let dist_bound = (dim as u64)
            .checked_mul(coord_bound - 1)
            .ok_or_else(|| Error::param("distance bound overflows u64"))?;
        if modulus >= 1 << 62 {
            return Err(Error::param("modulus must be below 2^62"));
        }
        if !is_prime(modulus) {
            return Err(Error::param(format!("modulus {modulus} is not prime")));
        }
        if modulus <= 2 * dist_bound {
            return Err(Error::param(format!(
                "modulus {modulus} must exceed twice the distance bound {dist_bound}"
            )));
        }
        Ok(Self { modulus, coord_bound, dim, dist_bound, n })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Grid size: every coordinate lies in `[0, coord_bound)`.
    pub fn coord_bound(&self) -> u64 {
        self.coord_bound
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest possible L1 distance, `dim * (coord_bound - 1)`.
    pub fn dist_bound(&self) -> u64 {
        self.dist_bound
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Same ring, different database size.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.modulus, self.coord_bound, self.dim, n)
    }

    pub fn reduce(&self, v: u64) -> u64 {
        v % self.modulus
    }

    /// Embeds a signed integer, mapping `-v` to `℘ - v`.
    pub fn embed_signed(&self, v: i64) -> u64 {
        v.rem_euclid(self.modulus as i64) as u64
    }

    /// Inverse of [`embed_signed`](Self::embed_signed) under the upper-half convention.
    pub fn to_signed(&self, v: u64) -> i64 {
        let v = v % self.modulus;
        if is_upper_half(v, self.modulus) {
            v as i64 - self.modulus as i64
        } else {
            v as i64
        }
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        add_mod(a, b, self.modulus)
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        sub_mod(a, b, self.modulus)
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        mul_mod(a, b, self.modulus)
    }
}

/// Picks the smallest prime modulus that keeps every distance difference unambiguous.
pub fn select_ring_params(grid_size: u64, dim: usize, n: usize) -> Result<RingParams> {
    if grid_size < 2 {
        return Err(Error::param(format!("grid size must be >= 2, got {grid_size}")));
    }
    if dim == 0 || n == 0 {
        return Err(Error::param("dimension and database size must be >= 1"));
    }
    let dist_bound = dim as u64 * (grid_size - 1);
    let modulus = next_prime(2 * dist_bound);
    RingParams::new(modulus, grid_size, dim, n)
}

/// Base-`coord_bound` digits of a value below `coord_bound²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DigitPair {
    pub low: u64,
    pub high: u64,
}

impl DigitPair {
    pub fn value(&self, coord_bound: u64) -> u64 {
        self.high * coord_bound + self.low
    }
}

pub fn base_p_decompose(v: u64, params: &RingParams) -> Result<DigitPair> {
    let p = params.coord_bound();
    let bound = p * p;
    if v >= bound {
        return Err(Error::Range { value: v, bound });
    }
    Ok(DigitPair { low: v % p, high: v / p })
}

/// `true` when `v` lies in the upper half of Z_modulus, i.e. `v > modulus / 2`.
pub fn is_upper_half(v: u64, modulus: u64) -> bool {
    // modulus is odd, so v > modulus/2 (real) is 2v > modulus.
    2 * (v as u128) > modulus as u128
}

pub fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 + b as u128) % m as u128) as u64
}

pub fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    let (a, b) = (a % m, b % m);
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Multiplicative inverse modulo a prime. Panics on zero.
pub fn inv_mod(a: u64, p: u64) -> u64 {
    assert!(a % p != 0, "zero has no inverse");
    pow_mod(a, p - 2, p)
}

/// Deterministic Miller-Rabin for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly greater than `v`.
pub fn next_prime(v: u64) -> u64 {
    let mut c = v + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// Floor of the square root, exact for all u64.
pub fn isqrt(v: u64) -> u64 {
    if v < 2 {
        return v;
    }
    let mut x = (v as f64).sqrt() as u64;
    while x.checked_mul(x).is_none_or(|sq| sq > v) {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).is_some_and(|sq| sq <= v) {
        x += 1;
    }
    x
}

/// Square root rounded to the nearest integer. Never a tie for integer input.
pub fn round_sqrt(v: u64) -> u64 {
    let r = isqrt(v);
    // (r + 1/2)^2 = r^2 + r + 1/4
    if v - r * r > r {
        r + 1
    } else {
        r
    }
}

/// Smallest integer whose square is at least `v`.
pub fn ceil_sqrt(v: u64) -> u64 {
    let r = isqrt(v);
    if r * r == v {
        r
    } else {
        r + 1
    }
}

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (relative error ~1e-9) followed by one
/// Newton step against the CDF.
pub fn phi_inverse(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(q));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let z = if q < P_LOW {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else if q <= 1.0 - P_LOW {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let t = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };

    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        Ok(z - (phi(z) - q) / density)
    } else {
        Ok(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division_prime(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
    }

    fn smallest_prime_above(v: u64) -> u64 {
        (v + 1..).find(|&c| trial_division_prime(c)).unwrap()
    }

    // Φ(z) = 1/2 + ∫_0^z φ(t) dt by composite Simpson.
    fn phi_by_quadrature(z: f64) -> f64 {
        let steps = 2000;
        let h = z / steps as f64;
        let density = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = density(0.0) + density(z);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * density(i as f64 * h);
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn ring_selection_examples() {
        let r = select_ring_params(100, 2, 569).unwrap();
        assert_eq!(r.dist_bound(), 198);
        assert_eq!(r.modulus(), smallest_prime_above(396));
        assert_eq!(r.modulus(), 397);

        let r = select_ring_params(2, 1, 1).unwrap();
        assert_eq!((r.dist_bound(), r.modulus()), (1, 3));

        let r = select_ring_params(300, 2, 569).unwrap();
        assert_eq!(r.dist_bound(), 598);
        assert_eq!(r.modulus(), smallest_prime_above(1196));
        assert_eq!(r.modulus(), 1201);
    }

    #[test]
    fn ring_selection_rejects_bad_input() {
        assert!(matches!(select_ring_params(1, 2, 10), Err(Error::Param(_))));
        assert!(matches!(select_ring_params(10, 0, 10), Err(Error::Param(_))));
        assert!(matches!(select_ring_params(10, 2, 0), Err(Error::Param(_))));
        assert!(RingParams::new(15, 2, 1, 1).is_err());
        // 17 is prime but not above 2 * 2 * 9.
        assert!(RingParams::new(17, 10, 2, 1).is_err());
    }

    #[test]
    fn selected_modulus_is_prime_and_large_enough() {
        for grid in 2..120 {
            for dim in 1..4 {
                let r = select_ring_params(grid, dim, 5).unwrap();
                assert!(trial_division_prime(r.modulus()));
                assert!(r.modulus() > 2 * r.dist_bound());
            }
        }
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        for n in 0..20_000 {
            assert_eq!(is_prime(n), trial_division_prime(n), "n = {n}");
        }
        assert!(is_prime(18_446_744_073_709_551_557));
        assert!(!is_prime(18_446_744_073_709_551_559));
    }

    #[test]
    fn decompose_examples() {
        let r = RingParams::new(11, 5, 1, 1).unwrap();
        assert_eq!(base_p_decompose(17, &r).unwrap(), DigitPair { low: 2, high: 3 });
        assert_eq!(base_p_decompose(0, &r).unwrap(), DigitPair { low: 0, high: 0 });
        assert_eq!(base_p_decompose(24, &r).unwrap(), DigitPair { low: 4, high: 4 });
        assert!(matches!(
            base_p_decompose(25, &r),
            Err(Error::Range { value: 25, bound: 25 })
        ));
    }

    #[test]
    fn decompose_reconstructs_exhaustively() {
        for p in 2..=50u64 {
            let r = select_ring_params(p, 1, 1).unwrap();
            for v in 0..p * p {
                let d = base_p_decompose(v, &r).unwrap();
                assert!(d.low < p);
                assert_eq!(d.value(p), v);
            }
        }
    }

    #[test]
    fn phi_inverse_examples() {
        assert!(phi_inverse(0.5).unwrap().abs() < 1e-12);

        // Bisection on the CDF as an independent reference.
        let q = 13.0 / 568.0;
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = phi_inverse(q).unwrap();
        assert!((z - lo).abs() < 1e-9, "z = {z}, bisection = {lo}");
        assert!((z + 1.99747).abs() < 1e-5, "z = {z}");
        assert_eq!(z.round(), -2.0);

        let z = phi_inverse(0.841345).unwrap();
        assert!((z - 1.0).abs() < 1e-5, "z = {z}");

        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(phi_inverse(bad), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn phi_inverse_hits_cdf_target() {
        for i in 1..1000 {
            let q = i as f64 / 1000.0;
            let z = phi_inverse(q).unwrap();
            assert!((phi(z) - q).abs() <= 1e-9, "q = {q}");
        }
    }

    #[test]
    fn phi_inverse_inverts_quadrature_cdf() {
        for i in -500..=500 {
            let z = i as f64 / 100.0;
            let q = phi_by_quadrature(z);
            if q <= 0.0 || q >= 1.0 {
                continue;
            }
            let back = phi_inverse(q).unwrap();
            assert!((back - z).abs() <= 1e-6, "z = {z}, back = {back}");
        }
    }

    #[test]
    fn signed_embedding() {
        let r = RingParams::new(397, 100, 2, 10).unwrap();
        assert_eq!(r.embed_signed(-2), 395);
        assert_eq!(r.to_signed(395), -2);
        assert_eq!(r.to_signed(198), 198);
        assert_eq!(r.to_signed(199), -198);
    }

    #[test]
    fn integer_roots() {
        for v in 0..100_000u64 {
            let r = isqrt(v);
            assert!(r * r <= v && (r + 1) * (r + 1) > v);
            let rounded = round_sqrt(v);
            assert_eq!(rounded, (v as f64).sqrt().round() as u64, "v = {v}");
            let c = ceil_sqrt(v);
            assert!(c * c >= v && (c == 0 || (c - 1) * (c - 1) < v));
        }
        assert_eq!(isqrt(u64::MAX), 4_294_967_295);
    }
}
