//! The server-side k-ish nearest neighbor circuit and the client wrapper.
//!
//! Given an encrypted query, the server computes encrypted distances to every
//! database point, estimates their mean and standard deviation with coin
//! sums, and sets a threshold `T* = μ* + z_k·σ*` where `z_k` is the rounded
//! standard-normal quantile of `k/n`. Points with distance below `T*` vote,
//! and the result is the encrypted majority label. If the distances are
//! roughly Gaussian, about `k` points fall below the threshold.

use rayon::prelude::*;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::he::{keygen, Cipher, Operand, PublicKey};
use crate::interp::{eval_named, is_smaller, TableKind};
use crate::primitives::{compute_dist_l1, prob_avg, CoinFn, CoinSpec};
use crate::ring::{phi_inverse, RingParams};
use crate::seed;

pub const DEFAULT_REPETITIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    pub ring: RingParams,
    pub k: usize,
    /// Database size.
    pub n: usize,
    /// ⌊Φ⁻¹(k/n)⌉, signed.
    pub z_k: i64,
    pub repetitions: usize,
    pub rng_seed: u64,
}

impl ProtocolParams {
    /// Parameters for a database of `ring.n()` points.
    pub fn new(ring: RingParams, k: usize, repetitions: usize, rng_seed: u64) -> Result<Self> {
        let n = ring.n();
        if k == 0 || k >= n {
            return Err(Error::param(format!("k must satisfy 1 <= k < n, got k={k}, n={n}")));
        }
        if repetitions % 2 == 0 {
            return Err(Error::param(format!("repetitions must be odd, got {repetitions}")));
        }
        let z_k = phi_inverse(k as f64 / n as f64)?.round() as i64;
        Ok(ProtocolParams { ring, k, n, z_k, repetitions, rng_seed })
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        ProtocolParams { rng_seed, ..*self }
    }

    /// Seed of repetition `j`.
    pub fn repetition_seed(&self, j: usize) -> u64 {
        seed::derive(self.rng_seed, "rep", j as u64)
    }
}

/// Plaintext points and their binary classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledDatabase {
    points: Vec<Vec<u64>>,
    labels: Vec<u8>,
}

impl LabeledDatabase {
    pub fn new(points: Vec<Vec<u64>>, labels: Vec<u8>, ring: &RingParams) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::param(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::param("database is empty"));
        }
        for p in &points {
            if p.len() != ring.dim() {
                return Err(Error::param(format!(
                    "point has {} coordinates, ring dimension is {}",
                    p.len(),
                    ring.dim()
                )));
            }
            if let Some(&v) = p.iter().find(|&&v| v >= ring.coord_bound()) {
                return Err(Error::Range { value: v, bound: ring.coord_bound() });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::param(format!("labels must be 0 or 1, got {l}")));
        }
        Ok(LabeledDatabase { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<u64>] {
        &self.points
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Copy without point `i`.
    pub fn without(&self, i: usize) -> Self {
        let mut points = self.points.clone();
        let mut labels = self.labels.clone();
        points.remove(i);
        labels.remove(i);
        LabeledDatabase { points, labels }
    }

    /// Each point repeated `times` times, in order.
    pub fn duplicated(&self, times: usize) -> Self {
        LabeledDatabase {
            points: (0..times).flat_map(|_| self.points.iter().cloned()).collect(),
            labels: (0..times).flat_map(|_| self.labels.iter().copied()).collect(),
        }
    }

    pub fn truncated(&self, len: usize) -> Self {
        LabeledDatabase {
            points: self.points[..len.min(self.len())].to_vec(),
            labels: self.labels[..len.min(self.len())].to_vec(),
        }
    }
}

/// Digits of the second-moment estimate and of the squared mean estimate.
#[derive(Clone, Debug)]
pub struct SigmaDigits {
    pub mu2_low: Cipher,
    pub mu2_high: Cipher,
    pub musq_low: Cipher,
    pub musq_high: Cipher,
}

/// μ* ≈ (1/n) Σ x_i.
pub fn estimate_mu(c: &Circuit, xs: &[Cipher], pp: &ProtocolParams) -> Result<Cipher> {
    let spec =
        CoinSpec::new(CoinFn::Identity, pp.n as u64, seed::derive(pp.rng_seed, "mu", 0))?;
    prob_avg(c, xs, &spec)
}

/// Digit couple of μ₂* ≈ (1/n) Σ x_i²: the low digit uses `m = n` (reduced
/// by the ring), the high digit uses `m = n·p`.
pub fn estimate_mu2_digits(
    c: &Circuit,
    xs: &[Cipher],
    pp: &ProtocolParams,
) -> Result<(Cipher, Cipher)> {
    let n = pp.n as u64;
    let low = CoinSpec::new(CoinFn::Square, n, seed::derive(pp.rng_seed, "mu2_low", 0))?;
    let high = CoinSpec::new(
        CoinFn::Square,
        n * pp.ring.coord_bound(),
        seed::derive(pp.rng_seed, "mu2_high", 0),
    )?;
    Ok((prob_avg(c, xs, &low)?, prob_avg(c, xs, &high)?))
}

/// `(μ*·μ*, ⌊(μ*)²/p⌉)`.
pub fn square_mu_digits(c: &Circuit, mu_star: &Cipher) -> Result<(Cipher, Cipher)> {
    let low = c.ev().mul(mu_star, mu_star)?;
    let high = eval_named(c.ev(), c.tables(), TableKind::SquareDivP, mu_star)?;
    Ok((low, high))
}

/// σ* from the digit couples of μ₂* and (μ*)².
///
/// The variance is `μ₂ - μ²`, so the differences are taken as μ₂* minus
/// (μ*)², digit by digit.
pub fn estimate_sigma(c: &Circuit, sd: &SigmaDigits) -> Result<Cipher> {
    let ev = c.ev();
    let high_diff = ev.sub(&sd.mu2_high, &sd.musq_high)?;
    let low_diff = ev.sub(&sd.mu2_low, &sd.musq_low)?;
    sigma_from_digit_differences(c, &high_diff, &low_diff)
}

/// Oblivious three-way square root on digit differences `Δh`, `Δl`:
///
/// * `Δh = 0`: `⌊√Δl⌉`
/// * `Δh = 1`: `⌊√(Δl + p)⌉`
/// * otherwise: `⌊√(Δh·p)⌉`
///
/// Selector bits come from the is-zero table on `Δh` and `Δh - 1`; the
/// third selector is `1 - s₀ - s₁`.
pub fn sigma_from_digit_differences(
    c: &Circuit,
    high_diff: &Cipher,
    low_diff: &Cipher,
) -> Result<Cipher> {
    let (ev, t) = (c.ev(), c.tables());
    let sel0 = eval_named(ev, t, TableKind::IsZero, high_diff)?;
    let sel1 = eval_named(ev, t, TableKind::IsZero, &ev.sub(high_diff, 1u64)?)?;
    let sel2 = ev.sub_from(1, &ev.add(&sel0, &sel1)?)?;

    let branch0 = eval_named(ev, t, TableKind::Sqrt, low_diff)?;
    let branch1 = eval_named(ev, t, TableKind::SqrtPlusP, low_diff)?;
    let branch2 = eval_named(ev, t, TableKind::SqrtTimesP, high_diff)?;

    let picked = [
        ev.mul(&sel0, &branch0)?,
        ev.mul(&sel1, &branch1)?,
        ev.mul(&sel2, &branch2)?,
    ];
    ev.sum(&picked)
}

/// `T* = μ* + z_k·σ*`. One scalar multiply and one add.
pub fn threshold(
    c: &Circuit,
    mu_star: &Cipher,
    sigma_star: &Cipher,
    pp: &ProtocolParams,
) -> Result<Cipher> {
    let z = c.ring().embed_signed(pp.z_k);
    let scaled = c.ev().mul(sigma_star, z)?;
    c.ev().add(mu_star, &scaled)
}

/// Encrypted class counts among points with distance strictly below the
/// threshold. Each comparison bit is computed once and feeds both counts.
pub fn count_classes<'t>(
    c: &Circuit,
    xs: &[Cipher],
    threshold: impl Into<Operand<'t>>,
    labels: &[u8],
) -> Result<(Cipher, Cipher)> {
    if xs.len() != labels.len() {
        return Err(Error::param("one label per distance required"));
    }
    let t = threshold.into();
    let bits = xs
        .par_iter()
        .map(|x| is_smaller(c.ev(), c.tables(), x, t))
        .collect::<Result<Vec<_>>>()?;
    let with_label = |want: u8| bits.iter().zip(labels).filter(move |(_, &l)| l == want);
    let c0 = c.ev().sum(with_label(0).map(|(b, _)| b))?;
    let c1 = c.ev().sum(with_label(1).map(|(b, _)| b))?;
    Ok((c0, c1))
}

/// Intermediate ciphertexts of one server run.
#[derive(Clone, Debug)]
pub struct ServerTrace {
    pub distances: Vec<Cipher>,
    pub mu_star: Cipher,
    pub sigma_star: Cipher,
    pub threshold: Cipher,
    pub class0: Cipher,
    pub class1: Cipher,
    pub class_bit: Cipher,
}

/// Evaluates the full circuit for one seed and keeps the intermediates.
pub fn server_trace(
    c: &Circuit,
    enc_q: &[Cipher],
    db: &LabeledDatabase,
    pp: &ProtocolParams,
) -> Result<ServerTrace> {
    if enc_q.len() != pp.ring.dim() {
        return Err(Error::param(format!(
            "query has {} coordinates, ring dimension is {}",
            enc_q.len(),
            pp.ring.dim()
        )));
    }
    if db.len() != pp.n {
        return Err(Error::param(format!(
            "database has {} points, parameters expect {}",
            db.len(),
            pp.n
        )));
    }
    if c.ring().modulus() != pp.ring.modulus() || c.ring().coord_bound() != pp.ring.coord_bound()
    {
        return Err(Error::param("evaluator ring does not match protocol ring"));
    }

    let distances = db
        .points()
        .par_iter()
        .map(|s| compute_dist_l1(c, enc_q, s))
        .collect::<Result<Vec<_>>>()?;

    let mu_star = estimate_mu(c, &distances, pp)?;
    let (mu2_low, mu2_high) = estimate_mu2_digits(c, &distances, pp)?;
    let (musq_low, musq_high) = square_mu_digits(c, &mu_star)?;
    let digits = SigmaDigits { mu2_low, mu2_high, musq_low, musq_high };
    let sigma_star = estimate_sigma(c, &digits)?;
    let t_star = threshold(c, &mu_star, &sigma_star, pp)?;

    let (class0, class1) = count_classes(c, &distances, &t_star, db.labels())?;
    // Ties (including no neighbors at all) resolve to class 0.
    let class_bit = is_smaller(c.ev(), c.tables(), &class0, &class1)?;

    Ok(ServerTrace {
        distances,
        mu_star,
        sigma_star,
        threshold: t_star,
        class0,
        class1,
        class_bit,
    })
}

/// One run of the server circuit. Holds only public material and never
/// decrypts.
pub fn server_classify(
    c: &Circuit,
    enc_q: &[Cipher],
    db: &LabeledDatabase,
    pp: &ProtocolParams,
) -> Result<Cipher> {
    Ok(server_trace(c, enc_q, db, pp)?.class_bit)
}

/// `pp.repetitions` independent runs, one encrypted bit each.
pub fn server_respond(
    pk: &PublicKey,
    enc_q: &[Cipher],
    db: &LabeledDatabase,
    pp: &ProtocolParams,
) -> Result<Vec<Cipher>> {
    let c = Circuit::new(pk)?;
    (0..pp.repetitions)
        .map(|j| server_classify(&c, enc_q, db, &pp.with_seed(pp.repetition_seed(j))))
        .collect()
}

/// Majority of decrypted bits; ties go to 0.
pub fn majority(bits: &[u64]) -> u8 {
    let ones = bits.iter().filter(|&&b| b == 1).count();
    (2 * ones > bits.len()) as u8
}

/// Client-side key for a run with base seed `seed`.
pub fn client_key_seed(seed: u64) -> u64 {
    seed::derive(seed, "key", 0)
}

/// Runs the whole protocol in process: keygen, encryption, `repetitions`
/// server runs, decryption and majority.
pub fn classify_with_majority(
    query: &[u64],
    db: &LabeledDatabase,
    pp: &ProtocolParams,
) -> Result<u8> {
    let keys = keygen(&pp.ring, client_key_seed(pp.rng_seed));
    let enc_q = encrypt_query(&keys.pk, query)?;
    let bits = server_respond(&keys.pk, &enc_q, db, pp)?
        .iter()
        .map(|b| keys.sk.decrypt(b))
        .collect::<Result<Vec<_>>>()?;
    Ok(majority(&bits))
}

pub fn encrypt_query(pk: &PublicKey, query: &[u64]) -> Result<Vec<Cipher>> {
    let ring = pk.ring();
    if query.len() != ring.dim() {
        return Err(Error::param(format!(
            "query has {} coordinates, ring dimension is {}",
            query.len(),
            ring.dim()
        )));
    }
    query
        .iter()
        .map(|&v| {
            if v >= ring.coord_bound() {
                return Err(Error::Range { value: v, bound: ring.coord_bound() });
            }
            pk.encrypt(v)
        })
        .collect()
}

/// Number of distances the comparison circuit counts as below `threshold`
/// (ring semantics: `x - T` in the upper half).
pub fn count_below(distances: &[u64], threshold: u64, ring: &RingParams) -> usize {
    distances
        .iter()
        .filter(|&&x| crate::ring::is_upper_half(ring.sub(x, threshold), ring.modulus()))
        .count()
}

/// κ for the run with `seed`: how many database points fell below the
/// decrypted threshold. Reads through the ciphertext boundary, so it only
/// runs in test builds.
pub fn kappa_of_run(
    db: &LabeledDatabase,
    q: &[u64],
    pp: &ProtocolParams,
    seed: u64,
) -> Result<usize> {
    #[cfg(feature = "trapdoor")]
    {
        let pp = pp.with_seed(seed);
        let keys = keygen(&pp.ring, client_key_seed(seed));
        let enc_q = encrypt_query(&keys.pk, q)?;
        let c = Circuit::new(&keys.pk)?;
        let trace = server_trace(&c, &enc_q, db, &pp)?;
        let t = keys.sk.decrypt(&trace.threshold)?;
        let xs = trace.distances.iter().map(|x| keys.sk.decrypt(x)).collect::<Result<Vec<_>>>()?;
        Ok(count_below(&xs, t, &pp.ring))
    }
    #[cfg(not(feature = "trapdoor"))]
    {
        let _ = (db, q, pp, seed);
        Err(Error::TrapdoorDisabled)
    }
}
