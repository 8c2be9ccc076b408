//! Ciphertext backend.
//!
//! The default backend is a mock: ciphertexts carry their plaintext value in
//! the clear, but the value is private to this module and only a
//! [`SecretKey`] can read it. Every gate goes through an [`Evaluator`], which
//! tracks the multiplicative depth of each ciphertext and counts
//! ciphertext-by-ciphertext multiplications. Multiplying by a plaintext
//! scalar is free in both depth and gate count.

use std::fmt;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::ring::{add_mod, mul_mod, sub_mod, RingParams};
use crate::seed::mix64;

/// Default security parameter carried through key material. The mock
/// backend ignores it.
pub const DEFAULT_SECURITY_BITS: u16 = 80;

/// Backend implementations that can sit behind an [`Evaluator`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Exact arithmetic with depth and gate metering.
    Mock,
    /// Reserved for a lattice-based scheme adapter. Not available.
    Lattice,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Cipher {
    value: u64,
    depth: u32,
    key_id: u64,
}

impl fmt::Debug for Cipher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cipher")
            .field("depth", &self.depth)
            .field("key_id", &format_args!("{:#018x}", self.key_id))
            .finish_non_exhaustive()
    }
}

/// Serialized form of a ciphertext.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireCipher {
    pub blob: u64,
    pub depth: u16,
    pub key_id: u64,
}

impl Cipher {
    /// Multiplicative depth of the sub-circuit that produced this ciphertext.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    pub fn to_wire(&self) -> WireCipher {
        WireCipher {
            blob: self.value ^ wire_mask(self.key_id),
            depth: self.depth.min(u16::MAX as u32) as u16,
            key_id: self.key_id,
        }
    }

    /// Rebuilds a ciphertext received over the wire. The value is not range
    /// checked here; the protocol layer checks it against the ring.
    pub fn from_wire(w: WireCipher) -> Self {
        Cipher { value: w.blob ^ wire_mask(w.key_id), depth: w.depth as u32, key_id: w.key_id }
    }

    /// Reads the hidden value without a secret key. Test diagnostics only.
    #[cfg(feature = "trapdoor")]
    pub fn trapdoor_value(&self) -> u64 {
        self.value
    }

    pub(crate) fn in_ring(&self, ring: &RingParams) -> bool {
        self.value < ring.modulus()
    }
}

fn wire_mask(key_id: u64) -> u64 {
    mix64(key_id ^ 0x6b69_7368_6d61_736b)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    key_id: u64,
    ring: RingParams,
    security_bits: u16,
}

impl PublicKey {
    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    pub fn ring(&self) -> &RingParams {
        &self.ring
    }

    pub fn security_bits(&self) -> u16 {
        self.security_bits
    }

    /// Encrypts a reduced ring element.
    pub fn encrypt(&self, m: u64) -> Result<Cipher> {
        if m >= self.ring.modulus() {
            return Err(Error::Range { value: m, bound: self.ring.modulus() });
        }
        Ok(Cipher { value: m, depth: 0, key_id: self.key_id })
    }

    /// Opaque token bytes: key id followed by the security parameter.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10);
        out.extend_from_slice(&self.key_id.to_le_bytes());
        out.extend_from_slice(&self.security_bits.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], ring: RingParams) -> Result<Self> {
        if bytes.len() != 10 {
            return Err(Error::Protocol(format!(
                "public key token must be 10 bytes, got {}",
                bytes.len()
            )));
        }
        let key_id = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let security_bits = u16::from_le_bytes(bytes[8..].try_into().expect("2 bytes"));
        Ok(PublicKey { key_id, ring, security_bits })
    }
}

pub struct SecretKey {
    key_id: u64,
    ring: RingParams,
    decrypts: Arc<AtomicU64>,
}

impl SecretKey {
    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    pub fn ring(&self) -> &RingParams {
        &self.ring
    }

    pub fn decrypt(&self, c: &Cipher) -> Result<u64> {
        if c.key_id != self.key_id {
            return Err(Error::KeyMismatch { expected: self.key_id, found: c.key_id });
        }
        self.decrypts.fetch_add(1, Ordering::Relaxed);
        Ok(c.value)
    }

    /// Number of decryptions performed with this key so far.
    pub fn decrypt_count(&self) -> u64 {
        self.decrypts.load(Ordering::Relaxed)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey").field("key_id", &self.key_id).finish_non_exhaustive()
    }
}

#[derive(Debug)]
pub struct KeyPair {
    pub pk: PublicKey,
    pub sk: SecretKey,
}

/// Deterministic key generation. Distinct seeds give distinct key ids.
pub fn keygen(ring: &RingParams, seed: u64) -> KeyPair {
    keygen_with_security(ring, seed, DEFAULT_SECURITY_BITS)
}

pub fn keygen_with_security(ring: &RingParams, seed: u64, security_bits: u16) -> KeyPair {
    // mix64 is a bijection on u64.
    let key_id = mix64(seed);
    KeyPair {
        pk: PublicKey { key_id, ring: *ring, security_bits },
        sk: SecretKey { key_id, ring: *ring, decrypts: Arc::new(AtomicU64::new(0)) },
    }
}

/// Right-hand operand of a gate.
#[derive(Clone, Copy, Debug)]
pub enum Operand<'a> {
    Cipher(&'a Cipher),
    Plain(u64),
}

impl<'a> From<&'a Cipher> for Operand<'a> {
    fn from(c: &'a Cipher) -> Self {
        Operand::Cipher(c)
    }
}

impl From<u64> for Operand<'_> {
    fn from(v: u64) -> Self {
        Operand::Plain(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalMetrics {
    /// Ciphertext-by-ciphertext multiplications.
    pub mult_gates: u64,
    pub max_depth: u32,
    /// Additions, subtractions and scalar multiply-accumulates.
    pub add_gates: u64,
    pub wall_time: Duration,
}

impl EvalMetrics {
    /// Gate and depth counters only, for comparisons that should ignore timing.
    pub fn circuit_shape(&self) -> (u64, u32, u64) {
        (self.mult_gates, self.max_depth, self.add_gates)
    }
}

#[derive(Debug)]
struct Meter {
    parent: Option<Arc<Meter>>,
    mult: AtomicU64,
    add: AtomicU64,
    max_depth: AtomicU32,
    started: Instant,
}

impl Meter {
    fn new(parent: Option<Arc<Meter>>) -> Self {
        Meter {
            parent,
            mult: AtomicU64::new(0),
            add: AtomicU64::new(0),
            max_depth: AtomicU32::new(0),
            started: Instant::now(),
        }
    }

    fn record(&self, mults: u64, adds: u64, depth: u32) {
        let mut m = Some(self);
        while let Some(meter) = m {
            if mults > 0 {
                meter.mult.fetch_add(mults, Ordering::Relaxed);
            }
            if adds > 0 {
                meter.add.fetch_add(adds, Ordering::Relaxed);
            }
            meter.max_depth.fetch_max(depth, Ordering::Relaxed);
            m = meter.parent.as_deref();
        }
    }

    fn snapshot(&self) -> EvalMetrics {
        EvalMetrics {
            mult_gates: self.mult.load(Ordering::Relaxed),
            max_depth: self.max_depth.load(Ordering::Relaxed),
            add_gates: self.add.load(Ordering::Relaxed),
            wall_time: self.started.elapsed(),
        }
    }
}

/// Evaluates gates under a public key. Holds no secret material.
#[derive(Clone, Debug)]
pub struct Evaluator {
    ring: RingParams,
    key_id: u64,
    meter: Arc<Meter>,
}

impl Evaluator {
    pub fn new(pk: &PublicKey) -> Self {
        Evaluator { ring: pk.ring, key_id: pk.key_id, meter: Arc::new(Meter::new(None)) }
    }

    pub fn with_backend(backend: Backend, pk: &PublicKey) -> Result<Self> {
        match backend {
            Backend::Mock => Ok(Self::new(pk)),
            Backend::Lattice => {
                Err(Error::param("the lattice backend is not available in this build"))
            }
        }
    }

    pub fn ring(&self) -> &RingParams {
        &self.ring
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    /// Counters accumulated by this evaluator (and any scopes nested in it).
    pub fn metrics(&self) -> EvalMetrics {
        self.meter.snapshot()
    }

    /// Runs `body` with a fresh child meter and returns what it recorded.
    /// Counts also roll up into every enclosing scope.
    pub fn metered<R>(&self, body: impl FnOnce(&Evaluator) -> R) -> (R, EvalMetrics) {
        let child = Evaluator {
            ring: self.ring,
            key_id: self.key_id,
            meter: Arc::new(Meter::new(Some(self.meter.clone()))),
        };
        let out = body(&child);
        let metrics = child.meter.snapshot();
        (out, metrics)
    }

    /// Public-key encryption of a constant, at depth zero.
    pub fn constant(&self, m: u64) -> Cipher {
        Cipher { value: m % self.ring.modulus(), depth: 0, key_id: self.key_id }
    }

    fn check(&self, c: &Cipher) -> Result<()> {
        if c.key_id != self.key_id {
            return Err(Error::KeyMismatch { expected: self.key_id, found: c.key_id });
        }
        Ok(())
    }

    fn emit(&self, value: u64, depth: u32, mults: u64, adds: u64) -> Cipher {
        self.meter.record(mults, adds, depth);
        Cipher { value, depth, key_id: self.key_id }
    }

    pub fn add<'b>(&self, a: &Cipher, b: impl Into<Operand<'b>>) -> Result<Cipher> {
        self.check(a)?;
        let m = self.ring.modulus();
        match b.into() {
            Operand::Cipher(b) => {
                self.check(b)?;
                Ok(self.emit(add_mod(a.value, b.value, m), a.depth.max(b.depth), 0, 1))
            }
            Operand::Plain(v) => Ok(self.emit(add_mod(a.value, v % m, m), a.depth, 0, 1)),
        }
    }

    pub fn sub<'b>(&self, a: &Cipher, b: impl Into<Operand<'b>>) -> Result<Cipher> {
        self.check(a)?;
        let m = self.ring.modulus();
        match b.into() {
            Operand::Cipher(b) => {
                self.check(b)?;
                Ok(self.emit(sub_mod(a.value, b.value, m), a.depth.max(b.depth), 0, 1))
            }
            Operand::Plain(v) => Ok(self.emit(sub_mod(a.value, v, m), a.depth, 0, 1)),
        }
    }

    /// `plain - c`.
    pub fn sub_from(&self, plain: u64, c: &Cipher) -> Result<Cipher> {
        self.check(c)?;
        Ok(self.emit(sub_mod(plain, c.value, self.ring.modulus()), c.depth, 0, 1))
    }

    pub fn mul<'b>(&self, a: &Cipher, b: impl Into<Operand<'b>>) -> Result<Cipher> {
        self.check(a)?;
        let m = self.ring.modulus();
        match b.into() {
            Operand::Cipher(b) => {
                self.check(b)?;
                Ok(self.emit(mul_mod(a.value, b.value, m), a.depth.max(b.depth) + 1, 1, 0))
            }
            Operand::Plain(v) => Ok(self.emit(mul_mod(a.value, v, m), a.depth, 0, 0)),
        }
    }

    /// Sum of ciphertexts; an empty sum is a depth-zero encryption of 0.
    pub fn sum<'c>(&self, items: impl IntoIterator<Item = &'c Cipher>) -> Result<Cipher> {
        let m = self.ring.modulus();
        let mut value = 0u64;
        let mut depth = 0u32;
        let mut count = 0u64;
        for c in items {
            self.check(c)?;
            value = add_mod(value, c.value, m);
            depth = depth.max(c.depth);
            count += 1;
        }
        Ok(self.emit(value, depth, 0, count.saturating_sub(1)))
    }

    /// `constant + Σ coeffs[i] * terms[i]` with plaintext coefficients.
    ///
    /// Equivalent to a chain of scalar multiplications and additions; the
    /// result depth is the maximum depth over all terms.
    pub fn linear_combination(
        &self,
        terms: &[&Cipher],
        coeffs: &[u64],
        constant: u64,
    ) -> Result<Cipher> {
        if terms.len() != coeffs.len() {
            return Err(Error::param("linear combination needs one coefficient per term"));
        }
        let m = self.ring.modulus();
        let mut depth = 0u32;
        for c in terms {
            self.check(c)?;
            depth = depth.max(c.depth);
        }
        let value = if m < 1 << 32 {
            // Each product is below 2^64, so a u128 accumulator cannot
            // overflow for any realistic term count; reduce once.
            let acc = terms
                .iter()
                .zip(coeffs)
                .fold(constant as u128, |acc, (c, &k)| acc + (c.value * (k % m)) as u128);
            (acc % m as u128) as u64
        } else {
            terms.iter().zip(coeffs).fold(constant % m, |acc, (c, &k)| {
                add_mod(acc, mul_mod(c.value, k, m), m)
            })
        };
        Ok(self.emit(value, depth, 0, terms.len() as u64))
    }
}

/// Free-function form of [`Evaluator::metered`].
pub fn metered_scope<R>(ev: &Evaluator, body: impl FnOnce(&Evaluator) -> R) -> (R, EvalMetrics) {
    ev.metered(body)
}
