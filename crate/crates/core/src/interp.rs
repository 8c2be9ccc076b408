//! Univariate interpolation over Z_℘ and low-depth polynomial evaluation.
//!
//! Any integer function on Z_℘ is a polynomial of degree below ℘. A
//! [`PolyTable`] stores its coefficients; [`eval_poly_ps`] evaluates it on a
//! ciphertext with O(√℘) non-scalar multiplications at O(log ℘) depth, using
//! baby steps `x^1..x^b` (b = ⌈√℘⌉) and a balanced tree of giant steps
//! `x^(b·2^t)`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::he::{Cipher, Evaluator, Operand};
use crate::ring::{
    add_mod, ceil_sqrt, inv_mod, is_upper_half, mul_mod, round_sqrt, sub_mod, RingParams,
};

const TABLE_MAGIC: &[u8; 4] = b"KTBL";

/// Coefficients of an interpolated polynomial, lowest degree first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyTable {
    name: String,
    modulus: u64,
    coeffs: Vec<u64>,
}

impl PolyTable {
    pub fn from_coeffs(name: impl Into<String>, modulus: u64, coeffs: Vec<u64>) -> Result<Self> {
        if coeffs.len() as u64 != modulus {
            return Err(Error::param(format!(
                "table over Z_{modulus} needs {modulus} coefficients, got {}",
                coeffs.len()
            )));
        }
        if let Some(&c) = coeffs.iter().find(|&&c| c >= modulus) {
            return Err(Error::Range { value: c, bound: modulus });
        }
        Ok(PolyTable { name: name.into(), modulus, coeffs })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    /// Horner evaluation in plaintext.
    pub fn eval_plain(&self, x: u64) -> u64 {
        let m = self.modulus;
        let x = x % m;
        self.coeffs.iter().rev().fold(0, |acc, &c| add_mod(mul_mod(acc, x, m), c, m))
    }

    /// Binary cache format: magic, modulus, name hash, then one little-endian
    /// u64 per coefficient.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&self.modulus.to_le_bytes())?;
        w.write_all(&name_hash(&self.name).to_le_bytes())?;
        for c in &self.coeffs {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read, name: &str, modulus: u64) -> Result<Self> {
        let mut header = [0u8; 20];
        read_exact_at(&mut r, &mut header, 0)?;
        if &header[..4] != TABLE_MAGIC {
            return Err(Error::Decode { offset: 0, reason: "bad table magic".into() });
        }
        let stored_modulus = u64::from_le_bytes(header[4..12].try_into().expect("8 bytes"));
        if stored_modulus != modulus {
            return Err(Error::Decode {
                offset: 4,
                reason: format!("table modulus {stored_modulus}, expected {modulus}"),
            });
        }
        let hash = u64::from_le_bytes(header[12..20].try_into().expect("8 bytes"));
        if hash != name_hash(name) {
            return Err(Error::Decode { offset: 12, reason: format!("table is not `{name}`") });
        }
        let mut body = vec![0u8; 8 * modulus as usize];
        read_exact_at(&mut r, &mut body, 20)?;
        let coeffs = body
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        PolyTable::from_coeffs(name, modulus, coeffs)
    }
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], offset: usize) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Decode {
                    offset: offset + filled,
                    reason: "truncated table".into(),
                })
            }
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Lagrange interpolation through `(nodes[i], values[i])` over Z_modulus.
///
/// Builds the master polynomial `M(x) = Π (x - x_m)`, divides out each node
/// to get the numerator of its basis polynomial, and scales by the inverse
/// of `Π_{m≠j} (x_j - x_m)`. Quadratic in the number of nodes.
pub fn interpolate(nodes: &[u64], values: &[u64], modulus: u64) -> Result<Vec<u64>> {
    if nodes.len() != values.len() {
        return Err(Error::param("interpolation needs one value per node"));
    }
    if nodes.is_empty() {
        return Ok(Vec::new());
    }
    let m = modulus;
    let nodes: Vec<u64> = nodes.iter().map(|&x| x % m).collect();
    let len = nodes.len();

    // master[i] is the coefficient of x^i; degree len.
    let mut master = vec![0u64; len + 1];
    master[0] = 1;
    for (deg, &xm) in nodes.iter().enumerate() {
        // multiply by (x - xm)
        for i in (0..=deg + 1).rev() {
            let shifted = if i > 0 { master[i - 1] } else { 0 };
            master[i] = sub_mod(shifted, mul_mod(master[i], xm, m), m);
        }
    }

    let mut coeffs = vec![0u64; len];
    let mut quotient = vec![0u64; len];
    for (j, (&xj, &yj)) in nodes.iter().zip(values).enumerate() {
        let yj = yj % m;
        if yj == 0 {
            continue;
        }
        let mut denom = 1u64;
        for (i, &xi) in nodes.iter().enumerate() {
            if i != j {
                denom = mul_mod(denom, sub_mod(xj, xi, m), m);
            }
        }
        if denom == 0 {
            return Err(Error::param("interpolation nodes must be distinct"));
        }
        // synthetic division of master by (x - xj)
        let mut carry = 0u64;
        for i in (0..len).rev() {
            carry = add_mod(master[i + 1], mul_mod(carry, xj, m), m);
            quotient[i] = carry;
        }
        let scale = mul_mod(yj, inv_mod(denom, m), m);
        for (c, &q) in coeffs.iter_mut().zip(&quotient) {
            *c = add_mod(*c, mul_mod(q, scale, m), m);
        }
    }
    Ok(coeffs)
}

/// Interpolates `f` on every point of Z_℘. Negative outputs are embedded
/// with the upper-half convention.
pub fn lagrange_table(name: &str, modulus: u64, f: impl Fn(u64) -> i64) -> Result<PolyTable> {
    let nodes: Vec<u64> = (0..modulus).collect();
    let values: Vec<u64> =
        nodes.iter().map(|&x| f(x).rem_euclid(modulus as i64) as u64).collect();
    let coeffs = interpolate(&nodes, &values, modulus)?;
    PolyTable::from_coeffs(name, modulus, coeffs)
}

/// Baby-step block size used by [`eval_poly_ps`].
pub fn ps_block_size(modulus: u64) -> u64 {
    ceil_sqrt(modulus).max(2)
}

/// Paterson–Stockmeyer evaluation of `table` at the encrypted point `x`.
///
/// Uses `(b - 1) + (K - 1) + (⌈log₂K⌉ - 1)` non-scalar multiplications for
/// `b = ⌈√℘⌉` and `K = ⌈℘ / b⌉` blocks, and depth `⌈log₂b⌉ + ⌈log₂K⌉` above
/// the depth of `x`. Every coefficient is used, zero or not, so the gate
/// count depends only on ℘.
pub fn eval_poly_ps(ev: &Evaluator, table: &PolyTable, x: &Cipher) -> Result<Cipher> {
    if table.modulus() != ev.ring().modulus() {
        return Err(Error::param(format!(
            "table `{}` is over Z_{}, evaluator ring is Z_{}",
            table.name(),
            table.modulus(),
            ev.ring().modulus()
        )));
    }
    let coeffs = table.coeffs();
    let b = ps_block_size(table.modulus()) as usize;
    let blocks = coeffs.len().div_ceil(b);

    // powers[i] = x^i for i in 1..=b, each by a balanced split of the exponent.
    let mut powers: Vec<Cipher> = Vec::with_capacity(b + 1);
    powers.push(ev.constant(1));
    powers.push(x.clone());
    let top = if blocks > 1 { b } else { b - 1 };
    for i in 2..=top {
        let p = ev.mul(&powers[i.div_ceil(2)], &powers[i / 2])?;
        powers.push(p);
    }

    let terms: Vec<&Cipher> = powers[1..b].iter().collect();
    let mut block_values = Vec::with_capacity(blocks);
    let mut chunk = vec![0u64; b - 1];
    for j in 0..blocks {
        let start = j * b;
        let constant = coeffs[start];
        for (i, slot) in chunk.iter_mut().enumerate() {
            *slot = coeffs.get(start + 1 + i).copied().unwrap_or(0);
        }
        block_values.push(ev.linear_combination(&terms, &chunk, constant)?);
    }

    let levels = usize::BITS - (blocks - 1).leading_zeros();
    let mut giants: Vec<Cipher> = Vec::with_capacity(levels as usize);
    if blocks > 1 {
        giants.push(powers[b].clone());
        for t in 1..levels as usize {
            let g = ev.mul(&giants[t - 1], &giants[t - 1])?;
            giants.push(g);
        }
    }
    combine_blocks(ev, &block_values, &giants)
}

// p = low + x^(b·h) · high, h the largest power of two below len.
fn combine_blocks(ev: &Evaluator, blocks: &[Cipher], giants: &[Cipher]) -> Result<Cipher> {
    if blocks.len() == 1 {
        return Ok(blocks[0].clone());
    }
    let t = (usize::BITS - (blocks.len() - 1).leading_zeros() - 1) as usize;
    let h = 1usize << t;
    let low = combine_blocks(ev, &blocks[..h], giants)?;
    let high = combine_blocks(ev, &blocks[h..], giants)?;
    let shifted = ev.mul(&high, &giants[t])?;
    ev.add(&low, &shifted)
}

/// The interpolated functions used by the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TableKind {
    /// ⌊√x⌉
    Sqrt,
    /// ⌊x² / p⌉
    SquareDivP,
    /// 1 iff x = 0
    IsZero,
    /// ⌊√(x + p)⌉, with x + p taken in the ring
    SqrtPlusP,
    /// ⌊√(x · p)⌉, exact integer product
    SqrtTimesP,
    /// 1 iff x > ℘/2
    IsNeg,
}

impl TableKind {
    pub const ALL: [TableKind; 6] = [
        TableKind::Sqrt,
        TableKind::SquareDivP,
        TableKind::IsZero,
        TableKind::SqrtPlusP,
        TableKind::SqrtTimesP,
        TableKind::IsNeg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Sqrt => "sqrt",
            TableKind::SquareDivP => "square_div_p",
            TableKind::IsZero => "is_zero",
            TableKind::SqrtPlusP => "sqrt_plus_p",
            TableKind::SqrtTimesP => "sqrt_times_p",
            TableKind::IsNeg => "is_neg",
        }
    }

    /// Target value at `x ∈ [0, ℘)`, reduced mod ℘.
    pub fn target(self, x: u64, modulus: u64, coord_bound: u64) -> u64 {
        let p = coord_bound;
        let v = match self {
            TableKind::Sqrt => round_sqrt(x),
            TableKind::SquareDivP => {
                let sq = x as u128 * x as u128;
                ((2 * sq + p as u128) / (2 * p as u128)) as u64
            }
            TableKind::IsZero => (x == 0) as u64,
            TableKind::SqrtPlusP => round_sqrt(add_mod(x, p, modulus)),
            TableKind::SqrtTimesP => round_sqrt(x * p),
            TableKind::IsNeg => is_upper_half(x, modulus) as u64,
        };
        v % modulus
    }
}

/// All six tables for one ring.
#[derive(Debug)]
pub struct NamedTables {
    modulus: u64,
    coord_bound: u64,
    tables: [PolyTable; 6],
}

impl NamedTables {
    pub fn get(&self, kind: TableKind) -> &PolyTable {
        &self.tables[TableKind::ALL.iter().position(|&k| k == kind).expect("listed")]
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn coord_bound(&self) -> u64 {
        self.coord_bound
    }

    pub fn iter(&self) -> impl Iterator<Item = (TableKind, &PolyTable)> {
        TableKind::ALL.iter().copied().zip(self.tables.iter())
    }

    /// Writes each table to `<dir>/<name>_<℘>_<p>.tbl`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (kind, table) in self.iter() {
            let file = std::fs::File::create(dir.join(self.file_name(kind)))?;
            table.write_to(std::io::BufWriter::new(file))?;
        }
        Ok(())
    }

    /// Loads cached tables from `dir`, rebuilding (and rewriting) any that
    /// are missing or unreadable.
    pub fn load_or_build(dir: &Path, params: &RingParams) -> Result<Self> {
        let (m, p) = (params.modulus(), params.coord_bound());
        let probe = NamedTables { modulus: m, coord_bound: p, tables: Default::default() };
        let mut loaded = Vec::with_capacity(6);
        for kind in TableKind::ALL {
            let path = dir.join(probe.file_name(kind));
            let table = std::fs::File::open(&path)
                .map_err(Error::from)
                .and_then(|f| PolyTable::read_from(std::io::BufReader::new(f), kind.name(), m));
            match table {
                Ok(t) => loaded.push(t),
                Err(_) => {
                    let built = build_table(kind, m, p)?;
                    std::fs::create_dir_all(dir)?;
                    built.write_to(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
                    loaded.push(built);
                }
            }
        }
        let tables: [PolyTable; 6] = loaded.try_into().expect("six tables");
        Ok(NamedTables { modulus: m, coord_bound: p, tables })
    }

    fn file_name(&self, kind: TableKind) -> String {
        format!("{}_{}_{}.tbl", kind.name(), self.modulus, self.coord_bound)
    }
}

impl Default for PolyTable {
    fn default() -> Self {
        PolyTable { name: String::new(), modulus: 0, coeffs: Vec::new() }
    }
}

fn build_table(kind: TableKind, modulus: u64, coord_bound: u64) -> Result<PolyTable> {
    lagrange_table(kind.name(), modulus, |x| kind.target(x, modulus, coord_bound) as i64)
}

pub fn build_named_tables(params: &RingParams) -> Result<NamedTables> {
    let (m, p) = (params.modulus(), params.coord_bound());
    let tables: Vec<PolyTable> =
        TableKind::ALL.iter().map(|&k| build_table(k, m, p)).collect::<Result<_>>()?;
    Ok(NamedTables {
        modulus: m,
        coord_bound: p,
        tables: tables.try_into().expect("six tables"),
    })
}

/// Process-wide table cache keyed by (℘, p). Tables are plaintext work and
/// are built once.
pub fn named_tables(params: &RingParams) -> Result<Arc<NamedTables>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), Arc<NamedTables>>>> = OnceLock::new();
    let key = (params.modulus(), params.coord_bound());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().expect("table cache poisoned").get(&key) {
        return Ok(t.clone());
    }
    let built = Arc::new(build_named_tables(params)?);
    Ok(cache.lock().expect("table cache poisoned").entry(key).or_insert(built).clone())
}

/// Evaluates one of the named tables on a ciphertext.
pub fn eval_named(
    ev: &Evaluator,
    tables: &NamedTables,
    kind: TableKind,
    x: &Cipher,
) -> Result<Cipher> {
    eval_poly_ps(ev, tables.get(kind), x)
}

/// Encrypted `x < y`, realized as isNeg(x - y).
///
/// Exact whenever both operands lie in `[0, D_max]`. Either side may be a
/// plaintext; both may not.
pub fn is_smaller<'a, 'b>(
    ev: &Evaluator,
    tables: &NamedTables,
    x: impl Into<Operand<'a>>,
    y: impl Into<Operand<'b>>,
) -> Result<Cipher> {
    let diff = match (x.into(), y.into()) {
        (Operand::Cipher(a), b) => ev.sub(a, b)?,
        (Operand::Plain(a), Operand::Cipher(b)) => ev.sub_from(a, b)?,
        (Operand::Plain(_), Operand::Plain(_)) => {
            return Err(Error::param("is_smaller needs at least one encrypted operand"))
        }
    };
    eval_named(ev, tables, TableKind::IsNeg, &diff)
}
