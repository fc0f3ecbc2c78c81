//! GF(2^m) arithmetic and character-family constructions with certified
//! independence order.
//!
//! A family is `t`-independent when no `r <= t` distinct masks XOR to zero;
//! such a family satisfies the even-moment pairing bound at exponent `t`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::MAX_BITS;

/// Default irreducible polynomial codes for GF(2^m), 1 <= m <= 16.
/// Entry `m-1` is the (m+1)-bit code of a degree-m polynomial.
pub const DEFAULT_IRREDUCIBLE: [u32; 16] = [
    0b11,                // x + 1
    0b111,               // x^2 + x + 1
    0b1011,              // x^3 + x + 1
    0b10011,             // x^4 + x + 1
    0b100101,            // x^5 + x^2 + 1
    0b1000011,           // x^6 + x + 1
    0b10000011,          // x^7 + x + 1
    0b100011011,         // x^8 + x^4 + x^3 + x + 1
    0b1000010001,        // x^9 + x^4 + 1
    0b10000001001,       // x^10 + x^3 + 1
    0b100000000101,      // x^11 + x^2 + 1
    0b1000001010011,     // x^12 + x^6 + x^4 + x + 1
    0b10000000011011,    // x^13 + x^4 + x^3 + x + 1
    0b100010001000011,   // x^14 + x^10 + x^6 + x + 1
    0b1000000000000011,  // x^15 + x + 1
    0b10001000000001011, // x^16 + x^12 + x^3 + x + 1
];

/// A finite field GF(2^m) given by an irreducible modulus polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    m: usize,
    irreducible: u32,
}

impl FieldSpec {
    /// Builds a field spec, checking degree and irreducibility exhaustively.
    pub fn new(m: usize, irreducible: u32) -> Result<Self> {
        if m == 0 || m > 16 {
            return Err(Error::domain(format!("extension degree m = {m} out of [1,16]")));
        }
        if poly_degree(irreducible) != m as i32 {
            return Err(Error::domain(format!(
                "polynomial {irreducible:#b} does not have degree {m}"
            )));
        }
        if !is_irreducible(irreducible) {
            return Err(Error::domain(format!("polynomial {irreducible:#b} is reducible")));
        }
        Ok(FieldSpec { m, irreducible })
    }

    /// The shipped default modulus for degree `m`.
    pub fn default_for(m: usize) -> Result<Self> {
        if m == 0 || m > 16 {
            return Err(Error::domain(format!("extension degree m = {m} out of [1,16]")));
        }
        FieldSpec::new(m, DEFAULT_IRREDUCIBLE[m - 1])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> u32 {
        1u32 << self.m
    }

    pub fn irreducible(&self) -> u32 {
        self.irreducible
    }
}

fn poly_degree(p: u32) -> i32 {
    31 - p.leading_zeros() as i32
}

// Remainder of a modulo b over GF(2).
fn poly_mod(mut a: u64, b: u64) -> u64 {
    let db = 63 - b.leading_zeros() as i32;
    loop {
        let da = 63 - (a | 1).leading_zeros() as i32;
        if a == 0 || da < db {
            return a;
        }
        a ^= b << (da - db);
    }
}

// Trial division by every polynomial of degree 1..=deg/2.
fn is_irreducible(p: u32) -> bool {
    let deg = poly_degree(p);
    if deg < 1 {
        return false;
    }
    for d in 1..=(deg / 2) {
        for q in (1u32 << d)..(1u32 << (d + 1)) {
            if poly_mod(p as u64, q as u64) == 0 {
                return false;
            }
        }
    }
    true
}

/// Carry-less product of field element codes, reduced by the modulus.
pub fn gf2m_mul(spec: &FieldSpec, a: u32, b: u32) -> Result<u32> {
    if a >= spec.order() || b >= spec.order() {
        return Err(Error::domain(format!(
            "codes {a}, {b} out of range for GF(2^{})",
            spec.m
        )));
    }
    let mut prod = 0u64;
    let mut x = a as u64;
    let mut y = b;
    while y != 0 {
        if y & 1 != 0 {
            prod ^= x;
        }
        x <<= 1;
        y >>= 1;
    }
    Ok(poly_mod(prod, spec.irreducible as u64) as u32)
}

fn gf2m_pow(spec: &FieldSpec, mut base: u32, mut e: u64) -> Result<u32> {
    let mut acc = 1u32;
    while e > 0 {
        if e & 1 != 0 {
            acc = gf2m_mul(spec, acc, base)?;
        }
        base = gf2m_mul(spec, base, base)?;
        e >>= 1;
    }
    Ok(acc)
}

fn element_order(spec: &FieldSpec, a: u32) -> Result<u32> {
    let mut x = a;
    let mut k = 1;
    while x != 1 {
        x = gf2m_mul(spec, x, a)?;
        k += 1;
        if k > spec.order() {
            return Err(Error::construction("order search did not terminate"));
        }
    }
    Ok(k)
}

/// Smallest code with multiplicative order `2^m - 1`.
pub fn generator(spec: &FieldSpec) -> Result<u32> {
    let group = spec.order() - 1;
    for a in 1..spec.order() {
        if element_order(spec, a)? == group {
            return Ok(a);
        }
    }
    Err(Error::construction("no generator found"))
}

/// How a family was constructed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Bch { m: usize, k: usize },
    Rademacher,
    Random { seed: u64 },
    Greedy { t: usize },
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Bch { m, k } => write!(f, "bch({m},{k})"),
            Provenance::Rademacher => write!(f, "rademacher"),
            Provenance::Random { seed } => write!(f, "random({seed})"),
            Provenance::Greedy { t } => write!(f, "greedy({t})"),
        }
    }
}

/// A list of distinct nonzero character masks on an `n`-bit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterFamily {
    n: usize,
    masks: Vec<u32>,
    provenance: Provenance,
    claimed_independence: Option<usize>,
}

impl CharacterFamily {
    pub fn new(
        n: usize,
        masks: Vec<u32>,
        provenance: Provenance,
        claimed_independence: Option<usize>,
    ) -> Result<Self> {
        if n > MAX_BITS {
            return Err(Error::domain(format!("n = {n} exceeds cap {MAX_BITS}")));
        }
        let mut seen = std::collections::HashSet::new();
        for &m in &masks {
            if m == 0 {
                return Err(Error::domain("zero mask is not mean-zero"));
            }
            if u64::from(m) >= (1u64 << n) {
                return Err(Error::domain(format!("mask {m:#x} out of range for n = {n}")));
            }
            if !seen.insert(m) {
                return Err(Error::domain(format!("duplicate mask {m:#x}")));
            }
        }
        let fam = CharacterFamily {
            n,
            masks,
            provenance,
            claimed_independence,
        };
        if let Some(t) = claimed_independence {
            if let IndependenceCheck::Fail { witness } = verify_independence(&fam, t)? {
                return Err(Error::construction(format!(
                    "claimed independence {t} fails, witness {witness:?}"
                )));
            }
        }
        Ok(fam)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[u32] {
        &self.masks
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn claimed_independence(&self) -> Option<usize> {
        self.claimed_independence
    }

    /// Pairing upper bound `((t-1)!!)^{1/t}` at the claimed even order, if any.
    pub fn pairing_constant(&self) -> Option<f64> {
        self.claimed_independence.map(|t| {
            let t = t as u32;
            double_factorial(t - 1).powf(1.0 / t as f64)
        })
    }
}

/// `(k)!! = k (k-2) (k-4) ...` as a float.
pub fn double_factorial(k: u32) -> f64 {
    let mut acc = 1.0;
    let mut i = k;
    while i > 1 {
        acc *= i as f64;
        i -= 2;
    }
    acc
}

/// BCH-style family: `N = 2^m - 1` masks in `n = k*m` coordinates, mask `j`
/// concatenating the codes of the odd generator powers
/// `(g^j, g^{3j}, ..., g^{(2k-1)j})`, first element in the lowest `m` bits.
/// The result is `2k`-independent by the designed-distance argument.
pub fn bch_family(spec: &FieldSpec, k: usize) -> Result<CharacterFamily> {
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let n = k * spec.m;
    if n > MAX_BITS {
        return Err(Error::domain(format!("k*m = {n} exceeds cap {MAX_BITS}")));
    }
    let g = generator(spec)?;
    let group = (spec.order() - 1) as u64;
    let mut masks = Vec::with_capacity(group as usize);
    for j in 0..group {
        let mut mask = 0u32;
        for t in 0..k {
            let e = ((2 * t as u64 + 1) * j) % group;
            let code = gf2m_pow(spec, g, e)?;
            mask |= code << (t * spec.m);
        }
        masks.push(mask);
    }
    CharacterFamily::new(n, masks, Provenance::Bch { m: spec.m, k }, Some(2 * k))
}

/// The `n` singleton masks; independent at every order.
pub fn rademacher_family(n: usize) -> Result<CharacterFamily> {
    if n == 0 || n > MAX_BITS {
        return Err(Error::domain(format!("n = {n} out of [1,{MAX_BITS}]")));
    }
    let masks = (0..n).map(|i| 1u32 << i).collect();
    // distinct singletons never XOR to zero; claim the order we typically use
    CharacterFamily::new(n, masks, Provenance::Rademacher, Some(2 * n))
}

/// `count` distinct nonzero masks drawn uniformly without replacement.
pub fn random_family(n: usize, count: usize, seed: u64) -> Result<CharacterFamily> {
    if n == 0 || n > MAX_BITS {
        return Err(Error::domain(format!("n = {n} out of [1,{MAX_BITS}]")));
    }
    let total = (1u64 << n) - 1;
    if count as u64 > total {
        return Err(Error::domain(format!("cannot draw {count} distinct masks from {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks: Vec<u32>;
    if count as u64 * 2 > total {
        // dense request: partial Fisher-Yates over the full range
        let mut all: Vec<u32> = (1..=total as u32).collect();
        for i in 0..count {
            let j = rng.gen_range(i..all.len());
            all.swap(i, j);
        }
        all.truncate(count);
        masks = all;
    } else {
        let mut seen = std::collections::HashSet::new();
        masks = Vec::with_capacity(count);
        while masks.len() < count {
            let m = rng.gen_range(1..=total) as u32;
            if seen.insert(m) {
                masks.push(m);
            }
        }
    }
    CharacterFamily::new(n, masks, Provenance::Random { seed }, None)
}

/// Deterministic greedy family: scan masks in increasing order, keeping those
/// that preserve `t`-independence, until `count` masks are collected.
pub fn greedy_family(n: usize, count: usize, t: usize) -> Result<CharacterFamily> {
    if n == 0 || n > MAX_BITS {
        return Err(Error::domain(format!("n = {n} out of [1,{MAX_BITS}]")));
    }
    let mut masks: Vec<u32> = Vec::with_capacity(count);
    for cand in 1..(1u64 << n) as u32 {
        masks.push(cand);
        let fam = CharacterFamily {
            n,
            masks: masks.clone(),
            provenance: Provenance::Greedy { t },
            claimed_independence: None,
        };
        if !matches!(verify_independence(&fam, t)?, IndependenceCheck::Pass) {
            masks.pop();
        }
        if masks.len() == count {
            return CharacterFamily::new(n, masks, Provenance::Greedy { t }, Some(t));
        }
    }
    Err(Error::capacity(format!(
        "no {t}-independent family of size {count} found in {n} bits"
    )))
}

/// Outcome of an independence certification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndependenceCheck {
    Pass,
    /// A minimal subset of masks XORing to zero.
    Fail { witness: Vec<u32> },
}

const DIRECT_ENUM_LIMIT: u64 = 10_000_000;

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Pass iff no `r` distinct masks, `1 <= r <= t`, XOR to zero.
/// On failure returns a witness of minimal size.
pub fn verify_independence(family: &CharacterFamily, t: usize) -> Result<IndependenceCheck> {
    if t < 2 {
        return Err(Error::domain("independence order must be >= 2"));
    }
    let masks = &family.masks;
    let n = masks.len();
    for r in 1..=t.min(n) {
        let found = if binomial(n as u64, r as u64) <= DIRECT_ENUM_LIMIT {
            find_zero_subset_direct(masks, r)
        } else {
            find_zero_subset_mitm(masks, r)
        };
        if let Some(idx) = found {
            let witness = idx.iter().map(|&i| masks[i]).collect();
            return Ok(IndependenceCheck::Fail { witness });
        }
    }
    Ok(IndependenceCheck::Pass)
}

// DFS over index subsets of exact size r with XOR accumulator.
fn find_zero_subset_direct(masks: &[u32], r: usize) -> Option<Vec<usize>> {
    fn rec(masks: &[u32], r: usize, start: usize, acc: u32, picked: &mut Vec<usize>) -> bool {
        if r == 0 {
            return acc == 0;
        }
        for i in start..=masks.len().saturating_sub(r) {
            picked.push(i);
            if rec(masks, r - 1, i + 1, acc ^ masks[i], picked) {
                return true;
            }
            picked.pop();
        }
        false
    }
    let mut picked = Vec::with_capacity(r);
    if rec(masks, r, 0, 0, &mut picked) {
        Some(picked)
    } else {
        None
    }
}

// Meet-in-the-middle: XOR table of the ceil(r/2)-subsets probed by the
// floor(r/2)-subsets; a disjoint collision is a zero subset of size r.
fn find_zero_subset_mitm(masks: &[u32], r: usize) -> Option<Vec<usize>> {
    let a = r.div_ceil(2);
    let b = r / 2;
    let mut table: HashMap<u32, Vec<Vec<usize>>> = HashMap::new();
    let mut subset = Vec::with_capacity(a);
    fill_table(masks, a, 0, 0, &mut subset, &mut table);
    let mut probe = Vec::with_capacity(b);
    probe_table(masks, b, 0, 0, &mut probe, &table)
}

fn fill_table(
    masks: &[u32],
    left: usize,
    start: usize,
    acc: u32,
    subset: &mut Vec<usize>,
    table: &mut HashMap<u32, Vec<Vec<usize>>>,
) {
    if left == 0 {
        table.entry(acc).or_default().push(subset.clone());
        return;
    }
    for i in start..=masks.len().saturating_sub(left) {
        subset.push(i);
        fill_table(masks, left - 1, i + 1, acc ^ masks[i], subset, table);
        subset.pop();
    }
}

fn probe_table(
    masks: &[u32],
    left: usize,
    start: usize,
    acc: u32,
    subset: &mut Vec<usize>,
    table: &HashMap<u32, Vec<Vec<usize>>>,
) -> Option<Vec<usize>> {
    if left == 0 {
        if let Some(partners) = table.get(&acc) {
            for p in partners {
                if p.iter().all(|i| !subset.contains(i)) {
                    let mut out = subset.clone();
                    out.extend_from_slice(p);
                    out.sort_unstable();
                    return Some(out);
                }
            }
        }
        return None;
    }
    for i in start..=masks.len().saturating_sub(left) {
        subset.push(i);
        let hit = probe_table(masks, left - 1, i + 1, acc ^ masks[i], subset, table);
        if hit.is_some() {
            return hit;
        }
        subset.pop();
    }
    None
}
