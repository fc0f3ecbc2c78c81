//! Function algebra on finite hypercubes `{-1,1}^n` with uniform probability.
//!
//! Points are encoded little-endian: point code `b` has coordinate
//! `x_i = (-1)^{b_i}` where `b_i` is bit `i` of `b`. Every array of length
//! `2^n` is indexed in this canonical point order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Hard cap on cube dimension: 2^24 points.
pub const MAX_BITS: usize = 24;

/// A subset of coordinates, bit `i` set means coordinate `i` is in the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoordinateSet(pub u32);

impl CoordinateSet {
    pub const EMPTY: CoordinateSet = CoordinateSet(0);

    pub fn full(n: usize) -> Self {
        CoordinateSet(((1u64 << n) - 1) as u32)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains_set(self, other: CoordinateSet) -> bool {
        other.0 & !self.0 == 0
    }
}

/// Real-valued function on `{-1,1}^n`, stored in canonical point order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercubeFunction {
    n: usize,
    values: Vec<f64>,
}

/// Walsh coefficients of a function, probability-normalized:
/// `coeffs[A] = 2^-n * sum_x f(x) w_A(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshSpectrum {
    n: usize,
    coeffs: Vec<f64>,
}

impl HypercubeFunction {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > MAX_BITS {
            return Err(Error::domain(format!("n = {n} exceeds cap {MAX_BITS}")));
        }
        if values.len() != 1usize << n {
            return Err(Error::domain(format!(
                "expected 2^{n} = {} values, got {}",
                1usize << n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite value"));
        }
        Ok(HypercubeFunction { n, values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(n, vec![c; 1usize << n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Probability inner product `2^-n sum_x f(x) g(x)`.
    pub fn inner(&self, other: &HypercubeFunction) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::domain("dimension mismatch"));
        }
        let scale = 1.0 / self.values.len() as f64;
        let s = par::indexed_sum(self.values.len(), Exec::auto(), |r| {
            r.map(|i| self.values[i] * other.values[i]).sum()
        });
        Ok(s * scale)
    }
}

impl WalshSpectrum {
    pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if n > MAX_BITS {
            return Err(Error::domain(format!("n = {n} exceeds cap {MAX_BITS}")));
        }
        if coeffs.len() != 1usize << n {
            return Err(Error::domain("coefficient length mismatch"));
        }
        Ok(WalshSpectrum { n, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }
}

/// The Walsh character `w_A(b) = (-1)^{popcount(b & A)}`.
pub fn character(n: usize, set: CoordinateSet) -> Result<HypercubeFunction> {
    if n > MAX_BITS {
        return Err(Error::domain(format!("n = {n} exceeds cap {MAX_BITS}")));
    }
    if u64::from(set.mask()) >= (1u64 << n) {
        return Err(Error::domain(format!(
            "mask {:#x} out of range for n = {n}",
            set.mask()
        )));
    }
    let values = (0..1usize << n)
        .map(|b| {
            if (b as u32 & set.mask()).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(HypercubeFunction { n, values })
}

// In-place unnormalized Walsh-Hadamard butterflies; self-inverse up to 2^n.
fn butterflies(values: &mut [f64], exec: Exec) {
    let len = values.len();
    let mut h = 1;
    while h < len {
        let block = 2 * h;
        par::for_each_chunk_mut(values, block, exec, |chunk| {
            let (lo, hi) = chunk.split_at_mut(h);
            for i in 0..h {
                let a = lo[i];
                let b = hi[i];
                lo[i] = a + b;
                hi[i] = a - b;
            }
        });
        h = block;
    }
}

/// Forward transform: probability-normalized Walsh coefficients.
pub fn fwht_forward(f: &HypercubeFunction) -> WalshSpectrum {
    fwht_forward_exec(f, Exec::auto())
}

/// Sequential reference path of [`fwht_forward`].
pub fn fwht_forward_seq(f: &HypercubeFunction) -> WalshSpectrum {
    fwht_forward_exec(f, Exec::Sequential)
}

pub(crate) fn fwht_forward_exec(f: &HypercubeFunction, exec: Exec) -> WalshSpectrum {
    let mut coeffs = f.values.clone();
    butterflies(&mut coeffs, exec);
    let scale = 1.0 / coeffs.len() as f64;
    for c in coeffs.iter_mut() {
        *c *= scale;
    }
    WalshSpectrum { n: f.n, coeffs }
}

/// Inverse transform: reconstructs the function from its coefficients.
pub fn fwht_inverse(s: &WalshSpectrum) -> HypercubeFunction {
    fwht_inverse_exec(s, Exec::auto())
}

/// Sequential reference path of [`fwht_inverse`].
pub fn fwht_inverse_seq(s: &WalshSpectrum) -> HypercubeFunction {
    fwht_inverse_exec(s, Exec::Sequential)
}

pub(crate) fn fwht_inverse_exec(s: &WalshSpectrum, exec: Exec) -> HypercubeFunction {
    let mut values = s.coeffs.clone();
    butterflies(&mut values, exec);
    HypercubeFunction { n: s.n, values }
}

/// `(2^-n sum |f|^p)^{1/p}` for `1 <= p < inf`; `max |f|` for `p = inf`.
pub fn lp_norm(f: &HypercubeFunction, p: f64) -> Result<f64> {
    lp_norm_exec(f, p, Exec::auto())
}

/// Sequential reference path of [`lp_norm`].
pub fn lp_norm_seq(f: &HypercubeFunction, p: f64) -> Result<f64> {
    lp_norm_exec(f, p, Exec::Sequential)
}

fn lp_norm_exec(f: &HypercubeFunction, p: f64, exec: Exec) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::domain(format!("p = {p} < 1")));
    }
    if p.is_infinite() {
        return Ok(f.values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let len = f.values.len();
    let mean = mean_abs_pow(&f.values, p, exec) / len as f64;
    Ok(mean.powf(1.0 / p))
}

// Sum of |v|^p, with the integer-exponent fast path.
pub(crate) fn mean_abs_pow(values: &[f64], p: f64, exec: Exec) -> f64 {
    if p == 1.0 {
        par::indexed_sum(values.len(), exec, |r| r.map(|i| values[i].abs()).sum())
    } else if p == 2.0 {
        par::indexed_sum(values.len(), exec, |r| {
            r.map(|i| values[i] * values[i]).sum()
        })
    } else if p.fract() == 0.0 && p <= 64.0 {
        let k = p as i32;
        par::indexed_sum(values.len(), exec, |r| {
            r.map(|i| values[i].abs().powi(k)).sum()
        })
    } else {
        par::indexed_sum(values.len(), exec, |r| {
            r.map(|i| values[i].abs().powf(p)).sum()
        })
    }
}

/// Conditional expectation `P_M f`: keeps Walsh coefficients with `A ⊆ M`.
pub fn conditional_expectation(f: &HypercubeFunction, m: CoordinateSet) -> Result<HypercubeFunction> {
    if u64::from(m.mask()) >= (1u64 << f.n) {
        return Err(Error::domain(format!(
            "mask {:#x} out of range for n = {}",
            m.mask(),
            f.n
        )));
    }
    let mut spec = fwht_forward(f);
    for (a, c) in spec.coeffs.iter_mut().enumerate() {
        if a as u32 & !m.mask() != 0 {
            *c = 0.0;
        }
    }
    Ok(fwht_inverse(&spec))
}

/// Synthesize `sum_i a_i w_{A_i}` on an `n`-bit cube.
pub fn synthesize(n: usize, masks: &[u32], coeffs: &[f64]) -> Result<HypercubeFunction> {
    if masks.len() != coeffs.len() {
        return Err(Error::domain("masks/coefficients length mismatch"));
    }
    let mut spec = WalshSpectrum::new(n, vec![0.0; 1usize << n])?;
    for (&m, &a) in masks.iter().zip(coeffs) {
        if u64::from(m) >= (1u64 << n) {
            return Err(Error::domain(format!("mask {m:#x} out of range for n = {n}")));
        }
        spec.coeffs[m as usize] += a;
    }
    Ok(fwht_inverse(&spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn character_examples() {
        // n=1 trivial cases
        assert_eq!(character(1, CoordinateSet(0)).unwrap().values(), &[1.0, 1.0]);
        assert_eq!(character(1, CoordinateSet(1)).unwrap().values(), &[1.0, -1.0]);
        // n=2, A={0,1}: popcount parity at the 4 points
        assert_eq!(
            character(2, CoordinateSet(0b11)).unwrap().values(),
            &[1.0, -1.0, -1.0, 1.0]
        );
        assert!(character(2, CoordinateSet(4)).is_err());
    }

    #[test]
    fn fwht_examples() {
        let one = HypercubeFunction::constant(3, 1.0).unwrap();
        let s = fwht_forward(&one);
        assert_eq!(s.coeffs()[0], 1.0);
        assert!(s.coeffs()[1..].iter().all(|&c| c == 0.0));

        let w = character(3, CoordinateSet(0b101)).unwrap();
        let s = fwht_forward(&w);
        for (a, &c) in s.coeffs().iter().enumerate() {
            let expect = if a == 0b101 { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-12);
        }

        // forward([2,0]) on n=1: coeffs[0] = 1, coeffs[1] = 1
        let f = HypercubeFunction::new(1, vec![2.0, 0.0]).unwrap();
        let s = fwht_forward(&f);
        assert!((s.coeffs()[0] - 1.0).abs() < 1e-12);
        assert!((s.coeffs()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_examples() {
        let w = character(4, CoordinateSet(0b1010)).unwrap();
        for p in [1.0, 2.0, 3.5, 7.0, f64::INFINITY] {
            assert!((lp_norm(&w, p).unwrap() - 1.0).abs() < 1e-12);
        }
        let f = HypercubeFunction::new(1, vec![2.0, 0.0]).unwrap();
        assert!((lp_norm(&f, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((lp_norm(&f, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn conditional_expectation_examples() {
        let f = HypercubeFunction::new(2, vec![0.5, -1.0, 2.0, 3.0]).unwrap();
        // M = full set: identity
        let full = conditional_expectation(&f, CoordinateSet::full(2)).unwrap();
        for (a, b) in f.values().iter().zip(full.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // characters: kept iff A ⊆ M, annihilated otherwise
        let w = character(3, CoordinateSet(0b011)).unwrap();
        let kept = conditional_expectation(&w, CoordinateSet(0b111)).unwrap();
        let killed = conditional_expectation(&w, CoordinateSet(0b101)).unwrap();
        for i in 0..8 {
            assert!((kept.values()[i] - w.values()[i]).abs() < 1e-12);
            assert!(killed.values()[i].abs() < 1e-12);
        }
        // mean: [2,0] on n=1 with M = empty -> [1,1]
        let f = HypercubeFunction::new(1, vec![2.0, 0.0]).unwrap();
        let m = conditional_expectation(&f, CoordinateSet::EMPTY).unwrap();
        assert!((m.values()[0] - 1.0).abs() < 1e-12);
        assert!((m.values()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormality_small() {
        let n = 6;
        for a in 0..1u32 << n {
            for b in 0..1u32 << n {
                let wa = character(n, CoordinateSet(a)).unwrap();
                let wb = character(n, CoordinateSet(b)).unwrap();
                let ip = wa.inner(&wb).unwrap();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "a={a} b={b} ip={ip}");
            }
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut rng = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let values: Vec<f64> = (0..1 << 12).map(|_| next()).collect();
        let f = HypercubeFunction::new(12, values).unwrap();
        let a = fwht_forward(&f);
        let b = fwht_forward_seq(&f);
        assert_eq!(a.coeffs(), b.coeffs());
        assert_eq!(lp_norm(&f, 3.0).unwrap(), lp_norm_seq(&f, 3.0).unwrap());
    }
}
