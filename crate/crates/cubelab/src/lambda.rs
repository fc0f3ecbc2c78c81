//! Moment norms, sign-extremal norms, and empirical square-function
//! constants for character families.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::designs::{double_factorial, CharacterFamily};
use crate::error::{Error, Result};
use crate::hypercube::{self, synthesize, CoordinateSet, HypercubeFunction};
use crate::par::{self, Exec};

/// Result of a max-over-signs norm search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSearchResult {
    /// The attained maximum of `|| sum_i eps_i v_i ||_q`.
    pub value: f64,
    /// The maximizing sign pattern, entries +1/-1.
    pub signs: Vec<i8>,
    /// True when the full pattern space was enumerated.
    pub exact: bool,
    /// Number of norm evaluations performed.
    pub evaluations: u64,
}

/// Search mode for [`max_sign_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignSearchMode {
    Exact,
    Heuristic { seed: u64, restarts: usize },
    /// Exact when the vector count is within `exact_threshold`, else heuristic.
    Auto { seed: u64, restarts: usize },
}

/// Default cap on exact sign enumeration.
pub const EXACT_SIGN_THRESHOLD: usize = 20;

/// Empirical square-function report for a family at exponent `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub q: f64,
    /// Measured sup of `||sum a_i v_i||_q / ||a||_2` over the probe set.
    pub lower: f64,
    /// Pairing bound `((2k-1)!!)^{1/2k}` when independence is certified.
    pub upper: Option<f64>,
    pub samples: usize,
    pub seed: u64,
}

fn mean_abs_pow_q(values: &[f64], q: f64, exec: Exec) -> f64 {
    hypercube::mean_abs_pow(values, q, exec) / values.len() as f64
}

/// `|| sum_i a_i w_{A_i} ||_q` for even integer `q`, by pointwise summation
/// over the synthesized function.
pub fn moment_norm(family: &CharacterFamily, coeffs: &[f64], q: u32) -> Result<f64> {
    if q < 2 || q % 2 != 0 {
        return Err(Error::domain(format!("q = {q} must be a positive even integer")));
    }
    if coeffs.len() != family.len() {
        return Err(Error::domain("coefficient count does not match family size"));
    }
    let f = synthesize(family.n(), family.masks(), coeffs)?;
    let k = q as i32;
    let s = par::indexed_sum(f.len(), Exec::auto(), |r| {
        r.map(|i| f.values()[i].powi(k).abs()).sum()
    });
    Ok((s / f.len() as f64).powf(1.0 / q as f64))
}

/// Exhaustive or local-search maximization of `||sum_i eps_i v_i||_q` over
/// sign patterns. Exact mode fixes the first sign by symmetry and enumerates
/// `2^{N-1}` patterns with Gray-code updates.
pub fn max_sign_norm(
    vectors: &[HypercubeFunction],
    q: f64,
    mode: SignSearchMode,
) -> Result<SignSearchResult> {
    max_sign_norm_exec(vectors, q, mode, EXACT_SIGN_THRESHOLD, Exec::auto())
}

/// Sequential reference path of [`max_sign_norm`].
pub fn max_sign_norm_seq(
    vectors: &[HypercubeFunction],
    q: f64,
    mode: SignSearchMode,
) -> Result<SignSearchResult> {
    max_sign_norm_exec(vectors, q, mode, EXACT_SIGN_THRESHOLD, Exec::Sequential)
}

/// [`max_sign_norm`] with an explicit exact-enumeration cap (CLI override).
pub fn max_sign_norm_with_threshold(
    vectors: &[HypercubeFunction],
    q: f64,
    mode: SignSearchMode,
    exact_threshold: usize,
) -> Result<SignSearchResult> {
    max_sign_norm_exec(vectors, q, mode, exact_threshold, Exec::auto())
}

fn max_sign_norm_exec(
    vectors: &[HypercubeFunction],
    q: f64,
    mode: SignSearchMode,
    exact_threshold: usize,
    exec: Exec,
) -> Result<SignSearchResult> {
    if vectors.is_empty() {
        return Err(Error::domain("empty vector list"));
    }
    if q.is_nan() || q < 1.0 {
        return Err(Error::domain(format!("q = {q} < 1")));
    }
    let n = vectors[0].n();
    if vectors.iter().any(|v| v.n() != n) {
        return Err(Error::domain("vectors live on different cubes"));
    }
    match mode {
        SignSearchMode::Exact => {
            if vectors.len() > exact_threshold {
                return Err(Error::capacity(format!(
                    "exact sign search over {} vectors exceeds the cap {exact_threshold}",
                    vectors.len()
                )));
            }
            exact_sign_search(vectors, q, exec)
        }
        SignSearchMode::Heuristic { seed, restarts } => {
            heuristic_sign_search(vectors, q, seed, restarts.max(1), exec)
        }
        SignSearchMode::Auto { seed, restarts } => {
            if vectors.len() <= exact_threshold {
                exact_sign_search(vectors, q, exec)
            } else {
                heuristic_sign_search(vectors, q, seed, restarts.max(1), exec)
            }
        }
    }
}

fn signs_for_pattern(gray: u64, count: usize) -> Vec<i8> {
    // sign of vector 0 fixed to +1; bit i-1 of the Gray value flips vector i
    let mut signs = vec![1i8; count];
    for i in 1..count {
        if gray >> (i - 1) & 1 != 0 {
            signs[i] = -1;
        }
    }
    signs
}

fn combination(vectors: &[HypercubeFunction], signs: &[i8]) -> Vec<f64> {
    let len = vectors[0].len();
    let mut sum = vec![0.0; len];
    for (v, &s) in vectors.iter().zip(signs) {
        let s = s as f64;
        for (acc, &x) in sum.iter_mut().zip(v.values()) {
            *acc += s * x;
        }
    }
    sum
}

fn exact_sign_search(vectors: &[HypercubeFunction], q: f64, exec: Exec) -> Result<SignSearchResult> {
    let count = vectors.len();
    let patterns = 1u64 << (count - 1);
    // fixed chunking so the reduction is independent of the worker count
    let chunk: u64 = 1 << 13;
    let starts: Vec<u64> = (0..patterns).step_by(chunk as usize).collect();
    let best = par::map_ordered(&starts, exec, |&start| {
        let end = (start + chunk).min(patterns);
        let mut signs = signs_for_pattern(start ^ (start >> 1), count);
        let mut sum = combination(vectors, &signs);
        let mut best_val = mean_abs_pow_q(&sum, q, Exec::Sequential);
        let mut best_idx = start;
        for idx in start + 1..end {
            // Gray step: flip the vector selected by the lowest set bit
            let flip = idx.trailing_zeros() as usize + 1;
            let s_new = -signs[flip];
            signs[flip] = s_new;
            let v = vectors[flip].values();
            let step = 2.0 * s_new as f64;
            for (acc, &x) in sum.iter_mut().zip(v) {
                *acc += step * x;
            }
            let val = mean_abs_pow_q(&sum, q, Exec::Sequential);
            if val > best_val {
                best_val = val;
                best_idx = idx;
            }
        }
        (best_val, best_idx)
    });
    let (best_val, best_idx) = best
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .unwrap();
    let signs = signs_for_pattern(best_idx ^ (best_idx >> 1), count);
    Ok(SignSearchResult {
        value: best_val.powf(1.0 / q),
        signs,
        exact: true,
        evaluations: patterns,
    })
}

fn heuristic_sign_search(
    vectors: &[HypercubeFunction],
    q: f64,
    seed: u64,
    restarts: usize,
    exec: Exec,
) -> Result<SignSearchResult> {
    let count = vectors.len();
    let restart_ids: Vec<u64> = (0..restarts as u64).collect();
    let runs = par::map_ordered(&restart_ids, exec, |&r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r.wrapping_mul(0x9E3779B97F4A7C15)));
        use rand::Rng;
        let mut signs: Vec<i8> = (0..count).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        signs[0] = 1;
        let mut sum = combination(vectors, &signs);
        let mut val = mean_abs_pow_q(&sum, q, Exec::Sequential);
        let mut evals = 1u64;
        loop {
            let mut improved = false;
            for i in 1..count {
                let s_new = -signs[i];
                let step = 2.0 * s_new as f64;
                for (acc, &x) in sum.iter_mut().zip(vectors[i].values()) {
                    *acc += step * x;
                }
                let cand = mean_abs_pow_q(&sum, q, Exec::Sequential);
                evals += 1;
                if cand > val + 1e-15 {
                    val = cand;
                    signs[i] = s_new;
                    improved = true;
                } else {
                    // undo
                    for (acc, &x) in sum.iter_mut().zip(vectors[i].values()) {
                        *acc -= step * x;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (val, signs, evals)
    });
    let mut best: Option<(f64, Vec<i8>)> = None;
    let mut total_evals = 0u64;
    for (val, signs, evals) in runs {
        total_evals += evals;
        if best.as_ref().map_or(true, |(b, _)| val > *b) {
            best = Some((val, signs));
        }
    }
    let (val, signs) = best.unwrap();
    Ok(SignSearchResult {
        value: val.powf(1.0 / q),
        signs,
        exact: false,
        evaluations: total_evals,
    })
}

/// Measured lower bound and combinatorial upper bound for the `L_q / L_2`
/// equivalence constant of a family.
pub fn lambda_constant(
    family: &CharacterFamily,
    q: f64,
    samples: usize,
    seed: u64,
) -> Result<LambdaReport> {
    if samples < 1 {
        return Err(Error::domain("samples must be >= 1"));
    }
    let count = family.len();
    // deterministic probes: all-ones and each basis vector
    let mut probes: Vec<Vec<f64>> = Vec::new();
    probes.push(vec![1.0 / (count as f64).sqrt(); count]);
    for i in 0..count {
        let mut e = vec![0.0; count];
        e[i] = 1.0;
        probes.push(e);
    }
    let sample_ids: Vec<u64> = (0..samples as u64).collect();
    let mut draws: Vec<Vec<f64>> = par::map_ordered(&sample_ids, Exec::auto(), |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i.wrapping_mul(0x9E3779B97F4A7C15)));
        gaussian_unit(&mut rng, count)
    });
    probes.append(&mut draws);
    let ratios = par::map_ordered(&probes, Exec::auto(), |a| {
        let norm2: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let f = synthesize(family.n(), family.masks(), a).expect("valid masks");
        let nq = hypercube::lp_norm(&f, q).expect("q >= 1");
        nq / norm2
    });
    let lower = ratios.into_iter().fold(0.0f64, f64::max);
    let upper = if q >= 2.0 && q.fract() == 0.0 && (q as usize) % 2 == 0 {
        match family.claimed_independence() {
            Some(t) if t >= q as usize => {
                Some(double_factorial(q as u32 - 1).powf(1.0 / q))
            }
            _ => None,
        }
    } else {
        None
    };
    Ok(LambdaReport {
        q,
        lower,
        upper,
        samples,
        seed,
    })
}

fn gaussian_unit(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    use rand::Rng;
    // Box-Muller, deterministic given the stream
    let mut a = Vec::with_capacity(count);
    while a.len() < count {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        a.push(r * (std::f64::consts::TAU * u2).cos());
        if a.len() < count {
            a.push(r * (std::f64::consts::TAU * u2).sin());
        }
    }
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in a.iter_mut() {
        *x /= norm;
    }
    a
}

/// Empirical sup of `||sum a_i r_i||_p / ||a||_2` over random unit
/// coefficient draws on `n_rad` Rademacher functions.
pub fn khintchine_estimate(p: f64, n_rad: usize, trials: usize, seed: u64) -> Result<f64> {
    khintchine_exec(p, n_rad, trials, seed, Exec::auto())
}

/// Sequential reference path of [`khintchine_estimate`].
pub fn khintchine_estimate_seq(p: f64, n_rad: usize, trials: usize, seed: u64) -> Result<f64> {
    khintchine_exec(p, n_rad, trials, seed, Exec::Sequential)
}

fn khintchine_exec(p: f64, n_rad: usize, trials: usize, seed: u64, exec: Exec) -> Result<f64> {
    if p < 2.0 {
        return Err(Error::domain(format!("p = {p} < 2")));
    }
    if n_rad == 0 || n_rad > hypercube::MAX_BITS {
        return Err(Error::domain(format!("n = {n_rad} out of range")));
    }
    if trials == 0 {
        return Err(Error::domain("trials must be >= 1"));
    }
    let trial_ids: Vec<u64> = (0..trials as u64).collect();
    let vals = par::map_ordered(&trial_ids, exec, |&t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t.wrapping_mul(0x9E3779B97F4A7C15)));
        let a = gaussian_unit(&mut rng, n_rad);
        rademacher_norm(&a, p)
    });
    Ok(vals.into_iter().fold(0.0f64, f64::max))
}

// ||sum a_i r_i||_p by a Gray-code walk over all 2^n sign points.
fn rademacher_norm(a: &[f64], p: f64) -> f64 {
    let n = a.len();
    let points = 1u64 << n;
    let mut s: f64 = a.iter().sum();
    let even = p.fract() == 0.0 && (p as u64) % 2 == 0 && p <= 64.0;
    let k = p as i32;
    let mut acc = if even { s.powi(k) } else { s.abs().powf(p) };
    let mut signs = vec![1.0f64; n];
    for idx in 1..points {
        let flip = idx.trailing_zeros() as usize;
        signs[flip] = -signs[flip];
        s += 2.0 * signs[flip] * a[flip];
        acc += if even { s.powi(k) } else { s.abs().powf(p) };
    }
    (acc / points as f64).powf(1.0 / p)
}

/// Outcome of the disjoint-block square-function check at exponent `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossBlockCheck {
    /// `||sum_k g_k||_p`.
    pub combined_norm: f64,
    /// `2 B_p (sum_k ||g_k||_p^2)^{1/2}`.
    pub bound: f64,
    /// `combined_norm / bound`.
    pub ratio: f64,
    pub pass: bool,
}

/// Scatter the low bits of `mask` into the set bit positions of `block`.
pub fn embed_mask(block: CoordinateSet, mask: u32) -> u32 {
    let mut out = 0u32;
    let mut remaining = block.mask();
    let mut bit = 0;
    while remaining != 0 {
        let pos = remaining.trailing_zeros();
        if mask >> bit & 1 != 0 {
            out |= 1 << pos;
        }
        remaining &= remaining - 1;
        bit += 1;
    }
    out
}

/// Verifies `||sum_k g_k||_p <= 2 B_p (sum_k ||g_k||_p^2)^{1/2}` for block
/// combinations `g_k` living on disjoint coordinate sets of a joint cube,
/// with `B_p` the exact even-moment constant `((p-1)!!)^{1/p}`.
pub fn cross_block_check(
    joint_n: usize,
    blocks: &[(CoordinateSet, &CharacterFamily, &[f64])],
    p: u32,
) -> Result<CrossBlockCheck> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::domain(format!("p = {p} must be a positive even integer")));
    }
    if joint_n > hypercube::MAX_BITS {
        return Err(Error::domain(format!("joint cube {joint_n} exceeds cap")));
    }
    if blocks.is_empty() {
        return Err(Error::domain("no blocks"));
    }
    let mut used = 0u32;
    for (block, fam, coeffs) in blocks {
        if u64::from(block.mask()) >= (1u64 << joint_n) {
            return Err(Error::domain("block outside the joint cube"));
        }
        if block.mask() & used != 0 {
            return Err(Error::domain("blocks share a coordinate"));
        }
        used |= block.mask();
        if block.mask().count_ones() as usize != fam.n() {
            return Err(Error::domain("block size does not match family dimension"));
        }
        if coeffs.len() != fam.len() {
            return Err(Error::domain("coefficient count does not match family size"));
        }
    }
    let pf = p as f64;
    let b_p = double_factorial(p - 1).powf(1.0 / pf);
    let mut joint_masks = Vec::new();
    let mut joint_coeffs = Vec::new();
    let mut block_norm_sq = 0.0;
    for (block, fam, coeffs) in blocks {
        let g_k = synthesize(fam.n(), fam.masks(), coeffs)?;
        let nk = hypercube::lp_norm(&g_k, pf)?;
        block_norm_sq += nk * nk;
        for (&m, &a) in fam.masks().iter().zip(coeffs.iter()) {
            joint_masks.push(embed_mask(*block, m));
            joint_coeffs.push(a);
        }
    }
    let g = synthesize(joint_n, &joint_masks, &joint_coeffs)?;
    let combined_norm = hypercube::lp_norm(&g, pf)?;
    let bound = 2.0 * b_p * block_norm_sq.sqrt();
    Ok(CrossBlockCheck {
        combined_norm,
        bound,
        ratio: combined_norm / bound,
        pass: combined_norm <= bound + 1e-9,
    })
}
