//! Exact L1 distances to symmetric convex hulls, survivor counting with the
//! Markov truncation, the reuse bound, and coverage-operator sweeps that
//! estimate the separation exponent.

pub(crate) mod frank_wolfe;
pub(crate) mod simplex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::designs::{bch_family, FieldSpec};
use crate::error::{Error, Result};
use crate::hypercube::{self, CoordinateSet, HypercubeFunction};
use crate::lambda::{max_sign_norm, SignSearchMode};
use crate::operators::{
    modulus, operator_norm_l1, project_block, AtomicMeasureSpace, L1Operator, MAX_DENSE_ENTRIES,
};
use crate::par::{self, Exec};

/// How a hull distance is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistanceMethod {
    /// Exact dense LP; capacity-limited to small cubes.
    Simplex,
    /// Conditional gradient with crossover; certified duality gap <= tol.
    FrankWolfe { tol: f64 },
}

/// Distance to the symmetric convex hull, with the attaining combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullDistance {
    pub distance: f64,
    pub combination: Vec<f64>,
    /// Certified duality gap: zero for the simplex, <= tol for Frank-Wolfe.
    pub gap: f64,
}

/// `min over ||lambda||_1 <= 1 of ||v - sum_j lambda_j c_j||_1`.
pub fn distance_to_symmetric_hull(
    v: &HypercubeFunction,
    columns: &[HypercubeFunction],
    method: DistanceMethod,
) -> Result<HullDistance> {
    if columns.iter().any(|c| c.n() != v.n()) {
        return Err(Error::domain("columns live on a different cube than v"));
    }
    let cols: Vec<Vec<f64>> = columns.iter().map(|c| c.values().to_vec()).collect();
    match method {
        DistanceMethod::Simplex => {
            let sol = simplex::simplex_distance(v.values(), &cols)?;
            Ok(HullDistance { distance: sol.distance, combination: sol.combination, gap: 0.0 })
        }
        DistanceMethod::FrankWolfe { tol } => {
            let sol = frank_wolfe::frank_wolfe_distance(v.values(), &cols, tol)?;
            if sol.gap > tol {
                return Err(Error::construction(format!(
                    "frank_wolfe certificate gap {} exceeds tol {tol}",
                    sol.gap
                )));
            }
            Ok(HullDistance { distance: sol.distance, combination: sol.combination, gap: sol.gap })
        }
    }
}

/// One-sided set distance: `max_{a in A} dist(a, hull)`.
pub fn dist_set(
    a: &[HypercubeFunction],
    hull_columns: &[HypercubeFunction],
    method: DistanceMethod,
) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::domain("dist_set needs a nonempty set"));
    }
    let results: Vec<Result<f64>> = par::map_ordered(a, Exec::auto(), |f| {
        distance_to_symmetric_hull(f, hull_columns, method).map(|d| d.distance)
    });
    let mut best = 0.0f64;
    for r in results {
        best = best.max(r?);
    }
    Ok(best)
}

/// `(||T||/epsilon)^2 (1-2 epsilon)^{-2}`: how many targets one vector in
/// the unit ball can serve.
pub fn reuse_bound(norm_t: f64, epsilon: f64) -> Result<f64> {
    if !(norm_t > 0.0) {
        return Err(Error::domain("operator norm must be positive"));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::domain(format!("epsilon = {epsilon} out of (0, 1/2)")));
    }
    let a = norm_t / epsilon;
    let b = 1.0 - 2.0 * epsilon;
    Ok(a * a / (b * b))
}

/// Truncation and survivor counts for a block projection of `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorAnalysis {
    /// `|| |T_n| 1 ||_1`.
    pub f_norm: f64,
    /// Measure of the complement of `E = [f <= ||T||/epsilon]`.
    pub e_complement_measure: f64,
    /// `#{w : ||T_n w||_1 >= 1 - 2 epsilon}`.
    pub survivors: usize,
    /// Per `w`, how many targets `v_i` have `<1_E v_i, +-T_n w> >= 1 - 2 epsilon`.
    pub pairing_counts: Vec<usize>,
}

/// Dense-path analysis of the truncation argument: `T_n = P_block T`,
/// `f = |T_n| 1`, `E` the sublevel set, and survivor/pairing counts against
/// the target characters.
pub fn survivor_analysis(
    t: &L1Operator,
    v_q: &[HypercubeFunction],
    targets: &[HypercubeFunction],
    block: CoordinateSet,
    epsilon: f64,
) -> Result<SurvivorAnalysis> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::domain(format!("epsilon = {epsilon} out of (0, 1/2)")));
    }
    let t_n = project_block(t, block)?;
    let norm_t = operator_norm_l1(t);
    let d = t.target().atoms();
    let nu = 1.0 / d as f64;
    let ones = vec![1.0; t.source().atoms()];
    let f = modulus(&t_n).apply(&ones)?;
    let f_norm: f64 = f.iter().map(|x| nu * x.abs()).sum();
    let threshold = if norm_t > 0.0 { norm_t / epsilon } else { 0.0 };
    let e_set: Vec<bool> = f.iter().map(|&x| x <= threshold + 1e-12).collect();
    let e_complement_measure: f64 = e_set.iter().filter(|&&inside| !inside).count() as f64 * nu;

    let cut = 1.0 - 2.0 * epsilon;
    let mut survivors = 0usize;
    let mut pairing_counts = Vec::with_capacity(v_q.len());
    for w in v_q {
        let image = t_n.apply(w.values())?;
        let norm1: f64 = image.iter().map(|x| nu * x.abs()).sum();
        if norm1 >= cut - 1e-12 {
            survivors += 1;
        }
        let mut count = 0usize;
        for v in targets {
            let inner: f64 = (0..d)
                .filter(|&y| e_set[y])
                .map(|y| nu * v.values()[y] * image[y])
                .sum();
            if inner.abs() >= cut - 1e-12 {
                count += 1;
            }
        }
        pairing_counts.push(count);
    }
    Ok(SurvivorAnalysis { f_norm, e_complement_measure, survivors, pairing_counts })
}

// GF(2) row reduction: returns (rank, representation of each mask over the
// accumulated basis)
fn gf2_basis(masks: &[u32]) -> (usize, Vec<u32>) {
    let mut basis: Vec<(u32, u32)> = Vec::new(); // (mask, rep)
    let mut reps = Vec::with_capacity(masks.len());
    for &m in masks {
        let mut cur = m;
        let mut rep = 0u32;
        for &(bm, br) in &basis {
            let reduced = cur ^ bm;
            // reduce against the basis vector when it lowers the top bit
            if reduced < cur {
                cur = reduced;
                rep ^= br;
            }
        }
        if cur != 0 {
            let new_rep = 1u32 << basis.len();
            // keep basis sorted by leading bit, descending, for reduction
            basis.push((cur, new_rep));
            basis.sort_by(|a, b| b.0.cmp(&a.0));
            // recompute this rep from scratch against the updated basis
            let mut c2 = m;
            let mut r2 = 0u32;
            for &(bm, br) in &basis {
                if c2 ^ bm < c2 {
                    c2 ^= bm;
                    r2 ^= br;
                }
            }
            debug_assert_eq!(c2, 0);
            rep = r2;
        }
        reps.push(rep);
    }
    (basis.len(), reps)
}

/// Extract the bits of `mask` at the set positions of `block` into a dense
/// low-bit mask (inverse of [`embed_mask`] on the block).
pub fn extract_mask(block: CoordinateSet, mask: u32) -> u32 {
    let mut out = 0u32;
    let mut remaining = block.mask();
    let mut bit = 0;
    while remaining != 0 {
        let pos = remaining.trailing_zeros();
        if mask >> pos & 1 != 0 {
            out |= 1 << bit;
        }
        remaining &= remaining - 1;
        bit += 1;
    }
    out
}

/// A synthesized coverage operator `T h = sum_i <chi_{a(i)}, h> v_i` from
/// q-characters of a joint cube onto target characters of one block, kept in
/// structured form so that norms and truncations are computed by enumerating
/// the `2^R` realized sign patterns of the q-masks (R = GF(2) rank) instead
/// of materializing a `2^n x 2^n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageOperator {
    joint_n: usize,
    block: CoordinateSet,
    target_masks: Vec<u32>,
    q_masks: Vec<u32>,
    assignment: Vec<usize>,
}

impl CoverageOperator {
    pub fn new(
        joint_n: usize,
        block: CoordinateSet,
        target_masks: Vec<u32>,
        q_masks: Vec<u32>,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        if joint_n > hypercube::MAX_BITS {
            return Err(Error::capacity(format!(
                "joint cube {joint_n} exceeds the {}-bit cap",
                hypercube::MAX_BITS
            )));
        }
        if u64::from(block.mask()) >= (1u64 << joint_n) || block.mask() == 0 {
            return Err(Error::domain("block mask invalid for the joint cube"));
        }
        if target_masks.is_empty() || q_masks.is_empty() {
            return Err(Error::domain("need at least one target and one q-character"));
        }
        for &m in &target_masks {
            if m == 0 || m & !block.mask() != 0 {
                return Err(Error::domain("target masks must be nonzero subsets of the block"));
            }
        }
        for &m in &q_masks {
            if m == 0 || u64::from(m) >= (1u64 << joint_n) {
                return Err(Error::domain("q-mask outside the joint cube"));
            }
        }
        let mut sorted = q_masks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != q_masks.len() {
            return Err(Error::domain("q-masks must be distinct"));
        }
        if assignment.len() != target_masks.len() {
            return Err(Error::domain("assignment length must match target count"));
        }
        if assignment.iter().any(|&j| j >= q_masks.len()) {
            return Err(Error::domain("assignment index out of range"));
        }
        Ok(CoverageOperator { joint_n, block, target_masks, q_masks, assignment })
    }

    pub fn joint_n(&self) -> usize {
        self.joint_n
    }

    pub fn block(&self) -> CoordinateSet {
        self.block
    }

    pub fn block_bits(&self) -> usize {
        self.block.mask().count_ones() as usize
    }

    pub fn n_targets(&self) -> usize {
        self.target_masks.len()
    }

    pub fn n_qchars(&self) -> usize {
        self.q_masks.len()
    }

    /// Target characters as functions on the block cube.
    pub fn targets_on_block(&self) -> Result<Vec<HypercubeFunction>> {
        let nb = self.block_bits();
        self.target_masks
            .iter()
            .map(|&m| hypercube::character(nb, CoordinateSet(extract_mask(self.block, m))))
            .collect()
    }

    /// `T chi_j` for each q-character: the signed sum of the targets in its
    /// fiber, as functions on the block cube.
    pub fn fiber_sums(&self) -> Result<Vec<HypercubeFunction>> {
        let nb = self.block_bits();
        let pts = 1usize << nb;
        let targets = self.targets_on_block()?;
        let mut sums = vec![vec![0.0f64; pts]; self.q_masks.len()];
        for (i, &j) in self.assignment.iter().enumerate() {
            for (acc, &x) in sums[j].iter_mut().zip(targets[i].values()) {
                *acc += x;
            }
        }
        sums.into_iter().map(|v| HypercubeFunction::new(nb, v)).collect()
    }

    /// Exact operator norm and the truncation function `f = |T| 1` on the
    /// block cube, via Gray-code enumeration of the realized sign patterns.
    pub fn norm_and_f(&self) -> Result<(f64, Vec<f64>)> {
        let nb = self.block_bits();
        let pts = 1usize << nb;
        let fibers = self.fiber_sums()?;
        let (rank, reps) = gf2_basis(&self.q_masks);
        let patterns = 1u64 << rank;
        // which fibers toggle when Gray bit r flips
        let toggles: Vec<Vec<usize>> = (0..rank)
            .map(|r| {
                (0..self.q_masks.len())
                    .filter(|&j| reps[j] >> r & 1 != 0)
                    .collect()
            })
            .collect();
        let chunk: u64 = 256;
        let starts: Vec<u64> = (0..patterns).step_by(chunk as usize).collect();
        let results = par::map_ordered(&starts, Exec::auto(), |&start| {
            let end = (start + chunk).min(patterns);
            let gray = start ^ (start >> 1);
            let mut signs: Vec<f64> = reps
                .iter()
                .map(|&rep| if (gray & rep as u64).count_ones() % 2 == 1 { -1.0 } else { 1.0 })
                .collect();
            let mut f_vec = vec![0.0f64; pts];
            for (j, fib) in fibers.iter().enumerate() {
                for (acc, &x) in f_vec.iter_mut().zip(fib.values()) {
                    *acc += signs[j] * x;
                }
            }
            let mut f_acc = vec![0.0f64; pts];
            let mut best = (0.0f64, start);
            let mut cur = f_vec;
            let norm_of = |cur: &[f64], f_acc: &mut [f64]| -> f64 {
                let mut s = 0.0;
                for (&x, acc) in cur.iter().zip(f_acc.iter_mut()) {
                    let a = x.abs();
                    s += a;
                    *acc += a;
                }
                s / pts as f64
            };
            let v0 = norm_of(&cur, &mut f_acc);
            if v0 > best.0 {
                best = (v0, start);
            }
            for u in start + 1..end {
                let r = u.trailing_zeros() as usize;
                for &j in &toggles[r] {
                    let s_new = -signs[j];
                    signs[j] = s_new;
                    let step = 2.0 * s_new;
                    for (acc, &x) in cur.iter_mut().zip(fibers[j].values()) {
                        *acc += step * x;
                    }
                }
                let v = norm_of(&cur, &mut f_acc);
                if v > best.0 {
                    best = (v, u);
                }
            }
            (best, f_acc)
        });
        let mut norm = 0.0f64;
        let mut f_total = vec![0.0f64; pts];
        for ((val, _idx), f_acc) in results {
            if val > norm {
                norm = val;
            }
            for (tot, x) in f_total.iter_mut().zip(f_acc) {
                *tot += x;
            }
        }
        for x in f_total.iter_mut() {
            *x /= patterns as f64;
        }
        Ok((norm, f_total))
    }

    /// `||T chi_j||_1` for each q-character.
    pub fn qchar_image_norms(&self) -> Result<Vec<f64>> {
        let pts = 1usize << self.block_bits();
        Ok(self
            .fiber_sums()?
            .iter()
            .map(|g| g.values().iter().map(|x| x.abs()).sum::<f64>() / pts as f64)
            .collect())
    }

    /// Q-characters collapsed to the rank cube: faithful for any norm of
    /// sign combinations, and small enough for exact sign search.
    pub fn qchars_collapsed(&self) -> Result<Vec<HypercubeFunction>> {
        let (rank, reps) = gf2_basis(&self.q_masks);
        reps.iter()
            .map(|&rep| hypercube::character(rank, CoordinateSet(rep)))
            .collect()
    }

    /// Dense operator on the joint cube (both source and target), for
    /// cross-validation at small sizes.
    pub fn to_dense(&self) -> Result<L1Operator> {
        let pts = 1usize << self.joint_n;
        if pts.saturating_mul(pts) > MAX_DENSE_ENTRIES {
            return Err(Error::capacity("dense coverage operator exceeds the entry cap"));
        }
        let mu = 1.0 / pts as f64;
        let mut matrix = vec![vec![0.0f64; pts]; pts];
        for (i, &tm) in self.target_masks.iter().enumerate() {
            let v = hypercube::character(self.joint_n, CoordinateSet(tm))?;
            let chi = hypercube::character(self.joint_n, CoordinateSet(self.q_masks[self.assignment[i]]))?;
            for (row, &vy) in matrix.iter_mut().zip(v.values()) {
                for (e, &cx) in row.iter_mut().zip(chi.values()) {
                    *e += mu * vy * cx;
                }
            }
        }
        L1Operator::new(
            AtomicMeasureSpace::uniform_cube(self.joint_n)?,
            AtomicMeasureSpace::uniform_cube(self.joint_n)?,
            matrix,
        )
    }
}

/// Assignment strategy for the coverage sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Round-robin map of q-characters onto targets.
    OrthogonalMap,
    /// Seeded shuffle of the round-robin assignment.
    Random { seed: u64 },
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::OrthogonalMap => write!(f, "orthogonal_map"),
            Strategy::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

/// One sweep entry: the synthesized operator at block size `n` and every
/// quantity the counting argument uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageInstance {
    pub n: usize,
    pub joint_n: usize,
    pub n_targets: usize,
    pub m_qchars: usize,
    pub measured_norm: f64,
    /// `(eps_l / C) M^{(q-p')/(2q)}` from the surviving q-characters, with
    /// `p'` derived from the block dimension.
    pub lemma_lower_bound: f64,
    pub distances: Vec<f64>,
    /// Largest duality gap among the per-target distance computations.
    pub max_distance_gap: f64,
    pub dist_set: f64,
    pub survivors: usize,
    pub f_norm: f64,
    pub e_complement_measure: f64,
    pub reuse_bound: f64,
    pub coverage_achieved: bool,
    pub required_survivors: f64,
}

/// Least-squares fit of `y = slope * x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Plain least squares on the given points.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 2 {
        return Err(Error::domain("exponent fit needs at least two points"));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let den = n * sxx - sx * sx;
    if den.abs() < 1e-15 {
        return Err(Error::domain("degenerate abscissae in exponent fit"));
    }
    let slope = (n * sxy - sx * sy) / den;
    let intercept = (sy - slope * sx) / n;
    let residual = (points
        .iter()
        .map(|p| {
            let e = p.1 - (slope * p.0 + intercept);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ExponentFit { slope, intercept, residual })
}

/// Full sweep report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub p: f64,
    pub q: f64,
    pub epsilon: f64,
    pub strategy: Strategy,
    pub instances: Vec<CoverageInstance>,
    pub exponent_fit: Option<ExponentFit>,
}

impl SeparationReport {
    /// Flat CSV, one row per (n, target index). Column order is fixed and
    /// documented in `schema/separation_report.md`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "p,q,epsilon,strategy,n,joint_n,n_targets,m_qchars,target_index,distance,\
             dist_set,measured_norm,lemma_lower_bound,survivors,required_survivors,\
             reuse_bound,f_norm,e_complement_measure,coverage_achieved\n",
        );
        for inst in &self.instances {
            for (i, d) in inst.distances.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{:.12},{:.12},{:.12},{:.12},{},{:.12},{:.12},{:.12},{:.12},{}\n",
                    self.p,
                    self.q,
                    self.epsilon,
                    self.strategy,
                    inst.n,
                    inst.joint_n,
                    inst.n_targets,
                    inst.m_qchars,
                    i,
                    d,
                    inst.dist_set,
                    inst.measured_norm,
                    inst.lemma_lower_bound,
                    inst.survivors,
                    inst.required_survivors,
                    inst.reuse_bound,
                    inst.f_norm,
                    inst.e_complement_measure,
                    inst.coverage_achieved,
                ));
            }
        }
        out
    }
}

/// Canonical layout for one coverage instance: returns
/// `(joint_n, target_masks, q_masks)` with the targets drawn from a
/// p/2-tuned family on the first block and the q-family repeated across
/// every block of the joint cube.
pub fn coverage_layout(p: u32, q: u32, n: usize) -> Result<(usize, Vec<u32>, Vec<u32>)> {
    let kp = (p / 2) as usize;
    let kq = (q / 2) as usize;
    if n % kp != 0 || n % kq != 0 {
        return Err(Error::domain(format!(
            "block size {n} must be divisible by p/2 = {kp} and q/2 = {kq}"
        )));
    }
    if n > hypercube::MAX_BITS {
        return Err(Error::capacity(format!("block size {n} exceeds the cube cap")));
    }
    let blocks = (hypercube::MAX_BITS / n).max(1);
    let joint_n = blocks * n;
    let target_fam = bch_family(&FieldSpec::default_for(n / kp)?, kp)?;
    let target_masks: Vec<u32> = target_fam.masks().to_vec();
    let q_fam = bch_family(&FieldSpec::default_for(n / kq)?, kq)?;
    let mut q_masks = Vec::new();
    for b in 0..blocks {
        for &m in q_fam.masks() {
            q_masks.push(m << (b * n));
        }
    }
    Ok((joint_n, target_masks, q_masks))
}

/// Sweeps block sizes, synthesizing one coverage operator per `n`, and
/// records norms, distances, survivor counts, and the exponent fit.
pub fn coverage_experiment(
    p: u32,
    q: u32,
    n_list: &[usize],
    epsilon: f64,
    strategy: Strategy,
) -> Result<SeparationReport> {
    if p < 2 || p % 2 != 0 || q % 2 != 0 || q <= p {
        return Err(Error::domain(format!("need even p < q, got p = {p}, q = {q}")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::domain(format!("epsilon = {epsilon} out of (0, 1/2)")));
    }
    let mut instances = Vec::new();
    let mut fit_points = Vec::new();
    for &n in n_list {
        let (joint_n, target_masks, q_masks) = coverage_layout(p, q, n).map_err(|e| {
            // report the largest block size that still fits when n is too big
            if n > hypercube::MAX_BITS {
                Error::capacity(format!(
                    "{e}; largest feasible block size is {}",
                    hypercube::MAX_BITS
                ))
            } else {
                e
            }
        })?;
        let block = CoordinateSet(((1u64 << n) - 1) as u32);
        let m = q_masks.len();
        let mut assignment: Vec<usize> = (0..target_masks.len()).map(|i| i % m).collect();
        if let Strategy::Random { seed } = strategy {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
            assignment.shuffle(&mut rng);
        }
        let op = CoverageOperator::new(joint_n, block, target_masks, q_masks, assignment)?;
        let inst = analyze_instance(&op, n, q, epsilon)?;
        fit_points.push((
            (2.0f64.powf(2.0 * n as f64 / p as f64)).ln(),
            inst.measured_norm.ln(),
        ));
        instances.push(inst);
    }
    let exponent_fit = if fit_points.len() >= 2 {
        Some(fit_exponent(&fit_points)?)
    } else {
        None
    };
    Ok(SeparationReport {
        p: p as f64,
        q: q as f64,
        epsilon,
        strategy,
        instances,
        exponent_fit,
    })
}

/// All counting-argument quantities for one coverage operator.
pub fn analyze_instance(
    op: &CoverageOperator,
    n: usize,
    q: u32,
    epsilon: f64,
) -> Result<CoverageInstance> {
    let nb = op.block_bits();
    let pts = 1usize << nb;
    let nu = 1.0 / pts as f64;
    let (norm, f) = op.norm_and_f()?;
    let f_norm: f64 = f.iter().map(|x| nu * x.abs()).sum();
    let threshold = norm / epsilon;
    let e_complement_measure =
        f.iter().filter(|&&x| x > threshold + 1e-12).count() as f64 * nu;
    let image_norms = op.qchar_image_norms()?;
    let cut = 1.0 - 2.0 * epsilon;
    let survivors = image_norms.iter().filter(|&&x| x >= cut - 1e-12).count();

    // distances of each target to the hull of the columns T chi_j
    let columns = op.fiber_sums()?;
    let targets = op.targets_on_block()?;
    let use_simplex = pts <= 256 && pts * columns.len() <= 100_000;
    let dist_results: Vec<(f64, f64)> = {
        let results: Vec<Result<(f64, f64)>> = par::map_ordered(&targets, Exec::auto(), |v| {
            if use_simplex {
                let cols: Vec<Vec<f64>> =
                    columns.iter().map(|c| c.values().to_vec()).collect();
                let sol = simplex::simplex_distance(v.values(), &cols)?;
                Ok((sol.distance, 0.0))
            } else {
                let cols: Vec<Vec<f64>> =
                    columns.iter().map(|c| c.values().to_vec()).collect();
                let sol = frank_wolfe::frank_wolfe_distance(v.values(), &cols, 1e-4)?;
                Ok((sol.distance, sol.gap))
            }
        });
        results.into_iter().collect::<Result<_>>()?
    };
    let distances: Vec<f64> = dist_results.iter().map(|r| r.0).collect();
    let max_distance_gap = dist_results.iter().map(|r| r.1).fold(0.0f64, f64::max);
    let dist_set = distances.iter().cloned().fold(0.0f64, f64::max);
    let coverage_achieved = dist_set <= epsilon;

    // lower bound from the surviving q-characters, on the collapsed cube
    let m = op.n_qchars();
    let qf = q as f64;
    let collapsed = op.qchars_collapsed()?;
    let search = max_sign_norm(&collapsed, qf, SignSearchMode::Exact)?;
    let c = search.value / (m as f64).sqrt();
    let eps_l = image_norms.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let p_derived = 2.0 * nb as f64 / (m as f64).log2();
    let lemma_lower_bound = eps_l / c * (m as f64).powf((qf - p_derived) / (2.0 * qf));

    let reuse = reuse_bound(norm.max(f64::MIN_POSITIVE), epsilon)?;
    let required_survivors =
        cut * cut * (epsilon / norm) * (epsilon / norm) * op.n_targets() as f64;
    Ok(CoverageInstance {
        n,
        joint_n: op.joint_n(),
        n_targets: op.n_targets(),
        m_qchars: m,
        measured_norm: norm,
        lemma_lower_bound,
        distances,
        max_distance_gap,
        dist_set,
        survivors,
        f_norm,
        e_complement_measure,
        reuse_bound: reuse,
        coverage_achieved,
        required_survivors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::rademacher_family;
    use rand::{Rng, SeedableRng};

    fn character(n: usize, mask: u32) -> HypercubeFunction {
        hypercube::character(n, CoordinateSet(mask)).unwrap()
    }

    #[test]
    fn distance_trivial_cases() {
        let cols = vec![character(3, 0b1), character(3, 0b10)];
        let zero = HypercubeFunction::constant(3, 0.0).unwrap();
        for method in [DistanceMethod::Simplex, DistanceMethod::FrankWolfe { tol: 1e-7 }] {
            let d = distance_to_symmetric_hull(&zero, &cols, method).unwrap();
            assert!(d.distance < 1e-9);
            let d = distance_to_symmetric_hull(&cols[0], &cols, method).unwrap();
            assert!(d.distance < 1e-9);
        }
    }

    #[test]
    fn orthogonal_character_distance_is_one() {
        let v = character(4, 0b11);
        let cols = vec![character(4, 0b101)];
        let d = distance_to_symmetric_hull(&v, &cols, DistanceMethod::Simplex).unwrap();
        assert!((d.distance - 1.0).abs() < 1e-9, "d = {}", d.distance);
    }

    #[test]
    fn dist_set_examples() {
        let fam = rademacher_family(4).unwrap();
        let chars: Vec<_> = fam.masks().iter().map(|&m| character(4, m)).collect();
        // subset of hull vertices: distance zero
        let d = dist_set(&chars[..2], &chars, DistanceMethod::Simplex).unwrap();
        assert!(d < 1e-9);
        // hull spanned by a single other character: distance one
        let hull = vec![character(4, 0b1111)];
        let d = dist_set(&chars, &hull, DistanceMethod::Simplex).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distance_lipschitz_in_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cols = vec![character(4, 0b1), character(4, 0b110)];
        for _ in 0..10 {
            let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fa = HypercubeFunction::new(4, a.clone()).unwrap();
            let fb = HypercubeFunction::new(4, b.clone()).unwrap();
            let da = distance_to_symmetric_hull(&fa, &cols, DistanceMethod::Simplex).unwrap();
            let db = distance_to_symmetric_hull(&fb, &cols, DistanceMethod::Simplex).unwrap();
            let l1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 16.0;
            assert!((da.distance - db.distance).abs() <= l1 + 1e-9);
        }
    }

    #[test]
    fn reuse_bound_examples() {
        assert!((reuse_bound(1.0, 0.1).unwrap() - 156.25).abs() < 1e-9);
        assert!((reuse_bound(2.0, 0.1).unwrap() - 625.0).abs() < 1e-9);
        assert!((reuse_bound(1.0, 0.25).unwrap() - 64.0).abs() < 1e-9);
        assert!(reuse_bound(1.0, 0.5).is_err());
    }

    #[test]
    fn survivor_analysis_examples() {
        let space = AtomicMeasureSpace::uniform_cube(4).unwrap();
        let block = CoordinateSet(0b1111);
        let fam = rademacher_family(4).unwrap();
        let chars: Vec<_> = fam.masks().iter().map(|&m| character(4, m)).collect();

        // zero operator: f = 0, whole space survives the truncation, no survivors
        let zero = L1Operator::new(
            space.clone(),
            space.clone(),
            vec![vec![0.0; 16]; 16],
        )
        .unwrap();
        let sa = survivor_analysis(&zero, &chars, &chars, block, 0.1).unwrap();
        assert_eq!(sa.f_norm, 0.0);
        assert_eq!(sa.e_complement_measure, 0.0);
        assert_eq!(sa.survivors, 0);

        // identity: every block character survives with norm one
        let id = L1Operator::identity(space);
        let sa = survivor_analysis(&id, &chars, &chars, block, 0.1).unwrap();
        assert!((sa.f_norm - 1.0).abs() < 1e-12);
        assert!(sa.e_complement_measure <= 0.1);
        assert_eq!(sa.survivors, chars.len());
        // each character pairs exactly with itself
        for &c in &sa.pairing_counts {
            assert_eq!(c, 1);
        }
    }

    #[test]
    fn markov_on_random_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let space = AtomicMeasureSpace::uniform_cube(4).unwrap();
        let fam = rademacher_family(4).unwrap();
        let chars: Vec<_> = fam.masks().iter().map(|&m| character(4, m)).collect();
        for _ in 0..20 {
            let matrix: Vec<Vec<f64>> = (0..16)
                .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let t = L1Operator::new(space.clone(), space.clone(), matrix).unwrap();
            let sa = survivor_analysis(&t, &chars, &chars, CoordinateSet(0b0011), 0.1).unwrap();
            assert!(sa.f_norm <= operator_norm_l1(&t) + 1e-12);
            assert!(sa.e_complement_measure <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn gf2_basis_rank_and_reps() {
        let masks = [0b001u32, 0b010, 0b011, 0b100];
        let (rank, reps) = gf2_basis(&masks);
        assert_eq!(rank, 3);
        // third mask is the xor of the first two
        assert_eq!(reps[2], reps[0] ^ reps[1]);
        // reps reproduce the masks over the implied basis: check pairwise
        // parity agreement on all points of the original cube
        for x in 0u32..8 {
            let parities: Vec<u32> = masks.iter().map(|&m| (m & x).count_ones() % 2).collect();
            // a linear relation among masks must hold among reps as well
            assert_eq!(parities[2], (parities[0] + parities[1]) % 2);
        }
    }

    #[test]
    fn coverage_operator_matches_dense() {
        // two 3-bit blocks: block 0 carries two targets, q-chars on both
        let op = CoverageOperator::new(
            6,
            CoordinateSet(0b000111),
            vec![0b011, 0b101, 0b110],
            vec![0b001000, 0b010000, 0b111000],
            vec![0, 1, 2],
        )
        .unwrap();
        let dense = op.to_dense().unwrap();
        let dense_norm = operator_norm_l1(&dense);
        let (norm, f) = op.norm_and_f().unwrap();
        assert!((norm - dense_norm).abs() < 1e-10, "{norm} vs {dense_norm}");

        // f agrees with |T| applied to the constant density
        let f_dense = modulus(&dense).apply(&vec![1.0; 64]).unwrap();
        for y in 0..64usize {
            let via_block = f[extract_mask(op.block(), y as u32) as usize];
            assert!((f_dense[y] - via_block).abs() < 1e-10);
        }

        // q-character images: T chi_j = assigned target
        let norms = op.qchar_image_norms().unwrap();
        for &x in &norms {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_operator_reused_fibers() {
        // more targets than q-characters: fibers of size two
        let op = CoverageOperator::new(
            4,
            CoordinateSet(0b1111),
            vec![0b0001, 0b0010, 0b0100, 0b1000],
            vec![0b0011, 0b1100],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let dense = op.to_dense().unwrap();
        assert!((op.norm_and_f().unwrap().0 - operator_norm_l1(&dense)).abs() < 1e-10);
        // each fiber sum is a sum of two orthogonal characters: norm 1
        for &x in &op.qchar_image_norms().unwrap() {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_exponent_examples() {
        // exact powers N^{1/4}
        let points: Vec<(f64, f64)> = [4.0f64, 16.0, 64.0, 256.0]
            .iter()
            .map(|&n| (n.ln(), n.powf(0.25).ln()))
            .collect();
        let fit = fit_exponent(&points).unwrap();
        assert!((fit.slope - 0.25).abs() < 1e-9);
        assert!(fit.residual < 1e-12);
        assert!(fit_exponent(&points[..1]).is_err());
    }

    #[test]
    fn coverage_experiment_small() {
        let report = coverage_experiment(4, 8, &[8], 0.1, Strategy::OrthogonalMap).unwrap();
        assert_eq!(report.instances.len(), 1);
        let inst = &report.instances[0];
        assert_eq!(inst.n_targets, 15);
        assert_eq!(inst.m_qchars, 9);
        assert_eq!(inst.joint_n, 24);
        assert!(inst.measured_norm >= inst.lemma_lower_bound - 1e-9);
        assert!(inst.e_complement_measure <= 0.1 + 1e-12);
        assert!(inst.survivors <= inst.m_qchars);
        // empty sweep: empty report
        let empty = coverage_experiment(4, 8, &[], 0.1, Strategy::OrthogonalMap).unwrap();
        assert!(empty.instances.is_empty() && empty.exponent_fit.is_none());
    }

    #[test]
    fn covered_instance_meets_survivor_bound() {
        // bijective assignment: every target is exactly T chi_j, so the
        // coverage relation holds with distance zero and the survivor count
        // must meet the counting bound
        let fam = bch_family(&FieldSpec::default_for(4).unwrap(), 2).unwrap();
        let masks: Vec<u32> = fam.masks()[..9].to_vec();
        let q_fam = bch_family(&FieldSpec::default_for(2).unwrap(), 4).unwrap();
        let mut q_masks = Vec::new();
        for b in 0..3 {
            for &m in q_fam.masks() {
                q_masks.push(m << (b * 8));
            }
        }
        let op = CoverageOperator::new(
            24,
            CoordinateSet(0xFF),
            masks,
            q_masks,
            (0..9).collect(),
        )
        .unwrap();
        let inst = analyze_instance(&op, 8, 8, 0.1).unwrap();
        assert!(inst.coverage_achieved, "dist_set = {}", inst.dist_set);
        assert!(inst.survivors as f64 >= inst.required_survivors);
        assert_eq!(inst.survivors, 9);
    }

    #[test]
    fn report_serializes_and_csv_rows_match() {
        let report = coverage_experiment(4, 8, &[8], 0.1, Strategy::Random { seed: 5 }).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: SeparationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let csv = report.to_csv();
        let rows: usize = csv.lines().count();
        assert_eq!(rows, 1 + report.instances[0].distances.len());
    }
}
