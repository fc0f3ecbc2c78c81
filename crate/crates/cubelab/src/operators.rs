//! Operators between finite atomic L1 spaces: exact norms, moduli, adjoints,
//! block projections, and the character-embedding operator J_p.

use serde::{Deserialize, Serialize};

use crate::designs::CharacterFamily;
use crate::error::{Error, Result};
use crate::hypercube::{self, CoordinateSet, HypercubeFunction};
use crate::lambda::embed_mask;
use crate::par::{self, Exec};

/// A finite measure space on `d` atoms: either a probability measure with
/// explicit positive weights, or counting measure (every atom has mass 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub enum AtomicMeasureSpace {
    Probability(Vec<f64>),
    Counting(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SpaceRepr {
    Counting { counting: usize },
    Weights(Vec<f64>),
}

impl TryFrom<SpaceRepr> for AtomicMeasureSpace {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        match r {
            SpaceRepr::Counting { counting } => AtomicMeasureSpace::counting(counting),
            SpaceRepr::Weights(w) => AtomicMeasureSpace::probability(w),
        }
    }
}

impl From<AtomicMeasureSpace> for SpaceRepr {
    fn from(s: AtomicMeasureSpace) -> Self {
        match s {
            AtomicMeasureSpace::Counting(d) => SpaceRepr::Counting { counting: d },
            AtomicMeasureSpace::Probability(w) => SpaceRepr::Weights(w),
        }
    }
}

impl AtomicMeasureSpace {
    pub fn probability(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::domain("measure space needs at least one atom"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::domain("probability weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("weights sum to {total}, expected 1")));
        }
        Ok(AtomicMeasureSpace::Probability(weights))
    }

    pub fn counting(atoms: usize) -> Result<Self> {
        if atoms == 0 {
            return Err(Error::domain("measure space needs at least one atom"));
        }
        Ok(AtomicMeasureSpace::Counting(atoms))
    }

    /// Uniform probability measure on `d` atoms.
    pub fn uniform(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("measure space needs at least one atom"));
        }
        Ok(AtomicMeasureSpace::Probability(vec![1.0 / d as f64; d]))
    }

    /// Uniform probability measure on the `2^n` points of an `n`-bit cube.
    pub fn uniform_cube(n: usize) -> Result<Self> {
        if n > hypercube::MAX_BITS {
            return Err(Error::capacity(format!(
                "n = {n} exceeds the {}-bit cap",
                hypercube::MAX_BITS
            )));
        }
        Self::uniform(1usize << n)
    }

    pub fn atoms(&self) -> usize {
        match self {
            AtomicMeasureSpace::Probability(w) => w.len(),
            AtomicMeasureSpace::Counting(d) => *d,
        }
    }

    pub fn weight(&self, i: usize) -> f64 {
        match self {
            AtomicMeasureSpace::Probability(w) => w[i],
            AtomicMeasureSpace::Counting(_) => 1.0,
        }
    }

    /// True when this is the uniform probability measure on a `2^n` cube;
    /// returns `n` if so.
    pub fn cube_bits(&self) -> Option<usize> {
        let AtomicMeasureSpace::Probability(w) = self else {
            return None;
        };
        let d = w.len();
        if !d.is_power_of_two() {
            return None;
        }
        let expected = 1.0 / d as f64;
        if w.iter().all(|&x| (x - expected).abs() <= 1e-15) {
            Some(d.trailing_zeros() as usize)
        } else {
            None
        }
    }
}

/// Cap on dense matrix entries, to keep explicit operators in memory.
pub const MAX_DENSE_ENTRIES: usize = 1 << 28;

/// A linear operator between atomic L1 spaces, acting on densities:
/// `(Th)_i = sum_j M[i][j] h_j`, with `||g||_{L1} = sum_i nu_i |g_i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr")]
pub struct L1Operator {
    source: AtomicMeasureSpace,
    target: AtomicMeasureSpace,
    matrix: Vec<Vec<f64>>,
}

// deserialization funnels through `new` so invalid shapes are rejected
#[derive(Deserialize)]
struct OperatorRepr {
    source: AtomicMeasureSpace,
    target: AtomicMeasureSpace,
    matrix: Vec<Vec<f64>>,
}

impl TryFrom<OperatorRepr> for L1Operator {
    type Error = Error;
    fn try_from(r: OperatorRepr) -> Result<Self> {
        L1Operator::new(r.source, r.target, r.matrix)
    }
}

impl L1Operator {
    pub fn new(
        source: AtomicMeasureSpace,
        target: AtomicMeasureSpace,
        matrix: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if matrix.len() != target.atoms() {
            return Err(Error::domain(format!(
                "matrix has {} rows, target has {} atoms",
                matrix.len(),
                target.atoms()
            )));
        }
        for row in &matrix {
            if row.len() != source.atoms() {
                return Err(Error::domain(format!(
                    "matrix row has {} entries, source has {} atoms",
                    row.len(),
                    source.atoms()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("matrix entries must be finite"));
            }
        }
        if source.atoms().saturating_mul(target.atoms()) > MAX_DENSE_ENTRIES {
            return Err(Error::capacity("dense operator exceeds the entry cap"));
        }
        Ok(L1Operator { source, target, matrix })
    }

    pub fn identity(space: AtomicMeasureSpace) -> Self {
        let d = space.atoms();
        let mut matrix = vec![vec![0.0; d]; d];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        L1Operator { source: space.clone(), target: space, matrix }
    }

    pub fn source(&self) -> &AtomicMeasureSpace {
        &self.source
    }

    pub fn target(&self) -> &AtomicMeasureSpace {
        &self.target
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i][j]
    }

    /// Apply to a density on the source space.
    pub fn apply(&self, density: &[f64]) -> Result<Vec<f64>> {
        if density.len() != self.source.atoms() {
            return Err(Error::domain("density length does not match source"));
        }
        Ok(self
            .matrix
            .iter()
            .map(|row| row.iter().zip(density).map(|(m, h)| m * h).sum())
            .collect())
    }

    /// Composition `self ∘ other`; `other.target` must equal `self.source`.
    pub fn compose(&self, other: &L1Operator) -> Result<L1Operator> {
        if other.target != self.source {
            return Err(Error::domain("composition spaces do not match"));
        }
        let rows = self.target.atoms();
        let mid = self.source.atoms();
        let cols = other.source.atoms();
        let mut matrix = vec![vec![0.0; cols]; rows];
        for (i, out) in matrix.iter_mut().enumerate() {
            for k in 0..mid {
                let a = self.matrix[i][k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(&other.matrix[k]) {
                    *o += a * b;
                }
            }
        }
        L1Operator::new(other.source.clone(), self.target.clone(), matrix)
    }
}

// L1 norm of column j applied to the normalized atom density e_j / mu_j.
fn column_norm(t: &L1Operator, j: usize) -> f64 {
    let s: f64 = (0..t.target.atoms())
        .map(|i| t.target.weight(i) * t.matrix[i][j].abs())
        .sum();
    s / t.source.weight(j)
}

/// Exact `L1 -> L1` operator norm: the unit ball's extreme points are the
/// normalized atoms, so the norm is a max over source columns.
pub fn operator_norm_l1(t: &L1Operator) -> f64 {
    operator_norm_l1_exec(t, Exec::auto())
}

/// Sequential reference path of [`operator_norm_l1`].
pub fn operator_norm_l1_seq(t: &L1Operator) -> f64 {
    operator_norm_l1_exec(t, Exec::Sequential)
}

fn operator_norm_l1_exec(t: &L1Operator, exec: Exec) -> f64 {
    let cols: Vec<usize> = (0..t.source.atoms()).collect();
    par::map_ordered(&cols, exec, |&j| column_norm(t, j))
        .into_iter()
        .fold(0.0f64, f64::max)
}

/// Entrywise absolute value; has the same `L1 -> L1` norm.
pub fn modulus(t: &L1Operator) -> L1Operator {
    L1Operator {
        source: t.source.clone(),
        target: t.target.clone(),
        matrix: t
            .matrix
            .iter()
            .map(|row| row.iter().map(|x| x.abs()).collect())
            .collect(),
    }
}

/// Sup-norm operator norm of the adjoint `T*`, acting on bounded functions
/// of the target: `(T*g)_j = (1/mu_j) sum_i nu_i M[i][j] g_i`. The adjoint
/// matrix is materialized and its max absolute row sum returned; this equals
/// `operator_norm_l1(T)` and the two are computed independently.
pub fn adjoint_norm_linf(t: &L1Operator) -> f64 {
    let rows = t.source.atoms();
    let cols = t.target.atoms();
    let mut best = 0.0f64;
    for j in 0..rows {
        let mut adj_row_sum = 0.0;
        for i in 0..cols {
            let a = t.target.weight(i) * t.matrix[i][j] / t.source.weight(j);
            adj_row_sum += a.abs();
        }
        best = best.max(adj_row_sum);
    }
    best
}

/// Maps the unit vector basis of l1 onto characters of the given families,
/// each embedded in its own coordinate block of a joint `n`-bit cube.
/// Source: counting measure on the total character count. Target: uniform
/// probability on the cube. Every column has unit L1 norm, so the operator
/// norm is exactly 1.
pub fn build_jp(
    blocks: &[(CoordinateSet, &CharacterFamily)],
    joint_n: usize,
) -> Result<L1Operator> {
    if joint_n > hypercube::MAX_BITS {
        return Err(Error::capacity(format!(
            "joint cube {joint_n} exceeds the {}-bit cap",
            hypercube::MAX_BITS
        )));
    }
    if blocks.is_empty() {
        return Err(Error::domain("no blocks"));
    }
    let mut used = 0u32;
    let mut total = 0usize;
    for (block, fam) in blocks {
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
        total += fam.len();
    }
    let points = 1usize << joint_n;
    if points.saturating_mul(total) > MAX_DENSE_ENTRIES {
        return Err(Error::capacity("J_p matrix exceeds the dense entry cap"));
    }
    let mut matrix = vec![vec![0.0; total]; points];
    let mut col = 0usize;
    for (block, fam) in blocks {
        for &m in fam.masks() {
            let w = hypercube::character(joint_n, CoordinateSet(embed_mask(*block, m)))?;
            for (row, &v) in matrix.iter_mut().zip(w.values()) {
                row[col] = v;
            }
            col += 1;
        }
    }
    L1Operator::new(
        AtomicMeasureSpace::counting(total)?,
        AtomicMeasureSpace::uniform_cube(joint_n)?,
        matrix,
    )
}

/// Compose `T` with conditional expectation of the target onto `block`.
/// The target must be a uniform cube space; the norm never increases.
pub fn project_block(t: &L1Operator, block: CoordinateSet) -> Result<L1Operator> {
    let Some(n) = t.target.cube_bits() else {
        return Err(Error::domain("target is not a uniform cube space"));
    };
    if u64::from(block.mask()) >= (1u64 << n) {
        return Err(Error::domain("block mask outside the target cube"));
    }
    let points = t.target.atoms();
    let cols = t.source.atoms();
    let mut matrix = vec![vec![0.0; cols]; points];
    for j in 0..cols {
        let column: Vec<f64> = (0..points).map(|i| t.matrix[i][j]).collect();
        let f = HypercubeFunction::new(n, column)?;
        let projected = hypercube::conditional_expectation(&f, block)?;
        for (row, &v) in matrix.iter_mut().zip(projected.values()) {
            row[j] = v;
        }
    }
    L1Operator::new(t.source.clone(), t.target.clone(), matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::rademacher_family;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_operator(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> L1Operator {
        let matrix: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        L1Operator::new(
            AtomicMeasureSpace::uniform(cols).unwrap(),
            AtomicMeasureSpace::uniform(rows).unwrap(),
            matrix,
        )
        .unwrap()
    }

    #[test]
    fn norm_examples() {
        let id = L1Operator::identity(AtomicMeasureSpace::uniform(5).unwrap());
        assert!((operator_norm_l1(&id) - 1.0).abs() < 1e-15);

        let t = L1Operator::new(
            AtomicMeasureSpace::uniform(2).unwrap(),
            AtomicMeasureSpace::uniform(2).unwrap(),
            vec![vec![2.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        assert!((operator_norm_l1(&t) - 2.0).abs() < 1e-15);

        let z = L1Operator::new(
            AtomicMeasureSpace::counting(3).unwrap(),
            AtomicMeasureSpace::uniform(4).unwrap(),
            vec![vec![0.0; 3]; 4],
        )
        .unwrap();
        assert_eq!(operator_norm_l1(&z), 0.0);
    }

    #[test]
    fn modulus_examples() {
        let t = L1Operator::new(
            AtomicMeasureSpace::uniform(2).unwrap(),
            AtomicMeasureSpace::uniform(2).unwrap(),
            vec![vec![-1.0, 2.0], vec![3.0, -4.0]],
        )
        .unwrap();
        let m = modulus(&t);
        assert_eq!(m.matrix(), &[vec![1.0, 2.0], vec![3.0, 4.0]]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let t = random_operator(&mut rng, 6, 5);
            let a = operator_norm_l1(&t);
            let b = operator_norm_l1(&modulus(&t));
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn adjoint_norm_equality() {
        let id = L1Operator::identity(AtomicMeasureSpace::uniform(4).unwrap());
        assert!((adjoint_norm_linf(&id) - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let t = random_operator(&mut rng, 8, 8);
            assert!((adjoint_norm_linf(&t) - operator_norm_l1(&t)).abs() < 1e-12);
        }

        // mixed weights: counting source, non-uniform probability target
        let target = AtomicMeasureSpace::probability(vec![0.25, 0.75]).unwrap();
        let t = L1Operator::new(
            AtomicMeasureSpace::counting(2).unwrap(),
            target,
            vec![vec![1.5, -0.5], vec![0.25, 2.0]],
        )
        .unwrap();
        assert!((adjoint_norm_linf(&t) - operator_norm_l1(&t)).abs() < 1e-12);
    }

    #[test]
    fn submultiplicativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let s = random_operator(&mut rng, 5, 4);
            let t = random_operator(&mut rng, 6, 5);
            let ts = t.compose(&s).unwrap();
            assert!(
                operator_norm_l1(&ts) <= operator_norm_l1(&t) * operator_norm_l1(&s) + 1e-12
            );
        }
    }

    #[test]
    fn build_jp_examples() {
        // single block, single character: rank 1, norm 1
        let fam = rademacher_family(1).unwrap();
        let jp = build_jp(&[(CoordinateSet(0b1), &fam)], 1).unwrap();
        assert_eq!(jp.source().atoms(), 1);
        assert_eq!(jp.target().atoms(), 2);
        assert!((operator_norm_l1(&jp) - 1.0).abs() < 1e-15);

        // two 2-bit blocks on a 4-bit cube: 4 columns, norm 1, mean-zero columns
        let fam = rademacher_family(2).unwrap();
        let jp = build_jp(
            &[(CoordinateSet(0b0011), &fam), (CoordinateSet(0b1100), &fam)],
            4,
        )
        .unwrap();
        assert_eq!(jp.source().atoms(), 4);
        assert_eq!(jp.target().atoms(), 16);
        assert!((operator_norm_l1(&jp) - 1.0).abs() < 1e-15);
        for j in 0..4 {
            let mean: f64 = (0..16)
                .map(|i| jp.target().weight(i) * jp.entry(i, j))
                .sum();
            assert!(mean.abs() < 1e-15);
        }

        // overlapping blocks rejected
        assert!(build_jp(
            &[(CoordinateSet(0b0011), &fam), (CoordinateSet(0b0110), &fam)],
            4
        )
        .is_err());
    }

    #[test]
    fn project_block_examples() {
        let fam = rademacher_family(2).unwrap();
        let jp = build_jp(&[(CoordinateSet(0b11), &fam)], 2).unwrap();

        let full = project_block(&jp, CoordinateSet(0b11)).unwrap();
        assert_eq!(full.matrix(), jp.matrix());

        // empty block: columns collapse to their means (zero for characters)
        let empty = project_block(&jp, CoordinateSet::EMPTY).unwrap();
        for row in empty.matrix() {
            for &v in row {
                assert!(v.abs() < 1e-15);
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let t = random_operator(&mut rng, 16, 5);
            let p = project_block(&t, CoordinateSet(0b0011)).unwrap();
            assert!(operator_norm_l1(&p) <= operator_norm_l1(&t) + 1e-12);
        }
    }

    #[test]
    fn serde_roundtrip() {
        let t = L1Operator::new(
            AtomicMeasureSpace::counting(2).unwrap(),
            AtomicMeasureSpace::uniform(2).unwrap(),
            vec![vec![1.0, -1.0], vec![0.5, 2.0]],
        )
        .unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("counting"));
        let back: L1Operator = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);

        // malformed weights rejected at deserialization
        let bad = r#"{"source":[0.5,0.6],"target":{"counting":2},"matrix":[[1,1],[1,1]]}"#;
        assert!(serde_json::from_str::<L1Operator>(bad).is_err());
    }

    #[test]
    fn apply_matches_norm_witness() {
        let t = L1Operator::new(
            AtomicMeasureSpace::uniform(2).unwrap(),
            AtomicMeasureSpace::uniform(2).unwrap(),
            vec![vec![2.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        // normalized atom density (2, 0) maps to (4, 0); L1 norm = 2
        let out = t.apply(&[2.0, 0.0]).unwrap();
        let norm: f64 = out.iter().enumerate().map(|(i, v)| t.target().weight(i) * v.abs()).sum();
        assert!((norm - 2.0).abs() < 1e-15);
    }
}
