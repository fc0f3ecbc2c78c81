//! Dense primal simplex for the exact L1 distance to a symmetric convex
//! hull. The LP: minimize sum_x mu_x t_x subject to
//! `-t <= v - C lambda <= t`, `||lambda||_1 <= 1`, solved in standard form
//! with Bland's rule. The initial point `lambda = 0`, `t = |v|` is already
//! basic feasible, so no phase-one is needed.

use crate::error::{Error, Result};

pub struct SimplexSolution {
    pub distance: f64,
    pub combination: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 200_000;

/// Entry cap on the dense tableau; larger instances must use Frank-Wolfe.
pub const MAX_TABLEAU_ENTRIES: usize = 30_000_000;

pub fn simplex_distance(v: &[f64], columns: &[Vec<f64>]) -> Result<SimplexSolution> {
    let s = v.len();
    let m = columns.len();
    if m == 0 {
        let mu = 1.0 / s as f64;
        return Ok(SimplexSolution {
            distance: v.iter().map(|x| mu * x.abs()).sum(),
            combination: vec![],
        });
    }
    if columns.iter().any(|c| c.len() != s) {
        return Err(Error::domain("column length does not match the point count"));
    }
    if s.saturating_mul(m) > 1_000_000 {
        return Err(Error::capacity("simplex requires 2^n * |columns| <= 10^6"));
    }
    let rows = 2 * s + 1;
    // columns: lambda+ (m), lambda- (m), t (s), surplus+ (s), surplus- (s), slack (1)
    let n_v = 2 * m + 3 * s + 1;
    if rows.saturating_mul(n_v + 1) > MAX_TABLEAU_ENTRIES {
        return Err(Error::capacity("simplex tableau exceeds the dense entry cap"));
    }
    let mu = 1.0 / s as f64;

    let lp = |j: usize| j;
    let ln = |j: usize| m + j;
    let tv = |x: usize| 2 * m + x;
    let sp = |x: usize| 2 * m + s + x;
    let sn = |x: usize| 2 * m + 2 * s + x;
    let s0 = 2 * m + 3 * s;

    let mut a = vec![vec![0.0f64; n_v]; rows];
    let mut b = vec![0.0f64; rows];
    for x in 0..s {
        // row x:      C lam+ - C lam- + t_x - sp_x = v_x
        // row s + x: -C lam+ + C lam- + t_x - sn_x = -v_x
        for j in 0..m {
            a[x][lp(j)] = columns[j][x];
            a[x][ln(j)] = -columns[j][x];
            a[s + x][lp(j)] = -columns[j][x];
            a[s + x][ln(j)] = columns[j][x];
        }
        a[x][tv(x)] = 1.0;
        a[x][sp(x)] = -1.0;
        a[s + x][tv(x)] = 1.0;
        a[s + x][sn(x)] = -1.0;
        b[x] = v[x];
        b[s + x] = -v[x];
    }
    for j in 0..2 * m {
        a[2 * s][j] = 1.0;
    }
    a[2 * s][s0] = 1.0;
    b[2 * s] = 1.0;

    let mut cost = vec![0.0f64; n_v];
    for x in 0..s {
        cost[tv(x)] = mu;
    }

    // initial basis: t_x in the row matching sign(v_x), the loose surplus in
    // the other, the hull slack in the last row
    let mut basis = vec![0usize; rows];
    for x in 0..s {
        if v[x] >= 0.0 {
            basis[x] = tv(x);
            basis[s + x] = sn(x);
        } else {
            basis[s + x] = tv(x);
            basis[x] = sp(x);
        }
    }
    basis[2 * s] = s0;

    // canonicalize: reduce each basis column to a unit vector
    for r in 0..rows {
        let pc = basis[r];
        let piv = a[r][pc];
        if piv.abs() < PIVOT_TOL {
            return Err(Error::construction("singular initial basis"));
        }
        if (piv - 1.0).abs() > 0.0 {
            for e in a[r].iter_mut() {
                *e /= piv;
            }
            b[r] /= piv;
        }
        for rr in 0..rows {
            if rr == r {
                continue;
            }
            let f = a[rr][pc];
            if f != 0.0 {
                for k in 0..n_v {
                    let av = a[r][k];
                    if av != 0.0 {
                        a[rr][k] -= f * av;
                    }
                }
                b[rr] -= f * b[r];
            }
        }
    }
    // reduced costs z_j = c_j - c_B^T A_j
    let mut z = cost.clone();
    let mut obj = 0.0f64;
    for r in 0..rows {
        let cb = cost[basis[r]];
        if cb != 0.0 {
            for k in 0..n_v {
                z[k] -= cb * a[r][k];
            }
            obj += cb * b[r];
        }
    }

    for _iter in 0..MAX_ITERS {
        // Bland: lowest-index column with negative reduced cost
        let Some(e) = (0..n_v).find(|&j| z[j] < -COST_TOL) else {
            let mut combination = vec![0.0f64; m];
            for r in 0..rows {
                let bv = basis[r];
                if bv < m {
                    combination[bv] += b[r];
                } else if bv < 2 * m {
                    combination[bv - m] -= b[r];
                }
            }
            return Ok(SimplexSolution { distance: obj, combination });
        };
        // ratio test, lowest basis index among ties
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            if a[r][e] > PIVOT_TOL {
                let ratio = b[r] / a[r][e];
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-12
                            || (ratio < lratio + 1e-12 && basis[r] < basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else {
            return Err(Error::construction("unbounded LP; objective should be bounded"));
        };
        // pivot on (r, e)
        let piv = a[r][e];
        for k in 0..n_v {
            a[r][k] /= piv;
        }
        b[r] /= piv;
        for rr in 0..rows {
            if rr == r {
                continue;
            }
            let f = a[rr][e];
            if f != 0.0 {
                for k in 0..n_v {
                    let av = a[r][k];
                    if av != 0.0 {
                        a[rr][k] -= f * av;
                    }
                }
                b[rr] -= f * b[r];
            }
        }
        let zf = z[e];
        if zf != 0.0 {
            for k in 0..n_v {
                let av = a[r][k];
                if av != 0.0 {
                    z[k] -= zf * av;
                }
            }
            obj += zf * b[r];
        }
        basis[r] = e;
    }
    Err(Error::construction("simplex iteration cap reached"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eval(v: &[f64], columns: &[Vec<f64>], lam: &[f64]) -> f64 {
        let s = v.len();
        let mu = 1.0 / s as f64;
        (0..s)
            .map(|x| {
                let c: f64 = columns.iter().zip(lam).map(|(col, l)| col[x] * l).sum();
                mu * (v[x] - c).abs()
            })
            .sum()
    }

    #[test]
    fn zero_vector_distance_zero() {
        let cols = vec![vec![1.0, -1.0, 1.0, -1.0]];
        let sol = simplex_distance(&[0.0; 4], &cols).unwrap();
        assert!(sol.distance.abs() < 1e-12);
    }

    #[test]
    fn column_itself_distance_zero() {
        let c0 = vec![1.0, -1.0, 1.0, -1.0];
        let cols = vec![c0.clone(), vec![1.0, 1.0, -1.0, -1.0]];
        let sol = simplex_distance(&c0, &cols).unwrap();
        assert!(sol.distance.abs() < 1e-10, "d = {}", sol.distance);
    }

    #[test]
    fn orthogonal_character_distance_one() {
        // v and the single column are orthogonal +-1 vectors; the best
        // scalar multiple is t = 0 and the distance is ||v||_1 = 1
        let v = vec![1.0, 1.0, -1.0, -1.0];
        let cols = vec![vec![1.0, -1.0, 1.0, -1.0]];
        let sol = simplex_distance(&v, &cols).unwrap();
        // grid-scan oracle over t in [-1, 1]
        let mut oracle = f64::INFINITY;
        let mut t = -1.0;
        while t <= 1.0 {
            oracle = oracle.min(eval(&v, &cols, &[t]));
            t += 1e-3;
        }
        assert!((sol.distance - 1.0).abs() < 1e-10);
        assert!(sol.distance <= oracle + 1e-9);
    }

    #[test]
    fn matches_feasible_value_and_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let s = 16;
            let m = rng.gen_range(1..=5);
            let v: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cols: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let sol = simplex_distance(&v, &cols).unwrap();
            // reported combination is feasible and attains the value
            let l1: f64 = sol.combination.iter().map(|x| x.abs()).sum();
            assert!(l1 <= 1.0 + 1e-9);
            assert!((eval(&v, &cols, &sol.combination) - sol.distance).abs() < 1e-9);
            // no random feasible point does better
            for _ in 0..40 {
                let mut lam: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm: f64 = lam.iter().map(|x| x.abs()).sum();
                if norm > 1.0 {
                    for x in lam.iter_mut() {
                        *x /= norm;
                    }
                }
                assert!(eval(&v, &cols, &lam) >= sol.distance - 1e-9);
            }
        }
    }

    #[test]
    fn capacity_cap_enforced() {
        let v = vec![0.0; 128];
        let cols: Vec<Vec<f64>> = (0..10_000).map(|_| vec![0.0; 128]).collect();
        assert!(simplex_distance(&v, &cols).is_err());
    }
}
