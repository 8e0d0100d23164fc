//! Max-slack feasibility for small affine systems.
//!
//! Every clause is oriented as `g(x) >= m` (`m` is the margin for strict
//! clauses, zero otherwise) and scaled by the norm of its coefficients. The
//! solver maximizes `s` subject to `(g(x) - m) / |a| >= s` for every clause and
//! the box `lo <= x <= hi`, i.e. it looks for the center of the largest ball
//! inside the feasible region. The system is satisfiable iff the optimum is
//! non-negative. The LP has `t + 1` columns and is solved with a dense
//! tableau simplex under Bland's rule, which makes it deterministic.

use std::cmp::Ordering;

use super::{ClauseKind, LinearConstraintSystem, Witness};

const PIVOT_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

struct Row {
    coeffs: Vec<f64>,
    /// Value of `g - m` at `x = lo`.
    offset: f64,
    norm: f64,
}

pub fn solve(sys: &LinearConstraintSystem) -> Option<Witness> {
    let t = sys.variables.len();
    if t == 0 || sys.lo.partial_cmp(&sys.hi) != Some(Ordering::Less) {
        return None;
    }

    let mut rows = Vec::with_capacity(sys.clauses.len() + 2 * t);
    for clause in &sys.clauses {
        if clause.kind == ClauseKind::Range {
            continue;
        }
        let ineq = &clause.inequality;
        let oriented = ineq.oriented();
        let norm = oriented.norm();
        if norm == 0.0 {
            if !ineq.holds(&vec![0.0; t], sys.margin) {
                return None;
            }
            continue;
        }
        let margin = if ineq.is_strict() { sys.margin } else { 0.0 };
        let offset = oriented.constant + oriented.coeffs.iter().sum::<f64>() * sys.lo - margin;
        rows.push(Row {
            coeffs: oriented.coeffs,
            offset,
            norm,
        });
    }
    for k in 0..t {
        let mut lower = vec![0.0; t];
        lower[k] = 1.0;
        rows.push(Row {
            coeffs: lower,
            offset: 0.0,
            norm: 1.0,
        });
        let mut upper = vec![0.0; t];
        upper[k] = -1.0;
        rows.push(Row {
            coeffs: upper,
            offset: sys.hi - sys.lo,
            norm: 1.0,
        });
    }

    // Substituting x = lo + y and s = sigma - shift puts the origin
    // (y = 0, sigma = 0) inside the feasible set of the LP.
    let shift = rows
        .iter()
        .map(|r| -r.offset / r.norm)
        .fold(0.0_f64, f64::max);
    let (y, sigma) = maximize_sigma(&rows, t, shift)?;
    if sigma - shift < 0.0 {
        return None;
    }

    let point: Vec<f64> = y
        .iter()
        .map(|v| (sys.lo + v).clamp(sys.lo, sys.hi))
        .collect();
    if !sys.holds_at(&point) {
        return None;
    }
    let slack = sys
        .clauses
        .iter()
        .filter_map(|c| {
            let norm = c.inequality.form.norm();
            (norm > 0.0).then(|| c.inequality.slack(&point, sys.margin) / norm)
        })
        .fold(f64::INFINITY, f64::min);
    Some(Witness {
        assignment: sys.variables.iter().copied().zip(point).collect(),
        slack,
    })
}

/// Maximizes sigma subject to `-a·y + n·sigma <= offset + n·shift`, `y, sigma >= 0`.
fn maximize_sigma(rows: &[Row], t: usize, shift: f64) -> Option<(Vec<f64>, f64)> {
    let vars = t + 1;
    let m = rows.len();
    let width = vars + m + 1;
    let rhs = width - 1;
    let mut tab = vec![vec![0.0; width]; m];
    for (r, row) in rows.iter().enumerate() {
        for (i, a) in row.coeffs.iter().enumerate() {
            tab[r][i] = -a;
        }
        tab[r][t] = row.norm;
        tab[r][vars + r] = 1.0;
        tab[r][rhs] = (row.offset + row.norm * shift).max(0.0);
    }
    let mut basis: Vec<usize> = (vars..vars + m).collect();
    // Reduced costs of the objective `max sigma`.
    let mut cost = vec![0.0; width - 1];
    cost[t] = 1.0;

    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..width - 1).find(|&j| cost[j] > PIVOT_TOL) else {
            let mut z = vec![0.0; vars];
            for (r, &b) in basis.iter().enumerate() {
                if b < vars {
                    z[b] = tab[r][rhs];
                }
            }
            let sigma = z.pop().unwrap_or(0.0);
            return Some((z, sigma));
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = tab[r][enter];
            if a > PIVOT_TOL {
                let ratio = tab[r][rhs] / a;
                let better = match leave {
                    None => true,
                    Some((best, best_ratio)) => {
                        ratio < best_ratio || (ratio == best_ratio && basis[r] < basis[best])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        // Unbounded cannot happen with the box rows present.
        let (pr, _) = leave?;
        pivot(&mut tab, &mut cost, pr, enter);
        basis[pr] = enter;
    }
    None
}

fn pivot(tab: &mut [Vec<f64>], cost: &mut [f64], pr: usize, pc: usize) {
    let p = tab[pr][pc];
    tab[pr].iter_mut().for_each(|v| *v /= p);
    let pivot_row = tab[pr].clone();
    for (r, row) in tab.iter_mut().enumerate() {
        if r == pr {
            continue;
        }
        let f = row[pc];
        if f != 0.0 {
            row.iter_mut()
                .zip(&pivot_row)
                .for_each(|(v, pv)| *v -= f * pv);
        }
    }
    let f = cost[pc];
    if f != 0.0 {
        cost.iter_mut()
            .zip(&pivot_row)
            .for_each(|(v, pv)| *v -= f * pv);
    }
}
