//! Dense tableau simplex for `min cᵀz  s.t.  Az ≤ b, z ≥ 0`.
//!
//! Pivoting follows Bland's rule. Several objectives can be given; they are
//! optimised preemptively, each later objective only moving along the optimal
//! face of the earlier ones, which yields a lexicographic optimum at a basic
//! feasible solution.

use nalgebra::{DMatrix, DVector};

const RC_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(DVector<f64>),
    Infeasible,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    // rows 0..m are constraints, the remaining rows are objectives
    t: DMatrix<f64>,
    m: usize,
    basis: Vec<usize>,
    rhs: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let ncols = self.t.ncols();
        for j in 0..ncols {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != 0.0 {
                for j in 0..ncols {
                    let v = self.t[(row, j)];
                    if v != 0.0 {
                        self.t[(i, j)] -= f * v;
                    }
                }
                self.t[(i, col)] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Runs Bland's rule on objective row `obj`. Columns in `frozen` rows with a
    /// nonzero reduced cost, and columns at or beyond `limit`, may not enter.
    fn optimize(&mut self, obj: usize, frozen: &[usize], limit: usize, pivots: &mut usize) -> Option<bool> {
        loop {
            let mut enter = None;
            for j in 0..limit {
                if self.t[(obj, j)] < -RC_TOL
                    && frozen.iter().all(|&r| self.t[(r, j)].abs() <= RC_TOL)
                {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else {
                return Some(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, self.rhs)].max(0.0) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 * lr.abs().max(1.0)
                                || ((ratio - lr).abs() <= 1e-14 * lr.abs().max(1.0)
                                    && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Some(false);
            };
            self.pivot(row, col);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return None;
            }
        }
    }
}

/// Solves the LP, returning the lexicographic optimum over `objectives`
/// (empty slice: any feasible basic solution).
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, objectives: &[DVector<f64>]) -> LpOutcome {
    let n = a.ncols();
    // scale rows to unit norm, drop empty ones
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(a.nrows());
    for i in 0..a.nrows() {
        let norm = a.row(i).norm();
        if norm == 0.0 {
            if b[i] < -FEAS_TOL {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        rows.push((a.row(i).iter().map(|v| v / norm).collect(), b[i] / norm));
    }
    let m = rows.len();
    let negatives: Vec<usize> = (0..m).filter(|&i| rows[i].1 < 0.0).collect();
    let n_art = negatives.len();
    let n_slack = m;
    let ncols = n + n_slack + n_art + 1;
    let rhs = ncols - 1;
    let n_obj = objectives.len() + 1;
    let mut t = DMatrix::zeros(m + n_obj, ncols);
    let mut basis = vec![0; m];
    let mut art_of_row = vec![None; m];
    for (k, &i) in negatives.iter().enumerate() {
        art_of_row[i] = Some(n + n_slack + k);
    }
    for (i, (row, bi)) in rows.iter().enumerate() {
        let sign = if *bi < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * row[j];
        }
        t[(i, n + i)] = sign;
        t[(i, rhs)] = sign * bi;
        match art_of_row[i] {
            Some(c) => {
                t[(i, c)] = 1.0;
                basis[i] = c;
            }
            None => basis[i] = n + i,
        }
    }
    let mut tab = Tableau { t, m, basis, rhs };
    let mut pivots = 0;

    if n_art > 0 {
        let phase1 = m + n_obj - 1;
        for k in 0..n_art {
            tab.t[(phase1, n + n_slack + k)] = 1.0;
        }
        for &i in &negatives {
            for j in 0..ncols {
                let v = tab.t[(i, j)];
                tab.t[(phase1, j)] -= v;
            }
        }
        match tab.optimize(phase1, &[], n + n_slack + n_art, &mut pivots) {
            None => return LpOutcome::IterationLimit,
            Some(_) => {}
        }
        if -tab.t[(phase1, rhs)] > FEAS_TOL {
            return LpOutcome::Infeasible;
        }
        // drive remaining artificials out of the basis
        for i in 0..m {
            if tab.basis[i] >= n + n_slack {
                if let Some(j) = (0..n + n_slack).find(|&j| tab.t[(i, j)].abs() > 1e-9) {
                    tab.pivot(i, j);
                }
            }
        }
        for j in n + n_slack..rhs {
            for i in 0..tab.t.nrows() {
                tab.t[(i, j)] = 0.0;
            }
        }
    }

    for (k, c) in objectives.iter().enumerate() {
        let r = m + k;
        for j in 0..n {
            tab.t[(r, j)] = c[j];
        }
        for i in 0..m {
            let bj = tab.basis[i];
            let f = tab.t[(r, bj)];
            if f != 0.0 && bj < n + n_slack {
                for j in 0..ncols {
                    let v = tab.t[(i, j)];
                    tab.t[(r, j)] -= f * v;
                }
            }
        }
    }
    let mut frozen = Vec::new();
    for k in 0..objectives.len() {
        let r = m + k;
        match tab.optimize(r, &frozen, n + n_slack, &mut pivots) {
            None => return LpOutcome::IterationLimit,
            Some(false) => return LpOutcome::Unbounded,
            Some(true) => {}
        }
        frozen.push(r);
    }

    let mut z = DVector::zeros(n);
    for i in 0..m {
        if tab.basis[i] < n {
            z[tab.basis[i]] = tab.t[(i, rhs)].max(0.0);
        }
    }
    LpOutcome::Optimal(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_maximization() {
        // max x + y s.t. x + 2y ≤ 4, 3x + y ≤ 6
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        let b = DVector::from_vec(vec![4.0, 6.0]);
        let c = DVector::from_vec(vec![-1.0, -1.0]);
        match solve(&a, &b, &[c]) {
            LpOutcome::Optimal(z) => {
                assert!((z[0] - 1.6).abs() < 1e-12);
                assert!((z[1] - 1.2).abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DVector::from_vec(vec![-1.0]);
        assert_eq!(solve(&a, &b, &[]), LpOutcome::Infeasible);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0]);
        let c = DVector::from_vec(vec![0.0, -1.0]);
        assert_eq!(solve(&a, &b, &[c]), LpOutcome::Unbounded);
    }

    #[test]
    fn lexicographic_tie_break() {
        // unit square, zero objective then minimize -z0, then z1
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let objs = vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ];
        assert_eq!(solve(&a, &b, &objs), LpOutcome::Optimal(DVector::from_vec(vec![1.0, 0.0])));
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // z0 ≥ 2 written as -z0 ≤ -2, z0 ≤ 3; minimize z0
        let a = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let b = DVector::from_vec(vec![-2.0, 3.0]);
        let c = DVector::from_vec(vec![1.0]);
        match solve(&a, &b, &[c]) {
            LpOutcome::Optimal(z) => assert!((z[0] - 2.0).abs() < 1e-12),
            o => panic!("{o:?}"),
        }
    }
}
