//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Largest singular value, via the symmetric eigenvalues of `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let g = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let e = g.symmetric_eigenvalues();
    e.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

/// Smallest singular value of a matrix with at least as many rows as columns.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let e = g.symmetric_eigenvalues();
    e.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0).sqrt()
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Condition number of a symmetric positive semidefinite matrix.
pub fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let e = m.clone().symmetric_eigenvalues();
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// The block matrix `[I, x]` of size d×(d+1).
pub fn identity_with_column(x: &DVector<f64>) -> DMatrix<f64> {
    let d = x.len();
    let mut m = DMatrix::zeros(d, d + 1);
    for i in 0..d {
        m[(i, i)] = 1.0;
        m[(i, d)] = x[i];
    }
    m
}

/// Rank-one Sherman-Morrison update: returns `(M + c·u·uᵀ)⁻¹` given `M⁻¹`.
pub fn sherman_morrison(inv: &DMatrix<f64>, u: &DVector<f64>, c: f64) -> DMatrix<f64> {
    let iu = inv * u;
    let denom = 1.0 + c * u.dot(&iu);
    inv - (&iu * iu.transpose()) * (c / denom)
}

/// Iterator over all `k`-subsets of `0..n` in lexicographic order.
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bracket_identity_norm() {
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let m = identity_with_column(&x);
        assert_relative_eq!(spectral_norm(&m), (1.0 + x.norm_squared()).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn combinations_count() {
        assert_eq!(Combinations::new(5, 2).count(), 10);
        assert_eq!(Combinations::new(4, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(binomial(30, 15), 155117520);
    }

    #[test]
    fn sherman_morrison_matches_inverse() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let u = DVector::from_vec(vec![0.2, -0.7, 1.1]);
        let direct = (&m + &u * u.transpose() * 0.8).try_inverse().unwrap();
        let sm = sherman_morrison(&m.clone().try_inverse().unwrap(), &u, 0.8);
        assert_relative_eq!(direct, sm, epsilon = 1e-12);
    }
}
