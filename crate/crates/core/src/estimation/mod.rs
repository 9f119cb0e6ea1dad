//! Constraint learning from noisy feasibility measurements: query design,
//! incremental least squares, confidence ellipsoids and safety margins.

mod constants;

pub use constants::{
    compute_constants, h_value, min_samples, psi_inverse, ConfidenceMode, ConstantInputs, HTracker,
    ScheduleConstants,
};

use crate::error::{Error, Result};
use crate::geometry::Polytope;
use crate::linalg::{sherman_morrison, sym_condition};
use nalgebra::{DMatrix, DVector};

/// Largest condition number accepted for the centred scatter matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// The CollectData query pattern: `x ± r0·e_j`, each repeated `n/(2d)` times,
/// ordered `+e_1, …, +e_d, −e_1, …, −e_d` within each repetition block.
pub fn collect_data_points(x: &DVector<f64>, n: u128, r0: f64) -> Result<Vec<DVector<f64>>> {
    let d = x.len();
    let block = 2 * d as u128;
    if n == 0 || n % block != 0 {
        return Err(Error::InvalidArgument(format!("sample count {n} is not a positive multiple of {block}")));
    }
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument("r0 must be positive".into()));
    }
    let reps = (n / block) as usize;
    let mut out = Vec::with_capacity(reps * 2 * d);
    for _ in 0..reps {
        out.extend(pattern(x, r0));
    }
    Ok(out)
}

/// The 2d distinct points of one CollectData block.
pub fn pattern(x: &DVector<f64>, r0: f64) -> Vec<DVector<f64>> {
    let d = x.len();
    (0..2 * d)
        .map(|j| {
            let mut p = x.clone();
            if j < d {
                p[j] += r0;
            } else {
                p[j - d] -= r0;
            }
            p
        })
        .collect()
}

/// Running sufficient statistics of every (query, measurement) pair.
///
/// Stored in centred form: count N, means x̄ and ȳ, scatter
/// `S = Σ(x−x̄)(x−x̄)ᵀ = Q⁻¹`, cross term `C = Σ(x−x̄)(y−ȳ)ᵀ`, and `Q`
/// maintained by Sherman-Morrison once S has full rank.
#[derive(Debug, Clone)]
pub struct LeastSquaresState {
    d: usize,
    m: usize,
    n: u128,
    points: u64,
    mean_x: DVector<f64>,
    mean_y: DVector<f64>,
    scatter: DMatrix<f64>,
    cross: DMatrix<f64>,
    q: Option<DMatrix<f64>>,
}

/// `D̂ = {x : Âx − b̂ ≤ 0}`.
#[derive(Debug, Clone)]
pub struct EstimatedPolytope {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DVector<f64>,
    pub n: u128,
}

impl EstimatedPolytope {
    pub fn polytope(&self) -> Result<Polytope> {
        Polytope::new(self.a_hat.clone(), self.b_hat.clone())
    }

    /// ε̂ⁱ(x) = b̂ⁱ − ⟨âⁱ, x⟩.
    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b_hat - &self.a_hat * x
    }
}

impl LeastSquaresState {
    pub fn new(d: usize, m: usize) -> Self {
        LeastSquaresState {
            d,
            m,
            n: 0,
            points: 0,
            mean_x: DVector::zeros(d),
            mean_y: DVector::zeros(m),
            scatter: DMatrix::zeros(d, d),
            cross: DMatrix::zeros(d, m),
            q: None,
        }
    }

    pub fn n(&self) -> u128 {
        self.n
    }

    pub fn mean_x(&self) -> &DVector<f64> {
        &self.mean_x
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    pub fn q(&self) -> Result<&DMatrix<f64>> {
        self.q.as_ref().ok_or(Error::Uninitialized)
    }

    pub fn is_ready(&self) -> bool {
        self.q.is_some()
    }

    /// Adds one point with weight `w` whose measurement average is `y`.
    fn push(&mut self, x: &DVector<f64>, y: &DVector<f64>, w: u128) {
        let n_old = self.n as f64;
        self.n += w;
        self.points += 1;
        let n_new = self.n as f64;
        let wf = w as f64;
        let dx = x - &self.mean_x;
        let dy = y - &self.mean_y;
        self.mean_x += &dx * (wf / n_new);
        self.mean_y += &dy * (wf / n_new);
        let c = wf * n_old / n_new;
        if c > 0.0 {
            self.scatter += &dx * dx.transpose() * c;
            self.cross += &dx * dy.transpose() * c;
            if let Some(q) = &self.q {
                let q = sherman_morrison(q, &dx, c);
                // one Newton-Schulz step against the exact scatter to stop drift
                let eye = DMatrix::<f64>::identity(self.d, self.d);
                let r = &q * (eye * 2.0 - &self.scatter * &q);
                self.q = Some((&r + r.transpose()) * 0.5);
            }
        }
    }

    fn finish(&mut self) -> Result<()> {
        if self.q.is_some() || self.points <= self.d as u64 {
            return Ok(());
        }
        let cond = sym_condition(&self.scatter);
        if cond <= MAX_CONDITION {
            let inv = self.scatter.clone().try_inverse().ok_or(Error::Degenerate(cond))?;
            self.q = Some((&inv + inv.transpose()) * 0.5);
            Ok(())
        } else if self.points >= 2 * self.d as u64 {
            Err(Error::Degenerate(cond))
        } else {
            Ok(())
        }
    }

    /// Appends the rows of `x` (n×d) with measurements `y` (n×m).
    pub fn update(&mut self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.d {
            return Err(Error::Dimension { expected: self.d, got: x.ncols() });
        }
        if y.ncols() != self.m || y.nrows() != x.nrows() {
            return Err(Error::Dimension { expected: self.m, got: y.ncols() });
        }
        for i in 0..x.nrows() {
            self.push(&x.row(i).transpose(), &y.row(i).transpose(), 1);
        }
        self.finish()
    }

    /// Appends `k` measurements taken at the same point `x`, given their mean.
    pub fn update_repeated(&mut self, x: &DVector<f64>, y_mean: &DVector<f64>, k: u128) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Dimension { expected: self.d, got: x.len() });
        }
        if y_mean.len() != self.m {
            return Err(Error::Dimension { expected: self.m, got: y_mean.len() });
        }
        if k > 0 {
            self.push(x, y_mean, k);
        }
        self.finish()
    }

    /// β̂ = (X̄ᵀX̄)⁻¹X̄ᵀY in the form Â = (Q·C)ᵀ, b̂ = Âx̄ − ȳ.
    pub fn estimate(&self) -> Result<EstimatedPolytope> {
        let q = self.q()?;
        let a_hat = (q * &self.cross).transpose();
        let b_hat = &a_hat * &self.mean_x - &self.mean_y;
        Ok(EstimatedPolytope { a_hat, b_hat, n: self.n })
    }

    /// X̄ᵀX̄ with X̄ = [X, −1].
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        let d = self.d;
        let n = self.n as f64;
        let mut g = DMatrix::zeros(d + 1, d + 1);
        let top = &self.scatter + &self.mean_x * self.mean_x.transpose() * n;
        g.view_mut((0, 0), (d, d)).copy_from(&top);
        for j in 0..d {
            g[(j, d)] = -n * self.mean_x[j];
            g[(d, j)] = -n * self.mean_x[j];
        }
        g[(d, d)] = n;
        g
    }

    /// (X̄ᵀX̄)⁻¹ = [[Q, Qx̄], [x̄ᵀQ, 1/N + x̄ᵀQx̄]].
    pub fn normal_inverse(&self) -> Result<DMatrix<f64>> {
        let q = self.q()?;
        let d = self.d;
        let qx = q * &self.mean_x;
        let mut g = DMatrix::zeros(d + 1, d + 1);
        g.view_mut((0, 0), (d, d)).copy_from(q);
        for j in 0..d {
            g[(j, d)] = qx[j];
            g[(d, j)] = qx[j];
        }
        g[(d, d)] = 1.0 / self.n as f64 + self.mean_x.dot(&qx);
        Ok(g)
    }

    /// X̄ᵀY, of size (d+1)×m.
    pub fn cross_term(&self) -> DMatrix<f64> {
        let n = self.n as f64;
        let d = self.d;
        let mut c = DMatrix::zeros(d + 1, self.m);
        let top = &self.cross + &self.mean_x * self.mean_y.transpose() * n;
        c.view_mut((0, 0), (d, self.m)).copy_from(&top);
        for i in 0..self.m {
            c[(d, i)] = -n * self.mean_y[i];
        }
        c
    }

    /// `(x − x̄)ᵀQ(x − x̄)`.
    pub fn leverage(&self, x: &DVector<f64>) -> Result<f64> {
        let q = self.q()?;
        let dx = x - &self.mean_x;
        Ok(dx.dot(&(q * &dx)))
    }

    /// Quadratic forms `(β̂ⁱ − βⁱ)ᵀ X̄ᵀX̄ (β̂ⁱ − βⁱ) / σ̄²` for every constraint,
    /// where `β = [Aᵀ; bᵀ]` comes from `truth`.
    pub fn ellipsoid_forms(&self, truth: &Polytope, sigma_bar: f64) -> Result<Vec<f64>> {
        let est = self.estimate()?;
        let n = self.n as f64;
        let mut out = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let da = (est.a_hat.row(i) - truth.a().row(i)).transpose();
            let db = est.b_hat[i] - truth.b()[i];
            let quad = da.dot(&(&self.scatter * &da)) + n * (self.mean_x.dot(&da) - db).powi(2);
            out.push(quad / (sigma_bar * sigma_bar));
        }
        Ok(out)
    }
}

/// `min_i ε̂ᵢ(x)² − κ²(1/N + (x−x̄)ᵀQ(x−x̄))`.
pub fn safety_margin(state: &LeastSquaresState, est: &EstimatedPolytope, x: &DVector<f64>, kappa: f64) -> Result<f64> {
    let lev = state.leverage(x)?;
    let r = est.residuals(x).min();
    Ok(r * r - kappa * kappa * (1.0 / state.n() as f64 + lev))
}

/// Membership in the safety set: nonnegative residuals and margin.
pub fn in_safety_set(state: &LeastSquaresState, est: &EstimatedPolytope, x: &DVector<f64>, kappa: f64) -> Result<bool> {
    Ok(est.residuals(x).min() >= 0.0 && safety_margin(state, est, x, kappa)? >= 0.0)
}

/// Relative resolution below which an estimation error is treated as rounding.
pub const ROUNDING_RESOLUTION: f64 = 1e-12;

/// Whether every true column βⁱ lies inside its confidence ellipsoid of radius
/// `psi_inv`. Columns whose estimate agrees with the truth to within floating
/// point resolution count as covered, since at very large N the ellipsoid is
/// narrower than the spacing of representable values.
pub fn ellipsoid_contains(state: &LeastSquaresState, truth: &Polytope, sigma_bar: f64, psi_inv: f64) -> Result<bool> {
    let est = state.estimate()?;
    let scale = 1.0 + state.mean_x().amax();
    let within_rounding = |i: usize| {
        let beta = truth.a().row(i).amax().max(truth.b()[i].abs());
        let err = (est.a_hat.row(i) - truth.a().row(i)).amax().max((est.b_hat[i] - truth.b()[i]).abs());
        err <= ROUNDING_RESOLUTION * beta * scale
    };
    if sigma_bar == 0.0 {
        return Ok((0..truth.m()).all(within_rounding));
    }
    let forms = state.ellipsoid_forms(truth, sigma_bar)?;
    Ok(forms.iter().enumerate().all(|(i, &q)| q <= psi_inv * psi_inv || within_rounding(i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::NoisyFeasibilityOracle;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn collect_pattern_order() {
        let pts = collect_data_points(&v(&[0.0, 0.0]), 4, 0.01).unwrap();
        let expect = [[0.01, 0.0], [0.0, 0.01], [-0.01, 0.0], [0.0, -0.01]];
        for (p, e) in pts.iter().zip(expect) {
            assert_eq!(p, &v(&e));
        }
        let pts8 = collect_data_points(&v(&[0.0, 0.0]), 8, 0.01).unwrap();
        assert_eq!(&pts8[..4], &pts8[4..]);
        assert!(collect_data_points(&v(&[0.0, 0.0]), 6, 0.01).is_err());
    }

    #[test]
    fn collect_pattern_full_affine_rank() {
        let pts = collect_data_points(&v(&[1.0, 2.0, 3.0]), 6, 0.1).unwrap();
        let mut xbar = DMatrix::zeros(6, 4);
        for (i, p) in pts.iter().enumerate() {
            for j in 0..3 {
                xbar[(i, j)] = p[j];
            }
            xbar[(i, 3)] = -1.0;
        }
        assert_eq!(xbar.rank(1e-10), 4);
    }

    #[test]
    fn noiseless_batch_recovers_beta() {
        let p = Polytope::unit_box(2).scaled(3.0);
        let mut nfo = NoisyFeasibilityOracle::new(p.clone(), p.clone(), 0.0, 0);
        let pts = collect_data_points(&v(&[0.3, 0.6]), 4, 0.01).unwrap();
        let x = DMatrix::from_fn(4, 2, |i, j| pts[i][j]);
        let y = nfo.query(&x).unwrap();
        let mut ls = LeastSquaresState::new(2, 4);
        ls.update(&x, &y).unwrap();
        let est = ls.estimate().unwrap();
        assert!((&est.a_hat - p.a()).abs().max() <= 1e-9);
        assert!((&est.b_hat - p.b()).abs().max() <= 1e-9);
    }

    #[test]
    fn normal_matrix_block_structure() {
        // single batch, d = 2, n = 4 around x
        let x0 = v(&[0.4, -0.2]);
        let r0 = 0.1;
        let pts = collect_data_points(&x0, 4, r0).unwrap();
        let mut ls = LeastSquaresState::new(2, 1);
        let xm = DMatrix::from_fn(4, 2, |i, j| pts[i][j]);
        ls.update(&xm, &DMatrix::zeros(4, 1)).unwrap();
        let mut explicit = DMatrix::zeros(3, 3);
        for p in &pts {
            let row = v(&[p[0], p[1], -1.0]);
            explicit += &row * row.transpose();
        }
        assert_relative_eq!(ls.normal_matrix(), explicit, epsilon = 1e-12);
        let inv = explicit.try_inverse().unwrap();
        assert_relative_eq!(ls.normal_inverse().unwrap(), inv, epsilon = 1e-9);
        // Q⁻¹ is the scatter 2r0²·I
        assert_relative_eq!(ls.scatter(), &(DMatrix::identity(2, 2) * 2.0 * r0 * r0), epsilon = 1e-15);
    }

    #[test]
    fn incremental_matches_batch_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (d, m, n) = (3, 4, 60);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let mut ls = LeastSquaresState::new(d, m);
        for chunk in 0..6 {
            ls.update(&x.rows(chunk * 10, 10).into_owned(), &y.rows(chunk * 10, 10).into_owned()).unwrap();
            let k = (chunk + 1) * 10;
            let mut xb = DMatrix::from_element(k, d + 1, -1.0);
            xb.view_mut((0, 0), (k, d)).copy_from(&x.rows(0, k));
            let beta = (xb.transpose() * &xb).try_inverse().unwrap() * xb.transpose() * y.rows(0, k);
            let est = ls.estimate().unwrap();
            for i in 0..m {
                for j in 0..d {
                    assert_relative_eq!(est.a_hat[(i, j)], beta[(j, i)], epsilon = 1e-10, max_relative = 1e-8);
                }
                assert_relative_eq!(est.b_hat[i], beta[(d, i)], epsilon = 1e-10, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn degenerate_queries_rejected() {
        let mut ls = LeastSquaresState::new(2, 1);
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        assert!(matches!(ls.update(&x, &DMatrix::zeros(4, 1)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn safety_margin_examples() {
        let p = Polytope::unit_box(2);
        let mut ls = LeastSquaresState::new(2, 4);
        let mut nfo = NoisyFeasibilityOracle::new(p.clone(), p.clone(), 0.0, 0);
        for q in pattern(&v(&[0.5, 0.5]), 0.01) {
            let y = nfo.query_mean(&q, 5).unwrap();
            ls.update_repeated(&q, &y, 5).unwrap();
        }
        let est = ls.estimate().unwrap();
        assert!(safety_margin(&ls, &est, &v(&[0.3, 0.6]), 0.0).unwrap() > 0.0);
        assert!(!in_safety_set(&ls, &est, &v(&[1.0, 0.6]), 1e-6).unwrap());
        assert!(ellipsoid_contains(&ls, &p, 0.0, 1.0).unwrap());
    }

    #[test]
    fn ellipsoid_rejects_far_truth() {
        let p = Polytope::unit_box(2);
        let mut ls = LeastSquaresState::new(2, 4);
        let mut nfo = NoisyFeasibilityOracle::new(p.clone(), p.clone(), 0.1, 3);
        for q in pattern(&v(&[0.5, 0.5]), 0.05) {
            let y = nfo.query_mean(&q, 50).unwrap();
            ls.update_repeated(&q, &y, 50).unwrap();
        }
        let psi = psi_inverse(ls.n() as f64, 0.1 / 4.0, 2).unwrap();
        assert!(ellipsoid_contains(&ls, &p, 0.1, psi).unwrap());
        let far = p.shrink(50.0).unwrap();
        assert!(!ellipsoid_contains(&ls, &far, 0.1, psi).unwrap());
    }
}
