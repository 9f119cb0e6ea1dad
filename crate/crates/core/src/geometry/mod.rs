//! Exact polytope representation `{x : Ax − b ≤ 0}` and the geometric
//! quantities the safety analysis relies on.

pub mod lp;

use crate::error::{Error, Result};
use crate::linalg::{binomial, min_singular_value, Combinations};
use lp::LpOutcome;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Slack accepted on residuals when deciding membership.
pub const FEAS_TOL: f64 = 1e-9;
/// Euclidean distance under which two vertices are the same point.
pub const DUP_TOL: f64 = 1e-9;
/// Default cap on the number of constraint subsets enumerated.
pub const DEFAULT_CAP: u128 = 1_000_000;
/// Relative singular-value floor below which an active set counts as rank deficient.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    names: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct ActivePoint {
    pub point: DVector<f64>,
    pub active: Vec<usize>,
    pub feasible: bool,
    pub sigma_min: f64,
}

#[derive(Debug, Clone)]
pub struct GeometrySummary {
    /// Λ, the largest pairwise vertex distance.
    pub diameter: f64,
    /// Γ, the largest vertex norm.
    pub radius: f64,
    pub rho_min: f64,
    /// α_D = √d / ρ_min.
    pub alpha: f64,
    /// L'_A, the largest row norm.
    pub l_a_raw: f64,
    pub vertices: Vec<DVector<f64>>,
    pub active_points: Vec<ActivePoint>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeRecord {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidPolytope("need m ≥ 1 and d ≥ 1".into()));
        }
        if a.nrows() != b.len() {
            return Err(Error::Dimension {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPolytope("non-finite entry".into()));
        }
        for i in 0..a.nrows() {
            if a.row(i).iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidPolytope(format!("row {i} is all zero")));
            }
        }
        Ok(Polytope { a, b, names: None })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidPolytope("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        Polytope::new(DMatrix::from_row_slice(rows.len(), d, &flat), DVector::from_column_slice(b))
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                got: names.len(),
            });
        }
        self.names = Some(names);
        Ok(self)
    }

    /// The box `lo ≤ x ≤ hi`, rows ordered `x_j ≤ hi_j` then `−x_j ≤ −lo_j`.
    pub fn unit_box(d: usize) -> Self {
        Polytope::cube(&DVector::zeros(d), &DVector::from_element(d, 1.0))
    }

    pub fn cube(lo: &DVector<f64>, hi: &DVector<f64>) -> Self {
        let d = lo.len();
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for j in 0..d {
            a[(j, j)] = 1.0;
            b[j] = hi[j];
            a[(d + j, j)] = -1.0;
            b[d + j] = -lo[j];
        }
        Polytope { a, b, names: None }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::Dimension {
                expected: self.d(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// εⁱ(x) = bⁱ − ⟨aⁱ, x⟩ for every row.
    pub fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.b - &self.a * x)
    }

    pub fn min_residual(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.residuals(x)?.min())
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.residuals(x).map(|r| r.min() >= -tol).unwrap_or(false)
    }

    /// `{x : Ax − b + τ1 ≤ 0}`.
    pub fn shrink(&self, tau: f64) -> Result<Polytope> {
        if !(tau >= 0.0) {
            return Err(Error::InvalidArgument(format!("shrinkage must be ≥ 0, got {tau}")));
        }
        Ok(Polytope {
            a: self.a.clone(),
            b: self.b.add_scalar(-tau),
            names: self.names.clone(),
        })
    }

    /// The polytope with every row and offset divided by `k > 0`.
    pub fn scaled(&self, k: f64) -> Polytope {
        Polytope {
            a: &self.a / k,
            b: &self.b / k,
            names: self.names.clone(),
        }
    }

    /// Appends the rows of `other` (same dimension).
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        if other.d() != self.d() {
            return Err(Error::Dimension {
                expected: self.d(),
                got: other.d(),
            });
        }
        let m = self.m() + other.m();
        let mut a = DMatrix::zeros(m, self.d());
        a.rows_mut(0, self.m()).copy_from(&self.a);
        a.rows_mut(self.m(), other.m()).copy_from(&other.a);
        let mut b = DVector::zeros(m);
        b.rows_mut(0, self.m()).copy_from(&self.b);
        b.rows_mut(self.m(), other.m()).copy_from(&other.b);
        Ok(Polytope { a, b, names: None })
    }

    fn split_lp(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (m, d) = (self.m(), self.d());
        let mut a = DMatrix::zeros(m, 2 * d);
        a.columns_mut(0, d).copy_from(&self.a);
        a.columns_mut(d, d).copy_from(&(-&self.a));
        (a, self.b.clone())
    }

    /// Phase-one feasibility check.
    pub fn is_empty(&self) -> bool {
        let (a, b) = self.split_lp();
        !matches!(lp::solve(&a, &b, &[]), LpOutcome::Optimal(_))
    }

    /// True when the recession cone `{Ad ≤ 0}` is trivial (and the set nonempty).
    pub fn is_bounded(&self) -> bool {
        let d = self.d();
        let (a, b) = self.split_lp();
        for j in 0..d {
            for s in [1.0, -1.0] {
                let mut c = DVector::zeros(2 * d);
                c[j] = s;
                c[d + j] = -s;
                if !matches!(lp::solve(&a, &b, &[c]), LpOutcome::Optimal(_)) {
                    return false;
                }
            }
        }
        true
    }

    /// Minimiser of `⟨c, x⟩` over the polytope, with the same tie-breaking as
    /// [`Polytope::minimize_linear_in_box`].
    pub fn minimize_linear(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(c)?;
        let d = self.d();
        let (a, b) = self.split_lp();
        let lift = |v: &DVector<f64>| {
            let mut z = DVector::zeros(2 * d);
            z.rows_mut(0, d).copy_from(v);
            z.rows_mut(d, d).copy_from(&(-v));
            z
        };
        let mut objectives = vec![lift(c)];
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            objectives.push(lift(&e));
        }
        match lp::solve(&a, &b, &objectives) {
            LpOutcome::Optimal(z) => Ok(z.rows(0, d) - z.rows(d, d)),
            LpOutcome::Infeasible => Err(Error::EmptyPolytope),
            LpOutcome::Unbounded => Err(Error::Unbounded),
            LpOutcome::IterationLimit => Err(Error::InvalidPolytope("simplex iteration limit".into())),
        }
    }

    /// Lexicographic minimiser of `⟨c, x⟩` over the polytope intersected with
    /// the box `lo ≤ x ≤ hi`. Ties are broken towards the smallest coordinates.
    pub fn minimize_linear_in_box(
        &self,
        c: &DVector<f64>,
        lo: &DVector<f64>,
        hi: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_dim(c)?;
        let d = self.d();
        let m = self.m();
        let mut a = DMatrix::zeros(m + d, d);
        a.rows_mut(0, m).copy_from(&self.a);
        let mut b = DVector::zeros(m + d);
        b.rows_mut(0, m).copy_from(&(&self.b - &self.a * lo));
        for j in 0..d {
            a[(m + j, j)] = 1.0;
            b[m + j] = hi[j] - lo[j];
        }
        let mut objectives = vec![c.clone()];
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            objectives.push(e);
        }
        match lp::solve(&a, &b, &objectives) {
            LpOutcome::Optimal(z) => Ok(z + lo),
            LpOutcome::Infeasible => Err(Error::EmptyPolytope),
            LpOutcome::Unbounded => Err(Error::Unbounded),
            LpOutcome::IterationLimit => Err(Error::InvalidPolytope("simplex iteration limit".into())),
        }
    }

    /// Euclidean projection by exhaustive active-set search over all
    /// linearly independent row subsets of size ≤ d.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let r = self.residuals(x)?;
        if r.min() >= 0.0 {
            return Ok(x.clone());
        }
        let mut best: Option<(f64, DVector<f64>)> = None;
        let tol = |i: usize, y: &DVector<f64>| FEAS_TOL * (1.0 + self.b[i].abs() + self.a.row(i).norm() * y.norm());
        for k in 1..=self.d().min(self.m()) {
            for subset in Combinations::new(self.m(), k) {
                let sub = self.a.select_rows(subset.iter());
                let gram = &sub * sub.transpose();
                let Some(chol) = gram.clone().cholesky() else { continue };
                if min_singular_value(&sub.transpose()) <= RANK_TOL * sub.norm() {
                    continue;
                }
                let viol = &sub * x - self.b.select_rows(subset.iter());
                let lambda = chol.solve(&viol);
                let y = x - sub.transpose() * lambda;
                let dist = (x - &y).norm();
                if best.as_ref().is_some_and(|(bd, _)| *bd <= dist) {
                    continue;
                }
                let ry = &self.b - &self.a * &y;
                if (0..self.m()).all(|i| ry[i] >= -tol(i, &y)) {
                    best = Some((dist, y));
                }
            }
        }
        best.map(|(_, y)| y).ok_or(Error::EmptyPolytope)
    }

    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((x - self.project(x)?).norm())
    }

    fn check_cap(&self, cap: u128) -> Result<()> {
        let c = binomial(self.m(), self.d());
        if c > cap {
            return Err(Error::CapExceeded { combinations: c, cap });
        }
        Ok(())
    }

    /// Every point where d linearly independent constraint boundaries meet,
    /// feasible or not, with its full active set.
    pub fn active_points(&self, cap: u128) -> Result<Vec<ActivePoint>> {
        self.check_cap(cap)?;
        let d = self.d();
        let mut out: Vec<ActivePoint> = Vec::new();
        for subset in Combinations::new(self.m(), d) {
            let sub = self.a.select_rows(subset.iter());
            let s_min = min_singular_value(&sub);
            if s_min <= RANK_TOL * sub.norm() {
                continue;
            }
            let Some(v) = sub.lu().solve(&self.b.select_rows(subset.iter())) else { continue };
            if out.iter().any(|p| (&p.point - &v).norm() <= DUP_TOL) {
                continue;
            }
            let r = &self.b - &self.a * &v;
            let active: Vec<usize> = (0..self.m()).filter(|&i| r[i].abs() <= FEAS_TOL).collect();
            let sigma_min = min_singular_value(&self.a.select_rows(active.iter()));
            out.push(ActivePoint {
                feasible: r.min() >= -FEAS_TOL,
                point: v,
                active,
                sigma_min,
            });
        }
        Ok(out)
    }

    pub fn enumerate_vertices(&self) -> Result<Vec<DVector<f64>>> {
        self.enumerate_vertices_capped(DEFAULT_CAP)
    }

    pub fn enumerate_vertices_capped(&self, cap: u128) -> Result<Vec<DVector<f64>>> {
        Ok(self
            .active_points(cap)?
            .into_iter()
            .filter(|p| p.feasible)
            .map(|p| p.point)
            .collect())
    }

    pub fn geometry_summary(&self) -> Result<GeometrySummary> {
        self.geometry_summary_capped(DEFAULT_CAP)
    }

    pub fn geometry_summary_capped(&self, cap: u128) -> Result<GeometrySummary> {
        if self.is_empty() {
            return Err(Error::EmptyPolytope);
        }
        if !self.is_bounded() {
            return Err(Error::Unbounded);
        }
        let active_points = self.active_points(cap)?;
        let vertices: Vec<DVector<f64>> = active_points
            .iter()
            .filter(|p| p.feasible)
            .map(|p| p.point.clone())
            .collect();
        if vertices.is_empty() {
            return Err(Error::InvalidPolytope("no vertices found".into()));
        }
        let mut diameter: f64 = 0.0;
        for (i, u) in vertices.iter().enumerate() {
            for v in &vertices[i + 1..] {
                diameter = diameter.max((u - v).norm());
            }
        }
        let radius = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let rho_min = active_points
            .iter()
            .map(|p| p.sigma_min)
            .fold(f64::INFINITY, f64::min);
        let l_a_raw = (0..self.m()).map(|i| self.a.row(i).norm()).fold(0.0, f64::max);
        Ok(GeometrySummary {
            diameter,
            radius,
            rho_min,
            alpha: (self.d() as f64).sqrt() / rho_min,
            l_a_raw,
            vertices,
            active_points,
        })
    }

    /// Rescales rows so the largest row norm equals 1/(2α_D), returning the
    /// rescaled polytope and the correspondingly rescaled noise level.
    pub fn normalize(&self, geom: &GeometrySummary, sigma: f64) -> Result<(Polytope, f64)> {
        if geom.l_a_raw <= 0.0 {
            return Err(Error::InvalidPolytope("zero row norm".into()));
        }
        let k = 2.0 * geom.alpha * geom.l_a_raw;
        Ok((self.scaled(k), sigma / k))
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = PolytopeRecord {
            a: (0..self.m()).map(|i| self.a.row(i).iter().cloned().collect()).collect(),
            b: self.b.iter().cloned().collect(),
            names: self.names.clone(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: PolytopeRecord = serde_json::from_str(s)?;
        let p = Polytope::from_rows(&rec.a, &rec.b)?;
        match rec.names {
            Some(n) => p.with_names(n),
            None => Ok(p),
        }
    }
}

/// Random bounded polytope with `m ≥ d + 1` unit-norm rows around a random
/// centre. Returns the polytope and its centre, which is strictly feasible.
pub fn random_polytope<R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> (Polytope, DVector<f64>) {
    assert!(m > d, "a bounded polytope needs at least d + 1 rows");
    let center = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    loop {
        let mut a = DMatrix::zeros(m, d);
        for i in 0..m {
            let mut row: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
            while row.norm() < 1e-3 {
                row = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
            }
            row /= row.norm();
            a.row_mut(i).copy_from(&row.transpose());
        }
        let offsets = DVector::from_fn(m, |_, _| rng.random_range(0.5..1.5));
        let b = &a * &center + offsets;
        let p = Polytope { a, b, names: None };
        if p.is_bounded() {
            return (p, center);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn box_center_residuals() {
        let p = Polytope::unit_box(2);
        assert_eq!(p.residuals(&v(&[0.5, 0.5])).unwrap(), v(&[0.5, 0.5, 0.5, 0.5]));
        assert_eq!(p.residuals(&v(&[1.0, 0.3])).unwrap()[0], 0.0);
        assert!(p.residuals(&v(&[1.0])).is_err());
    }

    #[test]
    fn shrink_box() {
        let p = Polytope::unit_box(3);
        assert_eq!(p.shrink(0.0).unwrap(), p);
        let s = p.shrink(0.1).unwrap();
        let expect = Polytope::cube(&DVector::from_element(3, 0.1), &DVector::from_element(3, 0.9));
        assert_relative_eq!(s.b(), expect.b(), epsilon = 1e-15);
        assert!(p.shrink(-0.1).is_err());
    }

    #[test]
    fn emptiness() {
        assert!(!Polytope::unit_box(2).is_empty());
        let p = Polytope::from_rows(&[vec![1.0], vec![-1.0]], &[0.0, -1.0]).unwrap();
        assert!(p.is_empty());
        assert!(Polytope::unit_box(1).shrink(0.6).unwrap().is_empty());
    }

    #[test]
    fn projection_examples() {
        let p = Polytope::unit_box(2);
        assert_eq!(p.project(&v(&[0.2, 0.7])).unwrap(), v(&[0.2, 0.7]));
        assert_relative_eq!(p.project(&v(&[2.0, 0.5])).unwrap(), v(&[1.0, 0.5]), epsilon = 1e-15);
        assert_relative_eq!(p.project(&v(&[2.0, -3.0])).unwrap(), v(&[1.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn vertices_of_box_and_simplex() {
        assert_eq!(Polytope::unit_box(2).enumerate_vertices().unwrap().len(), 4);
        let s = Polytope::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]], &[0.0, 0.0, 1.0]).unwrap();
        let mut vs: Vec<(f64, f64)> = s.enumerate_vertices().unwrap().iter().map(|p| (p[0], p[1])).collect();
        vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vs, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]);
    }

    #[test]
    fn summary_of_box() {
        let g = Polytope::unit_box(2).geometry_summary().unwrap();
        assert_relative_eq!(g.rho_min, 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.alpha, 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(g.diameter, 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(g.radius, 2f64.sqrt(), epsilon = 1e-12);
        let scaled = Polytope::unit_box(2).scaled(1.0 / 3.0).geometry_summary().unwrap();
        assert_relative_eq!(scaled.rho_min, 3.0, epsilon = 1e-12);
        assert_relative_eq!(scaled.alpha, 2f64.sqrt() / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn unbounded_summary_refused() {
        let p = Polytope::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0]).unwrap();
        assert!(matches!(p.geometry_summary(), Err(Error::Unbounded)));
    }

    #[test]
    fn normalize_box() {
        let p = Polytope::unit_box(2);
        let g = p.geometry_summary().unwrap();
        let (n, s) = p.normalize(&g, 0.01).unwrap();
        let max_row = (0..n.m()).map(|i| n.a().row(i).norm()).fold(0.0, f64::max);
        assert_relative_eq!(max_row, 1.0 / (2.0 * g.alpha), epsilon = 1e-12);
        assert_relative_eq!(s, 0.01 / (2.0 * 2f64.sqrt()), epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = v(&[rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)]);
            assert_eq!(p.contains(&x, 0.0), n.contains(&x, 0.0));
        }
    }

    #[test]
    fn normalization_target_is_never_a_fixed_point() {
        // σ_min(A_B) ≤ min row norm ≤ L'_A, hence α_D·L'_A ≥ √d > 1/2
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (p, _) = random_polytope(2, 5, &mut rng);
            let g = p.geometry_summary().unwrap();
            assert!(g.alpha * g.l_a_raw >= 2f64.sqrt() - 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let p = Polytope::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-7, 7.0877]], &[0.0844, 1e300])
            .unwrap()
            .with_names(vec!["h2".into(), "y".into()])
            .unwrap();
        let q = Polytope::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn random_polytopes_are_bounded_with_interior_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (p, c) = random_polytope(3, 6, &mut rng);
            assert!(p.is_bounded());
            assert!(p.min_residual(&c).unwrap() >= 0.5 - 1e-12);
        }
    }

    #[test]
    fn lmo_box_tie_break() {
        let p = Polytope::unit_box(2);
        let lo = DVector::from_element(2, -10.0);
        let hi = DVector::from_element(2, 10.0);
        assert_eq!(p.minimize_linear_in_box(&v(&[1.0, -1.0]), &lo, &hi).unwrap(), v(&[0.0, 1.0]));
        assert_eq!(p.minimize_linear_in_box(&v(&[0.0, 0.0]), &lo, &hi).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(p.minimize_linear_in_box(&v(&[0.0, -1.0]), &lo, &hi).unwrap(), v(&[0.0, 1.0]));
    }
}
