//! Batch numerical checks of the analysis: geometric shrinkage, the Q_t bound,
//! the projection bound, the STORM bound, the per-iterate convergence
//! inequality, confidence-ellipsoid coverage, LMO correctness and the
//! linear-algebra identities.

use crate::error::{Error, Result};
use crate::estimation::{
    compute_constants, ellipsoid_contains, pattern, psi_inverse, ConfidenceMode, ConstantInputs, LeastSquaresState,
};
use crate::geometry::random_polytope;
use crate::gradient::storm_error_bound;
use crate::harness::{trial_seed, wilson_interval};
use crate::linalg::{identity_with_column, sherman_morrison, spectral_norm};
use crate::oracles::{cutting_machine_problem, synthetic_problem, NoisyFeasibilityOracle, Problem};
use crate::solver::{gap_bound_slacks, reliable_fw, RunConfig, RunOutput, Variant};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

pub const SUITES: [&str; 8] = ["shrinkage", "qnorm", "vertices", "storm", "gap-bound", "coverage", "lmo", "identities"];

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub instances: usize,
    pub violations: usize,
    /// Smallest observed slack (bound minus measured); negative means violated.
    pub worst_slack: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl SuiteReport {
    fn new(suite: &str, instances: usize, violations: usize, worst_slack: f64, tolerance: f64, passed: bool, detail: String) -> Self {
        SuiteReport {
            suite: suite.into(),
            passed,
            instances,
            violations,
            worst_slack,
            tolerance,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} instances, {} violations, worst slack {:e} (tol {:e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.instances,
            self.violations,
            self.worst_slack,
            self.tolerance,
            if self.detail.is_empty() { String::new() } else { format!("; {}", self.detail) }
        )
    }
}

pub fn run_suite(id: &str, seed: u64) -> Result<SuiteReport> {
    match id {
        "shrinkage" => shrinkage(200, 100, seed),
        "qnorm" => qnorm(&default_runs(seed)?),
        "vertices" => estimate_vertices(50, seed),
        "storm" => storm(500, &[10, 50, 200], 0.1, seed),
        "gap-bound" => gap_bound(&default_runs(seed)?),
        "coverage" => coverage(2000, 0.1, seed),
        "lmo" => lmo_equivalence(1000, seed),
        "identities" => identities(1000, seed),
        _ => Err(Error::Unknown { kind: "suite", name: id.into() }),
    }
}

/// A small set of deterministic runs used by the along-the-trajectory suites.
pub fn default_runs(seed: u64) -> Result<Vec<(Problem, RunOutput)>> {
    let cases: Vec<(Problem, Variant, usize)> = vec![
        (cutting_machine_problem([150.0, 0.09]), Variant::NonconvexDeterministic, 200),
        (synthetic_problem("quad-box", 2, 0, seed)?, Variant::ConvexDeterministic, 200),
        (synthetic_problem("quad-polytope", 3, 6, seed)?, Variant::ConvexDeterministic, 100),
        (synthetic_problem("trig-polytope", 2, 5, seed)?, Variant::NonconvexDeterministic, 100),
    ];
    cases
        .into_par_iter()
        .map(|(p, variant, t)| {
            let cfg = RunConfig {
                variant,
                sigma: 0.01,
                sigma0: 0.0,
                horizon: Some(t),
                seed,
                ..RunConfig::default()
            };
            let out = reliable_fw(&cfg, &p)?;
            Ok((p, out))
        })
        .collect()
}

/// Uniform-ish feasible points: random convex combinations of vertices.
fn sample_feasible<R: Rng>(verts: &[DVector<f64>], rng: &mut R) -> DVector<f64> {
    let w: Vec<f64> = verts.iter().map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = w.iter().sum();
    let mut x = DVector::zeros(verts[0].len());
    for (v, wi) in verts.iter().zip(&w) {
        x += v * (wi / total);
    }
    x
}

/// ‖x − π_{D_τ}(x)‖ ≤ α_D τ on random polytopes with τ = ε₀/2.
pub fn shrinkage(polytopes: usize, points: usize, seed: u64) -> Result<SuiteReport> {
    const TOL: f64 = 1e-9;
    let per: Vec<(usize, f64)> = (0..polytopes)
        .into_par_iter()
        .map(|i| -> Result<(usize, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i));
            let d = 2 + i % 2;
            let m = rng.random_range(d + 1..=d + 4);
            let (p, center) = random_polytope(d, m, &mut rng);
            let geom = p.geometry_summary()?;
            let tau = p.min_residual(&center)? / 2.0;
            let shrunk = p.shrink(tau)?;
            let bound = geom.alpha * tau;
            let mut bad = 0;
            let mut worst = f64::INFINITY;
            for _ in 0..points {
                let x = sample_feasible(&geom.vertices, &mut rng);
                let dist = (&x - shrunk.project(&x)?).norm();
                let slack = bound - dist;
                worst = worst.min(slack);
                if slack < -TOL {
                    bad += 1;
                }
            }
            Ok((bad, worst))
        })
        .collect::<Result<_>>()?;
    let bad: usize = per.iter().map(|p| p.0).sum();
    let worst = per.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(SuiteReport::new("shrinkage", polytopes * points, bad, worst, TOL, bad == 0, String::new()))
}

/// ‖Q_t‖ ≤ d/(N_t r0²) at every iteration of every run.
pub fn qnorm(runs: &[(Problem, RunOutput)]) -> Result<SuiteReport> {
    const TOL: f64 = 1e-12;
    let mut n = 0;
    let mut bad = 0;
    let mut worst = f64::INFINITY;
    for (_, out) in runs {
        for r in &out.trace.rows {
            n += 1;
            let slack = r.q_bound - r.q_norm;
            worst = worst.min(slack);
            if slack < -TOL {
                bad += 1;
            }
        }
    }
    Ok(SuiteReport::new("qnorm", n, bad, worst, TOL, bad == 0, String::new()))
}

/// Every vertex of D̂ lies within C1/√N of D whenever the ellipsoid holds and
/// N ≥ C1²/(1+Γ)².
pub fn estimate_vertices(instances: usize, seed: u64) -> Result<SuiteReport> {
    const TOL: f64 = 1e-9;
    let per: Vec<(usize, usize, f64)> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<(usize, usize, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i));
            let d = 2;
            let m = rng.random_range(3..=5);
            let (p, x0) = random_polytope(d, m, &mut rng);
            let geom = p.geometry_summary()?;
            let sigma = 0.05;
            let (normalized, sigma_bar) = p.normalize(&geom, sigma)?;
            let r0 = 0.05;
            let delta = 0.1;
            let base = |n_ref: f64| {
                compute_constants(&ConstantInputs {
                    geom: &geom,
                    normalized: &normalized,
                    x0: &x0,
                    sigma_bar,
                    delta,
                    horizon: 1.0,
                    r0,
                    tau: None,
                    l: 1.0,
                    big_m: 1.0,
                    l0: 1.0,
                    sigma0: 0.0,
                    fgap: 1.0,
                    mode: ConfidenceMode::Global,
                    n_ref,
                })
            };
            let mut c = base(2.0)?;
            let floor = c.c1 * c.c1 / (1.0 + c.gamma).powi(2);
            let mut n_target = (floor * 4.0).max(8.0);
            for _ in 0..50 {
                let next = base(n_target)?;
                let f = next.c1 * next.c1 / (1.0 + next.gamma).powi(2) * 4.0;
                c = next;
                if f <= n_target {
                    break;
                }
                n_target = f;
            }
            let k = ((n_target / (2 * d) as f64).ceil() as u128).max(1);
            let mut nfo = NoisyFeasibilityOracle::new(normalized.clone(), p.clone(), sigma_bar, trial_seed(seed ^ 0x4C34, i));
            let mut ls = LeastSquaresState::new(d, m);
            for q in pattern(&x0, r0) {
                let y = nfo.query_mean(&q, k)?;
                ls.update_repeated(&q, &y, k)?;
            }
            let nf = ls.n() as f64;
            let psi = c.psi_at(nf)?;
            if !ellipsoid_contains(&ls, &normalized, sigma_bar, psi)? {
                return Ok((0, 0, f64::INFINITY));
            }
            let bound = c.c1 / nf.sqrt();
            let est = ls.estimate()?.polytope()?;
            let mut bad = 0;
            let mut worst = f64::INFINITY;
            let verts = est.enumerate_vertices()?;
            for v in &verts {
                let slack = bound - p.distance(v)?;
                worst = worst.min(slack);
                if slack < -TOL {
                    bad += 1;
                }
            }
            Ok((verts.len(), bad, worst))
        })
        .collect::<Result<_>>()?;
    let n: usize = per.iter().map(|p| p.0).sum();
    let bad: usize = per.iter().map(|p| p.1).sum();
    let worst = per.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    Ok(SuiteReport::new("vertices", n, bad, worst, TOL, bad == 0 && n > 0, format!("{} polytopes", instances)))
}

#[derive(Debug, Clone, Serialize)]
pub struct StormCheck {
    pub t: usize,
    pub bound: f64,
    pub violations: usize,
    pub frequency: f64,
    pub limit: f64,
}

/// Per-t violation frequency of the STORM error bound over independent runs
/// of the stochastic non-convex variant.
pub fn storm_checks(trials: usize, ts: &[usize], delta: f64, seed: u64) -> Result<Vec<StormCheck>> {
    let horizon = ts.iter().copied().max().unwrap_or(0) + 1;
    let problem = synthetic_problem("trig-polytope", 2, 5, seed)?;
    let geom = problem.polytope.geometry_summary()?;
    let l0 = problem.objective.lipschitz();
    let sigma0 = 0.5;
    let errs: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let cfg = RunConfig {
                variant: Variant::NonconvexStochastic,
                sigma: 1e-3,
                sigma0,
                horizon: Some(horizon),
                scale: 1e-9,
                seed: trial_seed(seed, i),
                ..RunConfig::default()
            };
            let out = reliable_fw(&cfg, &problem)?;
            Ok(ts.iter().map(|&t| out.trace.rows[t].grad_err).collect())
        })
        .collect::<Result<_>>()?;
    let se = (delta * (1.0 - delta) / trials as f64).sqrt();
    Ok(ts
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let bound = storm_error_bound(t, 2.0 / 3.0, l0, geom.diameter, sigma0, delta);
            let violations = errs.iter().filter(|e| e[j] > bound).count();
            StormCheck {
                t,
                bound,
                violations,
                frequency: violations as f64 / trials as f64,
                limit: delta + 3.0 * se,
            }
        })
        .collect())
}

pub fn storm(trials: usize, ts: &[usize], delta: f64, seed: u64) -> Result<SuiteReport> {
    let checks = storm_checks(trials, ts, delta, seed)?;
    let bad = checks.iter().filter(|c| c.frequency > c.limit).count();
    let worst = checks.iter().map(|c| c.limit - c.frequency).fold(f64::INFINITY, f64::min);
    let detail = checks
        .iter()
        .map(|c| format!("t={} freq={:.4}", c.t, c.frequency))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(SuiteReport::new("storm", trials * ts.len(), bad, worst, 0.0, bad == 0, detail))
}

/// Per-iterate convergence inequality along deterministic runs.
pub fn gap_bound(runs: &[(Problem, RunOutput)]) -> Result<SuiteReport> {
    const TOL: f64 = 1e-6;
    let mut n = 0;
    let mut bad = 0;
    let mut worst = f64::INFINITY;
    for (p, out) in runs {
        for (_, slack) in gap_bound_slacks(out, p.objective.lipschitz()) {
            n += 1;
            worst = worst.min(slack);
            if slack < -TOL {
                bad += 1;
            }
        }
    }
    Ok(SuiteReport::new("gap-bound", n, bad, worst, TOL, bad == 0 && n > 0, String::new()))
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageResult {
    pub trials: usize,
    pub covered: usize,
    pub frequency: f64,
    pub threshold: f64,
    pub ci95: (f64, f64),
}

/// Joint coverage of the confidence ellipsoids at level ζ (ψ⁻¹ at ζ/m per
/// constraint) on one random d = 2, m = 3 polytope.
pub fn coverage_result(trials: usize, zeta: f64, seed: u64) -> Result<CoverageResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, m) = (2, 3);
    let (p, x0) = random_polytope(d, m, &mut rng);
    let geom = p.geometry_summary()?;
    let (normalized, sigma_bar) = p.normalize(&geom, 0.05)?;
    let r0 = 0.05;
    let covered: usize = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut nfo = NoisyFeasibilityOracle::new(normalized.clone(), p.clone(), sigma_bar, trial_seed(seed, i));
            let mut ls = LeastSquaresState::new(d, m);
            let mut x = x0.clone();
            for batch in 0..3 {
                for q in pattern(&x, r0) {
                    let y = nfo.query_mean(&q, 5)?;
                    ls.update_repeated(&q, &y, 5)?;
                }
                x = &x0 + DVector::from_element(d, 0.1 * (batch + 1) as f64);
            }
            let psi = psi_inverse(ls.n() as f64, zeta / m as f64, d)?;
            Ok(usize::from(ellipsoid_contains(&ls, &normalized, sigma_bar, psi)?))
        })
        .sum::<Result<usize>>()?;
    let frequency = covered as f64 / trials as f64;
    let se = (zeta * (1.0 - zeta) / trials as f64).sqrt();
    Ok(CoverageResult {
        trials,
        covered,
        frequency,
        threshold: 1.0 - zeta - 3.0 * se,
        ci95: wilson_interval(covered, trials, 1.96),
    })
}

pub fn coverage(trials: usize, zeta: f64, seed: u64) -> Result<SuiteReport> {
    let r = coverage_result(trials, zeta, seed)?;
    Ok(SuiteReport::new(
        "coverage",
        trials,
        trials - r.covered,
        r.frequency - r.threshold,
        0.0,
        r.frequency >= r.threshold,
        format!("coverage {:.4}", r.frequency),
    ))
}

/// Simplex LMO against brute-force vertex enumeration.
pub fn lmo_equivalence(instances: usize, seed: u64) -> Result<SuiteReport> {
    const TOL: f64 = 1e-9;
    let per: Vec<f64> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, i));
            let d = rng.random_range(1..=4);
            let m = rng.random_range(d + 1..=8);
            let (p, _) = random_polytope(d, m, &mut rng);
            let c: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
            let v = p.minimize_linear(&c)?;
            let brute = p.enumerate_vertices()?.iter().map(|u| c.dot(u)).fold(f64::INFINITY, f64::min);
            Ok((c.dot(&v) - brute).abs() / (1.0 + brute.abs()))
        })
        .collect::<Result<_>>()?;
    let bad = per.iter().filter(|&&e| e > TOL).count();
    let worst = per.iter().map(|e| TOL - e).fold(f64::INFINITY, f64::min);
    Ok(SuiteReport::new("lmo", instances, bad, worst, TOL, bad == 0, String::new()))
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = random_matrix(n, n, rng);
    &g * g.transpose() + DMatrix::identity(n, n) * (0.5 * n as f64)
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityErrors {
    pub smw: f64,
    pub rank_one: f64,
    pub block_inverse: f64,
    pub identity_column_norm: f64,
    pub normal_inverse: f64,
    pub ellipsoid: f64,
}

/// Largest relative error of each identity over random instances.
pub fn identity_errors(instances: usize, seed: u64) -> Result<IdentityErrors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = IdentityErrors {
        smw: 0.0,
        rank_one: 0.0,
        block_inverse: 0.0,
        identity_column_norm: 0.0,
        normal_inverse: 0.0,
        ellipsoid: 0.0,
    };
    for _ in 0..instances {
        let n = rng.random_range(2..=5);
        let k = rng.random_range(1..=n);
        // (A + BCD)⁻¹ = A⁻¹ − A⁻¹B(C⁻¹ + DA⁻¹B)⁻¹DA⁻¹
        let a = random_spd(n, &mut rng);
        let b = random_matrix(n, k, &mut rng) * 0.5;
        let c = random_spd(k, &mut rng);
        let dm = b.transpose();
        let ai = a.clone().try_inverse().ok_or(Error::Degenerate(f64::INFINITY))?;
        let ci = c.clone().try_inverse().ok_or(Error::Degenerate(f64::INFINITY))?;
        let lhs = (&a + &b * &c * &dm).try_inverse().ok_or(Error::Degenerate(f64::INFINITY))?;
        let inner = (&ci + &dm * &ai * &b).try_inverse().ok_or(Error::Degenerate(f64::INFINITY))?;
        let rhs = &ai - &ai * &b * inner * &dm * &ai;
        e.smw = e.smw.max(rel(&rhs, &lhs));

        let u: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let w = rng.random_range(0.1..3.0);
        let direct = (&a + &u * u.transpose() * w).try_inverse().ok_or(Error::Degenerate(f64::INFINITY))?;
        e.rank_one = e.rank_one.max(rel(&sherman_morrison(&ai, &u, w), &direct));

        // block inverse with Schur complements
        let p = rng.random_range(1..n);
        let q = n - p;
        let full = random_spd(n, &mut rng);
        let ab = full.view((0, 0), (p, p)).into_owned();
        let bb = full.view((0, p), (p, q)).into_owned();
        let cb = full.view((p, 0), (q, p)).into_owned();
        let db = full.view((p, p), (q, q)).into_owned();
        let inv = |m: &DMatrix<f64>| m.clone().try_inverse().ok_or(Error::Degenerate(f64::INFINITY));
        let di = inv(&db)?;
        let abi = inv(&ab)?;
        let s1 = inv(&(&ab - &bb * &di * &cb))?;
        let s2 = inv(&(&db - &cb * &abi * &bb))?;
        let mut block = DMatrix::zeros(n, n);
        block.view_mut((0, 0), (p, p)).copy_from(&s1);
        block.view_mut((0, p), (p, q)).copy_from(&(-(&s1 * &bb * &di)));
        block.view_mut((p, 0), (q, p)).copy_from(&(-(&di * &cb * &s1)));
        block.view_mut((p, p), (q, q)).copy_from(&s2);
        e.block_inverse = e.block_inverse.max(rel(&block, &inv(&full)?));

        // ‖[I, x]‖² = 1 + ‖x‖²
        let x: DVector<f64> = DVector::from_fn(n, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let lhs = spectral_norm(&identity_with_column(&x)).powi(2);
        let rhs = 1.0 + x.norm_squared();
        e.identity_column_norm = e.identity_column_norm.max((lhs - rhs).abs() / rhs);

        // least-squares normal inverse in block form against a direct inverse
        let d = rng.random_range(1..=3);
        let mut ls = LeastSquaresState::new(d, 1);
        let xs = random_matrix(2 * d + 3, d, &mut rng);
        let ys = random_matrix(2 * d + 3, 1, &mut rng);
        ls.update(&xs, &ys)?;
        let direct = inv(&ls.normal_matrix())?;
        e.normal_inverse = e.normal_inverse.max(rel(&ls.normal_inverse()?, &direct));

        // {x : (x0−x)ᵀΣ⁻¹(x0−x) ≤ r²} = {x0 − rΣ^{1/2}u : ‖u‖ ≤ 1}
        let sigma = random_spd(n, &mut rng);
        let eig = sigma.clone().symmetric_eigen();
        let root = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
            * eig.eigenvectors.transpose();
        let sigma_inv = inv(&sigma)?;
        let r = rng.random_range(0.1..3.0);
        let x0: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let mut uvec: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        uvec *= rng.random::<f64>() / uvec.norm();
        let xp = &x0 - &root * &uvec * r;
        let diff = &x0 - &xp;
        let form = diff.dot(&(&sigma_inv * &diff));
        e.ellipsoid = e.ellipsoid.max((form - r * r * uvec.norm_squared()).abs() / (r * r));
        let back = inv(&root)? * diff / r;
        e.ellipsoid = e.ellipsoid.max((back - &uvec).amax());
    }
    Ok(e)
}

pub fn identities(instances: usize, seed: u64) -> Result<SuiteReport> {
    const TOL: f64 = 1e-10;
    let e = identity_errors(instances, seed)?;
    let errs = [e.smw, e.rank_one, e.block_inverse, e.identity_column_norm, e.normal_inverse, e.ellipsoid];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let bad = errs.iter().filter(|&&x| x > TOL).count();
    Ok(SuiteReport::new(
        "identities",
        instances,
        bad,
        TOL - worst,
        TOL,
        bad == 0,
        format!(
            "smw {:.1e}, rank-one {:.1e}, block {:.1e}, [I,x] {:.1e}, normal {:.1e}, ellipsoid {:.1e}",
            e.smw, e.rank_one, e.block_inverse, e.identity_column_norm, e.normal_inverse, e.ellipsoid
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite() {
        assert!(matches!(run_suite("nope", 0), Err(Error::Unknown { .. })));
    }

    #[test]
    fn small_suites_pass() {
        assert!(shrinkage(10, 20, 1).unwrap().passed);
        assert!(lmo_equivalence(50, 1).unwrap().passed);
        assert!(identities(50, 1).unwrap().passed);
    }

    #[test]
    fn coverage_counts() {
        let r = coverage_result(100, 0.1, 2).unwrap();
        assert!(r.covered <= r.trials);
        assert!(r.ci95.0 <= r.frequency && r.frequency <= r.ci95.1);
    }
}
