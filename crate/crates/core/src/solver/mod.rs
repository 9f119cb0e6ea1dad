//! Linear minimization, step-size schedules, horizons and the main loop.

mod trace;

pub use trace::{IterateTrace, MeasurementRow, TraceRow};

use crate::error::{Error, Result};
use crate::estimation::{
    compute_constants, min_samples, pattern, psi_inverse, safety_margin, ConfidenceMode, ConstantInputs, HTracker,
    EstimatedPolytope, LeastSquaresState, ScheduleConstants,
};
use crate::geometry::{GeometrySummary, Polytope};
use crate::gradient::StormState;
use crate::linalg::sym_norm;
use crate::oracles::{mix_seed, NoisyFeasibilityOracle, Problem, StochasticGradientOracle, VicinityGuard};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Largest horizon the solver will execute without an explicit override.
pub const MAX_HORIZON: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    NonconvexStochastic,
    NonconvexDeterministic,
    ConvexStochastic,
    ConvexDeterministic,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::NonconvexStochastic,
        Variant::NonconvexDeterministic,
        Variant::ConvexStochastic,
        Variant::ConvexDeterministic,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Variant::NonconvexStochastic => "nonconvex-stochastic",
            Variant::NonconvexDeterministic => "nonconvex-deterministic",
            Variant::ConvexStochastic => "convex-stochastic",
            Variant::ConvexDeterministic => "convex-deterministic",
        }
    }

    pub fn is_convex(self) -> bool {
        matches!(self, Variant::ConvexStochastic | Variant::ConvexDeterministic)
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Variant::NonconvexStochastic | Variant::ConvexStochastic)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let by_index = match s {
            "1" => Some(Variant::NonconvexStochastic),
            "2" => Some(Variant::NonconvexDeterministic),
            "3" => Some(Variant::ConvexStochastic),
            "4" => Some(Variant::ConvexDeterministic),
            _ => None,
        };
        by_index
            .or_else(|| Variant::ALL.into_iter().find(|v| v.id() == s))
            .ok_or_else(|| Error::Unknown { kind: "variant", name: s.into() })
    }
}

/// Step size η_t and momentum weight ρ_t.
pub fn schedule(variant: Variant, t: usize) -> (f64, f64) {
    let s = (t + 2) as f64;
    match variant {
        Variant::NonconvexStochastic => {
            let e = s.powf(-2.0 / 3.0);
            (e, e)
        }
        Variant::NonconvexDeterministic => (s.powf(-0.5), 1.0),
        Variant::ConvexStochastic => (1.0 / s, 1.0 / s),
        Variant::ConvexDeterministic => (2.0 / s, 1.0),
    }
}

/// Iteration count required for accuracy `eps`, before rounding up.
pub fn horizon_raw(variant: Variant, eps: f64, c: &ScheduleConstants, fgap: f64) -> f64 {
    match variant {
        Variant::NonconvexStochastic => (216.0 * fgap.powi(3) / eps.powi(3))
            .max(c.c3 / eps.powi(3))
            .max(c.c4 / eps.powf(1.5)),
        Variant::NonconvexDeterministic => (8.0 * fgap * fgap).max(c.c5) / (eps * eps),
        Variant::ConvexStochastic => (4.0 * fgap * fgap).max(c.c6) / (eps * eps),
        Variant::ConvexDeterministic => 2.0 / eps * fgap.max(4.0 * c.big_m).max(2.0 * c.l * c.l * (c.lambda + 2.0)),
    }
}

pub fn horizon(variant: Variant, eps: f64, c: &ScheduleConstants, fgap: f64) -> f64 {
    horizon_raw(variant, eps, c, fgap).ceil().max(1.0)
}

/// Linear minimization over `p` intersected with the box of half-width
/// `half_width` around `center`.
pub fn lmo(p: &Polytope, c: &DVector<f64>, center: &DVector<f64>, half_width: f64) -> Result<DVector<f64>> {
    let lo = center.add_scalar(-half_width);
    let hi = center.add_scalar(half_width);
    p.minimize_linear_in_box(c, &lo, &hi)
}

/// `⟨grad, x⟩ − min_{v∈P} ⟨grad, v⟩` for a bounded `p`.
pub fn fw_gap(p: &Polytope, grad: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    let v = p.minimize_linear(grad)?;
    Ok(grad.dot(x) - grad.dot(&v))
}

/// Same as [`fw_gap`] with the vertex set already enumerated.
pub fn fw_gap_vertices(vertices: &[DVector<f64>], grad: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let best = vertices.iter().map(|v| grad.dot(v)).fold(f64::INFINITY, f64::min);
    grad.dot(x) - best
}

/// `x + η(v − x)`.
pub fn step(x: &DVector<f64>, v: &DVector<f64>, eta: f64) -> DVector<f64> {
    x + (v - x) * eta
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub eps: f64,
    pub delta: f64,
    pub tau: Option<f64>,
    pub r0: f64,
    pub sigma: f64,
    pub sigma0: f64,
    pub seed: u64,
    /// Multiplier on the theoretical sample counts, in (0, 1].
    pub scale: f64,
    pub horizon: Option<usize>,
    /// LMO box half-width in units of Γ.
    pub box_factor: f64,
    pub confidence: ConfidenceMode,
    pub fgap: Option<f64>,
    #[serde(skip)]
    pub guard: VicinityGuard,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::NonconvexStochastic,
            eps: 0.1,
            delta: 0.05,
            tau: None,
            r0: 0.01,
            sigma: 0.01,
            sigma0: 0.001,
            seed: 0,
            scale: 1.0,
            horizon: None,
            box_factor: 10.0,
            confidence: ConfidenceMode::PerIteration,
            fgap: None,
            guard: VicinityGuard::Off,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [("eps", self.eps), ("delta", self.delta), ("r0", self.r0), ("box_factor", self.box_factor)];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.delta >= 1.0 {
            return Err(Error::Config("delta must be < 1".into()));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return Err(Error::Config("tau must be positive".into()));
            }
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::Config(format!("scale must lie in (0, 1], got {}", self.scale)));
        }
        if !(self.sigma >= 0.0 && self.sigma0 >= 0.0) {
            return Err(Error::Config("noise levels must be ≥ 0".into()));
        }
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Everything derived from a problem and a configuration before iterating.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub geom: GeometrySummary,
    pub normalized: Polytope,
    pub sigma_bar: f64,
    pub constants: ScheduleConstants,
    pub horizon: usize,
    pub horizon_formula: f64,
    pub horizon_overridden: bool,
    pub fgap: f64,
    pub fgap_estimated: bool,
}

/// `f(x0) − min_v f(v)` over the vertices, plus 10%.
pub fn estimate_fgap(problem: &Problem, vertices: &[DVector<f64>]) -> f64 {
    let f0 = problem.objective.value(&problem.x0);
    let best = vertices.iter().map(|v| problem.objective.value(v)).fold(f0, f64::min);
    let gap = f0 - best;
    if gap > 0.0 {
        1.1 * gap
    } else {
        1e-12_f64.max(1e-6 * f0.abs())
    }
}

/// Upper bound on N_{T−1} for the given C2, used to evaluate κ.
fn total_samples_bound(variant: Variant, c2: f64, t: f64, d: usize, scale: f64) -> f64 {
    let sum = match variant {
        Variant::NonconvexStochastic => 2.0 * c2 * t.powf(4.0 / 3.0),
        Variant::NonconvexDeterministic => c2 * t,
        _ => c2 * t * (t + 1.0),
    };
    (sum * scale + 2.0 * d as f64 * t).max(2.0)
}

pub fn calibrate(config: &RunConfig, problem: &Problem) -> Result<Calibration> {
    config.validate()?;
    let geom = problem.polytope.geometry_summary()?;
    let (normalized, sigma_bar) = problem.polytope.normalize(&geom, config.sigma)?;
    let (fgap, fgap_estimated) = match config.fgap {
        Some(g) => (g, false),
        None => (estimate_fgap(problem, &geom.vertices), true),
    };
    let obj = &problem.objective;
    let d = problem.polytope.d();
    let build = |horizon: f64, n_ref: f64| {
        compute_constants(&ConstantInputs {
            geom: &geom,
            normalized: &normalized,
            x0: &problem.x0,
            sigma_bar,
            delta: config.delta,
            horizon,
            r0: config.r0,
            tau: config.tau.map(|t| t / (2.0 * geom.alpha * geom.l_a_raw)),
            l: obj.lipschitz(),
            big_m: obj.grad_bound(),
            l0: obj.lipschitz(),
            sigma0: config.sigma0,
            fgap,
            mode: config.confidence,
            n_ref,
        })
    };
    let prelim = build(1.0, 2.0)?;
    let horizon_formula = horizon(config.variant, config.eps, &prelim, fgap);
    let t = match config.horizon {
        Some(t) => t,
        None if horizon_formula <= MAX_HORIZON => horizon_formula as usize,
        None => {
            return Err(Error::Config(format!(
                "horizon {horizon_formula:.3e} is too large to run; pass an explicit horizon"
            )))
        }
    };
    let tf = t as f64;
    let mut n_ref = 2.0;
    let mut constants = build(tf, n_ref)?;
    for _ in 0..100 {
        let next = total_samples_bound(config.variant, constants.c2, tf, d, config.scale);
        constants = build(tf, next)?;
        if (next - n_ref).abs() <= 1e-12 * next {
            break;
        }
        n_ref = next;
    }
    Ok(Calibration {
        geom,
        normalized,
        sigma_bar,
        constants,
        horizon: t,
        horizon_formula,
        horizon_overridden: config.horizon.is_some(),
        fgap,
        fgap_estimated,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub x_out: DVector<f64>,
    pub t0: usize,
    pub trace: IterateTrace,
    pub calibration: Calibration,
    pub nfo_count: u128,
    pub sfo_count: u64,
    pub guard_trips: u64,
    pub guard_max_excess: f64,
    /// D̂ from the last iteration, in normalized coordinates.
    pub final_estimate: Option<EstimatedPolytope>,
}

impl RunOutput {
    /// True when every iterate satisfies the true constraints within tolerance.
    pub fn safe(&self) -> bool {
        self.trace.all_safe()
    }
}

/// Runs the algorithm on a simulated problem. The algorithm only touches the
/// oracles; the true polytope is read for trace diagnostics.
pub fn reliable_fw(config: &RunConfig, problem: &Problem) -> Result<RunOutput> {
    let cal = calibrate(config, problem)?;
    reliable_fw_calibrated(config, problem, cal)
}

pub fn reliable_fw_calibrated(config: &RunConfig, problem: &Problem, cal: Calibration) -> Result<RunOutput> {
    let d = problem.polytope.d();
    let m = problem.polytope.m();
    let c = cal.constants.clone();
    let t_max = cal.horizon;
    let objective = problem.objective.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 1));
    let mut nfo = NoisyFeasibilityOracle::new(cal.normalized.clone(), problem.polytope.clone(), cal.sigma_bar, mix_seed(config.seed, 2))
        .with_guard(config.guard, config.r0);
    let mut sfo = StochasticGradientOracle::new(objective.clone(), config.sigma0, mix_seed(config.seed, 3));
    let mut ls = LeastSquaresState::new(d, m);
    let mut storm: Option<StormState> = None;
    let mut tracker = HTracker::default();
    let mut trace = IterateTrace::new(d);
    let half_width = config.box_factor * cal.geom.radius.max(1e-12);
    let mut x = problem.x0.clone();
    let mut x_prev = x.clone();
    let mut last_est = None;

    for t in 0..t_max {
        let (eta, rho) = schedule(config.variant, t);
        let n_t = min_samples(config.variant, t, c.c2, d, config.scale).map_err(|e| e.at(t))?;
        let k = n_t / (2 * d as u128);
        for (l, p) in pattern(&x, config.r0).into_iter().enumerate() {
            let y = nfo.query_mean(&p, k).map_err(|e| e.at(t))?;
            ls.update_repeated(&p, &y, k).map_err(|e| e.at(t))?;
            trace.measurements.push(MeasurementRow { t, l, x: p, y, weight: k });
        }
        let est = ls.estimate().map_err(|e| e.at(t))?;

        let g = match storm.as_mut() {
            None => {
                let mut tok = sfo.mint();
                let s = sfo.query(&x, &mut tok)?;
                let (g, st) = StormState::init(&s, &x);
                storm = Some(st);
                g
            }
            Some(st) => {
                let mut tok = sfo.mint();
                let cur = sfo.query(&x, &mut tok)?;
                if rho < 1.0 {
                    let prev = sfo.query(&x_prev, &mut tok)?;
                    st.update(&cur, Some(&prev), rho, &x)?
                } else {
                    st.update(&cur, None, rho, &x)?
                }
            }
        };

        let d_hat = est.polytope().map_err(|e| e.at(t))?;
        let center = ls.mean_x().clone();
        let v_hat = lmo(&d_hat, &g, &center, half_width).map_err(|e| e.at(t))?;
        let box_active = (0..d).any(|j| {
            let tol = 1e-9 * (1.0 + half_width);
            (v_hat[j] - (center[j] - half_width)).abs() <= tol || (v_hat[j] - (center[j] + half_width)).abs() <= tol
        });

        let n_big = ls.n();
        let nf = n_big as f64;
        let grad_true = objective.gradient(&x);
        let psi_t = psi_inverse(nf.max(2.0), c.zeta / m as f64, d)?;
        let kappa_t = cal.sigma_bar * psi_t;
        let q_norm = sym_norm(ls.q()?);
        let ellipsoid = crate::estimation::ellipsoid_contains(&ls, &cal.normalized, cal.sigma_bar, psi_t)?;
        let vhat_dist = problem.polytope.distance(&v_hat).unwrap_or(f64::NAN);
        trace.push(TraceRow {
            t,
            x: x.clone(),
            g: g.clone(),
            v_hat: v_hat.clone(),
            eta,
            rho,
            n_t,
            n_cum: n_big,
            f: objective.value(&x),
            fw_gap_true: fw_gap_vertices(&cal.geom.vertices, &grad_true, &x),
            min_true_residual: problem.polytope.min_residual(&x)?,
            safety_margin: safety_margin(&ls, &est, &x, kappa_t)?,
            grad_err: (&g - &grad_true).norm(),
            grad_norm: g.norm(),
            sfo_count: sfo.count(),
            nfo_count: nfo.count(),
            kappa_t,
            h: tracker.h(nf, &c),
            safe_condition: tracker.condition_holds(nf, &c),
            q_norm,
            q_bound: d as f64 / (nf * config.r0 * config.r0),
            ellipsoid,
            vhat_dist,
            box_active,
        });
        tracker.advance(eta, nf, &c);
        x_prev = x.clone();
        x = step(&x, &v_hat, eta);
        last_est = Some(est);
    }
    trace.x_final = Some(x);

    let t0 = if config.variant.is_convex() {
        t_max - 1
    } else {
        rng.random_range(0..t_max)
    };
    Ok(RunOutput {
        x_out: trace.rows[t0].x.clone(),
        t0,
        trace,
        calibration: cal,
        nfo_count: nfo.count(),
        sfo_count: sfo.count(),
        guard_trips: nfo.guard_trips(),
        guard_max_excess: nfo.max_excess(),
        final_estimate: last_est,
    })
}

/// Slack of the per-iterate convergence inequality at every step where the
/// confidence ellipsoid held: right-hand side minus V_D(x_t).
pub fn gap_bound_slacks(out: &RunOutput, l: f64) -> Vec<(usize, f64)> {
    let c = &out.calibration.constants;
    let rows = &out.trace.rows;
    let mut res = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if !r.ellipsoid {
            continue;
        }
        let f_next = match rows.get(i + 1) {
            Some(n) => n.f,
            None => continue,
        };
        let proj = c.c1 / (r.n_cum as f64).sqrt();
        let rhs = (r.f - f_next) / r.eta
            + r.grad_err * (proj + 2.0 * c.lambda)
            + r.grad_norm * proj
            + l * r.eta / 2.0 * (proj + c.lambda).powi(2);
        res.push((r.t, rhs - r.fw_gap_true));
    }
    res
}
