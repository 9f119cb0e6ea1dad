//! Simulated oracles and the registry of test problems.

use crate::error::{Error, Result};
use crate::geometry::{random_polytope, Polytope};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::sync::Arc;

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Lipschitz constant of the gradient on the feasible set.
    fn lipschitz(&self) -> f64;
    /// Bound on the gradient norm on the feasible set.
    fn grad_bound(&self) -> f64;
    fn is_convex(&self) -> bool;
    fn name(&self) -> &str;
}

/// `f(x) = ‖x − c‖²`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub center: DVector<f64>,
    m: f64,
}

impl Quadratic {
    pub fn new(center: DVector<f64>, feasible: &Polytope) -> Result<Self> {
        let m = feasible
            .enumerate_vertices()?
            .iter()
            .map(|v| 2.0 * (v - &center).norm())
            .fold(0.0, f64::max);
        Ok(Quadratic { center, m })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (x - &self.center).norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.center) * 2.0
    }
    fn lipschitz(&self) -> f64 {
        2.0
    }
    fn grad_bound(&self) -> f64 {
        self.m
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "quadratic"
    }
}

/// `f(x) = Σ_j sin(w_j x_j) + (λ/2)‖x‖²`, non-convex for small λ.
#[derive(Debug, Clone)]
pub struct Trig {
    pub w: DVector<f64>,
    pub lambda: f64,
    m: f64,
}

impl Trig {
    pub fn new(w: DVector<f64>, lambda: f64, feasible: &Polytope) -> Result<Self> {
        let xmax = feasible
            .enumerate_vertices()?
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        let m = w.norm() + lambda * xmax;
        Ok(Trig { w, lambda, m })
    }
}

impl Objective for Trig {
    fn dim(&self) -> usize {
        self.w.len()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().zip(self.w.iter()).map(|(xi, wi)| (wi * xi).sin()).sum::<f64>()
            + 0.5 * self.lambda * x.norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |j, _| self.w[j] * (self.w[j] * x[j]).cos() + self.lambda * x[j])
    }
    fn lipschitz(&self) -> f64 {
        self.w.iter().map(|w| w * w).fold(0.0, f64::max) + self.lambda
    }
    fn grad_bound(&self) -> f64 {
        self.m
    }
    fn is_convex(&self) -> bool {
        false
    }
    fn name(&self) -> &str {
        "trig"
    }
}

/// Machining cost `22/(xy)·(50 + 40/h1(x, y))` over cutting speed `x` and feed `y`.
#[derive(Debug, Clone)]
pub struct CuttingMachine {
    l: f64,
    m: f64,
}

pub const CUTTING_LO: [f64; 2] = [100.0, 0.08];
pub const CUTTING_HI: [f64; 2] = [200.0, 0.16];

fn h1(x: f64, y: f64) -> f64 {
    127.5365 - 0.84629 * x - 144.21 * y + 0.001703 * x * x + 0.3656 * x * y
}

impl CuttingMachine {
    /// Smoothness constants are measured on a grid over the box: the gradient
    /// bound directly, the Lipschitz constant from central-difference Hessians,
    /// both inflated by 5%.
    pub fn new() -> Self {
        let mut cm = CuttingMachine { l: 0.0, m: 0.0 };
        let steps = 80;
        let (mut l, mut m): (f64, f64) = (0.0, 0.0);
        for i in 0..=steps {
            for j in 0..=steps {
                let x = CUTTING_LO[0] + (CUTTING_HI[0] - CUTTING_LO[0]) * i as f64 / steps as f64;
                let y = CUTTING_LO[1] + (CUTTING_HI[1] - CUTTING_LO[1]) * j as f64 / steps as f64;
                let p = DVector::from_vec(vec![x, y]);
                m = m.max(cm.gradient(&p).norm());
                let mut hess = DMatrix::zeros(2, 2);
                let hs = [1e-4 * x, 1e-4 * y];
                for k in 0..2 {
                    let mut e = DVector::zeros(2);
                    e[k] = hs[k];
                    let col = (cm.gradient(&(&p + &e)) - cm.gradient(&(&p - &e))) / (2.0 * hs[k]);
                    hess.set_column(k, &col);
                }
                let sym = (&hess + hess.transpose()) * 0.5;
                l = l.max(crate::linalg::sym_norm(&sym));
            }
        }
        cm.l = 1.05 * l;
        cm.m = 1.05 * m;
        cm
    }

    pub fn polytope() -> Polytope {
        Polytope::from_rows(
            &[
                vec![-0.010035, 7.0877],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
            ],
            &[-0.0844, 200.0, 0.16, -100.0, -0.08],
        )
        .and_then(|p| p.with_names(["h2", "x_max", "y_max", "x_min", "y_min"].map(String::from).to_vec()))
        .expect("static polytope")
    }
}

impl Default for CuttingMachine {
    fn default() -> Self {
        Self::new()
    }
}

impl Objective for CuttingMachine {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        let (x, y) = (p[0], p[1]);
        22.0 / (x * y) * (50.0 + 40.0 / h1(x, y))
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let (x, y) = (p[0], p[1]);
        let h = h1(x, y);
        let hx = -0.84629 + 0.003406 * x + 0.3656 * y;
        let hy = -144.21 + 0.3656 * x;
        let gx = -1100.0 / (x * x * y) - 880.0 * (h + x * hx) / (x * x * y * h * h);
        let gy = -1100.0 / (x * y * y) - 880.0 * (h + y * hy) / (x * y * y * h * h);
        DVector::from_vec(vec![gx, gy])
    }
    fn lipschitz(&self) -> f64 {
        self.l
    }
    fn grad_bound(&self) -> f64 {
        self.m
    }
    fn is_convex(&self) -> bool {
        false
    }
    fn name(&self) -> &str {
        "cutting-machine"
    }
}

/// A problem instance: objective, true polytope and strictly feasible start.
#[derive(Clone)]
pub struct Problem {
    pub id: String,
    pub objective: Arc<dyn Objective>,
    pub polytope: Polytope,
    pub x0: DVector<f64>,
    /// Known minimiser, when available.
    pub optimum: Option<DVector<f64>>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("id", &self.id)
            .field("objective", &self.objective.name())
            .field("x0", &self.x0.as_slice())
            .finish()
    }
}

pub const PROBLEM_IDS: [&str; 5] = [
    "cutting-machine",
    "cutting-machine-130",
    "quad-box",
    "quad-polytope",
    "trig-polytope",
];

pub fn cutting_machine_problem(x0: [f64; 2]) -> Problem {
    Problem {
        id: "cutting-machine".into(),
        objective: Arc::new(CuttingMachine::new()),
        polytope: CuttingMachine::polytope(),
        x0: DVector::from_column_slice(&x0),
        optimum: None,
    }
}

/// Looks up a problem by id. `d`, `m` and `seed` only affect synthetic kinds.
pub fn problem(id: &str, d: usize, m: usize, seed: u64) -> Result<Problem> {
    match id {
        "cutting-machine" => Ok(cutting_machine_problem([150.0, 0.09])),
        "cutting-machine-130" => {
            let mut p = cutting_machine_problem([130.0, 0.09]);
            p.id = id.into();
            Ok(p)
        }
        _ => synthetic_problem(id, d, m, seed),
    }
}

/// Synthetic instances: `quad-box` (quadratic centred outside the unit box),
/// `quad-polytope` (quadratic over a random polytope), `trig-polytope`
/// (non-convex trigonometric objective over a random polytope).
pub fn synthetic_problem(kind: &str, d: usize, m: usize, seed: u64) -> Result<Problem> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5EED));
    match kind {
        "quad-box" => {
            let polytope = Polytope::unit_box(d);
            let mut center = DVector::from_fn(d, |_, _| rng.random_range(0.2..0.8));
            center[0] = 1.5;
            let optimum = polytope.project(&center)?;
            let x0 = DVector::from_element(d, 0.5);
            Ok(Problem {
                id: kind.into(),
                objective: Arc::new(Quadratic::new(center, &polytope)?),
                polytope,
                x0,
                optimum: Some(optimum),
            })
        }
        "quad-polytope" | "trig-polytope" => {
            let m = m.max(d + 1);
            let (polytope, x0) = random_polytope(d, m, &mut rng);
            if kind == "quad-polytope" {
                let dir: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
                let center = &x0 + dir.normalize() * 3.0;
                let optimum = polytope.project(&center)?;
                Ok(Problem {
                    id: kind.into(),
                    objective: Arc::new(Quadratic::new(center, &polytope)?),
                    polytope,
                    x0,
                    optimum: Some(optimum),
                })
            } else {
                let w = DVector::from_fn(d, |_, _| rng.random_range(1.5..3.0));
                Ok(Problem {
                    id: kind.into(),
                    objective: Arc::new(Trig::new(w, 0.1, &polytope)?),
                    polytope,
                    x0,
                    optimum: None,
                })
            }
        }
        _ => Err(Error::Unknown {
            kind: "problem",
            name: kind.into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VicinityGuard {
    Off,
    /// Count violations without failing.
    Record,
    /// Fail the query on the first violation.
    Abort,
}

/// Noisy feasibility oracle returning `Ax − b + θ` with Gaussian θ of
/// standard deviation σ̄ on the hidden (normalized) polytope.
pub struct NoisyFeasibilityOracle {
    hidden: Polytope,
    vicinity_set: Polytope,
    sigma_bar: f64,
    count: u128,
    rng: ChaCha8Rng,
    guard: VicinityGuard,
    r0: f64,
    trips: u64,
    max_excess: f64,
}

impl NoisyFeasibilityOracle {
    /// `hidden` is what the oracle measures; `vicinity_set` is the true
    /// polytope (any scaling) used by the r0-vicinity guard.
    pub fn new(hidden: Polytope, vicinity_set: Polytope, sigma_bar: f64, seed: u64) -> Self {
        NoisyFeasibilityOracle {
            hidden,
            vicinity_set,
            sigma_bar,
            count: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            guard: VicinityGuard::Off,
            r0: f64::INFINITY,
            trips: 0,
            max_excess: 0.0,
        }
    }

    pub fn with_guard(mut self, guard: VicinityGuard, r0: f64) -> Self {
        self.guard = guard;
        self.r0 = r0;
        self
    }

    pub fn count(&self) -> u128 {
        self.count
    }

    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }

    pub fn hidden(&self) -> &Polytope {
        &self.hidden
    }

    pub fn guard_trips(&self) -> u64 {
        self.trips
    }

    /// Largest observed distance of a query point beyond r0.
    pub fn max_excess(&self) -> f64 {
        self.max_excess
    }

    fn check(&mut self, x: &DVector<f64>) -> Result<()> {
        if self.guard == VicinityGuard::Off {
            return Ok(());
        }
        if self.vicinity_set.contains(x, 0.0) {
            return Ok(());
        }
        let dist = self.vicinity_set.distance(x)?;
        if dist > self.r0 * (1.0 + 1e-12) + 1e-12 {
            self.trips += 1;
            self.max_excess = self.max_excess.max(dist - self.r0);
            if self.guard == VicinityGuard::Abort {
                return Err(Error::VicinityViolation {
                    point: x.iter().cloned().collect(),
                    distance: dist,
                    r0: self.r0,
                });
            }
        }
        Ok(())
    }

    /// One measurement per row of `x` (n×d), returned as n×m.
    pub fn query(&mut self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (n, d, m) = (x.nrows(), self.hidden.d(), self.hidden.m());
        if x.ncols() != d {
            return Err(Error::Dimension { expected: d, got: x.ncols() });
        }
        let mut y = DMatrix::zeros(n, m);
        for i in 0..n {
            let xi = x.row(i).transpose();
            self.check(&xi)?;
            let clean = self.hidden.a() * &xi - self.hidden.b();
            for k in 0..m {
                let noise: f64 = if self.sigma_bar > 0.0 {
                    self.rng.sample::<f64, _>(StandardNormal) * self.sigma_bar
                } else {
                    0.0
                };
                y[(i, k)] = clean[k] + noise;
            }
        }
        self.count += n as u128;
        Ok(y)
    }

    /// Mean of `k` independent measurements at `x`, drawn directly from its
    /// exact distribution `Ax − b + (σ̄/√k)·Z`. Counts as `k` queries.
    pub fn query_mean(&mut self, x: &DVector<f64>, k: u128) -> Result<DVector<f64>> {
        if x.len() != self.hidden.d() {
            return Err(Error::Dimension { expected: self.hidden.d(), got: x.len() });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("empty measurement batch".into()));
        }
        self.check(x)?;
        let sd = self.sigma_bar / (k as f64).sqrt();
        let mut y = self.hidden.a() * x - self.hidden.b();
        if sd > 0.0 {
            let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for v in y.iter_mut() {
                *v += normal.sample(&mut self.rng);
            }
        }
        self.count += k;
        Ok(y)
    }
}

/// Realisation ξ of the gradient noise. A token may be evaluated at most twice.
#[derive(Debug)]
pub struct SampleToken {
    id: u64,
    uses: u8,
}

impl SampleToken {
    pub fn id(&self) -> u64 {
        self.id
    }
}

#[derive(Debug, Clone)]
pub struct GradSample {
    pub token: u64,
    pub value: DVector<f64>,
}

/// Stochastic first-order oracle `G(x, ξ) = ∇f(x) + ε(ξ)` with ε(ξ) uniform
/// in the ball of radius σ0 and independent of x.
pub struct StochasticGradientOracle {
    objective: Arc<dyn Objective>,
    sigma0: f64,
    seed: u64,
    next: u64,
    count: u64,
    strict_tokens: bool,
}

impl StochasticGradientOracle {
    pub fn new(objective: Arc<dyn Objective>, sigma0: f64, seed: u64) -> Self {
        StochasticGradientOracle {
            objective,
            sigma0,
            seed,
            next: 0,
            count: 0,
            strict_tokens: true,
        }
    }

    pub fn with_token_guard(mut self, strict: bool) -> Self {
        self.strict_tokens = strict;
        self
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mint(&mut self) -> SampleToken {
        let id = self.next;
        self.next += 1;
        SampleToken { id, uses: 0 }
    }

    /// The noise vector ε(ξ) attached to a token id.
    pub fn noise(&self, token: u64) -> DVector<f64> {
        let d = self.objective.dim();
        if self.sigma0 == 0.0 {
            return DVector::zeros(d);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, token));
        let mut dir: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        while dir.norm() == 0.0 {
            dir = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        }
        let u: f64 = rng.random();
        dir.normalize() * (self.sigma0 * u.powf(1.0 / d as f64))
    }

    pub fn query(&mut self, x: &DVector<f64>, token: &mut SampleToken) -> Result<GradSample> {
        if x.len() != self.objective.dim() {
            return Err(Error::Dimension { expected: self.objective.dim(), got: x.len() });
        }
        if self.strict_tokens && token.uses >= 2 {
            return Err(Error::StaleToken(token.id));
        }
        token.uses = token.uses.saturating_add(1);
        self.count += 1;
        Ok(GradSample {
            token: token.id,
            value: self.objective.gradient(x) + self.noise(token.id),
        })
    }
}
