use crate::error::{Error, Result};
use crate::geometry::{GeometrySummary, Polytope};
use crate::solver::Variant;
use nalgebra::DVector;
use serde::Serialize;
use std::fmt::Write as _;

/// Confidence radius ψ⁻¹ of the least-squares ellipsoid at level `zeta` after
/// `n` measurements in dimension `d`.
pub fn psi_inverse(n: f64, zeta: f64, d: usize) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(Error::InvalidArgument(format!("ψ⁻¹ needs N ≥ 2, got {n}")));
    }
    if !(zeta > 0.0) {
        return Err(Error::InvalidArgument(format!("confidence level must be positive, got {zeta}")));
    }
    let ln_n = n.ln();
    let ln_ratio = 2.0 * ln_n - zeta.ln();
    Ok((128.0 * d as f64 * ln_n * ln_ratio).sqrt().max(8.0 / 3.0 * ln_ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceMode {
    /// ζ = δ/T, one confidence event per iteration.
    PerIteration,
    /// ζ = δ.
    Global,
}

impl std::str::FromStr for ConfidenceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-iteration" => Ok(ConfidenceMode::PerIteration),
            "global" => Ok(ConfidenceMode::Global),
            _ => Err(Error::Unknown { kind: "confidence mode", name: s.into() }),
        }
    }
}

impl std::fmt::Display for ConfidenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConfidenceMode::PerIteration => "per-iteration",
            ConfidenceMode::Global => "global",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConstantInputs<'a> {
    /// Summary of the original (unnormalized) polytope.
    pub geom: &'a GeometrySummary,
    pub normalized: &'a Polytope,
    pub x0: &'a DVector<f64>,
    pub sigma_bar: f64,
    pub delta: f64,
    pub horizon: f64,
    pub r0: f64,
    /// Defaults to ε₀/2.
    pub tau: Option<f64>,
    pub l: f64,
    pub big_m: f64,
    pub l0: f64,
    pub sigma0: f64,
    /// Upper bound on f(x0) − f(x*).
    pub fgap: f64,
    pub mode: ConfidenceMode,
    /// Measurement count at which ψ⁻¹ (hence κ) is evaluated.
    pub n_ref: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleConstants {
    pub d: usize,
    pub m: usize,
    pub eps0: f64,
    pub l_a: f64,
    pub tau: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub r0: f64,
    pub sigma_bar: f64,
    pub delta: f64,
    pub zeta: f64,
    pub n_ref: f64,
    pub psi_inv: f64,
    pub kappa: f64,
    pub l: f64,
    pub big_m: f64,
    pub l0: f64,
    pub sigma0: f64,
    pub fgap: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
}

impl ScheduleConstants {
    /// Flat `key = value` listing, one constant per line.
    pub fn ledger(&self) -> String {
        let v = serde_json::to_value(self).expect("plain struct");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = v {
            for (k, val) in map {
                let _ = writeln!(out, "{k} = {val}");
            }
        }
        out
    }

    /// ψ⁻¹ at the per-constraint level for an actual count `n`.
    pub fn psi_at(&self, n: f64) -> Result<f64> {
        psi_inverse(n.max(2.0), self.zeta / self.m as f64, self.d)
    }

    /// Smallest N_t allowed by the projection bound, C1²/(1+Γ)².
    pub fn n_floor(&self) -> f64 {
        (self.c1 / (1.0 + self.gamma)).powi(2)
    }
}

pub fn compute_constants(inp: &ConstantInputs) -> Result<ScheduleConstants> {
    let p = inp.normalized;
    let (d, m) = (p.d(), p.m());
    let eps0 = p.min_residual(inp.x0)?;
    if !(eps0 > 0.0) {
        return Err(Error::InfeasibleStart(eps0));
    }
    let tau = inp.tau.unwrap_or(eps0 / 2.0);
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("τ must be positive, got {tau}")));
    }
    if p.shrink(tau)?.is_empty() {
        return Err(Error::EmptyPolytope);
    }
    if !(inp.delta > 0.0 && inp.delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ must lie in (0, 1), got {}", inp.delta)));
    }
    let g = inp.geom;
    let l_a = 1.0 / (2.0 * g.alpha);
    let zeta = match inp.mode {
        ConfidenceMode::PerIteration => inp.delta / inp.horizon.max(1.0),
        ConfidenceMode::Global => inp.delta,
    };
    let psi_inv = psi_inverse(inp.n_ref, zeta / m as f64, d)?;
    let kappa = inp.sigma_bar * psi_inv;
    let (gamma, lambda, r0) = (g.radius, g.diameter, inp.r0);
    let df = d as f64;
    let c0 = (df * ((1.0 + gamma * gamma) / (r0 * r0) + 1.0)).sqrt();
    let c1 = kappa * (1.0 + gamma) * c0 / l_a;
    let c2 = [
        (4.0 * c1 * l_a / tau).powi(2),
        (8.0 * kappa * c0 / tau).powi(2),
        64.0 * kappa * kappa / (tau * tau) * (1.0 + df * lambda * lambda / (r0 * r0)),
        c1 * c1,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let (l, big_m, l0, s0) = (inp.l, inp.big_m, inp.l0, inp.sigma0);
    let log4 = (4.0 / inp.delta).ln();
    let c3 = (18.0 * 2f64.sqrt() * (2.0 * lambda + 1.0) * (s0 + l0 * lambda) * log4.sqrt()).powi(3);
    let c4 = (9.0 * (big_m + s0) + 6.0 * l * (1.0 + lambda).powi(2)).powf(1.5);
    let c5 = (4.0 * big_m + 2.0 * l * (1.0 + lambda * lambda)).powi(2);
    let c6 = (2.0
        * (16.0 * 2f64.sqrt() * (1.0 + lambda) * (l0 * lambda + s0) * log4.sqrt())
            .max(4.0 * 2f64.sqrt() * (big_m + s0))
            .max(l * l * (lambda + 2.0)))
    .powi(2);
    let c7 = 4.0 * (l0 * lambda + s0) * (2.0 * log4).sqrt();
    let c8 = inp
        .fgap
        .max(4.0 * c7 * (1.0 + lambda))
        .max(4.0 * 2f64.sqrt() * (big_m + s0))
        .max(l * l * (lambda + 2.0));
    let c9 = inp.fgap.max(4.0 * big_m).max(2.0 * l * l * (lambda + 2.0));
    Ok(ScheduleConstants {
        d,
        m,
        eps0,
        l_a,
        tau,
        alpha: g.alpha,
        gamma,
        lambda,
        r0,
        sigma_bar: inp.sigma_bar,
        delta: inp.delta,
        zeta,
        n_ref: inp.n_ref,
        psi_inv,
        kappa,
        l,
        big_m,
        l0,
        sigma0: s0,
        fgap: inp.fgap,
        c0,
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        c8,
        c9,
    })
}

/// Lower bound h on the estimated residual at step `t`, from the step sizes
/// `etas[0..t]` and cumulative counts `ns[0..=t]`.
pub fn h_value(etas: &[f64], ns: &[f64], t: usize, c: &ScheduleConstants) -> f64 {
    let mut tail = 1.0;
    let mut sum = 0.0;
    for k in (0..t).rev() {
        sum += (c.tau / 2.0 - c.c1 * c.l_a / ns[k].sqrt()) * etas[k] * tail;
        tail *= 1.0 - etas[k];
    }
    c.eps0 * tail + sum - c.kappa * c.c0 / ns[t].sqrt()
}

/// Incremental evaluation of [`h_value`] along a run.
#[derive(Debug, Clone)]
pub struct HTracker {
    prod: f64,
    sum: f64,
}

impl Default for HTracker {
    fn default() -> Self {
        HTracker { prod: 1.0, sum: 0.0 }
    }
}

impl HTracker {
    pub fn h(&self, n_t: f64, c: &ScheduleConstants) -> f64 {
        c.eps0 * self.prod + self.sum - c.kappa * c.c0 / n_t.sqrt()
    }

    /// Whether κ²/N_t·(1 + dΛ²/r0²) ≤ h² with h > 0, and N_t ≥ C1²/(1+Γ)².
    pub fn condition_holds(&self, n_t: f64, c: &ScheduleConstants) -> bool {
        let h = self.h(n_t, c);
        let lhs = c.kappa * c.kappa / n_t * (1.0 + c.d as f64 * c.lambda * c.lambda / (c.r0 * c.r0));
        h > 0.0 && lhs <= h * h && n_t >= c.n_floor()
    }

    pub fn advance(&mut self, eta: f64, n_t: f64, c: &ScheduleConstants) {
        self.sum = (1.0 - eta) * self.sum + (c.tau / 2.0 - c.c1 * c.l_a / n_t.sqrt()) * eta;
        self.prod *= 1.0 - eta;
    }
}

/// Measurements at step `t`: the theorem's n_t times `scale`, rounded up to
/// a positive multiple of 2d.
pub fn min_samples(variant: Variant, t: usize, c2: f64, d: usize, scale: f64) -> Result<u128> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidArgument(format!("scale must lie in (0, 1], got {scale}")));
    }
    let tf = (t + 1) as f64;
    let raw = match variant {
        Variant::NonconvexStochastic => 2.0 * c2 * tf.cbrt(),
        Variant::NonconvexDeterministic => c2,
        Variant::ConvexStochastic | Variant::ConvexDeterministic => 2.0 * c2 * tf,
    } * scale;
    let block = 2 * d as u128;
    let blocks = (raw / block as f64).ceil().max(1.0);
    if !blocks.is_finite() || blocks >= 1e36 {
        return Err(Error::InvalidArgument(format!("sample count {raw:.3e} overflows")));
    }
    Ok(blocks as u128 * block)
}
