//! Recursive-momentum (STORM) gradient estimation.

use crate::error::{Error, Result};
use crate::oracles::GradSample;
use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct StormState {
    g_prev: DVector<f64>,
    x_prev: DVector<f64>,
    t: usize,
}

impl StormState {
    /// `g_0 = G_0(x_0)`.
    pub fn init(g0: &GradSample, x0: &DVector<f64>) -> (DVector<f64>, StormState) {
        let state = StormState {
            g_prev: g0.value.clone(),
            x_prev: x0.clone(),
            t: 0,
        };
        (g0.value.clone(), state)
    }

    pub fn g_prev(&self) -> &DVector<f64> {
        &self.g_prev
    }

    pub fn x_prev(&self) -> &DVector<f64> {
        &self.x_prev
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `g_t = G_t(x_t) + (1 − ρ_t)(g_{t−1} − G_t(x_{t−1}))`. The evaluation at
    /// `x_{t−1}` may be omitted only when `ρ_t = 1`.
    pub fn update(
        &mut self,
        at_xt: &GradSample,
        at_xprev: Option<&GradSample>,
        rho: f64,
        x_t: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidArgument(format!("ρ must lie in (0, 1], got {rho}")));
        }
        let g = if rho == 1.0 {
            at_xt.value.clone()
        } else {
            let prev = at_xprev.ok_or_else(|| Error::InvalidArgument("momentum step needs G_t(x_{t-1})".into()))?;
            if prev.token != at_xt.token {
                return Err(Error::TokenMismatch(at_xt.token, prev.token));
            }
            &at_xt.value + (&self.g_prev - &prev.value) * (1.0 - rho)
        };
        self.g_prev = g.clone();
        self.x_prev = x_t.clone();
        self.t += 1;
        Ok(g)
    }
}

/// High-probability bound on `‖g_t − ∇f(x_t)‖` for `η_t = ρ_t = (t+2)^{−α}`.
pub fn storm_error_bound(t: usize, alpha: f64, l0: f64, lambda: f64, sigma0: f64, delta: f64) -> f64 {
    let three = 3f64.powf(alpha);
    2.0 / ((t + 2) as f64).powf(alpha / 2.0)
        * (2.0 * l0 * lambda + three * sigma0 / (three - 1.0))
        * (2.0 * (4.0 / delta).ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{synthetic_problem, StochasticGradientOracle};
    use approx::assert_relative_eq;

    #[test]
    fn init_records_sample() {
        let prob = synthetic_problem("quad-box", 2, 0, 1).unwrap();
        let mut sfo = StochasticGradientOracle::new(prob.objective.clone(), 0.0, 1);
        let mut tok = sfo.mint();
        let s = sfo.query(&prob.x0, &mut tok).unwrap();
        let (g, st) = StormState::init(&s, &prob.x0);
        assert_eq!(g, prob.objective.gradient(&prob.x0));
        assert_eq!(st.x_prev(), &prob.x0);
    }

    #[test]
    fn rho_one_is_plain_gradient_and_mismatch_rejected() {
        let prob = synthetic_problem("quad-box", 2, 0, 1).unwrap();
        let mut sfo = StochasticGradientOracle::new(prob.objective.clone(), 0.1, 1);
        let mut t0 = sfo.mint();
        let s0 = sfo.query(&prob.x0, &mut t0).unwrap();
        let (_, mut st) = StormState::init(&s0, &prob.x0);
        let x1 = DVector::from_vec(vec![0.6, 0.4]);
        let mut t1 = sfo.mint();
        let s1 = sfo.query(&x1, &mut t1).unwrap();
        assert_eq!(st.update(&s1, None, 1.0, &x1).unwrap(), s1.value);
        let mut t2 = sfo.mint();
        let s2 = sfo.query(&x1, &mut t2).unwrap();
        assert!(matches!(st.update(&s2, Some(&s1), 0.5, &x1), Err(Error::TokenMismatch(_, _))));
    }

    #[test]
    fn additive_noise_error_recursion() {
        let prob = synthetic_problem("trig-polytope", 2, 5, 3).unwrap();
        let f = prob.objective.clone();
        let mut sfo = StochasticGradientOracle::new(f.clone(), 0.3, 5);
        let mut x = prob.x0.clone();
        let mut tok = sfo.mint();
        let s = sfo.query(&x, &mut tok).unwrap();
        let (mut g, mut st) = StormState::init(&s, &x);
        for t in 1..30usize {
            let rho = ((t + 2) as f64).powf(-2.0 / 3.0);
            let x_new = &x + DVector::from_vec(vec![0.01 * t as f64, -0.02]);
            let mut tok = sfo.mint();
            let cur = sfo.query(&x_new, &mut tok).unwrap();
            let prev = sfo.query(&x, &mut tok).unwrap();
            let err_prev = &g - f.gradient(&x);
            let g_new = st.update(&cur, Some(&prev), rho, &x_new).unwrap();
            let expect = err_prev * (1.0 - rho) + sfo.noise(tok.id()) * rho;
            assert_relative_eq!(&g_new - f.gradient(&x_new), expect, epsilon = 1e-12);
            g = g_new;
            x = x_new;
        }
    }

    #[test]
    fn bound_formula() {
        let a = 2.0 / 3.0;
        let got = storm_error_bound(10, a, 2.0, 1.5, 0.1, 0.1);
        let three = 3f64.powf(a);
        let expect = 2.0 / 12f64.powf(a / 2.0) * (6.0 + three * 0.1 / (three - 1.0)) * (2.0 * 40f64.ln()).sqrt();
        assert_relative_eq!(got, expect, epsilon = 1e-12);
        assert!(storm_error_bound(11, a, 2.0, 1.5, 0.1, 0.1) < got);
        assert!(storm_error_bound(10, a, 2.0, 1.5, 0.1, 0.01) > got);
    }
}
