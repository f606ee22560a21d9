//! The comparison ODE `z' + κ H(z) = 0`, the integral `K(τ) = ∫_τ^{z0} dy/H(y)`
//! and the lower decay envelope built from them.

use crate::convex::{DecayEnvelope, EnvelopeKind};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::numerics::{DormandPrince, Simpson};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSolution {
    pub law: FeedbackLaw,
    pub kappa: f64,
    pub z0: f64,
    /// `(t, z(t))`
    pub samples: Vec<(f64, f64)>,
}

impl ComparisonSolution {
    /// Largest `C` with `z(t) >= C (H')⁻¹(1/t)` on the samples with `t >= t1`.
    pub fn fit_c_s(&self, t1: f64) -> Result<f64> {
        let top = self.law.h_prime_max();
        let mut best = f64::INFINITY;
        for &(t, z) in &self.samples {
            if t < t1.max(1.0 / top) || t <= 0.0 {
                continue;
            }
            let x = self.law.h_prime_inverse(1.0 / t)?;
            best = best.min(z / x);
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::domain(t1, "no samples beyond T1"))
        }
    }
}

fn check_z0(law: &FeedbackLaw, z0: f64) -> Result<()> {
    if !(z0 > 0.0 && z0 <= law.x_max()) {
        return Err(Error::domain(z0, format!("(0, r0^2] = (0, {}]", law.x_max())));
    }
    Ok(())
}

/// Integrates the comparison ODE and reports `z` at each of `times`.
pub fn solve_comparison(law: &FeedbackLaw, kappa: f64, z0: f64, times: &[f64]) -> Result<ComparisonSolution> {
    check_z0(law, z0)?;
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    let solver = DormandPrince { rel_tol: 1e-10, abs_tol: 1e-14 * z0, keep_positive: true, ..Default::default() };
    let zs = solver.solve(|_, z| -kappa * law.h_unchecked(z.clamp(0.0, z0)), 0.0, z0, times)?;
    Ok(ComparisonSolution { law: *law, kappa, z0, samples: times.iter().copied().zip(zs).collect() })
}

/// Uniform output grid of `points` samples on `[0, horizon]`.
pub fn solve_comparison_to(law: &FeedbackLaw, kappa: f64, z0: f64, horizon: f64, points: usize) -> Result<ComparisonSolution> {
    let n = points.max(2);
    let times: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
    solve_comparison(law, kappa, z0, &times)
}

/// `K(τ) = ∫_τ^{z0} dy / H(y)` for `0 < τ <= z0 <= r0^2`.
pub fn k_integral(law: &FeedbackLaw, tau: f64, z0: f64) -> Result<f64> {
    check_z0(law, z0)?;
    if !(tau > 0.0 && tau <= z0) {
        return Err(Error::domain(tau, format!("(0, z0] = (0, {z0}]")));
    }
    Simpson::default().integrate(|y| 1.0 / law.h_unchecked(y), tau, z0)
}

/// `K⁻¹(s)`: the `τ` with `K(τ) = s`, by bisection on the decreasing `K`.
pub fn k_inverse(law: &FeedbackLaw, s: f64, z0: f64) -> Result<f64> {
    check_z0(law, z0)?;
    if !(s >= 0.0) {
        return Err(Error::domain(s, "[0, inf)"));
    }
    if s == 0.0 {
        return Ok(z0);
    }
    let mut hi = z0;
    let mut lo = 0.5 * z0;
    while k_integral(law, lo, z0)? < s {
        hi = lo;
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::domain(s, "range of K"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-15 * hi || mid <= lo || mid >= hi {
            break;
        }
        if k_integral(law, mid, z0)? > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `γ_s = 4 sqrt(E1(0))`.
pub fn gamma_s(e1_initial: f64) -> f64 {
    4.0 * e1_initial.max(0.0).sqrt()
}

/// Numerical screening of the lower-bound growth hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct HflScreening {
    pub liminf_lambda: f64,
    pub limsup_lambda: f64,
    pub first_alternative: bool,
    /// Smallest deep-sample value of `H(μx)/(μx) ∫_x^{z1} dy/H(y)`, if evaluated.
    pub second_alternative_min: Option<f64>,
    pub passes: bool,
}

/// Positivity threshold for the sampled liminf estimates.
const POSITIVE: f64 = 1e-6;

pub fn hfl_screen(law: &FeedbackLaw, mu: f64, z1: f64) -> Result<HflScreening> {
    let lim = law.lambda_limit();
    let below_one = lim.limsup < 1.0 - 1e-9 && !law.is_linear_like();
    let first = below_one && lim.liminf > POSITIVE;
    let mut second_min = None;
    let mut second = false;
    if below_one && !first {
        second_min = Some(second_alternative(law, mu, z1)?);
        second = second_min.is_some_and(|m| m > POSITIVE);
    }
    Ok(HflScreening {
        liminf_lambda: lim.liminf,
        limsup_lambda: lim.limsup,
        first_alternative: first,
        second_alternative_min: second_min,
        passes: first || second,
    })
}

fn second_alternative(law: &FeedbackLaw, mu: f64, z1: f64) -> Result<f64> {
    check_z0(law, z1)?;
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let top = z1.min(law.x_max() / mu);
    let quad = Simpson::default();
    let mut values = Vec::new();
    for k in 1..=60 {
        let x = top * 0.5f64.powi(k);
        // integrand H(μx) / (μx H(y)) in log space
        let shift = law.log_h(mu * x) - (mu * x).ln();
        let v = quad.integrate(|y| (shift - law.log_h(y)).exp(), x, z1);
        match v {
            Ok(v) if v.is_finite() => values.push(v),
            _ => break,
        }
    }
    let tail = &values[values.len().saturating_sub(10)..];
    Ok(tail.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `(γ_s C_s)^{-2} ((H')⁻¹(1/(t - T0)))^2` for `t >= T1 + T0`.
pub fn lower_envelope(env: &DecayEnvelope, t: f64) -> Result<f64> {
    if env.kind != EnvelopeKind::Lower {
        return Err(Error::InvalidParameter("lower_envelope needs a lower-kind envelope".into()));
    }
    let start = env.domain_start();
    if !(t >= start) {
        return Err(Error::domain(t, format!("[max(T1 + T0, T0 + 1/H'(r0^2)), inf) = [{start}, inf)")));
    }
    let screen = hfl_screen(&env.law, 2.0, env.law.x_max())?;
    if !screen.passes {
        return Err(Error::Classification(format!(
            "law fails the lower-bound growth screening (limsup Λ_H = {})",
            screen.limsup_lambda
        )));
    }
    let x = env.law.h_prime_inverse(1.0 / (t - env.t0))?;
    let scale = env.gamma_s * env.c_s;
    Ok(x * x / (scale * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::Family;

    fn power(p: f64) -> FeedbackLaw {
        FeedbackLaw::new(Family::Power { p }, 1.0).unwrap()
    }

    #[test]
    fn riccati_closed_form() {
        let sol = solve_comparison(&power(3.0), 1.0, 1.0, &[0.0, 1.0, 10.0]).unwrap();
        assert_eq!(sol.samples[0].1, 1.0);
        assert!((sol.samples[1].1 - 0.5).abs() < 1e-9);
        assert!((sol.samples[2].1 - 1.0 / 11.0).abs() < 1e-9);
    }

    #[test]
    fn ode_matches_k_inversion_p5() {
        let law = power(5.0);
        let sol = solve_comparison(&law, 2.0, 0.5, &[3.0]).unwrap();
        let tau = k_inverse(&law, 6.0, 0.5).unwrap();
        assert!((tau - 0.25).abs() < 1e-9);
        assert!((sol.samples[0].1 - tau).abs() < 1e-8);
    }

    #[test]
    fn k_integral_examples() {
        let law = power(3.0);
        assert!((k_integral(&law, 0.5, 1.0).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(k_integral(&law, 0.7, 0.7).unwrap(), 0.0);
        for p in [2.0, 3.0, 5.0, 7.5] {
            let law = power(p);
            let (tau, z0): (f64, f64) = (0.01, 0.8);
            let closed = 2.0 / (p - 1.0) * (tau.powf(0.5 * (1.0 - p)) - z0.powf(0.5 * (1.0 - p)));
            let v = k_integral(&law, tau, z0).unwrap();
            assert!((v - closed).abs() < 1e-9 * closed, "p={p}");
        }
        assert!(k_integral(&law, 0.0, 1.0).is_err());
        assert!(k_integral(&law, 0.5, 0.4).is_err());
    }

    #[test]
    fn lower_envelope_examples() {
        let law = power(3.0);
        let env = DecayEnvelope::lower(law, 1.0, 1.0, 0.0, 0.0);
        for t in [10.0, 100.0, 1000.0] {
            assert!((lower_envelope(&env, t).unwrap() - 1.0 / (4.0 * t * t)).abs() < 1e-12 / (t * t));
        }
        let shifted = DecayEnvelope::lower(law, 1.0, 1.0, 7.0, 0.0);
        assert!((lower_envelope(&shifted, 57.0).unwrap() - lower_envelope(&env, 50.0).unwrap()).abs() < 1e-15);
        assert!(lower_envelope(&shifted, 7.1).is_err());
        let lin = FeedbackLaw::new(Family::Linear, 1.0).unwrap();
        assert!(lower_envelope(&DecayEnvelope::lower(lin, 1.0, 1.0, 0.0, 0.0), 10.0).is_err());
    }

    #[test]
    fn exp_inv_square_lower_envelope_is_inverse_log_squared() {
        let law = FeedbackLaw::with_default_r0(Family::ExpInvSquare).unwrap();
        let screen = hfl_screen(&law, 2.0, law.x_max()).unwrap();
        assert!(!screen.first_alternative && screen.passes);
        let env = DecayEnvelope::lower(law, 1.0, 1.0, 0.0, 0.0);
        // (H')⁻¹(1/t) ~ 1/ln t, so E (ln t)^2 should settle to a constant
        let scaled: Vec<f64> = [1e6, 1e9, 1e12]
            .iter()
            .map(|&t: &f64| lower_envelope(&env, t).unwrap() * t.ln().powi(2))
            .collect();
        assert!((scaled[2] / scaled[1] - 1.0).abs() < (scaled[1] / scaled[0] - 1.0).abs());
        assert!(scaled[2] > 0.5 && scaled[2] < 2.0, "{scaled:?}");
    }

    #[test]
    fn c_s_fit_against_own_solution() {
        let law = power(3.0);
        let sol = solve_comparison_to(&law, 1.0, 1.0, 100.0, 101).unwrap();
        // z = 1/(1+t), (H')⁻¹(1/t) = 1/(2t): ratio 2t/(1+t) is smallest at T1
        let c = sol.fit_c_s(1.0).unwrap();
        assert!((c - 1.0).abs() < 1e-8);
    }
}
