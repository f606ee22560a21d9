//! Convex conjugate of `H`, the maps `L`/`L⁻¹` and `ψ₀`, the general weight
//! maps `K_r`/`ψ_r`, and the upper decay envelopes built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{Family, FeedbackLaw};
use crate::numerics::{bisect_increasing, illinois_increasing, invert_unbounded, Simpson};

const INVERSE_TOL: f64 = 1e-12;
const PSI_INVERSE_TOL: f64 = 1e-10;

/// Convex conjugate `Ĥ*(y) = sup_{x in [0, r0^2]} (x y - H(x))`.
pub fn conjugate(law: &FeedbackLaw, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::domain(y, "[0, inf)"));
    }
    let xm = law.x_max();
    if law.is_linear_like() {
        // H(x) = x: the supremum sits at an endpoint.
        return Ok(((y - 1.0) * xm).max(0.0));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y >= law.h_prime_max() {
        return Ok(y * xm - law.h_unchecked(xm));
    }
    let x = law.h_prime_inverse(y)?;
    Ok((y * x - law.h_unchecked(x)).max(0.0))
}

/// `L(y) = Ĥ*(y) / y`, with `L(0) = 0`.
pub fn eval_l(law: &FeedbackLaw, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::domain(y, "[0, inf)"));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    Ok(conjugate(law, y)? / y)
}

/// `L⁻¹(z)` for `z in [0, r0^2)`.
pub fn inverse_l(law: &FeedbackLaw, z: f64) -> Result<f64> {
    let xm = law.x_max();
    if !(z >= 0.0 && z < xm) {
        return Err(Error::domain(z, format!("[0, r0^2) = [0, {xm})")));
    }
    if law.is_linear_like() {
        return Err(Error::Classification("L is not invertible for a linear law".into()));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let l = |y: f64| eval_l(law, y).unwrap_or(f64::NAN);
    invert_unbounded(l, z, 0.0, law.h_prime_max(), INVERSE_TOL)
}

pub fn require_away_from_linear(law: &FeedbackLaw) -> Result<()> {
    if law.is_linear_like() {
        return Err(Error::Classification("linear growth: Λ_H ≡ 1".into()));
    }
    let lim = law.lambda_limit().limsup;
    if !(lim < 1.0 - 1e-9) {
        return Err(Error::Classification(format!("limsup Λ_H = {lim} is not below 1")));
    }
    Ok(())
}

/// `ψ₀(x) = 1/H'(r0^2) + ∫_{1/x}^{H'(r0^2)} dθ / (θ² (1 - Λ_H((H')⁻¹(θ))))`.
///
/// Evaluated after the substitution `u = 1/θ`, which turns the integrand
/// into the bounded `1 / (1 - Λ_H((H')⁻¹(1/u)))` on `[1/H'(r0^2), x]`.
pub fn psi0_eval(law: &FeedbackLaw, x: f64) -> Result<f64> {
    require_away_from_linear(law)?;
    psi0_unchecked(law, x)
}

fn psi0_unchecked(law: &FeedbackLaw, x: f64) -> Result<f64> {
    let top = law.h_prime_max();
    let start = 1.0 / top;
    if !(x >= start * (1.0 - 1e-14)) || !x.is_finite() {
        return Err(Error::domain(x, format!("[1/H'(r0^2), inf) = [{start}, inf)")));
    }
    if x <= start {
        return Ok(start);
    }
    let integrand = |u: f64| {
        let theta = (1.0 / u).min(top);
        let y = law.h_prime_inverse(theta).unwrap_or(0.0);
        let lambda = if y > 0.0 { law.lambda_unchecked(y) } else { law.lambda_unchecked(law.eps_clip()) };
        1.0 / (1.0 - lambda)
    };
    Ok(start + Simpson::default().integrate(integrand, start, x)?)
}

/// Inverse of `ψ₀` on the bracket `[1/H'(r0^2), τ]` given by `ψ₀(x) >= x`.
/// The slope of `ψ₀` is at least 1, so the residual bounds the error in `x`.
pub fn psi0_inverse(law: &FeedbackLaw, tau: f64) -> Result<f64> {
    require_away_from_linear(law)?;
    let start = 1.0 / law.h_prime_max();
    if !(tau >= start * (1.0 - 1e-14)) || !tau.is_finite() {
        return Err(Error::domain(tau, format!("[ψ₀ minimum, inf) = [{start}, inf)")));
    }
    if tau <= start {
        return Ok(start);
    }
    let f = |x: f64| psi0_unchecked(law, x).unwrap_or(f64::NAN);
    Ok(illinois_increasing(f, tau, start, tau, 0.0, PSI_INVERSE_TOL))
}

/// Weight used in the nonlinear integral inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `φ = L⁻¹(E / 2β)`
    Optimal,
    /// `φ = E^{(p-1)/2}` for power laws
    Polynomial,
}

/// The weight `φ` attached to an energy value.
pub fn optimal_weight(law: &FeedbackLaw, energy: f64, beta: f64, mode: WeightMode) -> Result<f64> {
    if !(energy >= 0.0) {
        return Err(Error::domain(energy, "[0, inf)"));
    }
    match mode {
        WeightMode::Optimal => {
            if !(beta > 0.0) {
                return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
            }
            inverse_l(law, energy / (2.0 * beta))
        }
        WeightMode::Polynomial => match law.family() {
            Family::Power { p } => Ok(energy.powf(0.5 * (p - 1.0))),
            other => Err(Error::InvalidParameter(format!("polynomial weight needs a power law, got {}", other.name()))),
        },
    }
}

/// Smallest admissible `β = E(0) / (2 L(H'(r0^2)))`.
pub fn minimal_beta(law: &FeedbackLaw, e0: f64) -> Result<f64> {
    Ok(e0 / (2.0 * eval_l(law, law.h_prime_max())?))
}

/// A strictly increasing weight `w : [0, η) -> [0, inf)` with the maps
/// `K_r(τ) = ∫_τ^r dy / (y w(y))` and `ψ_r(z) = z + K_r(w⁻¹(1/z))`.
pub struct GeneralWeight<W> {
    w: W,
    eta: f64,
}

/// Which of the general-weight maps to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMap {
    K,
    Psi,
}

impl<W: Fn(f64) -> f64> GeneralWeight<W> {
    /// `eta` may be infinite.
    pub fn new(w: W, eta: f64) -> Self {
        GeneralWeight { w, eta }
    }

    pub fn w(&self, y: f64) -> f64 {
        (self.w)(y)
    }

    pub fn w_inverse(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(Error::domain(v, "[0, inf)"));
        }
        if self.eta.is_finite() {
            Ok(bisect_increasing(&self.w, v, 0.0, self.eta, 1e-14 * self.eta.max(1.0)))
        } else {
            invert_unbounded(&self.w, v, 0.0, 1.0, 1e-13)
        }
    }

    fn check_r(&self, r: f64) -> Result<()> {
        if !(r > 0.0 && r < self.eta) {
            return Err(Error::domain(r, format!("(0, η) = (0, {})", self.eta)));
        }
        Ok(())
    }

    pub fn k_r(&self, r: f64, tau: f64) -> Result<f64> {
        self.check_r(r)?;
        if !(tau > 0.0 && tau <= r) {
            return Err(Error::domain(tau, format!("(0, r] = (0, {r}]")));
        }
        Simpson::default().integrate(|y| 1.0 / (y * (self.w)(y)), tau, r)
    }

    pub fn psi_r(&self, r: f64, z: f64) -> Result<f64> {
        self.check_r(r)?;
        let start = 1.0 / (self.w)(r);
        if !(z >= start * (1.0 - 1e-14)) {
            return Err(Error::domain(z, format!("[1/w(r), inf) = [{start}, inf)")));
        }
        let tau = self.w_inverse(1.0 / z)?.min(r);
        if tau >= r {
            return Ok(z);
        }
        Ok(z + self.k_r(r, tau)?)
    }

    pub fn psi_r_inverse(&self, r: f64, t: f64) -> Result<f64> {
        self.check_r(r)?;
        let start = 1.0 / (self.w)(r);
        if !(t >= start * (1.0 - 1e-14)) {
            return Err(Error::domain(t, format!("[1/w(r), inf) = [{start}, inf)")));
        }
        if t <= start {
            return Ok(start);
        }
        let f = |z: f64| self.psi_r(r, z).unwrap_or(f64::NAN);
        Ok(illinois_increasing(f, t, start, t, 0.0, 1e-12 * t.max(1.0)))
    }

    /// Dispatches to `K_r(arg)` or `ψ_r(arg)`.
    pub fn eval(&self, r: f64, arg: f64, map: WeightMap) -> Result<f64> {
        match map {
            WeightMap::K => self.k_r(r, arg),
            WeightMap::Psi => self.psi_r(r, arg),
        }
    }

    /// Decay bound `w⁻¹(1 / ψ_r⁻¹(t/M))`, valid for `t >= M / w(r)`.
    pub fn decay_bound(&self, r: f64, m: f64, t: f64) -> Result<f64> {
        let start = m / (self.w)(r);
        if !(t >= start * (1.0 - 1e-14)) {
            return Err(Error::domain(t, format!("[M/w(r), inf) = [{start}, inf)")));
        }
        let z = self.psi_r_inverse(r, (t / m).max(1.0 / (self.w)(r)))?;
        self.w_inverse(1.0 / z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// `2β L(1/ψ₀⁻¹(t/M))`
    General,
    /// `2β (H')⁻¹(κM/t)`
    Simplified,
    /// `E(0) min(((M(α+1))/(M + α E(0)^α t))^{1/α}, 1)` with `α = (p-1)/2`
    Poly,
    /// `E(0) e^{1 - t/M}`
    Expo,
    /// `(γ_s C_s)^{-2} ((H')⁻¹(1/(t - T0)))^2`
    Lower,
}

/// A decay envelope with its constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayEnvelope {
    pub kind: EnvelopeKind,
    pub law: FeedbackLaw,
    pub beta: f64,
    pub m: f64,
    pub kappa: f64,
    /// Initial energy, used by the poly and expo kinds.
    pub e0: f64,
    pub t0: f64,
    pub t1: f64,
    pub gamma_s: f64,
    pub c_s: f64,
}

impl DecayEnvelope {
    fn base(kind: EnvelopeKind, law: FeedbackLaw) -> Self {
        DecayEnvelope { kind, law, beta: 1.0, m: 1.0, kappa: 1.0, e0: 1.0, t0: 0.0, t1: 0.0, gamma_s: 1.0, c_s: 1.0 }
    }

    pub fn general(law: FeedbackLaw, beta: f64, m: f64) -> Self {
        DecayEnvelope { beta, m, ..Self::base(EnvelopeKind::General, law) }
    }

    pub fn simplified(law: FeedbackLaw, beta: f64, m: f64, kappa: f64) -> Self {
        DecayEnvelope { beta, m, kappa, ..Self::base(EnvelopeKind::Simplified, law) }
    }

    pub fn poly(law: FeedbackLaw, e0: f64, m: f64) -> Self {
        DecayEnvelope { e0, m, ..Self::base(EnvelopeKind::Poly, law) }
    }

    pub fn expo(law: FeedbackLaw, e0: f64, m: f64) -> Self {
        DecayEnvelope { e0, m, ..Self::base(EnvelopeKind::Expo, law) }
    }

    pub fn lower(law: FeedbackLaw, gamma_s: f64, c_s: f64, t0: f64, t1: f64) -> Self {
        DecayEnvelope { gamma_s, c_s, t0, t1, ..Self::base(EnvelopeKind::Lower, law) }
    }

    pub fn is_upper(&self) -> bool {
        self.kind != EnvelopeKind::Lower
    }

    /// First time at which the envelope is defined.
    pub fn domain_start(&self) -> f64 {
        let top = self.law.h_prime_max();
        match self.kind {
            EnvelopeKind::General => self.m / top,
            EnvelopeKind::Simplified => self.kappa * self.m / top,
            EnvelopeKind::Poly => 0.0,
            EnvelopeKind::Expo => self.m,
            EnvelopeKind::Lower => (self.t0 + self.t1).max(self.t0 + 1.0 / top),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self.kind {
            EnvelopeKind::General => envelope_general(self, t),
            EnvelopeKind::Simplified => envelope_simplified(self, t),
            EnvelopeKind::Poly => {
                let p = match self.law.family() {
                    Family::Power { p } if p > 1.0 => p,
                    _ => return Err(Error::InvalidParameter("poly envelope needs a power law with p > 1".into())),
                };
                if !(t >= 0.0) {
                    return Err(Error::domain(t, "[0, inf)"));
                }
                let a = 0.5 * (p - 1.0);
                let ratio = self.m * (a + 1.0) / (self.m + a * self.e0.powf(a) * t);
                Ok(self.e0 * ratio.powf(1.0 / a).min(1.0))
            }
            EnvelopeKind::Expo => {
                if !(t >= self.m) {
                    return Err(Error::domain(t, format!("[T, inf) = [{}, inf)", self.m)));
                }
                Ok(self.e0 * (1.0 - t / self.m).exp())
            }
            EnvelopeKind::Lower => crate::comparison::lower_envelope(self, t),
        }
    }
}

/// `2β L(1/ψ₀⁻¹(t/M))` for `t >= M/H'(r0^2)`.
pub fn envelope_general(env: &DecayEnvelope, t: f64) -> Result<f64> {
    let start = env.m / env.law.h_prime_max();
    if !(t >= start * (1.0 - 1e-14)) {
        return Err(Error::domain(t, format!("[M/H'(r0^2), inf) = [{start}, inf)")));
    }
    let tau = (t / env.m).max(1.0 / env.law.h_prime_max());
    let x = psi0_inverse(&env.law, tau)?;
    Ok(2.0 * env.beta * eval_l(&env.law, 1.0 / x)?)
}

/// `2β (H')⁻¹(κM/t)`, for laws away from linear growth.
pub fn envelope_simplified(env: &DecayEnvelope, t: f64) -> Result<f64> {
    require_away_from_linear(&env.law)?;
    let top = env.law.h_prime_max();
    let arg = env.kappa * env.m / t;
    if !(t > 0.0) || !(arg <= top) {
        return Err(Error::domain(t, format!("[κM/H'(r0^2), inf) = [{}, inf)", env.kappa * env.m / top)));
    }
    Ok(2.0 * env.beta * env.law.h_prime_inverse(arg)?)
}
