//! Damping growth laws `g`, the convexity function `H(x) = sqrt(x) g(sqrt(x))`
//! and the growth classifier `Λ_H(x) = H(x) / (x H'(x))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bisect_increasing;

/// Closed-form families of feedback growth near the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `g(x) = x`
    Linear,
    /// `g(x) = x^p`, `p >= 1`
    Power { p: f64 },
    /// `g(x) = exp(-1/x^2)`
    ExpInvSquare,
    /// `g(x) = x^p ln(1/x)^q`, `p > 2`, `q > 1`
    PowerLog { p: f64, q: f64 },
    /// `g(x) = exp(-ln(1/x)^p)`, `p > 2`
    SubExponential { p: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Power { .. } => "power",
            Family::ExpInvSquare => "exp_inv_square",
            Family::PowerLog { .. } => "power_log",
            Family::SubExponential { .. } => "sub_exponential",
        }
    }

    pub fn default_r0(&self) -> f64 {
        match self {
            Family::Linear | Family::Power { .. } => 1.0,
            _ => 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            Family::Power { p } if !(p >= 1.0) || !p.is_finite() => bad(format!("power family needs p >= 1, got {p}")),
            Family::PowerLog { p, q } if !(p > 2.0 && q > 1.0) || !p.is_finite() || !q.is_finite() => {
                bad(format!("power_log family needs p > 2 and q > 1, got p = {p}, q = {q}"))
            }
            Family::SubExponential { p } if !(p > 2.0) || !p.is_finite() => {
                bad(format!("sub_exponential family needs p > 2, got {p}"))
            }
            _ => Ok(()),
        }
    }
}

// powi for integer exponents: the damping solve evaluates this per node and step.
fn pow(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= 32.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

/// A feedback growth law restricted to `(0, r0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackLaw {
    family: Family,
    r0: f64,
    eps_clip: f64,
}

/// Default lower cutoff for geometric sampling near the origin.
pub const EPS_CLIP: f64 = 1e-16;

/// `limsup`/`liminf` estimates of `Λ_H` at `0+`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaLimit {
    /// Max over the deepest ten samples.
    pub limsup: f64,
    /// Min over the deepest ten samples.
    pub liminf: f64,
    /// Linear extrapolation of the deepest samples in `1/ln(1/x)` to zero,
    /// clamped to `[0, 1]`. Tracks logarithmically converging families.
    pub extrapolated: f64,
    /// `(x_k, Λ_H(x_k))` for the whole sequence.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub strictly_convex: bool,
    pub h0_ok: bool,
    pub hprime0_ok: bool,
    /// Smallest second difference of `H`, relative to `h^2 H(x)`.
    pub min_second_difference: f64,
    pub sample_count: usize,
}

impl FeedbackLaw {
    pub fn new(family: Family, r0: f64) -> Result<Self> {
        family.validate()?;
        if !(r0 > 0.0 && r0 <= 1.0) {
            return Err(Error::InvalidParameter(format!("r0 must lie in (0, 1], got {r0}")));
        }
        let law = FeedbackLaw { family, r0, eps_clip: EPS_CLIP };
        // g must increase on (0, r0]; power_log turns over at exp(-q/p).
        if let Family::PowerLog { p, q } = family {
            let turn = (-q / p).exp();
            if r0 >= turn {
                return Err(Error::InvalidParameter(format!(
                    "power_log g is not increasing on (0, {r0}]; need r0 < {turn:.6}"
                )));
            }
        }
        Ok(law)
    }

    pub fn with_default_r0(family: Family) -> Result<Self> {
        Self::new(family, family.default_r0())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Right end of the convexity interval, `r0^2`.
    pub fn x_max(&self) -> f64 {
        self.r0 * self.r0
    }

    pub fn eps_clip(&self) -> f64 {
        self.eps_clip
    }

    /// `g(x)` for `x >= 0` on the closed-form branch.
    pub fn g(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Linear => x,
            Family::Power { p } => pow(x, p),
            Family::ExpInvSquare => (-1.0 / (x * x)).exp(),
            Family::PowerLog { p, q } => x.powf(p) * (1.0 / x).ln().powf(q),
            Family::SubExponential { p } => (-(1.0 / x).ln().powf(p)).exp(),
        }
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return match self.family {
                Family::Linear => 1.0,
                Family::Power { p: 1.0 } => 1.0,
                _ => 0.0,
            };
        }
        match self.family {
            Family::Linear => 1.0,
            Family::Power { p } => p * pow(x, p - 1.0),
            Family::ExpInvSquare => 2.0 / (x * x * x) * (-1.0 / (x * x)).exp(),
            Family::PowerLog { p, q } => {
                let l = (1.0 / x).ln();
                x.powf(p - 1.0) * l.powf(q - 1.0) * (p * l - q)
            }
            Family::SubExponential { p } => {
                let l = (1.0 / x).ln();
                self.g(x) * p * l.powf(p - 1.0) / x
            }
        }
    }

    fn check_h_domain(&self, x: f64) -> Result<()> {
        if !(x >= 0.0 && x <= self.x_max()) {
            return Err(Error::domain(x, format!("[0, {}]", self.x_max())));
        }
        Ok(())
    }

    /// `H(x) = sqrt(x) g(sqrt(x))` on `[0, r0^2]`.
    pub fn h(&self, x: f64) -> Result<f64> {
        self.check_h_domain(x)?;
        Ok(self.h_unchecked(x))
    }

    pub(crate) fn h_unchecked(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Linear => x,
            Family::Power { p } => x.powf(0.5 * (p + 1.0)),
            Family::ExpInvSquare => x.sqrt() * (-1.0 / x).exp(),
            Family::PowerLog { p, q } => x.powf(0.5 * (p + 1.0)) * (0.5 * (1.0 / x).ln()).powf(q),
            Family::SubExponential { p } => x.sqrt() * (-(0.5 * (1.0 / x).ln()).powf(p)).exp(),
        }
    }

    /// `ln H(x)` for `x > 0`; finite where `H` itself underflows.
    pub fn log_h(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let ln = x.ln();
        match self.family {
            Family::Linear => ln,
            Family::Power { p } => 0.5 * (p + 1.0) * ln,
            Family::ExpInvSquare => 0.5 * ln - 1.0 / x,
            Family::PowerLog { p, q } => 0.5 * (p + 1.0) * ln + q * (-0.5 * ln).ln(),
            Family::SubExponential { p } => 0.5 * ln - (-0.5 * ln).powf(p),
        }
    }

    /// `H'(x)`; at `x = 0` the right limit.
    pub fn h_prime(&self, x: f64) -> Result<f64> {
        self.check_h_domain(x)?;
        Ok(self.h_prime_unchecked(x))
    }

    pub(crate) fn h_prime_unchecked(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return match self.family {
                Family::Linear => 1.0,
                Family::Power { p: 1.0 } => 1.0,
                _ => 0.0,
            };
        }
        match self.family {
            Family::Linear => 1.0,
            Family::Power { p } => 0.5 * (p + 1.0) * x.powf(0.5 * (p - 1.0)),
            Family::ExpInvSquare => (-1.0 / x).exp() / x.sqrt() * (0.5 + 1.0 / x),
            Family::PowerLog { p, q } => {
                let l = 0.5 * (1.0 / x).ln();
                x.powf(0.5 * (p - 1.0)) * l.powf(q - 1.0) * (0.5 * (p + 1.0) * l - 0.5 * q)
            }
            Family::SubExponential { p } => {
                let l = 0.5 * (1.0 / x).ln();
                (-l.powf(p)).exp() / (2.0 * x.sqrt()) * (1.0 + p * l.powf(p - 1.0))
            }
        }
    }

    /// `H'(r0^2)`, the top of the range of `H'`.
    pub fn h_prime_max(&self) -> f64 {
        self.h_prime_unchecked(self.x_max())
    }

    /// `(H')^{-1}(theta)` on `[0, H'(r0^2)]`, by bisection down to the
    /// floating-point resolution of the root (at least `1e-12` absolute).
    pub fn h_prime_inverse(&self, theta: f64) -> Result<f64> {
        let top = self.h_prime_max();
        if !(theta >= 0.0 && theta <= top * (1.0 + 1e-14)) {
            return Err(Error::domain(theta, format!("[0, H'(r0^2)] = [0, {top}]")));
        }
        if matches!(self.family, Family::Linear) || matches!(self.family, Family::Power { p } if p == 1.0) {
            return Err(Error::Classification("H' is constant for a linear law and has no inverse".into()));
        }
        if theta <= 0.0 {
            return Ok(0.0);
        }
        if theta >= top {
            return Ok(self.x_max());
        }
        Ok(bisect_increasing(|x| self.h_prime_unchecked(x), theta, 0.0, self.x_max(), 0.0))
    }

    /// `Λ_H(x) = H(x) / (x H'(x))` on `(0, r0^2]`.
    pub fn lambda_h(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x <= self.x_max()) {
            return Err(Error::domain(x, format!("(0, {}]", self.x_max())));
        }
        Ok(self.lambda_unchecked(x))
    }

    // Closed forms of the ratio; they stay finite where H and H' underflow.
    pub(crate) fn lambda_unchecked(&self, x: f64) -> f64 {
        match self.family {
            Family::Linear => 1.0,
            Family::Power { p } => 2.0 / (p + 1.0),
            Family::ExpInvSquare => 1.0 / (0.5 + 1.0 / x),
            Family::PowerLog { p, q } => {
                let l = 0.5 * (1.0 / x).ln();
                2.0 / (p + 1.0 - q / l)
            }
            Family::SubExponential { p } => {
                let l = 0.5 * (1.0 / x).ln();
                2.0 / (1.0 + p * l.powf(p - 1.0))
            }
        }
    }

    /// Estimates `limsup` and `liminf` of `Λ_H` at `0+` on
    /// `x_k = max(r0^2 2^-k, eps_clip)`, `k = 0..=60`.
    pub fn lambda_limit(&self) -> LambdaLimit {
        let samples: Vec<(f64, f64)> = (0..=60)
            .map(|k| {
                let x = (self.x_max() * 0.5f64.powi(k)).max(self.eps_clip);
                (x, self.lambda_unchecked(x))
            })
            .collect();
        let tail = &samples[samples.len() - 10..];
        let limsup = tail.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let liminf = tail.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);

        let mut us = Vec::new();
        let mut ls = Vec::new();
        for &(x, l) in tail {
            let u = 1.0 / (1.0 / x).ln();
            if us.last().is_none_or(|&prev: &f64| prev != u) {
                us.push(u);
                ls.push(l);
            }
        }
        let extrapolated = match crate::numerics::least_squares(&us, &ls) {
            Some(fit) => fit.intercept.clamp(0.0, 1.0),
            None => limsup,
        };
        LambdaLimit { limsup, liminf, extrapolated, samples }
    }

    /// Second-difference convexity test of `H` on `samples` uniform steps of `(0, r0^2]`.
    pub fn convexity_check(&self, samples: usize) -> Result<ConvexityReport> {
        if samples < 100 {
            return Err(Error::InvalidParameter(format!("convexity check needs >= 100 samples, got {samples}")));
        }
        let step = self.x_max() / samples as f64;
        let mut strictly_convex = true;
        let mut min_rel = f64::INFINITY;
        for i in 1..samples {
            let x = i as f64 * step;
            let (lo, hi) = (x - step, x + step);
            let hx = self.h_unchecked(x);
            // Ratios H(x±h)/H(x), evaluated in log space once H underflows.
            let (r_lo, r_hi) = if hx > 1e-250 {
                (self.h_unchecked(lo) / hx, self.h_unchecked(hi) / hx)
            } else {
                let lx = self.log_h(x);
                let rl = if lo > 0.0 { (self.log_h(lo) - lx).exp() } else { 0.0 };
                (rl, (self.log_h(hi) - lx).exp())
            };
            let second = r_lo - 2.0 + r_hi;
            let rounding = 64.0 * f64::EPSILON * (r_lo + 2.0 + r_hi);
            if !(second > rounding || second == f64::INFINITY) {
                strictly_convex = false;
            }
            min_rel = min_rel.min(second / (step * step));
        }
        Ok(ConvexityReport {
            strictly_convex,
            h0_ok: self.h_unchecked(0.0) == 0.0,
            hprime0_ok: self.h_prime_unchecked(0.0) == 0.0,
            min_second_difference: min_rel,
            sample_count: samples,
        })
    }

    /// The odd, monotone extension `ĝ`: `sign(s) g(|s|)` up to `r0`, linear beyond.
    pub fn g_hat(&self, s: f64) -> f64 {
        let m = s.abs();
        if m <= self.r0 {
            s.signum() * self.g(m)
        } else {
            self.g(self.r0) / self.r0 * s
        }
    }

    pub fn g_hat_prime(&self, s: f64) -> f64 {
        let m = s.abs();
        if m <= self.r0 {
            self.g_prime(m)
        } else {
            self.g(self.r0) / self.r0
        }
    }

    /// Damping `ρ(x, s) = a(x) ĝ(s)`.
    pub fn rho(&self, a_value: f64, s: f64) -> f64 {
        if a_value == 0.0 || s == 0.0 {
            return 0.0;
        }
        a_value * self.g_hat(s)
    }

    pub fn is_linear_like(&self) -> bool {
        matches!(self.family, Family::Linear) || matches!(self.family, Family::Power { p } if p == 1.0)
    }
}

/// Shape of a coefficient field over its support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Indicator,
    SmoothBump,
}

/// A nonnegative coefficient `α(x)` or `a(x)` supported on a subinterval of `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientField {
    pub profile: Profile,
    pub support: (f64, f64),
    /// Lower bound on the support.
    pub floor: f64,
    /// Upper bound; the field takes this value on its plateau. Defaults to `floor`.
    #[serde(default)]
    pub cap: Option<f64>,
}

impl CoefficientField {
    pub fn indicator(support: (f64, f64), level: f64) -> Self {
        CoefficientField { profile: Profile::Indicator, support, floor: level, cap: None }
    }

    pub fn level(&self) -> f64 {
        self.cap.unwrap_or(self.floor)
    }

    pub fn validate(&self) -> Result<()> {
        let (l, r) = self.support;
        if !(0.0 <= l && l < r && r <= 1.0) {
            return Err(Error::InvalidParameter(format!("support ({l}, {r}) is not a nonempty subinterval of (0, 1)")));
        }
        if !(self.floor > 0.0) {
            return Err(Error::InvalidParameter(format!("floor must be positive, got {}", self.floor)));
        }
        if self.level() < self.floor {
            return Err(Error::InvalidParameter(format!("cap {} below floor {}", self.level(), self.floor)));
        }
        Ok(())
    }

    /// Pointwise value. Smooth bumps hold the plateau on the inner 80% of the
    /// support and ramp with a C¹ cosine profile on the outer tenths.
    pub fn value(&self, x: f64) -> f64 {
        let (l, r) = self.support;
        if !(x > l && x < r) {
            return 0.0;
        }
        match self.profile {
            Profile::Indicator => self.level(),
            Profile::SmoothBump => {
                let ramp = 0.1 * (r - l);
                let d = (x - l).min(r - x);
                if d >= ramp {
                    self.level()
                } else {
                    0.5 * self.level() * (1.0 - (std::f64::consts::PI * d / ramp).cos())
                }
            }
        }
    }
}
