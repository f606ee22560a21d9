//! Measured constants of weighted integral inequalities
//! `∫_S^T w(E) E dt <= M E(S)` and the decay lemmas that consume them.

use crate::convex::GeneralWeight;
use crate::error::{Error, Result};
use crate::numerics::{least_squares, Simpson};

/// Number of start points `S`.
pub const START_POINTS: usize = 50;

/// The energy being tested.
pub enum Signal<'a> {
    /// Sampled `(t, E)`, integrated by the trapezoid rule to the last sample.
    Samples(&'a [(f64, f64)]),
    /// A closed-form energy on `[start, horizon]`; `horizon` may be infinite.
    /// Start points are spread over `[start, last_start]`.
    Function { energy: &'a dyn Fn(f64) -> f64, start: f64, last_start: f64, horizon: f64 },
}

/// How sampled traces treat the time beyond the last sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailMode {
    /// Integrate up to the last sample only.
    #[default]
    Finite,
    /// Add a power-law extrapolation of the integrand beyond the last sample.
    Extrapolate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    /// Smallest `M` valid at every start point (infinite when divergent).
    pub m: f64,
    pub m_bound: f64,
    pub passes: bool,
    /// Start point attaining `m`.
    pub worst_start: f64,
    /// `∫ w(E) E` from the first start point to the horizon.
    pub total_integral: f64,
    pub tail_extrapolated: bool,
}

/// Measures `M = sup_S ∫_S^T w(E) E dt / E(S)` over `START_POINTS` start points
/// and compares it with `m_bound`.
pub fn check_integral_inequality(signal: &Signal, weight: &dyn Fn(f64) -> f64, m_bound: f64, tail: TailMode) -> Result<InequalityReport> {
    let (starts, energies, integrals, extrapolated) = match signal {
        Signal::Samples(points) => sampled_integrals(points, weight, tail)?,
        Signal::Function { energy, start, last_start, horizon } => function_integrals(*energy, weight, *start, *last_start, *horizon)?,
    };
    let mut m = 0.0f64;
    let mut worst = starts[0];
    for ((&s, &e), &i) in starts.iter().zip(&energies).zip(&integrals) {
        let ratio = if e > 0.0 {
            i / e
        } else if i > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > m || ratio.is_nan() {
            m = if ratio.is_nan() { f64::INFINITY } else { ratio };
            worst = s;
        }
    }
    Ok(InequalityReport {
        m,
        m_bound,
        passes: m.is_finite() && m <= m_bound,
        worst_start: worst,
        total_integral: integrals[0],
        tail_extrapolated: extrapolated,
    })
}

type Integrals = (Vec<f64>, Vec<f64>, Vec<f64>, bool);

fn sampled_integrals(points: &[(f64, f64)], weight: &dyn Fn(f64) -> f64, tail: TailMode) -> Result<Integrals> {
    if points.len() < 2 {
        return Err(Error::Trace("need at least two samples".into()));
    }
    let e0 = points[0].1;
    for (k, w) in points.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Trace(format!("times not increasing at sample {}", k + 1)));
        }
        if w[1].1 < 0.0 || w[1].1 > w[0].1 + 1e-11 * e0 {
            return Err(Error::Trace(format!("energy increases at t = {}", w[1].0)));
        }
    }
    let integrand: Vec<f64> = points.iter().map(|&(_, e)| weight(e) * e).collect();
    if let Some(k) = integrand.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Trace(format!("weight undefined at t = {}", points[k].0)));
    }
    // suffix[i] = ∫_{t_i}^{T}
    let n = points.len();
    let mut suffix = vec![0.0; n];
    for i in (0..n - 1).rev() {
        suffix[i] = suffix[i + 1] + 0.5 * (points[i + 1].0 - points[i].0) * (integrand[i] + integrand[i + 1]);
    }
    let extra = match tail {
        TailMode::Finite => 0.0,
        TailMode::Extrapolate => tail_estimate(points, &integrand),
    };
    let (t_first, t_last) = (points[0].0, points[n - 1].0);
    let mut starts = Vec::with_capacity(START_POINTS);
    let mut energies = Vec::with_capacity(START_POINTS);
    let mut integrals = Vec::with_capacity(START_POINTS);
    for k in 0..START_POINTS {
        let s = t_first + (t_last - t_first) * k as f64 / (START_POINTS - 1) as f64;
        let i = points.partition_point(|p| p.0 < s).min(n - 1);
        starts.push(points[i].0);
        energies.push(points[i].1);
        integrals.push(suffix[i] + extra);
    }
    Ok((starts, energies, integrals, tail == TailMode::Extrapolate))
}

// ∫_T^∞ of a power law fitted to the integrand over the last third in log-time.
fn tail_estimate(points: &[(f64, f64)], integrand: &[f64]) -> f64 {
    let t_last = points[points.len() - 1].0;
    let t_first = points.iter().map(|p| p.0).find(|&t| t > 0.0).unwrap_or(t_last);
    let lo = (t_first.ln() + 2.0 / 3.0 * (t_last.ln() - t_first.ln())).exp();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .zip(integrand)
        .filter(|(p, v)| p.0 >= lo && **v > 0.0)
        .map(|(p, v)| (p.0.ln(), v.ln()))
        .unzip();
    let last = integrand[integrand.len() - 1];
    if last == 0.0 {
        return 0.0;
    }
    match least_squares(&xs, &ys) {
        Some(fit) if fit.slope < -1.0 => last * t_last / (-fit.slope - 1.0),
        _ => f64::INFINITY,
    }
}

fn function_integrals(energy: &dyn Fn(f64) -> f64, weight: &dyn Fn(f64) -> f64, start: f64, last_start: f64, horizon: f64) -> Result<Integrals> {
    if !(last_start >= start && horizon >= last_start) {
        return Err(Error::InvalidParameter(format!("need start <= last_start <= horizon, got {start}, {last_start}, {horizon}")));
    }
    let f = |t: f64| {
        let e = energy(t);
        weight(e) * e
    };
    let quad = Simpson::default();
    let starts: Vec<f64> = (0..START_POINTS).map(|k| start + (last_start - start) * k as f64 / (START_POINTS - 1) as f64).collect();
    let mut integrals = vec![0.0; START_POINTS];
    integrals[START_POINTS - 1] = integrate_to(&f, last_start, horizon, &quad)?;
    for k in (0..START_POINTS - 1).rev() {
        integrals[k] = integrals[k + 1] + quad.integrate(f, starts[k], starts[k + 1])?;
    }
    let energies = starts.iter().map(|&s| energy(s)).collect();
    Ok((starts, energies, integrals, false))
}

// ∫_a^b f; for b = ∞ sums doubling chunks until they stop contributing, and
// reports divergence as an infinite value.
fn integrate_to(f: &dyn Fn(f64) -> f64, a: f64, b: f64, quad: &Simpson) -> Result<f64> {
    if b.is_finite() {
        return quad.integrate(f, a, b);
    }
    let mut total = 0.0;
    let mut left = a;
    let mut width = 1.0;
    for _ in 0..400 {
        let piece = quad.integrate(f, left, left + width)?;
        total += piece;
        if piece <= 1e-15 * total || (piece == 0.0 && total == 0.0) {
            return Ok(total);
        }
        left += width;
        width *= 2.0;
    }
    Ok(f64::INFINITY)
}

/// Outcome of one synthetic lemma check.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub name: String,
    /// Measured constant (`T` or `M`) fed into the conclusion.
    pub constant: f64,
    /// Points where the conclusion was evaluated.
    pub points: usize,
    /// Smallest `bound(t) / E(t)` over those points.
    pub min_ratio: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaSuiteReport {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaSuiteReport {
    pub fn passes(&self) -> bool {
        self.checks.iter().all(|c| c.passes)
    }
}

fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn pointwise(name: String, constant: f64, energy: &dyn Fn(f64) -> f64, bound: &dyn Fn(f64) -> Result<f64>, times: &[f64]) -> Result<LemmaCheck> {
    let mut min_ratio = f64::INFINITY;
    for &t in times {
        min_ratio = min_ratio.min(bound(t)? / energy(t));
    }
    Ok(LemmaCheck { name, constant, points: times.len(), min_ratio, passes: min_ratio >= 1.0 - 1e-9 })
}

fn measure(energy: &dyn Fn(f64) -> f64, weight: &dyn Fn(f64) -> f64) -> Result<InequalityReport> {
    let signal = Signal::Function { energy, start: 0.0, last_start: 50.0, horizon: f64::INFINITY };
    check_integral_inequality(&signal, weight, f64::INFINITY, TailMode::Finite)
}

type Curve = fn(f64) -> f64;

/// Synthetic energies satisfying each lemma's hypothesis, with the measured
/// constant plugged into the lemma's conclusion on a time grid.
pub fn lemma_suite() -> Result<LemmaSuiteReport> {
    let mut checks = Vec::new();

    // ∫_t^∞ E^{α+1} <= T E(0)^α E(t)  =>  E(t) <= E(0) ((T + αt)/(T + αT))^{-1/α}, t >= T
    let poly_cases: [(&str, f64, Curve); 3] = [
        ("1/(1+t)", 1.0, |t| 1.0 / (1.0 + t)),
        ("(1+t)^-2", 1.0, |t| (1.0 + t).powi(-2)),
        ("(1+t)^-1/2", 3.0, |t| (1.0 + t).powf(-0.5)),
    ];
    for (label, alpha, e) in poly_cases {
        let e0 = e(0.0);
        let m = measure(&e, &|y: f64| y.powf(alpha))?.m;
        let t_const = m / e0.powf(alpha);
        let bound = |t: f64| Ok(e0 * ((t_const + alpha * t) / (t_const + alpha * t_const)).powf(-1.0 / alpha));
        let grid = geometric_grid(t_const, 1e4 * t_const, 200);
        checks.push(pointwise(format!("polynomial decay lemma, E = {label}, α = {alpha}"), t_const, &e, &bound, &grid)?);
    }

    // ∫_t^∞ E^{α+1} <= M E(t)  =>  E(t) <= E(0) min((M(α+1)/(M + α E(0)^α t))^{1/α}, 1)
    let cor_cases: [(&str, f64, Curve); 2] =
        [("(1+t)^-2", 0.5, |t| (1.0 + t).powi(-2)), ("1/(1+t)", 1.0, |t| 1.0 / (1.0 + t))];
    for (label, alpha, e) in cor_cases {
        let e0 = e(0.0);
        let m = measure(&e, &|y: f64| y.powf(alpha))?.m;
        let bound = |t: f64| Ok(e0 * ((m * (alpha + 1.0)) / (m + alpha * e0.powf(alpha) * t)).powf(1.0 / alpha).min(1.0));
        let mut grid = vec![0.0];
        grid.extend(geometric_grid(1e-3, 1e4, 200));
        checks.push(pointwise(format!("polynomial decay corollary, E = {label}, α = {alpha}"), m, &e, &bound, &grid)?);
    }

    // ∫_t^∞ E <= T E(t)  =>  E(t) <= E(0) e^{1 - t/T}, t >= T
    let expo_cases: [(&str, Curve); 3] =
        [("e^-t", |t| (-t).exp()), ("e^-2t", |t| (-2.0 * t).exp()), ("3e^-t/2", |t| 3.0 * (-0.5 * t).exp())];
    for (label, e) in expo_cases {
        let e0 = e(0.0);
        let t_const = measure(&e, &|_| 1.0)?.m;
        let bound = |t: f64| Ok(e0 * (1.0 - t / t_const).exp());
        let grid: Vec<f64> = (0..200).map(|i| t_const + i as f64 * 0.25).collect();
        checks.push(pointwise(format!("exponential decay lemma, E = {label}"), t_const, &e, &bound, &grid)?);
    }

    // ∫_S^T w(E) E <= M E(S)  =>  E(t) <= w⁻¹(1/ψ_r⁻¹(t/M)), t >= M/w(r)
    let general_cases: [(&str, Curve, Curve); 2] = [
        ("w(y) = y, E = 1/(1+t)", |y| y, |t| 1.0 / (1.0 + t)),
        ("w(y) = y^2, E = (1+t)^-1/2", |y| y * y, |t| (1.0 + t).powf(-0.5)),
    ];
    for (label, w, e) in general_cases {
        let report = measure(&e, &w)?;
        let m = report.m;
        let r = report.total_integral / m;
        let gw = GeneralWeight::new(w, f64::INFINITY);
        let bound = |t: f64| gw.decay_bound(r, m, t);
        let grid = geometric_grid(m / w(r), 1e4 * m / w(r), 100);
        checks.push(pointwise(format!("general weight theorem, {label}"), m, &e, &bound, &grid)?);
    }

    Ok(LemmaSuiteReport { checks })
}
