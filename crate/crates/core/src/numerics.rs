//! Scalar numerical kernels shared by the calculus, comparison and harness
//! modules: adaptive Simpson quadrature, monotone inversion by bisection,
//! bracketed Newton, an embedded Dormand–Prince integrator and ordinary
//! least squares.

use crate::error::{Error, Result};

/// Adaptive Simpson quadrature with a relative tolerance.
#[derive(Debug, Clone, Copy)]
pub struct Simpson {
    pub rel_tol: f64,
    /// Absolute floor on the error target; guards integrals that vanish.
    pub abs_tol: f64,
    pub max_subintervals: usize,
}

impl Default for Simpson {
    fn default() -> Self {
        Simpson { rel_tol: 1e-10, abs_tol: 1e-300, max_subintervals: 1_000_000 }
    }
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

impl Simpson {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Simpson { rel_tol, ..Default::default() }
    }

    /// Integrates `f` over `[a, b]`. Reversed bounds flip the sign.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        if b < a {
            return self.integrate(f, b, a).map(|v| -v);
        }
        // Coarse pass on 16 panels sets the scale of the error target.
        const START: usize = 16;
        let h = (b - a) / START as f64;
        let mut panels = Vec::with_capacity(START);
        let mut coarse = 0.0;
        let mut f_left = f(a);
        for k in 0..START {
            let pa = a + k as f64 * h;
            let pb = if k + 1 == START { b } else { a + (k + 1) as f64 * h };
            let pm = 0.5 * (pa + pb);
            let fm = f(pm);
            let fb = f(pb);
            let whole = (pb - pa) / 6.0 * (f_left + 4.0 * fm + fb);
            coarse += whole;
            panels.push(Panel { a: pa, b: pb, fa: f_left, fm, fb, whole, tol: 0.0, depth: 0 });
            f_left = fb;
        }
        if !coarse.is_finite() {
            return Ok(coarse);
        }
        let target = (self.rel_tol * coarse.abs()).max(self.abs_tol);
        for p in panels.iter_mut() {
            p.tol = target / START as f64;
        }

        let mut total = 0.0;
        let mut comp = 0.0;
        let mut count = START;
        while let Some(p) = panels.pop() {
            let m = 0.5 * (p.a + p.b);
            let lm = 0.5 * (p.a + m);
            let rm = 0.5 * (m + p.b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
            let right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
            let refined = left + right;
            let delta = refined - p.whole;
            if delta.abs() <= 15.0 * p.tol || p.depth >= 50 || m <= p.a || m >= p.b {
                // Kahan summation of accepted panels
                let y = refined + delta / 15.0 - comp;
                let t = total + y;
                comp = (t - total) - y;
                total = t;
                continue;
            }
            count += 1;
            if count > self.max_subintervals {
                return Err(Error::Quadrature(self.max_subintervals));
            }
            let tol = 0.5 * p.tol;
            let depth = p.depth + 1;
            panels.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, tol, depth });
            panels.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, tol, depth });
        }
        Ok(total)
    }
}

/// Bisection for a nondecreasing `f` on `[lo, hi]` with `f(lo) <= target <= f(hi)`.
///
/// Stops when the bracket is narrower than `tol` or can no longer be split
/// in floating point.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..2000 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Regula falsi with the Illinois modification for an increasing `f` with
/// `f(lo) <= target <= f(hi)`. Stops once `|f(x) - target| <= ftol`, or the
/// bracket is narrower than `xtol`.
pub fn illinois_increasing<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64, xtol: f64, ftol: f64) -> f64 {
    let mut flo = f(lo) - target;
    let mut fhi = f(hi) - target;
    if flo >= 0.0 {
        return lo;
    }
    if fhi <= 0.0 {
        return hi;
    }
    let mut side = 0i8;
    for _ in 0..500 {
        let mut x = hi - fhi * (hi - lo) / (fhi - flo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x) - target;
        if fx.abs() <= ftol || hi - lo <= xtol || fx.is_nan() {
            return x;
        }
        if fx < 0.0 {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (lo + hi)
}

/// Inverts a nondecreasing `f` on `[lo, +inf)`, doubling the upper bracket
/// until it passes `target`.
pub fn invert_unbounded<F: Fn(f64) -> f64>(f: F, target: f64, lo: f64, initial_hi: f64, tol: f64) -> Result<f64> {
    let mut hi = initial_hi.max(lo + tol).max(f64::MIN_POSITIVE);
    let mut base = lo;
    let mut expansions = 0;
    while f(hi) < target {
        base = hi;
        hi *= 2.0;
        expansions += 1;
        if !hi.is_finite() || expansions > 1100 {
            return Err(Error::domain(target, "range of the inverted map"));
        }
    }
    Ok(bisect_increasing(f, target, base, hi, tol))
}

/// Newton's method safeguarded by a sign-change bracket `[lo, hi]` of an
/// increasing function. Returns the root and the final residual.
pub fn newton_bracketed<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, x0: f64, tol: f64, max_iter: usize) -> std::result::Result<f64, f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut x = x0.clamp(lo, hi);
    let mut fx = f(x);
    for _ in 0..max_iter {
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        fx = f(x);
        if step <= tol || hi - lo <= tol {
            return Ok(x);
        }
    }
    Err(fx)
}

/// Result of an ordinary least squares line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub r_squared: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(LineFit { slope, intercept, stderr, r_squared })
}

/// Embedded Dormand–Prince 5(4) integrator for a scalar ODE.
#[derive(Debug, Clone, Copy)]
pub struct DormandPrince {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Reject any step whose result is not strictly positive.
    pub keep_positive: bool,
}

impl Default for DormandPrince {
    fn default() -> Self {
        DormandPrince { rel_tol: 1e-10, abs_tol: 1e-16, max_steps: 5_000_000, keep_positive: false }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl DormandPrince {
    /// Integrates `y' = f(t, y)` from `(t0, y0)` and reports `y` at each of
    /// `outputs` (nondecreasing, all `>= t0`). Steps are clipped to land on
    /// the output times exactly.
    pub fn solve<F: Fn(f64, f64) -> f64>(&self, f: F, t0: f64, y0: f64, outputs: &[f64]) -> Result<Vec<f64>> {
        let mut t = t0;
        let mut y = y0;
        let mut h = 1e-3_f64.max(1e-6 * outputs.last().map_or(1.0, |&e| (e - t0).abs()));
        let mut steps = 0usize;
        let mut out = Vec::with_capacity(outputs.len());
        let mut k1 = f(t, y);
        for &target in outputs {
            if target < t {
                return Err(Error::domain(target, format!("output times must be >= {t}")));
            }
            while t < target {
                steps += 1;
                if steps > self.max_steps {
                    return Err(Error::StepBudget(t));
                }
                let clipped = (target - t) <= h;
                let hh = if clipped { target - t } else { h };
                let mut k = [0.0; 7];
                k[0] = k1;
                for i in 1..7 {
                    let acc: f64 = (0..i).map(|j| A[i][j] * k[j]).sum();
                    k[i] = f(t + C[i] * hh, y + hh * acc);
                }
                let y5 = y + hh * (0..7).map(|i| B5[i] * k[i]).sum::<f64>();
                let y4 = y + hh * (0..7).map(|i| B4[i] * k[i]).sum::<f64>();
                let scale = self.abs_tol + self.rel_tol * y.abs().max(y5.abs());
                let err = ((y5 - y4) / scale).abs();
                let positive_ok = !self.keep_positive || y5 > 0.0;
                if err <= 1.0 && y5.is_finite() && positive_ok {
                    t = if clipped { target } else { t + hh };
                    y = y5;
                    // FSAL: the last stage is f at the new point
                    k1 = k[6];
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if !clipped {
                        h = hh * grow;
                    }
                } else {
                    let shrink = if err.is_finite() && positive_ok { (0.9 * err.powf(-0.25)).clamp(0.1, 0.9) } else { 0.25 };
                    h = hh * shrink;
                    if h < 1e-300 {
                        return Err(Error::StepBudget(t));
                    }
                }
            }
            out.push(y);
        }
        Ok(out)
    }
}
