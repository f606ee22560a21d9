//! Tail regressions of `log E` against transformed time.

use crate::error::{Error, Result};
use crate::numerics::least_squares;

/// Abscissa used in the regression of `log E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMode {
    /// `log t`; slope is the power-law exponent.
    Power,
    /// `log log t`, for rates like `(ln t)^{-k}`.
    Log,
    /// `(ln t)^{1/p}`, for rates like `exp(-c (ln t)^{1/p})`.
    Stretched { p: f64 },
    /// `t`; slope is the exponential rate.
    Exponential,
}

impl FitMode {
    pub fn name(&self) -> &'static str {
        match self {
            FitMode::Power => "power",
            FitMode::Log => "log",
            FitMode::Stretched { .. } => "stretched",
            FitMode::Exponential => "exponential",
        }
    }

    fn abscissa(&self, t: f64) -> f64 {
        match *self {
            FitMode::Power => t.ln(),
            FitMode::Log => t.ln().ln(),
            FitMode::Stretched { p } => t.ln().powf(1.0 / p),
            FitMode::Exponential => t,
        }
    }

    /// Smallest time at which the abscissa is defined.
    fn min_time(&self) -> f64 {
        match self {
            FitMode::Power => 0.0,
            FitMode::Log | FitMode::Stretched { .. } => 1.0,
            FitMode::Exponential => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub mode: FitMode,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
    /// `(t_lo, t_hi)` of the samples actually used.
    pub window: (f64, f64),
    pub samples: usize,
    /// min/max of `E / envelope` over the window, when compared.
    pub envelope_margins: Option<(f64, f64)>,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares fit of `log E` over the `(t, E)` points with `t` in `window`.
pub fn fit_tail_exponent(points: &[(f64, f64)], window: (f64, f64), mode: FitMode) -> Result<FitReport> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("degenerate window ({lo}, {hi})")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut used = (f64::INFINITY, f64::NEG_INFINITY);
    for &(t, e) in points {
        if t < lo || t > hi || t <= mode.min_time() {
            continue;
        }
        if !(e > 0.0) {
            return Err(Error::Trace(format!("energy {e} at t = {t} is not positive inside the fit window")));
        }
        xs.push(mode.abscissa(t));
        ys.push(e.ln());
        used = (used.0.min(t), used.1.max(t));
    }
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(Error::Trace(format!("{} samples in fit window, need at least {MIN_FIT_SAMPLES}", xs.len())));
    }
    let line = least_squares(&xs, &ys).ok_or_else(|| Error::Trace("degenerate regression".into()))?;
    Ok(FitReport {
        mode,
        slope: line.slope,
        intercept: line.intercept,
        stderr: line.stderr,
        r_squared: line.r_squared,
        window: used,
        samples: xs.len(),
        envelope_margins: None,
    })
}

/// Window between the given fractions of the positive-time span, measured in
/// `log t` (or in `t` for the exponential mode).
pub fn fraction_window(points: &[(f64, f64)], lo_fraction: f64, hi_fraction: f64, mode: FitMode) -> Result<(f64, f64)> {
    let first = points.iter().map(|p| p.0).find(|&t| t > mode.min_time().max(0.0));
    let last = points.last().map(|p| p.0);
    let (Some(a), Some(b)) = (first, last) else {
        return Err(Error::Trace("trace has no samples at positive time".into()));
    };
    if !(b > a) {
        return Err(Error::Trace("trace spans no time".into()));
    }
    Ok(match mode {
        FitMode::Exponential => (a + lo_fraction * (b - a), a + hi_fraction * (b - a)),
        _ => {
            let (la, lb) = (a.ln(), b.ln());
            let at = |f: f64| if f >= 1.0 { b } else { (la + f * (lb - la)).exp() };
            (at(lo_fraction), at(hi_fraction))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).map(|t| (t, f(t))).collect()
    }

    #[test]
    fn exact_power_law() {
        let pts = sampled(|t| 5.0 / t, 10.0, 1000.0, 200);
        let fit = fit_tail_exponent(&pts, (10.0, 1000.0), FitMode::Power).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-3);
        assert!(fit.stderr >= 0.0 && fit.r_squared > 0.999999);
    }

    #[test]
    fn slope_tends_to_asymptotic_value() {
        let pts = sampled(|t| (1.0 + t).powi(-2), 1.0, 1e6, 600);
        let mut last_gap = f64::INFINITY;
        for lo in [1.0, 10.0, 100.0, 1e4] {
            let fit = fit_tail_exponent(&pts, (lo, 10.0 * lo), FitMode::Power).unwrap();
            let gap = (fit.slope + 2.0).abs();
            assert!(gap < last_gap);
            last_gap = gap;
        }
        assert!(last_gap < 1e-3);
    }

    #[test]
    fn other_modes() {
        let pts = sampled(|t| 3.0 * t.ln().powi(-2), 10.0, 1e8, 300);
        let fit = fit_tail_exponent(&pts, (10.0, 1e8), FitMode::Log).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-9);
        let pts = sampled(|t| (-0.7 * t.ln().sqrt()).exp(), 10.0, 1e8, 300);
        let fit = fit_tail_exponent(&pts, (10.0, 1e8), FitMode::Stretched { p: 2.0 }).unwrap();
        assert!((fit.slope + 0.7).abs() < 1e-9);
        let pts: Vec<_> = (0..100).map(|i| i as f64 * 0.1).map(|t| (t, 2.0 * (-0.3 * t).exp())).collect();
        let fit = fit_tail_exponent(&pts, (0.0, 10.0), FitMode::Exponential).unwrap();
        assert!((fit.slope + 0.3).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let pts = sampled(|t| 1.0 / t, 1.0, 10.0, 9);
        assert!(matches!(fit_tail_exponent(&pts, (1.0, 10.0), FitMode::Power), Err(Error::Trace(_))));
    }

    #[test]
    fn log_time_window() {
        let pts: Vec<_> = (0..=2000).map(|i| (i as f64, 1.0)).collect();
        let (lo, hi) = fraction_window(&pts, 2.0 / 3.0, 1.0, FitMode::Power).unwrap();
        assert!((lo - 2000f64.powf(2.0 / 3.0)).abs() < 1e-9 && hi == 2000.0);
        let (lo, _) = fraction_window(&pts, 0.5, 1.0, FitMode::Exponential).unwrap();
        assert!((lo - 1000.5).abs() < 1e-9);
    }
}
