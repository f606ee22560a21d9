//! Finite-difference solver for the velocity-coupled wave system on `(0, 1)`
//!
//! ```text
//! u_tt - u_xx + α(x) v_t + a(x) ĝ(u_t) = 0
//! v_tt - v_xx - α(x) u_t = 0
//! ```
//!
//! with homogeneous Dirichlet ends. The scheme is leapfrog in time with the
//! coupling and damping terms evaluated at the centered velocity
//! `(w^{n+1} - w^{n-1}) / 2dt`. With the staggered energy
//!
//! ```text
//! E^{n+1/2} = ½ Σ dx [ ((u^{n+1}-u^n)/dt)² + D u^{n+1} · D u^n + (same for v) ]
//! ```
//!
//! one step satisfies `E^{n+1/2} - E^{n-1/2} = -dt Σ dx s ρ(x, s)` exactly,
//! where `s` is the centered velocity of `u`: the coupling cancels and only
//! the damping removes energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{CoefficientField, FeedbackLaw};
use crate::numerics::newton_bracketed;

/// Initial displacement or velocity profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum InitialProfile {
    #[default]
    Zero,
    /// `amplitude * sin(mode π x)`
    Sine { amplitude: f64, mode: u32 },
    /// `amplitude * cos⁴(π (x - center) / width)` on `|x - center| < width/2`
    Bump { amplitude: f64, center: f64, width: f64 },
}


impl InitialProfile {
    pub fn value(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            InitialProfile::Zero => 0.0,
            InitialProfile::Sine { amplitude, mode } => amplitude * (mode as f64 * PI * x).sin(),
            InitialProfile::Bump { amplitude, center, width } => {
                let d = x - center;
                if d.abs() >= 0.5 * width {
                    0.0
                } else {
                    amplitude * (PI * d / width).cos().powi(4)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InitialProfile::Sine { mode: 0, .. } => Err(Error::Config("sine mode must be >= 1".into())),
            InitialProfile::Bump { width, .. } if !(width > 0.0) => Err(Error::Config("bump width must be positive".into())),
            _ => {
                let (left, right) = (self.value(0.0), self.value(1.0));
                if left.abs() > 1e-12 || right.abs() > 1e-12 {
                    return Err(Error::Config(format!("initial profile is nonzero on the boundary ({left}, {right})")));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    #[serde(default)]
    pub u0: InitialProfile,
    #[serde(default)]
    pub u1: InitialProfile,
    #[serde(default)]
    pub v0: InitialProfile,
    #[serde(default)]
    pub v1: InitialProfile,
}

impl InitialData {
    pub fn is_zero(&self) -> bool {
        [self.u0, self.u1, self.v0, self.v1].iter().all(|p| match *p {
            InitialProfile::Zero => true,
            InitialProfile::Sine { amplitude, .. } | InitialProfile::Bump { amplitude, .. } => amplitude == 0.0,
        })
    }
}

/// Default bound standing in for the smallness threshold on `α_+`.
pub const DEFAULT_ALPHA_MAX: f64 = 0.2;

/// Everything needed to start and run a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub law: FeedbackLaw,
    /// Coupling `α(x)`; `None` means `α ≡ 0`.
    pub alpha: Option<CoefficientField>,
    /// Damping coefficient `a(x)`; `None` means `a ≡ 0`.
    pub damping: Option<CoefficientField>,
    pub alpha_max: f64,
    pub initial: InitialData,
    /// Interior grid points; `dx = 1/(n+1)`.
    pub n: usize,
    pub dt: f64,
    pub cfl: f64,
    pub t_final: f64,
    /// Steps between trace samples.
    pub sample_stride: usize,
    /// Track the first-order energy `E1`.
    pub smooth_data: bool,
}

impl SimParams {
    /// Grid with `dx = 1/(n+1)` and `dt = cfl * dx`.
    pub fn new(law: FeedbackLaw, n: usize, cfl: f64, t_final: f64) -> Self {
        let dx = 1.0 / (n + 1) as f64;
        SimParams {
            law,
            alpha: None,
            damping: None,
            alpha_max: DEFAULT_ALPHA_MAX,
            initial: InitialData::default(),
            n,
            dt: cfl * dx,
            cfl,
            t_final,
            sample_stride: 1,
            smooth_data: false,
        }
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    /// Sample roughly every `interval` time units.
    pub fn with_sample_interval(mut self, interval: f64) -> Self {
        self.sample_stride = ((interval / self.dt).round() as usize).max(1);
        self
    }
}

/// Nodal samples of a coefficient field on the interior grid.
///
/// `alpha_max`, when given, bounds the field's cap (coupling smallness).
pub fn build_coefficients(field: &CoefficientField, n: usize, alpha_max: Option<f64>) -> Result<Vec<f64>> {
    field.validate()?;
    if let Some(limit) = alpha_max {
        if field.level() > limit {
            return Err(Error::InvalidParameter(format!("α_+ = {} exceeds α_max = {limit}", field.level())));
        }
    }
    let dx = 1.0 / (n + 1) as f64;
    Ok((1..=n).map(|i| field.value(i as f64 * dx)).collect())
}

/// Discrete fields at two consecutive time levels.
#[derive(Debug, Clone)]
pub struct WaveState {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub u_prev: Vec<f64>,
    pub u_curr: Vec<f64>,
    pub v_prev: Vec<f64>,
    pub v_curr: Vec<f64>,
    pub alpha: Vec<f64>,
    pub a: Vec<f64>,
    pub law: FeedbackLaw,
    /// Time of the `curr` level.
    pub t: f64,
    pub steps: u64,
    /// `E1` at the latest level, when tracked.
    pub e1: Option<f64>,
    track_e1: bool,
    u_next: Vec<f64>,
    v_next: Vec<f64>,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// `-Σ dx s ρ(x, s)` at the centered velocity; equals the exact
    /// energy change divided by `dt`.
    pub dissipation: f64,
}

fn laplacian_at(w: &[f64], i: usize, inv_dx2: f64) -> f64 {
    let left = if i == 0 { 0.0 } else { w[i - 1] };
    let right = if i + 1 == w.len() { 0.0 } else { w[i + 1] };
    (left - 2.0 * w[i] + right) * inv_dx2
}

/// `Σ_{j=0}^{n} dx D a_j D b_j` with zero Dirichlet ends.
fn gradient_product(a: &[f64], b: &[f64], dx: f64) -> f64 {
    let n = a.len();
    let mut sum = 0.0;
    for j in 0..=n {
        let al = if j == 0 { 0.0 } else { a[j - 1] };
        let ar = if j == n { 0.0 } else { a[j] };
        let bl = if j == 0 { 0.0 } else { b[j - 1] };
        let br = if j == n { 0.0 } else { b[j] };
        sum += (ar - al) * (br - bl);
    }
    sum / dx
}

fn sum_sq(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum()
}

/// Builds the initial state, including the Taylor start for the `prev` level.
pub fn init_state(params: &SimParams) -> Result<WaveState> {
    let n = params.n;
    if n < 2 {
        return Err(Error::Config(format!("grid needs at least 2 interior points, got {n}")));
    }
    if !(params.cfl > 0.0 && params.cfl < 1.0) {
        return Err(Error::Config(format!("cfl must lie in (0, 1), got {}", params.cfl)));
    }
    let dx = params.dx();
    let dt = params.dt;
    let limit = params.cfl * dx;
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    for p in [params.initial.u0, params.initial.u1, params.initial.v0, params.initial.v1] {
        p.validate()?;
    }
    let alpha = match &params.alpha {
        Some(f) => build_coefficients(f, n, Some(params.alpha_max))?,
        None => vec![0.0; n],
    };
    let a = match &params.damping {
        Some(f) => build_coefficients(f, n, None)?,
        None => vec![0.0; n],
    };
    let nodal = |p: InitialProfile| -> Vec<f64> { (1..=n).map(|i| p.value(i as f64 * dx)).collect() };
    let u0 = nodal(params.initial.u0);
    let u1 = nodal(params.initial.u1);
    let v0 = nodal(params.initial.v0);
    let v1 = nodal(params.initial.v1);
    let law = params.law;
    let inv_dx2 = 1.0 / (dx * dx);

    let mut u_prev = vec![0.0; n];
    let mut v_prev = vec![0.0; n];
    let mut u_acc = vec![0.0; n];
    let mut v_acc = vec![0.0; n];
    for i in 0..n {
        u_acc[i] = laplacian_at(&u0, i, inv_dx2) - alpha[i] * v1[i] - law.rho(a[i], u1[i]);
        v_acc[i] = laplacian_at(&v0, i, inv_dx2) + alpha[i] * u1[i];
        u_prev[i] = u0[i] - dt * u1[i] + 0.5 * dt * dt * u_acc[i];
        v_prev[i] = v0[i] - dt * v1[i] + 0.5 * dt * dt * v_acc[i];
    }
    let e1 = params.smooth_data.then(|| {
        0.5 * (dx * (sum_sq(&u_acc) + sum_sq(&v_acc)) + gradient_product(&u1, &u1, dx) + gradient_product(&v1, &v1, dx))
    });
    Ok(WaveState {
        n,
        dx,
        dt,
        u_prev,
        u_curr: u0,
        v_prev,
        v_curr: v0,
        alpha,
        a,
        law,
        t: 0.0,
        steps: 0,
        e1,
        track_e1: params.smooth_data,
        u_next: vec![0.0; n],
        v_next: vec![0.0; n],
    })
}

const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 200;

impl WaveState {
    /// Advances one time step.
    pub fn step(&mut self) -> Result<StepInfo> {
        self.step_inner(self.track_e1)
    }

    fn step_inner(&mut self, compute_e1: bool) -> Result<StepInfo> {
        let n = self.n;
        let dt = self.dt;
        let half = 0.5 * dt;
        let inv_dx2 = 1.0 / (self.dx * self.dx);
        let law = self.law;
        let mut dissipation = 0.0;
        for i in 0..n {
            let uc = self.u_curr[i];
            let vc = self.v_curr[i];
            let up = self.u_prev[i];
            let vp = self.v_prev[i];
            let fu = 2.0 * (uc - up) / (dt * dt) + laplacian_at(&self.u_curr, i, inv_dx2);
            let fv = 2.0 * (vc - vp) / (dt * dt) + laplacian_at(&self.v_curr, i, inv_dx2);
            let al = self.alpha[i];
            let ai = self.a[i];
            let c = 1.0 + (al * half) * (al * half);
            let rhs = half * (fu - al * half * fv) / c;
            let s = if ai == 0.0 {
                rhs
            } else {
                // s + k ĝ(s) = rhs with k >= 0: increasing, root between 0 and rhs
                let k = half * ai / c;
                let (lo, hi) = if rhs >= 0.0 { (0.0, rhs) } else { (rhs, 0.0) };
                let guess = ((uc - up) / dt).clamp(lo, hi);
                let f = |s: f64| s + k * law.g_hat(s) - rhs;
                let df = |s: f64| 1.0 + k * law.g_hat_prime(s);
                match newton_bracketed(f, df, lo, hi, guess, NEWTON_TOL, NEWTON_MAX_ITER) {
                    Ok(s) => s,
                    Err(residual) => return Err(Error::RootSolve { node: i + 1, residual }),
                }
            };
            let w = half * (fv + al * s);
            self.u_next[i] = up + 2.0 * dt * s;
            self.v_next[i] = vp + 2.0 * dt * w;
            dissipation -= s * law.rho(ai, s);
        }
        dissipation *= self.dx;

        if compute_e1 {
            self.e1 = Some(self.second_order_energy());
        }
        // rotate levels: prev <- curr <- next
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
        std::mem::swap(&mut self.u_curr, &mut self.u_next);
        std::mem::swap(&mut self.v_prev, &mut self.v_curr);
        std::mem::swap(&mut self.v_curr, &mut self.v_next);
        self.steps += 1;
        self.t = self.steps as f64 * dt;
        Ok(StepInfo { dissipation })
    }

    // E1 from second differences in time around the current level, using
    // the freshly computed `next` level.
    fn second_order_energy(&self) -> f64 {
        let (dt, dx, n) = (self.dt, self.dx, self.n);
        let mut acc = 0.0;
        let mut grad = 0.0;
        let mut prev = (0.0, 0.0);
        for i in 0..=n {
            let cur = if i < n {
                let utt = (self.u_next[i] - 2.0 * self.u_curr[i] + self.u_prev[i]) / (dt * dt);
                let vtt = (self.v_next[i] - 2.0 * self.v_curr[i] + self.v_prev[i]) / (dt * dt);
                acc += utt * utt + vtt * vtt;
                ((self.u_next[i] - self.u_prev[i]) / (2.0 * dt), (self.v_next[i] - self.v_prev[i]) / (2.0 * dt))
            } else {
                (0.0, 0.0)
            };
            grad += (cur.0 - prev.0).powi(2) + (cur.1 - prev.1).powi(2);
            prev = cur;
        }
        0.5 * (dx * acc + grad / dx)
    }

    /// Swaps the two time levels; with `a ≡ 0` stepping afterwards runs the
    /// scheme backwards in time.
    pub fn reverse_time(&mut self) {
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
        std::mem::swap(&mut self.v_prev, &mut self.v_curr);
    }

    /// Staggered discrete energy (located half a step behind `t`) and `E1` if tracked.
    pub fn energy(&self) -> (f64, Option<f64>) {
        let dt = self.dt;
        let mut kinetic = 0.0;
        for i in 0..self.n {
            let du = (self.u_curr[i] - self.u_prev[i]) / dt;
            let dv = (self.v_curr[i] - self.v_prev[i]) / dt;
            kinetic += du * du + dv * dv;
        }
        let potential = gradient_product(&self.u_curr, &self.u_prev, self.dx) + gradient_product(&self.v_curr, &self.v_prev, self.dx);
        (0.5 * (self.dx * kinetic + potential), self.e1)
    }

    /// `-Σ dx w ρ(x, w)` at the half-step velocity `w = (u_curr - u_prev)/dt`.
    pub fn dissipation_rate(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            if self.a[i] != 0.0 {
                let w = (self.u_curr[i] - self.u_prev[i]) / self.dt;
                sum += w * self.law.rho(self.a[i], w);
            }
        }
        -sum * self.dx
    }
}

/// One row of an energy trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub e: f64,
    /// NaN when not tracked.
    pub e1: f64,
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceMeta {
    pub digest: String,
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    /// Largest per-sample increase of `E`, relative to `E(0)`.
    pub max_relative_increase: f64,
    /// Stopped on the numerical floor `E < 1e-14 E(0)`.
    pub hit_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyTrace {
    pub samples: Vec<TraceSample>,
    pub meta: TraceMeta,
}

impl EnergyTrace {
    pub fn e0(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.e)
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.e).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(80 * (self.samples.len() + 1));
        out.push_str("t,E,E1,dissipation\n");
        for s in &self.samples {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", s.t, s.e, s.e1, s.dissipation));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "t,E,E1,dissipation" => {}
            other => return Err(Error::Trace(format!("bad header {other:?}"))),
        }
        let mut samples = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Trace(format!("row {} has {} columns", k + 2, cols.len())));
            }
            let mut vals = [0.0; 4];
            for (v, c) in vals.iter_mut().zip(&cols) {
                *v = c.trim().parse().map_err(|_| Error::Trace(format!("row {}: cannot parse {c:?}", k + 2)))?;
            }
            samples.push(TraceSample { t: vals[0], e: vals[1], e1: vals[2], dissipation: vals[3] });
        }
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Trace("times are not strictly increasing".into()));
        }
        Ok(EnergyTrace { samples, meta: TraceMeta::default() })
    }
}

/// A simulation that can be advanced in stages while accumulating its trace.
#[derive(Debug, Clone)]
pub struct Runner {
    pub state: WaveState,
    pub trace: EnergyTrace,
    stride: u64,
    zero: bool,
}

impl Runner {
    pub fn new(params: &SimParams) -> Result<Self> {
        let state = init_state(params)?;
        let first = Self::sample(&state);
        let meta = TraceMeta { n: state.n, dx: state.dx, dt: state.dt, ..Default::default() };
        Ok(Runner {
            state,
            trace: EnergyTrace { samples: vec![first], meta },
            stride: params.sample_stride.max(1) as u64,
            zero: params.initial.is_zero(),
        })
    }

    fn sample(st: &WaveState) -> TraceSample {
        let (e, e1) = st.energy();
        TraceSample { t: st.t, e, e1: e1.unwrap_or(f64::NAN), dissipation: st.dissipation_rate() }
    }

    /// Steps until `t_final` (rounded to whole steps), or the energy floor.
    pub fn advance_to(&mut self, t_final: f64) -> Result<()> {
        let total_steps = (t_final / self.state.dt).round() as u64;
        let e0 = self.trace.e0();
        if self.zero {
            // the zero solution is a fixed point of the scheme
            let e1 = self.trace.samples[0].e1;
            while self.state.steps + self.stride <= total_steps {
                self.state.steps += self.stride;
                self.state.t = self.state.steps as f64 * self.state.dt;
                self.trace.samples.push(TraceSample { t: self.state.t, e: 0.0, e1, dissipation: 0.0 });
            }
            return Ok(());
        }
        while self.state.steps < total_steps && !self.trace.meta.hit_floor {
            let next = self.state.steps + 1;
            let sampled = next.is_multiple_of(self.stride) || next == total_steps;
            self.state.step_inner(self.state.track_e1 && sampled)?;
            if self.state.steps.is_multiple_of(self.stride) || self.state.steps == total_steps {
                let s = Self::sample(&self.state);
                let last = self.trace.samples.last().expect("nonempty").e;
                if e0 > 0.0 {
                    let inc = (s.e - last) / e0;
                    self.trace.meta.max_relative_increase = self.trace.meta.max_relative_increase.max(inc);
                }
                self.trace.samples.push(s);
                if s.e < 1e-14 * e0 {
                    self.trace.meta.hit_floor = true;
                }
            }
        }
        Ok(())
    }
}

/// Runs a simulation to `t_final`, sampling every `sample_stride` steps.
pub fn run(params: &SimParams) -> Result<EnergyTrace> {
    let mut runner = Runner::new(params)?;
    runner.advance_to(params.t_final)?;
    Ok(runner.trace)
}
