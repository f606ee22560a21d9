//! Quick battery behind the `suite` subcommand: the lemma checks plus a
//! handful of invariants of each module at small scale.

use std::f64::consts::PI;

use crate::comparison::{k_inverse, solve_comparison_to};
use crate::convex::{conjugate, eval_l, inverse_l, psi0_eval};
use crate::error::Result;
use crate::feedback::{CoefficientField, Family, FeedbackLaw};
use crate::harness::inequality::{check_integral_inequality, lemma_suite, Signal, TailMode};
use crate::wave::{init_state, InitialProfile, SimParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteLine {
    pub name: String,
    pub passes: bool,
    pub detail: String,
}

fn line(name: &str, passes: bool, detail: String) -> SuiteLine {
    SuiteLine { name: name.to_string(), passes, detail }
}

fn power(p: f64) -> Result<FeedbackLaw> {
    FeedbackLaw::new(Family::Power { p }, 1.0)
}

pub fn run_suite() -> Result<Vec<SuiteLine>> {
    let mut out = Vec::new();

    for check in lemma_suite()?.checks {
        out.push(line(&check.name, check.passes, format!("constant {:.6e}, min bound/E {:.6e}", check.constant, check.min_ratio)));
    }

    let cubic = power(3.0)?;
    let mut worst: f64 = 0.0;
    for k in 1..=100 {
        worst = worst.max((cubic.lambda_h(k as f64 / 100.0)? - 0.5).abs());
    }
    out.push(line("Λ_H of x² is 1/2", worst <= 1e-10, format!("max error {worst:.3e}")));

    let exp = FeedbackLaw::with_default_r0(Family::ExpInvSquare)?;
    let lim = exp.lambda_limit().extrapolated;
    out.push(line("Λ_H of exp_inv_square tends to 0", lim < 1e-3, format!("estimate {lim:.3e}")));

    let c = conjugate(&cubic, 1.0)?;
    let l = eval_l(&cubic, 2.0)?;
    out.push(line("conjugate of x² at 1 and L(2)", (c - 0.25).abs() < 1e-12 && (l - 0.5).abs() < 1e-12, format!("{c}, {l}")));

    let mut round: f64 = 0.0;
    for k in 1..=100 {
        let y = 2.0 * k as f64 / 100.0;
        round = round.max((inverse_l(&cubic, eval_l(&cubic, y)?)? - y).abs());
    }
    out.push(line("L⁻¹ ∘ L = id", round <= 1e-9, format!("max error {round:.3e}")));

    let mut psi_err: f64 = 0.0;
    for p in [3.0, 5.0] {
        let law = power(p)?;
        let start = 1.0 / law.h_prime_max();
        for k in 0..50 {
            let x = start + k as f64;
            let closed = start + (p + 1.0) / (p - 1.0) * (x - start);
            psi_err = psi_err.max((psi0_eval(&law, x)? - closed).abs());
        }
    }
    out.push(line("ψ₀ closed form for p = 3, 5", psi_err <= 1e-8, format!("max error {psi_err:.3e}")));

    let sol = solve_comparison_to(&cubic, 1.0, 1.0, 100.0, 101)?;
    let ode = sol.samples.iter().map(|&(t, z)| (z - 1.0 / (1.0 + t)).abs()).fold(0.0, f64::max);
    out.push(line("z' = -z² against 1/(1+t)", ode <= 1e-8, format!("max error {ode:.3e}")));

    let quint = power(5.0)?;
    let sol = solve_comparison_to(&quint, 2.0, 0.5, 10.0, 11)?;
    let mut kz: f64 = 0.0;
    for &(t, z) in &sol.samples {
        kz = kz.max((z - k_inverse(&quint, 2.0 * t, 0.5)?).abs());
    }
    out.push(line("z(t) = K⁻¹(κt)", kz <= 1e-8, format!("max error {kz:.3e}")));

    let signal = |e: &dyn Fn(f64) -> f64| {
        let s = Signal::Function { energy: e, start: 0.0, last_start: 50.0, horizon: f64::INFINITY };
        check_integral_inequality(&s, &|y| y, f64::INFINITY, TailMode::Finite).map(|r| r.m)
    };
    let m = signal(&|t| 1.0 / (1.0 + t))?;
    out.push(line("measured M for 1/(1+t), w(y) = y", (m - 1.0).abs() < 1e-6, format!("M = {m:.9}")));

    // short runs of the simulator
    let mut p = SimParams::new(cubic, 199, 0.5, 5.0);
    p.initial.u0 = InitialProfile::Sine { amplitude: 1.0, mode: 1 };
    let mut st = init_state(&p)?;
    let e0 = st.energy().0;
    out.push(line("standing mode energy π²/4", (e0 - PI * PI / 4.0).abs() < 1e-3, format!("E(0) = {e0:.7}")));
    let mut drift: f64 = 0.0;
    for _ in 0..2000 {
        st.step()?;
        drift = drift.max((st.energy().0 - e0).abs() / e0);
    }
    out.push(line("undamped energy conserved", drift <= 1e-10, format!("max drift {drift:.3e}")));

    p.alpha = Some(CoefficientField::indicator((0.4, 0.9), 0.2));
    p.damping = Some(CoefficientField::indicator((0.2, 0.6), 1.0));
    let mut st = init_state(&p)?;
    let e0 = st.energy().0;
    let mut identity: f64 = 0.0;
    let mut rise: f64 = 0.0;
    for _ in 0..2000 {
        let before = st.energy().0;
        let info = st.step()?;
        let after = st.energy().0;
        identity = identity.max((after - before - st.dt * info.dissipation).abs() / e0);
        rise = rise.max((after - before) / e0);
    }
    out.push(line("damped step removes exactly dt·dissipation", identity <= 1e-12, format!("max defect {identity:.3e}")));
    out.push(line("damped energy nonincreasing", rise <= 1e-11, format!("max rise {rise:.3e}")));

    Ok(out)
}
