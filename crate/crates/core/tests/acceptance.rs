//! Acceptance criteria 1-10. Each test writes one PASS/FAIL line straight to
//! stdout so the lines show up without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use decaylab::comparison::{k_integral, k_inverse, solve_comparison_to};
use decaylab::convex::{conjugate, envelope_general, eval_l, inverse_l, psi0_eval, DecayEnvelope, WeightMode};
use decaylab::comparison::lower_envelope;
use decaylab::harness::experiment::{analyze_trace, measure_weighted_inequality, run_experiment, ExperimentOutcome};
use decaylab::harness::fit::{fit_tail_exponent, FitMode};
use decaylab::harness::inequality::lemma_suite;
use decaylab::harness::ExperimentConfig;
use decaylab::wave::{init_state, InitialProfile, Runner, SimParams};
use decaylab::{CoefficientField, Family, FeedbackLaw, Profile};

fn report(id: u32, passes: bool, detail: String) {
    let verdict = if passes { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{verdict} criterion {id:>2}: {detail}").unwrap();
    assert!(passes, "criterion {id} failed: {detail}");
}

fn info(id: u32, detail: String) {
    writeln!(std::io::stdout().lock(), "INFO criterion {id:>2}: {detail}").unwrap();
}

fn law(family: Family) -> FeedbackLaw {
    FeedbackLaw::with_default_r0(family).unwrap()
}

#[test]
fn calculus_closed_forms() {
    let clock = Instant::now();
    let cubic = law(Family::Power { p: 3.0 });
    let linear = law(Family::Linear);
    let mut cubic_err: f64 = 0.0;
    let mut linear_err: f64 = 0.0;
    for k in 1..=100 {
        let x = k as f64 / 100.0;
        cubic_err = cubic_err.max((cubic.lambda_h(x).unwrap() - 0.5).abs());
        linear_err = linear_err.max((linear.lambda_h(x * linear.x_max()).unwrap() - 1.0).abs());
    }
    let exp_limit = law(Family::ExpInvSquare).lambda_limit().extrapolated;
    let elapsed = clock.elapsed();
    let ok = cubic_err <= 1e-10 && linear_err <= 1e-10 && exp_limit < 1e-3 && elapsed < Duration::from_secs(1);
    report(1, ok, format!("p=3 err {cubic_err:.1e}, linear err {linear_err:.1e}, exp_inv_square limit {exp_limit:.1e}, {elapsed:.2?}"));
}

#[test]
fn conjugate_and_l() {
    let clock = Instant::now();
    let h = law(Family::Power { p: 3.0 });
    let c1 = conjugate(&h, 1.0).unwrap();
    let l2 = eval_l(&h, 2.0).unwrap();
    let l_top = eval_l(&h, h.h_prime_max()).unwrap();
    let mut round: f64 = 0.0;
    for k in 1..=100 {
        let y = 3.0 * k as f64 / 100.0;
        let z = eval_l(&h, y).unwrap();
        round = round.max((inverse_l(&h, z).unwrap() - y).abs());
    }
    let mut fenchel_worst = f64::INFINITY;
    for i in 0..200 {
        let x = h.x_max() * i as f64 / 199.0;
        let hx = h.h(x).unwrap();
        for j in 0..200 {
            let y = 4.0 * j as f64 / 199.0;
            fenchel_worst = fenchel_worst.min(hx + conjugate(&h, y).unwrap() - x * y);
        }
    }
    let elapsed = clock.elapsed();
    let ok = (c1 - 0.25).abs() < 1e-12
        && (l2 - 0.5).abs() < 1e-12
        && l_top > 0.0
        && l_top < h.x_max()
        && round <= 1e-9
        && fenchel_worst >= -1e-12
        && elapsed < Duration::from_secs(5);
    report(
        2,
        ok,
        format!("H*(1) = {c1}, L(2) = {l2}, L(H'(r0²)) = {l_top}, round trip {round:.1e}, Fenchel min gap {fenchel_worst:.1e}, {elapsed:.2?}"),
    );
}

#[test]
fn psi0_and_general_envelope() {
    let mut worst: f64 = 0.0;
    for p in [3.0, 5.0] {
        let h = law(Family::Power { p });
        let start = 1.0 / h.h_prime_max();
        for k in 0..50 {
            let x = start + 0.37 * k as f64 * (1.0 + k as f64);
            let closed = start + (p + 1.0) / (p - 1.0) * (x - start);
            worst = worst.max((psi0_eval(&h, x).unwrap() - closed).abs());
        }
    }
    let env = DecayEnvelope::general(law(Family::Power { p: 3.0 }), 1.0, 1.0);
    let at10 = envelope_general(&env, 10.0).unwrap();
    let ok = worst <= 1e-8 && (at10 - 0.0952381).abs() <= 1e-7;
    report(3, ok, format!("ψ₀ max error {worst:.1e}, general envelope at t=10 {at10:.9}"));
}

fn standing_wave(law: FeedbackLaw, t_final: f64) -> SimParams {
    let mut p = SimParams::new(law, 399, 0.9, t_final);
    p.initial.u0 = InitialProfile::Sine { amplitude: 1.0, mode: 1 };
    p.initial.v0 = InitialProfile::Bump { amplitude: 0.5, center: 0.3, width: 0.4 };
    p
}

/// Max relative drift and max per-step relative rise of the discrete energy.
fn energy_history(p: &SimParams) -> (f64, f64) {
    let mut st = init_state(p).unwrap();
    let e0 = st.energy().0;
    let steps = (p.t_final / p.dt).round() as usize;
    let (mut drift, mut rise): (f64, f64) = (0.0, 0.0);
    let mut last = e0;
    for _ in 0..steps {
        st.step().unwrap();
        let e = st.energy().0;
        drift = drift.max((e - e0).abs() / e0);
        rise = rise.max((e - last) / e0);
        last = e;
    }
    (drift, rise)
}

#[test]
fn energy_identities() {
    let clock = Instant::now();
    let cubic = law(Family::Power { p: 3.0 });
    let uncoupled = standing_wave(cubic, 50.0);
    let (free_drift, _) = energy_history(&uncoupled);

    let mut coupled = standing_wave(cubic, 50.0);
    coupled.alpha = Some(CoefficientField::indicator((0.4, 0.9), 0.2));
    let (coupled_drift, _) = energy_history(&coupled);

    let mut worst_rise: f64 = f64::NEG_INFINITY;
    for family in [Family::Linear, Family::Power { p: 3.0 }, Family::Power { p: 5.0 }, Family::ExpInvSquare] {
        let mut damped = standing_wave(law(family), 50.0);
        damped.alpha = Some(CoefficientField::indicator((0.4, 0.9), 0.2));
        damped.damping = Some(CoefficientField::indicator((0.2, 0.6), 1.0));
        worst_rise = worst_rise.max(energy_history(&damped).1);
    }
    let elapsed = clock.elapsed();
    let ok = free_drift <= 1e-6 && coupled_drift <= 1e-6 && worst_rise <= 1e-11 && elapsed < Duration::from_secs(30);
    report(
        4,
        ok,
        format!("uncoupled drift {free_drift:.1e}, coupled drift {coupled_drift:.1e}, worst damped rise {worst_rise:.1e}·E(0), {elapsed:.2?}"),
    );
}

/// Max over steps in `[0.5, 1]` of `|ΔE/Δt - (D(n-1/2) + D(n+1/2))/2|`.
fn dissipation_defect(cfl: f64) -> f64 {
    let mut p = SimParams::new(law(Family::Power { p: 3.0 }), 199, cfl, 1.0);
    // velocities stay below r0, where the feedback is smooth
    p.initial.u0 = InitialProfile::Sine { amplitude: 0.1, mode: 1 };
    p.damping = Some(CoefficientField { profile: Profile::SmoothBump, support: (0.2, 0.6), floor: 1.0, cap: None });
    p.alpha = Some(CoefficientField { profile: Profile::SmoothBump, support: (0.4, 0.9), floor: 0.2, cap: None });
    let mut st = init_state(&p).unwrap();
    let mut worst: f64 = 0.0;
    while st.t < 1.0 - 0.5 * st.dt {
        let (e_before, d_before) = (st.energy().0, st.dissipation_rate());
        st.step().unwrap();
        let (e_after, d_after) = (st.energy().0, st.dissipation_rate());
        if st.t >= 0.5 {
            let rate = (e_after - e_before) / st.dt;
            worst = worst.max((rate - 0.5 * (d_before + d_after)).abs());
        }
    }
    worst
}

#[test]
fn dissipation_order() {
    let defects: Vec<f64> = [0.8, 0.4, 0.2].into_iter().map(dissipation_defect).collect();
    let orders: Vec<f64> = defects.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let ok = orders.iter().all(|&o| o >= 1.8);
    report(5, ok, format!("defects {:.2e} {:.2e} {:.2e}, observed orders {:.3} {:.3}", defects[0], defects[1], defects[2], orders[0], orders[1]));
}

const CUBIC: &str = r#"
    name = "cubic"
    [law]
    family = "power"
    p = 3.0
    [coefficients]
    damping = { profile = "indicator", support = [0.2, 0.6], floor = 1.0 }
    alpha = { profile = "indicator", support = [0.4, 0.9], floor = 0.2 }
    [initial]
    u0 = { kind = "sine", amplitude = 1.0, mode = 1 }
    [grid]
    n = 399
    [time]
    t_final = 2000.0
    sample_interval = 1.0
    smooth_data = true
"#;

struct CubicRuns {
    outcome: ExperimentOutcome,
    points_2000: Vec<(f64, f64)>,
    points_4000: Vec<(f64, f64)>,
    seconds_2000: f64,
}

fn cubic_runs() -> &'static CubicRuns {
    static RUNS: OnceLock<CubicRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let clock = Instant::now();
        let cfg = ExperimentConfig::from_toml(CUBIC).unwrap();
        let mut runner = Runner::new(&cfg.sim_params().unwrap()).unwrap();
        runner.advance_to(2000.0).unwrap();
        let first = runner.trace.clone();
        let outcome = analyze_trace(&cfg, first).unwrap();
        let seconds_2000 = clock.elapsed().as_secs_f64();
        runner.advance_to(4000.0).unwrap();
        let points = |s: &[decaylab::wave::TraceSample]| s.iter().map(|s| (s.t, s.e)).collect::<Vec<_>>();
        CubicRuns {
            points_2000: points(&outcome.trace.samples),
            points_4000: points(&runner.trace.samples),
            outcome,
            seconds_2000,
        }
    })
}

#[test]
fn cubic_tail_slope_in_bracket() {
    let runs = cubic_runs();
    let fit = runs.outcome.fit.as_ref().expect("damped run is fitted");
    let e0 = runs.points_2000[0].1;
    let rise = runs.points_2000.windows(2).map(|w| (w[1].1 - w[0].1) / e0).fold(f64::NEG_INFINITY, f64::max);
    if let Some((lo, hi)) = fit.envelope_margins {
        info(6, format!("left-edge matched simplified envelope margins [{lo:.3}, {hi:.3}] (reported only)"));
    }
    let upper = runs.outcome.get("upper_general_max_margin").unwrap_or("missing");
    let ok = (-2.3..=-0.7).contains(&fit.slope) && rise <= 1e-11 && runs.seconds_2000 < 120.0;
    report(
        6,
        ok,
        format!(
            "slope {:.4} (r² {:.4}) on [{:.0}, {:.0}], general envelope max margin {upper}, {:.1}s",
            fit.slope, fit.r_squared, fit.window.0, fit.window.1, runs.seconds_2000
        ),
    );
}

#[test]
fn weighted_inequality_stability() {
    let runs = cubic_runs();
    let h = law(Family::Power { p: 3.0 });
    let beta = runs.outcome.get("beta").unwrap().parse::<f64>().unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for mode in [WeightMode::Optimal, WeightMode::Polynomial] {
        let short = measure_weighted_inequality(&runs.points_2000, &h, beta, mode).unwrap().m;
        let long = measure_weighted_inequality(&runs.points_4000, &h, beta, mode).unwrap().m;
        let change = (long - short).abs() / short;
        ok &= short.is_finite() && long.is_finite() && change < 0.1;
        parts.push(format!("{mode:?} M {short:.4} -> {long:.4} ({:.2}%)", 100.0 * change));
    }
    report(7, ok, parts.join(", "));
}

#[test]
fn lemma_checks() {
    let clock = Instant::now();
    let suite = lemma_suite().unwrap();
    let elapsed = clock.elapsed();
    let general = suite.checks.iter().find(|c| c.name.contains("w(y) = y,")).expect("w(y) = y case present");
    let failed: Vec<&str> = suite.checks.iter().filter(|c| !c.passes).map(|c| c.name.as_str()).collect();
    let ok = suite.passes() && general.passes && elapsed < Duration::from_secs(5);
    report(
        8,
        ok,
        format!(
            "{} checks, failed {:?}; w(y) = y: M = {:.6}, min bound/E {:.4}; {elapsed:.2?}",
            suite.checks.len(),
            failed,
            general.constant,
            general.min_ratio
        ),
    );
}

#[test]
fn comparison_ode() {
    let cubic = law(Family::Power { p: 3.0 });
    let sol = solve_comparison_to(&cubic, 1.0, 1.0, 100.0, 1001).unwrap();
    let ode = sol.samples.iter().map(|&(t, z)| (z - 1.0 / (1.0 + t)).abs()).fold(0.0, f64::max);

    let quint = law(Family::Power { p: 5.0 });
    let (kappa, z0) = (2.0, 0.5);
    let sol = solve_comparison_to(&quint, kappa, z0, 20.0, 101).unwrap();
    let mut identity: f64 = 0.0;
    for &(t, z) in &sol.samples[1..] {
        identity = identity.max((z - k_inverse(&quint, kappa * t, z0).unwrap()).abs());
        identity = identity.max((k_integral(&quint, z, z0).unwrap() - kappa * t).abs() / (kappa * t));
    }

    let env = DecayEnvelope::lower(cubic, 1.0, 1.0, 0.0, 0.0);
    let pts: Vec<(f64, f64)> = (0..200)
        .map(|i| 10.0 * 1e3f64.powf(i as f64 / 199.0))
        .map(|t| (t, lower_envelope(&env, t).unwrap()))
        .collect();
    let slope = fit_tail_exponent(&pts, (10.0, 1e4), FitMode::Power).unwrap().slope;
    let ok = ode <= 1e-8 && identity <= 1e-8 && (slope + 2.0).abs() <= 0.005;
    report(9, ok, format!("ODE error {ode:.1e}, K identity error {identity:.1e}, lower envelope slope {slope:.5}"));
}

const LINEAR: &str = r#"
    name = "linear"
    [law]
    family = "linear"
    [coefficients]
    damping = { profile = "indicator", support = [0.2, 0.6], floor = 1.0 }
    alpha = { profile = "indicator", support = [0.4, 0.9], floor = 0.2 }
    [initial]
    u0 = { kind = "sine", amplitude = 1.0, mode = 1 }
    [time]
    t_final = 200.0
    sample_interval = 0.5
    [fit]
    mode = "exponential"
"#;

#[test]
fn linear_exponential() {
    let cfg = ExperimentConfig::from_toml(LINEAR).unwrap();
    let outcome = run_experiment(&cfg).unwrap();
    let fit = outcome.fit.as_ref().unwrap();
    let ok = fit.slope < 0.0 && fit.r_squared >= 0.98;
    report(
        10,
        ok,
        format!(
            "rate {:.5}, r² {:.5} on [{:.0}, {:.0}], E(end)/E(0) {:.2e}",
            fit.slope,
            fit.r_squared,
            fit.window.0,
            fit.window.1,
            outcome.trace.samples.last().unwrap().e / outcome.trace.e0()
        ),
    );
}

#[test]
fn standing_mode_energy_sanity() {
    let p = standing_wave(law(Family::Power { p: 3.0 }), 1.0);
    let mut only_sine = p.clone();
    only_sine.initial.v0 = InitialProfile::Zero;
    let e0 = init_state(&only_sine).unwrap().energy().0;
    assert!((e0 - PI * PI / 4.0).abs() < 1e-3);
}
