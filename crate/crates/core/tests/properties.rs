use proptest::prelude::*;

use decaylab::convex::{
    conjugate, envelope_general, envelope_simplified, eval_l, inverse_l, psi0_eval, psi0_inverse, DecayEnvelope, GeneralWeight,
};
use decaylab::harness::fit::{fit_tail_exponent, FitMode};
use decaylab::harness::inequality::{check_integral_inequality, Signal, TailMode};
use decaylab::{Family, FeedbackLaw};

fn nonlinear_family() -> impl Strategy<Value = Family> {
    prop_oneof![
        (1.2f64..7.0).prop_map(|p| Family::Power { p }),
        Just(Family::ExpInvSquare),
        // q/p < ln 2 keeps the default r0 = 1/2 below the turning point
        (2.5f64..5.0, 1.1f64..1.7).prop_map(|(p, q)| Family::PowerLog { p, q }),
        (2.2f64..5.0).prop_map(|p| Family::SubExponential { p }),
    ]
}

fn any_family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Linear), nonlinear_family()]
}

fn build(family: Family) -> FeedbackLaw {
    FeedbackLaw::with_default_r0(family).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_lies_in_unit_interval(family in any_family(), frac in 1e-3f64..1.0) {
        let law = build(family);
        // power_log close to its turning point is increasing but not convex
        prop_assume!(law.convexity_check(400).unwrap().strictly_convex);
        let l = law.lambda_h(frac * law.x_max()).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&l), "Λ = {l}");
    }

    #[test]
    fn h_prime_matches_central_difference(p in 1.5f64..6.0, frac in 0.05f64..0.95) {
        let law = build(Family::Power { p });
        let x = frac * law.x_max();
        let h = 1e-6 * x;
        let fd = (law.h(x + h).unwrap() - law.h(x - h).unwrap()) / (2.0 * h);
        let exact = law.h_prime(x).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-12), "{fd} vs {exact}");
    }

    #[test]
    fn feedback_extension_is_odd_and_monotone(family in any_family(), s in -3.0f64..3.0, ds in 1e-6f64..1.0) {
        let law = build(family);
        prop_assert_eq!(law.g_hat(-s), -law.g_hat(s));
        prop_assert!(law.g_hat(s + ds) >= law.g_hat(s));
        prop_assert_eq!(law.rho(0.0, s), 0.0);
    }

    #[test]
    fn fenchel_inequality(family in nonlinear_family(), xf in 0.0f64..1.0, y in 0.0f64..20.0) {
        let law = build(family);
        let x = xf * law.x_max();
        let gap = law.h(x).unwrap() + conjugate(&law, y).unwrap() - x * y;
        prop_assert!(gap >= -1e-12 * (1.0 + x * y), "gap {gap}");
    }

    #[test]
    fn l_round_trip(p in 1.5f64..6.0, frac in 0.01f64..0.99) {
        let law = build(Family::Power { p });
        let y = frac * law.h_prime_max();
        let back = inverse_l(&law, eval_l(&law, y).unwrap()).unwrap();
        prop_assert!((back - y).abs() <= 1e-9 * law.h_prime_max(), "{back} vs {y}");
    }

    #[test]
    fn psi0_monotone_and_invertible(family in nonlinear_family(), a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let law = build(family);
        let start = 1.0 / law.h_prime_max();
        let (lo, hi) = (start + a.min(b), start + a.max(b) + 1e-3);
        let (plo, phi) = (psi0_eval(&law, lo).unwrap(), psi0_eval(&law, hi).unwrap());
        prop_assert!(phi > plo && plo >= lo * (1.0 - 1e-12));
        let back = psi0_inverse(&law, phi).unwrap();
        prop_assert!((back - hi).abs() <= 1e-8 * hi.max(1.0), "{back} vs {hi}");
    }

    #[test]
    fn psi_r_dominates_identity(alpha in 0.5f64..3.0, r in 0.1f64..2.0, extra in 0.0f64..100.0) {
        let gw = GeneralWeight::new(move |y: f64| y.powf(alpha), f64::INFINITY);
        let z = 1.0 / gw.w(r) + extra;
        prop_assert!(gw.psi_r(r, z).unwrap() >= z);
    }

    #[test]
    fn upper_envelopes_nonincreasing(p in 1.5f64..6.0, beta in 0.1f64..10.0, m in 0.1f64..10.0, t in 0.0f64..1e3, dt in 1e-3f64..1e3) {
        let law = build(Family::Power { p });
        let general = DecayEnvelope::general(law, beta, m);
        let simplified = DecayEnvelope::simplified(law, beta, m, 1.0);
        let t = t + general.domain_start().max(simplified.domain_start());
        prop_assert!(envelope_general(&general, t + dt).unwrap() <= envelope_general(&general, t).unwrap() * (1.0 + 1e-9));
        prop_assert!(envelope_simplified(&simplified, t + dt).unwrap() <= envelope_simplified(&simplified, t).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn cubic_simplified_closed_form(beta in 0.1f64..10.0, km in 0.1f64..10.0, t in 1.0f64..1e4) {
        // H = x² gives (H')⁻¹(s) = s/2, so the envelope is βκM/t
        let env = DecayEnvelope::simplified(build(Family::Power { p: 3.0 }), beta, km, 1.0);
        let t = t + env.domain_start();
        let v = envelope_simplified(&env, t).unwrap();
        prop_assert!((v - beta * km / t).abs() <= 1e-12 * v, "{v}");
    }

    #[test]
    fn measured_m_is_tight(rate in 0.5f64..3.0, decay in 0.2f64..2.0) {
        let energy = move |t: f64| (1.0 + rate * t).powf(-decay);
        let weight = |y: f64| y;
        let signal = Signal::Function { energy: &energy, start: 0.0, last_start: 40.0, horizon: f64::INFINITY };
        let measured = check_integral_inequality(&signal, &weight, f64::INFINITY, TailMode::Finite).unwrap();
        prop_assume!(measured.m.is_finite());
        let again = check_integral_inequality(&signal, &weight, measured.m * (1.0 + 1e-9), TailMode::Finite).unwrap();
        prop_assert!(again.passes);
        let tight = check_integral_inequality(&signal, &weight, measured.m * (1.0 - 1e-3), TailMode::Finite).unwrap();
        prop_assert!(!tight.passes);
    }

    #[test]
    fn exact_power_law_is_recovered(k in -4.0f64..-0.1, c in 0.01f64..100.0) {
        let pts: Vec<(f64, f64)> = (0..100).map(|i| 10f64.powf(1.0 + 3.0 * i as f64 / 99.0)).map(|t| (t, c * t.powf(k))).collect();
        let fit = fit_tail_exponent(&pts, (10.0, 1e4), FitMode::Power).unwrap();
        prop_assert!((fit.slope - k).abs() < 5e-4, "{} vs {k}", fit.slope);
    }
}
