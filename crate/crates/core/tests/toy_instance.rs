mod common;

use adamdp::adherence::{effective_scalar, solve_scalar};
use adamdp::adversarial::{adversary_best_response, check_saddle, AdversaryKind, AdversaryModel};
use adamdp::analysis::{deterioration_curve, theta_sweep, value_similar_check, worst_case_family};
use adamdp::evaluation::{evaluate_policy, policy_return, solve_nominal};
use adamdp::instances::{toy_alg_return, toy_counterexample, toy_theta_bar, toy_theta_tilde};
use adamdp::robust::{robust_theta_solve, ThetaInterval};
use common::*;

fn toy(eps: f64) -> adamdp::InstanceBundle {
    toy_counterexample(0.5, eps).unwrap()
}

#[test]
fn closed_form_constants() {
    assert!((toy_theta_tilde(0.5) - 0.95).abs() < 1e-15);
    assert!((toy_theta_bar(0.5) - 0.9).abs() < 1e-15);
}

#[test]
fn library_closed_form_agrees_with_oracle() {
    let mut rng = Lcg(11);
    for _ in 0..20 {
        let lambda = 0.05 + 0.9 * rng.next_f64();
        let theta = rng.next_f64();
        assert!((toy_alg_return(lambda, -1.0, theta) - toy_quadratic_minus(lambda, theta)).abs() < 1e-10);
        assert!((toy_alg_return(lambda, 1.0, theta) - toy_quadratic_plus(lambda, theta)).abs() < 1e-10);
    }
}

#[test]
fn effective_returns_follow_quadratics_for_random_discounts() {
    let mut rng = Lcg(3);
    for _ in 0..20 {
        let lambda = 0.05 + 0.9 * rng.next_f64();
        let theta = rng.next_f64();
        for (eps, oracle) in [
            (-1.0, toy_quadratic_minus as fn(f64, f64) -> f64),
            (1.0, toy_quadratic_plus),
        ] {
            let b = toy_counterexample(lambda, eps).unwrap();
            let eff = effective_scalar(b.baseline("alg").unwrap(), b.baseline("base").unwrap(), theta).unwrap();
            let r = policy_return(&b.instance, &eff).unwrap();
            assert!((r - oracle(lambda, theta)).abs() < 1e-8, "λ={lambda} θ={theta} ε={eps}");
        }
    }
}

#[test]
fn nominal_optimum_is_opt() {
    let b = toy(-1.0);
    let res = solve_nominal(&b.instance, 1e-10).unwrap();
    assert_eq!(res.recommendation.actions().unwrap(), vec![1, 0, 0, 0, 0]);
    assert!((res.ret - 0.55).abs() < 1e-12);
}

#[test]
fn top_segment_recommends_nominal_optimum() {
    let b = toy(-1.0);
    let res = solve_scalar(&b.instance, b.baseline("base").unwrap(), 0.95, 1e-10).unwrap();
    assert_eq!(res.recommendation, *b.baseline("opt").unwrap());
    // v1 = λ(θ v2 + (1−θ) v3) with v2 = 0.1 + θ, v3 = 1
    assert!((res.ret - 0.52375).abs() < 1e-12);
}

#[test]
fn below_threshold_recommendation_is_as_good_as_baseline() {
    let b = toy(-1.0);
    let base = b.baseline("base").unwrap();
    let res = solve_scalar(&b.instance, base, 0.5, 1e-10).unwrap();
    assert!((res.ret - 0.5).abs() < 1e-12);
    assert_eq!(res.recommendation.action(0), base.action(0));
    assert_eq!(res.recommendation.action(2), base.action(2));
}

#[test]
fn sweep_finds_single_breakpoint() {
    let b = toy(-1.0);
    let base = b.baseline("base").unwrap();
    let sw = theta_sweep(&b.instance, base, 101, 1e-6).unwrap();
    assert_eq!(sw.breakpoints.len(), 1, "{:?}", sw.breakpoints);
    assert!((sw.breakpoints[0] - 0.9).abs() <= 1e-5);
    assert_eq!(sw.segments.len(), 2);
    assert_eq!(sw.segments[1].recommendation, *b.baseline("opt").unwrap());
    assert!(sw.top_is_nominal);
    let lower = &sw.segments[0].recommendation;
    assert!((policy_return(&b.instance, lower).unwrap() - 0.5).abs() < 1e-12);
    assert!(sw.returns_opt.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn deterioration_at_half_and_one() {
    let b = toy(-1.0);
    let base = b.baseline("base").unwrap();
    let d = deterioration_curve(&b.instance, base, &[0.5, 1.0]).unwrap();
    // R_opt = 0.5; naive uses π*(1) whose return at θ = 0.5 is 0.4
    assert!((d[0] - 0.2).abs() < 1e-10, "{}", d[0]);
    assert!(d[1].abs() < 1e-12);
}

#[test]
fn complementarity_beats_both_policies() {
    let b = toy(1.0);
    let (alg, base) = (b.baseline("alg").unwrap(), b.baseline("base").unwrap());
    let r_eff = policy_return(&b.instance, &effective_scalar(alg, base, 0.5).unwrap()).unwrap();
    assert!((r_eff - 0.775).abs() < 1e-12);
    assert!(r_eff > 0.55 + 1e-6);
}

#[test]
fn saddle_on_toy() {
    let b = toy(-1.0);
    let base = b.baseline("base").unwrap();
    for theta in [0.0, 0.5, 0.95, 1.0] {
        let rep = check_saddle(&b.instance, base, theta, 1e-6).unwrap();
        assert!(rep.passed, "θ={theta}: {rep:?}");
        assert!(rep.unconstrained_u.iter().all(|&u| u == theta));
    }
    let rep = check_saddle(&b.instance, base, 0.95, 1e-6).unwrap();
    assert!((rep.optimum.ret - 0.52375).abs() < 1e-10);
    assert!((rep.scalar_max_min - 0.52375).abs() < 1e-10);
}

#[test]
fn adversary_against_baseline_returns_baseline() {
    let b = toy(-1.0);
    let base = b.baseline("base").unwrap();
    let m = AdversaryModel {
        kind: AdversaryKind::Unconstrained,
        theta: 0.3,
    };
    let r = adversary_best_response(&b.instance, base, base, m, 1e-10).unwrap();
    assert!((r.worst_return - 0.5).abs() < 1e-12);
    assert!(r.worst_u.iter().all(|&u| u == 0.3));
}

#[test]
fn adversary_state_invariant_kinds_are_rejected() {
    let b = toy(-1.0);
    let base = b.baseline("base").unwrap();
    for kind in [AdversaryKind::StateInvariant, AdversaryKind::TimeStateInvariant] {
        let m = AdversaryModel { kind, theta: 0.5 };
        assert!(adversary_best_response(&b.instance, base, base, m, 1e-8).is_err());
    }
}

#[test]
fn worst_case_gap_reaches_target() {
    let w = worst_case_family(10.0, 0.5).unwrap();
    assert!(w.gap >= 10.0 && w.gap_opt >= 10.0 && w.gap_alg >= 10.0, "{w:?}");
    assert!((w.gap_alg - w.closed_form_gap).abs() < 1e-6 * w.gap_alg.max(1.0));
    // opt only pays for the detour through state 2, so its gap binds
    assert!((w.gap - 10.0).abs() < 1e-6 && w.gap == w.gap_opt);
    let zero = worst_case_family(0.0, 0.5).unwrap();
    assert!(zero.gap >= 0.0);
    assert!(worst_case_family(1.0, 1.0).is_err());
}

#[test]
fn absorbing_state_value_is_preserved() {
    let b = toy(-1.0);
    let base = b.baseline("base").unwrap();
    let rep = value_similar_check(&b.instance, base, 3, &[0.0, 0.3, 0.7, 1.0], 1e-9).unwrap();
    assert!(rep.precondition_met && rep.holds);
    assert!((rep.reference_value - 2.0).abs() < 1e-12);
    // state 2 (index 1): baseline goes to the zero-reward sink
    let neg = value_similar_check(&b.instance, base, 1, &[0.5], 1e-9).unwrap();
    assert!(!neg.precondition_met);
}

#[test]
fn robust_theta_on_toy() {
    let b = toy(-1.0);
    let base = b.baseline("base").unwrap();
    let r = robust_theta_solve(&b.instance, base, ThetaInterval::new(0.5, 1.0).unwrap(), 1e-6).unwrap();
    assert!((r.result.ret - 0.5).abs() < 1e-10);
    assert!(r.certificate.holds);
    let r = robust_theta_solve(&b.instance, base, ThetaInterval::new(0.95, 1.0).unwrap(), 1e-6).unwrap();
    assert_eq!(r.result.recommendation, *b.baseline("opt").unwrap());
    assert!(r.certificate.holds);
}

#[test]
fn exact_evaluation_of_alg_matches_closed_form() {
    let b = toy(-1.0);
    let (v, r) = evaluate_policy(&b.instance, b.baseline("alg").unwrap()).unwrap();
    assert!((r - 0.55).abs() < 1e-12);
    assert!((v[3] - 2.0).abs() < 1e-12 && v[4].abs() < 1e-12);
}
