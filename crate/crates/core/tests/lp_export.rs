mod common;

use std::collections::HashMap;

use adamdp::adherence::{export_lp, solve_adamdp, AdherenceSpec};
use adamdp::constrained::{evaluate_constrained, export_mip, CardinalityBudget};
use adamdp::instances::{single_state, toy_counterexample};
use adamdp::random::{random_deterministic_policy, random_instance, random_policy};
use common::lp_grammar::*;
use common::*;

#[test]
fn single_state_lp() {
    let b = single_state(0.5).unwrap();
    let mut buf = Vec::new();
    export_lp(
        &b.instance,
        b.baseline("base").unwrap(),
        &AdherenceSpec::Scalar(0.3),
        &mut buf,
    )
    .unwrap();
    let p = parse_lp(std::str::from_utf8(&buf).unwrap());
    assert_eq!(p.constraints.len(), 1);
    assert_eq!(p.free, vec!["v_0"]);
    assert_eq!(p.constraints[0].1, vec![("v_0".to_string(), 0.5)]);
    assert_eq!(p.constraints[0].3, 1.0);
}

#[test]
fn lp_counts_and_optimal_point() {
    for (inst, base, theta) in [
        {
            let b = toy_counterexample(0.5, -1.0).unwrap();
            let base = b.baseline("base").unwrap().clone();
            (b.instance, base, 1.0)
        },
        (random_instance(5, 3, 0.8, 12), random_policy(5, 3, 13), 0.4),
    ] {
        let mut buf = Vec::new();
        export_lp(&inst, &base, &AdherenceSpec::Scalar(theta), &mut buf).unwrap();
        let p = parse_lp(std::str::from_utf8(&buf).unwrap());
        assert_eq!(p.constraints.len(), inst.n_states() * inst.n_actions());
        assert_eq!(p.free.len(), inst.n_states());
        // the optimal value function is feasible and attains the return
        let res = solve_adamdp(&inst, &base, &AdherenceSpec::Scalar(theta), 1e-12).unwrap();
        let x: HashMap<String, f64> = (0..inst.n_states()).map(|s| (format!("v_{s}"), res.value[s])).collect();
        assert!(satisfied(&p, &x, 1e-9));
        assert!((lhs(&p.objective, &x) - res.ret).abs() < 1e-9);
        // and lowering any coordinate breaks feasibility
        for s in 0..inst.n_states() {
            if inst.initial_dist()[s] > 0.0 {
                let mut y = x.clone();
                *y.get_mut(&format!("v_{s}")).unwrap() -= 1e-4;
                assert!(!satisfied(&p, &y, 1e-9));
            }
        }
    }
}

#[test]
fn mip_structure_and_feasible_optimum() {
    let inst = random_instance(4, 2, 0.8, 31);
    let alg = random_deterministic_policy(4, 2, 32);
    let base = random_policy(4, 2, 33);
    for k in 0..=4 {
        let budget = CardinalityBudget { k };
        let mut buf = Vec::new();
        export_mip(&inst, &alg, &base, budget, &mut buf).unwrap();
        let p = parse_lp(std::str::from_utf8(&buf).unwrap());
        assert_eq!(p.constraints.len(), 4 + 2 * 4 + 2 * 4 + 1);
        assert_eq!(p.free.len(), 8);
        assert_eq!(p.binary.len(), 4);

        let worst = evaluate_constrained(&inst, &alg, &base, budget).unwrap();
        let u: Vec<f64> = worst.worst_u.iter().map(|&b| b as f64).collect();
        let v = values_of(&inst, &mixture(&alg, &base, &u));
        let mut x = HashMap::new();
        for s in 0..4 {
            let y: f64 = (0..2)
                .map(|a| {
                    let w = alg.prob(s, a) - base.prob(s, a);
                    w * (0..4).map(|k| inst.prob(s, a, k) * v[k]).sum::<f64>()
                })
                .sum();
            x.insert(format!("v_{s}"), v[s]);
            x.insert(format!("u_{s}"), u[s]);
            x.insert(format!("z_{s}"), u[s] * y);
        }
        assert!(satisfied(&p, &x, 1e-9), "k = {k}");
        assert!((lhs(&p.objective, &x) - worst.worst_return).abs() < 1e-9);
        // u over budget violates the cardinality row
        let mut over = x.clone();
        for s in 0..4 {
            over.insert(format!("u_{s}"), 1.0);
        }
        if k < 4 {
            assert!(!satisfied(&p, &over, 1e-9));
        }
    }
}
