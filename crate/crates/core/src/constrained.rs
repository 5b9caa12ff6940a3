//! Adversarial adherence with a cardinality budget: the decision maker follows
//! the recommendation in at most `k` states, chosen adversarially.

use std::io::Write;

use rayon::prelude::*;

use crate::adherence::{effective_policy_per_state, var_v};
use crate::enumerate::{binary_vectors_up_to, count_subsets_up_to, guard};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_policy, induced_chain};
use crate::lp::{LpModel, Sense};
use crate::mdp::MdpInstance;
use crate::policy::StationaryPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CardinalityBudget {
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedResult {
    pub worst_u: Vec<u8>,
    pub worst_return: f64,
    pub subsets_evaluated: usize,
}

fn check_inputs(
    inst: &MdpInstance,
    pi_alg: &StationaryPolicy,
    pi_base: &StationaryPolicy,
    budget: CardinalityBudget,
) -> Result<()> {
    inst.ensure_valid()?;
    pi_alg.ensure_compatible(inst)?;
    pi_base.ensure_compatible(inst)?;
    if budget.k > inst.n_states() {
        return Err(Error::InvalidArgument(format!(
            "budget k = {} exceeds the number of states {}",
            budget.k,
            inst.n_states()
        )));
    }
    Ok(())
}

/// Exhaustive minimum of `R(π_eff(π_alg, u))` over binary `u` with `Σu ≤ k`.
/// Ties (within `1e-12`) resolve to the lexicographically smallest `u`.
pub fn evaluate_constrained(
    inst: &MdpInstance,
    pi_alg: &StationaryPolicy,
    pi_base: &StationaryPolicy,
    budget: CardinalityBudget,
) -> Result<ConstrainedResult> {
    check_inputs(inst, pi_alg, pi_base, budget)?;
    let n = inst.n_states();
    guard("adherence subsets", count_subsets_up_to(n, budget.k))?;
    let candidates = binary_vectors_up_to(n, budget.k);
    let returns: Vec<f64> = candidates
        .par_iter()
        .map(|u| {
            let uf: Vec<f64> = u.iter().map(|&x| x as f64).collect();
            let eff = effective_policy_per_state(pi_alg, pi_base, &uf)?;
            Ok(evaluate_policy(inst, &eff)?.1)
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &r) in returns.iter().enumerate().skip(1) {
        if r < returns[best] - 1e-12 {
            best = i;
        }
    }
    Ok(ConstrainedResult {
        worst_u: candidates[best].clone(),
        worst_return: returns[best],
        subsets_evaluated: candidates.len(),
    })
}

fn var_z(s: usize) -> String {
    format!("z_{s}")
}

fn var_u(s: usize) -> String {
    format!("u_{s}")
}

/// Mixed-integer model of the constrained adversary.
///
/// Variables `v_s, z_s` free and `u_s` binary, where `z_s` stands for
/// `u_s · y_s` with `y_s = Σ_a (π_alg − π_base)_sa P_sa·v`:
///
/// ```text
/// min p0·v
///   v_s − λ z_s − λ Σ_a π_base,sa P_sa·v − c_s u_s ≥ b_s
///   −M (1 − u_s) ≤ z_s − y_s ≤ M (1 − u_s)
///   −(r∞/(1−λ)) u_s ≤ z_s ≤ M u_s
///   Σ_s u_s ≤ k
/// ```
///
/// with `M = 2 r∞/(1−λ)`, `b_s = Σ_a π_base,sa P_sa·r_sa` and
/// `c_s = Σ_a (π_alg − π_base)_sa P_sa·r_sa`. The bounds on `y_s` assume
/// non-negative rewards.
pub fn mip_model(
    inst: &MdpInstance,
    pi_alg: &StationaryPolicy,
    pi_base: &StationaryPolicy,
    budget: CardinalityBudget,
) -> Result<LpModel> {
    check_inputs(inst, pi_alg, pi_base, budget)?;
    let n = inst.n_states();
    let lambda = inst.discount();
    let r_inf = inst.r_max();
    let scale = r_inf / (1.0 - lambda);
    let big_m = 2.0 * scale;
    let (base_chain, base_reward) = induced_chain(inst, pi_base);
    let (alg_chain, alg_reward) = induced_chain(inst, pi_alg);

    let mut model = LpModel::default();
    model.comments.push(format!(
        "cardinality-constrained adherence adversary: {n} states, k = {}, discount {lambda}",
        budget.k
    ));
    model.objective = (0..n).map(|s| (var_v(s), inst.initial_dist()[s])).collect();

    for s in 0..n {
        let mut terms: Vec<(String, f64)> = (0..n)
            .map(|k| {
                let id = if k == s { 1.0 } else { 0.0 };
                (var_v(k), id - lambda * base_chain[s * n + k])
            })
            .collect();
        terms.push((var_z(s), -lambda));
        terms.push((var_u(s), -(alg_reward[s] - base_reward[s])));
        model.add_constraint(format!("value_{s}"), terms, Sense::Ge, base_reward[s]);
    }
    for s in 0..n {
        // z_s − y_s − M u_s ≥ −M  and  z_s − y_s + M u_s ≤ M
        let band = |sign: f64| -> Vec<(String, f64)> {
            let mut t = vec![(var_z(s), 1.0)];
            t.extend((0..n).map(|k| (var_v(k), -(alg_chain[s * n + k] - base_chain[s * n + k]))));
            t.push((var_u(s), sign * big_m));
            t
        };
        model.add_constraint(format!("band_lo_{s}"), band(-1.0), Sense::Ge, -big_m);
        model.add_constraint(format!("band_hi_{s}"), band(1.0), Sense::Le, big_m);
    }
    for s in 0..n {
        model.add_constraint(
            format!("zlo_{s}"),
            vec![(var_z(s), 1.0), (var_u(s), scale)],
            Sense::Ge,
            0.0,
        );
        model.add_constraint(
            format!("zhi_{s}"),
            vec![(var_z(s), 1.0), (var_u(s), -big_m)],
            Sense::Le,
            0.0,
        );
    }
    model.add_constraint(
        "cardinality",
        (0..n).map(|s| (var_u(s), 1.0)).collect(),
        Sense::Le,
        budget.k as f64,
    );
    model.free_vars = (0..n).map(var_v).chain((0..n).map(var_z)).collect();
    model.binary_vars = (0..n).map(var_u).collect();
    Ok(model)
}

/// Writes [`mip_model`] in CPLEX LP format.
pub fn export_mip<W: Write>(
    inst: &MdpInstance,
    pi_alg: &StationaryPolicy,
    pi_base: &StationaryPolicy,
    budget: CardinalityBudget,
    sink: &mut W,
) -> Result<()> {
    mip_model(inst, pi_alg, pi_base, budget)?.write(sink)?;
    Ok(())
}
