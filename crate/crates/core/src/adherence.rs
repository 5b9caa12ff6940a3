//! Adherence-aware solving: effective policies, surrogate MDPs, the
//! adherence-aware value iteration and the LP export.

use std::io::Write;

use crate::error::{Error, Result};
use crate::evaluation::{argmax_lowest, evaluate_policy, fixed_point, solve_nominal, stopping_threshold};
use crate::lp::{LpModel, Sense};
use crate::mdp::MdpInstance;
use crate::policy::StationaryPolicy;

pub use crate::evaluation::SolveResult;

/// How strongly the decision maker follows recommendations.
#[derive(Clone, Debug, PartialEq)]
pub enum AdherenceSpec {
    /// One level `θ` for every state.
    Scalar(f64),
    /// A level `θ_s` per state.
    PerState(Vec<f64>),
    /// A level `θ_sa` per state and recommended action (`rows[s][a]`).
    /// Only meaningful with a deterministic baseline.
    PerStateAction(Vec<Vec<f64>>),
}

impl AdherenceSpec {
    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        match self {
            AdherenceSpec::Scalar(t) => {
                if !in_unit(*t) {
                    return Err(Error::InvalidSpec(format!("theta = {t} not in [0,1]")));
                }
            }
            AdherenceSpec::PerState(ts) => {
                if ts.len() != n_states {
                    return Err(Error::InvalidSpec(format!(
                        "{} per-state levels for {n_states} states",
                        ts.len()
                    )));
                }
                if let Some((s, t)) = ts.iter().enumerate().find(|(_, t)| !in_unit(**t)) {
                    return Err(Error::InvalidSpec(format!("theta[{s}] = {t} not in [0,1]")));
                }
            }
            AdherenceSpec::PerStateAction(rows) => {
                if rows.len() != n_states || rows.iter().any(|r| r.len() != n_actions) {
                    return Err(Error::InvalidSpec(format!(
                        "state-action levels must be {n_states}x{n_actions}"
                    )));
                }
                for (s, row) in rows.iter().enumerate() {
                    if let Some((a, t)) = row.iter().enumerate().find(|(_, t)| !in_unit(**t)) {
                        return Err(Error::InvalidSpec(format!("theta[{s}][{a}] = {t} not in [0,1]")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-state levels for the scalar and per-state variants.
    pub fn state_levels(&self, n_states: usize) -> Option<Vec<f64>> {
        match self {
            AdherenceSpec::Scalar(t) => Some(vec![*t; n_states]),
            AdherenceSpec::PerState(ts) => Some(ts.clone()),
            AdherenceSpec::PerStateAction(_) => None,
        }
    }
}

fn check_pair(pi_alg: &StationaryPolicy, pi_base: &StationaryPolicy) -> Result<()> {
    if pi_alg.n_states() != pi_base.n_states() || pi_alg.n_actions() != pi_base.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "recommendation is {}x{}, baseline is {}x{}",
            pi_alg.n_states(),
            pi_alg.n_actions(),
            pi_base.n_states(),
            pi_base.n_actions()
        )));
    }
    Ok(())
}

/// The policy executed when `pi_alg` is recommended to a decision maker whose
/// default behaviour is `pi_base`.
pub fn effective_policy(
    pi_alg: &StationaryPolicy,
    pi_base: &StationaryPolicy,
    spec: &AdherenceSpec,
) -> Result<StationaryPolicy> {
    check_pair(pi_alg, pi_base)?;
    let (n, m) = (pi_alg.n_states(), pi_alg.n_actions());
    spec.validate(n, m)?;
    let mut probs = vec![0.0; n * m];
    match spec {
        AdherenceSpec::PerStateAction(levels) => {
            let base_actions = pi_base.actions().ok_or(Error::RandomizedBaseline)?;
            for s in 0..n {
                let b = base_actions[s];
                let mut followed = 0.0;
                for a in 0..m {
                    if a != b {
                        let p = pi_alg.prob(s, a) * levels[s][a];
                        probs[s * m + a] = p;
                        followed += p;
                    }
                }
                probs[s * m + b] = 1.0 - followed;
            }
        }
        _ => {
            let levels = spec.state_levels(n).expect("scalar or per-state");
            for s in 0..n {
                let t = levels[s];
                for a in 0..m {
                    probs[s * m + a] = mix(t, pi_alg.prob(s, a), pi_base.prob(s, a));
                }
            }
        }
    }
    Ok(StationaryPolicy::from_flat_trusted(n, m, probs))
}

/// `θ x + (1 − θ) y`, exact at both endpoints.
#[inline]
pub(crate) fn mix(theta: f64, x: f64, y: f64) -> f64 {
    if theta == 1.0 {
        x
    } else if theta == 0.0 {
        y
    } else {
        theta * x + (1.0 - theta) * y
    }
}

/// Effective policy with a per-state adherence decision `u[s]`.
pub fn effective_policy_per_state(
    pi_alg: &StationaryPolicy,
    pi_base: &StationaryPolicy,
    u: &[f64],
) -> Result<StationaryPolicy> {
    effective_policy(pi_alg, pi_base, &AdherenceSpec::PerState(u.to_vec()))
}

/// Scalar-θ shorthand for [`effective_policy`].
pub fn effective_scalar(pi_alg: &StationaryPolicy, pi_base: &StationaryPolicy, theta: f64) -> Result<StationaryPolicy> {
    effective_policy(pi_alg, pi_base, &AdherenceSpec::Scalar(theta))
}

fn state_action_rewards_instance(inst: &MdpInstance, transitions: Vec<f64>, rewards_sa: &[f64]) -> Result<MdpInstance> {
    let (n, m) = (inst.n_states(), inst.n_actions());
    let mut rewards = vec![0.0; n * m * n];
    for sa in 0..n * m {
        rewards[sa * n..(sa + 1) * n].fill(rewards_sa[sa]);
    }
    MdpInstance::from_parts_unchecked(
        n,
        m,
        transitions,
        rewards,
        inst.initial_dist().to_vec(),
        inst.discount(),
    )
}

/// Surrogate MDP whose optimal policies are the optimal recommendations for a
/// scalar or per-state adherence level.
pub fn build_surrogate(inst: &MdpInstance, pi_base: &StationaryPolicy, spec: &AdherenceSpec) -> Result<MdpInstance> {
    pi_base.ensure_compatible(inst)?;
    let (n, m) = (inst.n_states(), inst.n_actions());
    spec.validate(n, m)?;
    let levels = spec
        .state_levels(n)
        .ok_or_else(|| Error::InvalidSpec("state-action levels use build_surrogate_state_action".into()))?;
    let mut transitions = vec![0.0; n * m * n];
    let mut rewards_sa = vec![0.0; n * m];
    for s in 0..n {
        let t = levels[s];
        let mut base_row = vec![0.0; n];
        let mut base_reward = 0.0;
        for a in 0..m {
            let w = pi_base.prob(s, a);
            if w == 0.0 {
                continue;
            }
            base_reward += w * inst.expected_reward(s, a);
            for (k, p) in inst.transition_row(s, a).iter().enumerate() {
                base_row[k] += w * p;
            }
        }
        for a in 0..m {
            let o = (s * m + a) * n;
            for k in 0..n {
                transitions[o + k] = mix(t, inst.prob(s, a, k), base_row[k]);
            }
            rewards_sa[s * m + a] = mix(t, inst.expected_reward(s, a), base_reward);
        }
    }
    state_action_rewards_instance(inst, transitions, &rewards_sa)
}

/// Surrogate MDP for state-action adherence levels with a deterministic baseline.
pub fn build_surrogate_state_action(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    spec: &AdherenceSpec,
) -> Result<MdpInstance> {
    pi_base.ensure_compatible(inst)?;
    let (n, m) = (inst.n_states(), inst.n_actions());
    spec.validate(n, m)?;
    let base = pi_base.actions().ok_or(Error::RandomizedBaseline)?;
    let levels: Vec<Vec<f64>> = match spec {
        AdherenceSpec::PerStateAction(rows) => rows.clone(),
        other => {
            let l = other.state_levels(n).expect("scalar or per-state");
            l.into_iter().map(|t| vec![t; m]).collect()
        }
    };
    let mut transitions = vec![0.0; n * m * n];
    let mut rewards_sa = vec![0.0; n * m];
    for s in 0..n {
        let b = base[s];
        let base_row = inst.transition_row(s, b);
        let base_reward = inst.expected_reward(s, b);
        for a in 0..m {
            let t = levels[s][a];
            let o = (s * m + a) * n;
            for k in 0..n {
                transitions[o + k] = mix(t, inst.prob(s, a, k), base_row[k]);
            }
            rewards_sa[s * m + a] = mix(t, inst.expected_reward(s, a), base_reward);
        }
    }
    state_action_rewards_instance(inst, transitions, &rewards_sa)
}

/// One application of the adherence-aware operator
/// `f_s(v) = θ_s max_a Q_sa(v) + (1 − θ_s) Σ_a π_base[s][a] Q_sa(v)`.
pub fn adherence_operator(inst: &MdpInstance, pi_base: &StationaryPolicy, levels: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; inst.n_states()];
    apply_operator(inst, pi_base, levels, v, &mut out);
    out
}

fn apply_operator(inst: &MdpInstance, pi_base: &StationaryPolicy, levels: &[f64], v: &[f64], out: &mut [f64]) {
    let m = inst.n_actions();
    let mut q = vec![0.0; m];
    for s in 0..inst.n_states() {
        for (a, qa) in q.iter_mut().enumerate() {
            *qa = inst.q_value(s, a, v);
        }
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let base = pi_base.expect_row(s, &q);
        out[s] = mix(levels[s], best, base);
    }
}

/// Optimal deterministic recommendation for the given adherence specification.
///
/// The recommendation is greedy with respect to the final value iterate; the
/// reported value and return are the exact evaluation of the resulting
/// effective policy.
pub fn solve_adamdp(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    spec: &AdherenceSpec,
    tol: f64,
) -> Result<SolveResult> {
    solve_adamdp_with_rule(inst, pi_base, spec, tol, ZeroLevelRule::LowestIndex)
}

/// Which recommendation to report at states with adherence level exactly 0,
/// where every action is optimal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ZeroLevelRule {
    /// Lowest action index, matching the surrogate MDP's tie-breaking.
    #[default]
    LowestIndex,
    /// The limit of the optimal recommendation as the level tends to 0 from
    /// above: greedy with respect to the baseline's values.
    Limit,
}

/// [`solve_adamdp`] with an explicit rule for zero adherence levels.
pub fn solve_adamdp_with_rule(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    spec: &AdherenceSpec,
    tol: f64,
    rule: ZeroLevelRule,
) -> Result<SolveResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    inst.ensure_valid()?;
    pi_base.ensure_compatible(inst)?;
    spec.validate(inst.n_states(), inst.n_actions())?;

    if let AdherenceSpec::PerStateAction(_) = spec {
        let surrogate = build_surrogate_state_action(inst, pi_base, spec)?;
        let nominal = solve_nominal(&surrogate, tol)?;
        let effective = effective_policy(&nominal.recommendation, pi_base, spec)?;
        let (value, ret) = evaluate_policy(inst, &effective)?;
        return Ok(SolveResult {
            recommendation: nominal.recommendation,
            effective,
            value,
            ret,
            iterations: nominal.iterations,
            residual: nominal.residual,
        });
    }

    let levels = spec.state_levels(inst.n_states()).expect("scalar or per-state");
    let threshold = stopping_threshold(tol, inst.discount());
    let (v, iterations, residual) = fixed_point(inst.n_states(), threshold, |v, out| {
        apply_operator(inst, pi_base, &levels, v, out)
    })?;
    let recommendation = greedy_recommendation(inst, &v, &levels, rule);
    let effective = effective_policy(&recommendation, pi_base, spec)?;
    let (value, ret) = evaluate_policy(inst, &effective)?;
    Ok(SolveResult {
        recommendation,
        effective,
        value,
        ret,
        iterations,
        residual,
    })
}

/// Scalar-θ shorthand for [`solve_adamdp`].
pub fn solve_scalar(inst: &MdpInstance, pi_base: &StationaryPolicy, theta: f64, tol: f64) -> Result<SolveResult> {
    solve_adamdp(inst, pi_base, &AdherenceSpec::Scalar(theta), tol)
}

pub(crate) fn solve_scalar_limit(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    theta: f64,
    tol: f64,
) -> Result<SolveResult> {
    solve_adamdp_with_rule(inst, pi_base, &AdherenceSpec::Scalar(theta), tol, ZeroLevelRule::Limit)
}

/// `argmax_a Q_sa(v)` per state.
///
/// Positive adherence levels rescale the maximized term without moving its
/// argmax, so the unscaled Q-values are compared; this avoids spurious ties
/// for tiny levels.
fn greedy_recommendation(inst: &MdpInstance, v: &[f64], levels: &[f64], rule: ZeroLevelRule) -> StationaryPolicy {
    let actions: Vec<usize> = (0..inst.n_states())
        .map(|s| {
            if levels[s] == 0.0 && rule == ZeroLevelRule::LowestIndex {
                0
            } else {
                argmax_lowest(&inst.q_values(s, v))
            }
        })
        .collect();
    StationaryPolicy::deterministic(&actions, inst.n_actions()).expect("argmax within range")
}

/// Builds the LP whose optimum is the optimal adherence-aware return:
/// `min p0·v` s.t. `v_s ≥ r'_sa + λ P'_sa·v` for every `(s, a)`.
pub fn adherence_lp(inst: &MdpInstance, pi_base: &StationaryPolicy, spec: &AdherenceSpec) -> Result<LpModel> {
    let surrogate = build_surrogate(inst, pi_base, spec)?;
    let (n, m) = (inst.n_states(), inst.n_actions());
    let lambda = inst.discount();
    let mut model = LpModel::default();
    model.comments.push(format!(
        "adherence-aware MDP: {n} states, {m} actions, discount {lambda}"
    ));
    model.objective = (0..n).map(|s| (var_v(s), inst.initial_dist()[s])).collect();
    for s in 0..n {
        for a in 0..m {
            let row = surrogate.transition_row(s, a);
            let terms: Vec<(String, f64)> = (0..n)
                .map(|k| {
                    let id = if k == s { 1.0 } else { 0.0 };
                    (var_v(k), id - lambda * row[k])
                })
                .collect();
            model.add_constraint(format!("c_{s}_{a}"), terms, Sense::Ge, surrogate.expected_reward(s, a));
        }
    }
    model.free_vars = (0..n).map(var_v).collect();
    Ok(model)
}

/// Writes [`adherence_lp`] in CPLEX LP format.
pub fn export_lp<W: Write>(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    spec: &AdherenceSpec,
    sink: &mut W,
) -> Result<()> {
    let model = adherence_lp(inst, pi_base, spec)?;
    model.write(sink)?;
    Ok(())
}

pub(crate) fn var_v(s: usize) -> String {
    format!("v_{s}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(a: &[usize], m: usize) -> StationaryPolicy {
        StationaryPolicy::deterministic(a, m).unwrap()
    }

    #[test]
    fn endpoints_return_the_two_policies() {
        let alg = det(&[0, 1], 2);
        let base = StationaryPolicy::new(vec![vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        assert_eq!(effective_scalar(&alg, &base, 0.0).unwrap(), base);
        assert_eq!(effective_scalar(&alg, &base, 1.0).unwrap(), alg);
    }

    #[test]
    fn half_adherence_is_equal_mixture() {
        let eff = effective_scalar(&det(&[0], 2), &det(&[1], 2), 0.5).unwrap();
        assert_eq!(eff.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn state_action_mixture_routes_refusals_to_base_action() {
        let alg = StationaryPolicy::new(vec![vec![0.5, 0.25, 0.25]]).unwrap();
        let base = det(&[0], 3);
        let spec = AdherenceSpec::PerStateAction(vec![vec![0.9, 0.5, 0.2]]);
        let eff = effective_policy(&alg, &base, &spec).unwrap();
        assert!((eff.prob(0, 1) - 0.125).abs() < 1e-15);
        assert!((eff.prob(0, 2) - 0.05).abs() < 1e-15);
        assert!((eff.prob(0, 0) - 0.825).abs() < 1e-15);
    }

    #[test]
    fn state_action_with_random_baseline_is_rejected() {
        let alg = det(&[0], 2);
        let base = StationaryPolicy::uniform(1, 2);
        let spec = AdherenceSpec::PerStateAction(vec![vec![0.5, 0.5]]);
        assert!(matches!(
            effective_policy(&alg, &base, &spec),
            Err(Error::RandomizedBaseline)
        ));
    }

    #[test]
    fn out_of_range_levels_are_rejected() {
        let p = det(&[0], 2);
        assert!(effective_scalar(&p, &p, 1.5).is_err());
        assert!(effective_policy(&p, &p, &AdherenceSpec::PerState(vec![0.5, 0.5])).is_err());
    }

    #[test]
    fn single_state_lp_has_one_constraint() {
        let inst = MdpInstance::with_state_action_rewards(&[vec![vec![1.0]]], &[vec![1.0]], vec![1.0], 0.5).unwrap();
        let base = det(&[0], 1);
        let lp = adherence_lp(&inst, &base, &AdherenceSpec::Scalar(0.3)).unwrap();
        assert_eq!(lp.constraints.len(), 1);
        assert_eq!(lp.n_variables(), 1);
        let text = lp.to_string_lossy();
        assert!(text.contains("c_0_0: 0.5 v_0 >= 1"), "{text}");
    }
}
