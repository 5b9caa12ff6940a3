//! Policy evaluation, the Bellman operator and nominal value iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::MdpInstance;
use crate::policy::StationaryPolicy;

/// Residual target of fixed-point policy evaluation.
pub const EVAL_RESIDUAL: f64 = 1e-10;

const MAX_ITERATIONS: usize = 50_000_000;

/// A value function `v[s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.0)
    }

    /// `p0·v`.
    pub fn weighted(&self, p0: &[f64]) -> f64 {
        p0.iter().zip(&self.0).map(|(p, v)| p * v).sum()
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// Output of every solver in the crate.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    /// The policy handed to the decision maker.
    pub recommendation: StationaryPolicy,
    /// The policy actually executed.
    pub effective: StationaryPolicy,
    /// Exact value function of `effective`.
    pub value: ValueFunction,
    /// `p0·value`.
    pub ret: f64,
    pub iterations: usize,
    /// `‖v_t − f(v_t)‖∞` at the stopping iterate.
    pub residual: f64,
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub(crate) fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `(P^π, r_π)`: the Markov chain and expected reward induced by `pi`.
pub fn induced_chain(inst: &MdpInstance, pi: &StationaryPolicy) -> (Vec<f64>, Vec<f64>) {
    let n = inst.n_states();
    let mut chain = vec![0.0; n * n];
    let mut reward = vec![0.0; n];
    for s in 0..n {
        for a in 0..inst.n_actions() {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            reward[s] += w * inst.expected_reward(s, a);
            for (k, p) in inst.transition_row(s, a).iter().enumerate() {
                chain[s * n + k] += w * p;
            }
        }
    }
    (chain, reward)
}

/// `T^π(v)`.
pub fn policy_operator(inst: &MdpInstance, pi: &StationaryPolicy, v: &[f64]) -> Vec<f64> {
    (0..inst.n_states())
        .map(|s| {
            (0..inst.n_actions())
                .map(|a| pi.prob(s, a) * inst.q_value(s, a, v))
                .sum()
        })
        .collect()
}

/// Exact evaluation by solving `(I − λ P^π) v = r_π`.
pub fn evaluate_policy(inst: &MdpInstance, pi: &StationaryPolicy) -> Result<(ValueFunction, f64)> {
    pi.ensure_compatible(inst)?;
    let v = solve_linear(inst, pi)?;
    let ret = v.weighted(inst.initial_dist());
    Ok((v, ret))
}

/// Return `R(π) = p0·v^π`.
pub fn policy_return(inst: &MdpInstance, pi: &StationaryPolicy) -> Result<f64> {
    evaluate_policy(inst, pi).map(|(_, r)| r)
}

fn solve_linear(inst: &MdpInstance, pi: &StationaryPolicy) -> Result<ValueFunction> {
    let n = inst.n_states();
    let (chain, reward) = induced_chain(inst, pi);
    let lambda = inst.discount();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - lambda * chain[i * n + j]
    });
    let b = DVector::from_vec(reward);
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NonFinite("singular policy-evaluation system".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("policy evaluation produced non-finite values".into()));
    }
    Ok(ValueFunction(x.iter().copied().collect()))
}

/// Evaluation by fixed-point iteration of `T^π`, run until the residual is at
/// most [`EVAL_RESIDUAL`].
pub fn evaluate_policy_iterative(inst: &MdpInstance, pi: &StationaryPolicy) -> Result<(ValueFunction, f64)> {
    pi.ensure_compatible(inst)?;
    let n = inst.n_states();
    let (chain, reward) = induced_chain(inst, pi);
    let lambda = inst.discount();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        for s in 0..n {
            let row = &chain[s * n..(s + 1) * n];
            next[s] = reward[s] + lambda * row.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>();
        }
        let res = sup_dist(&v, &next);
        std::mem::swap(&mut v, &mut next);
        if res <= EVAL_RESIDUAL || res <= 4.0 * f64::EPSILON * sup_norm(&v) {
            let vf = ValueFunction(v);
            let ret = vf.weighted(inst.initial_dist());
            return Ok((vf, ret));
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        residual: f64::NAN,
    })
}

/// Classical Bellman optimality operator.
pub fn bellman_operator(inst: &MdpInstance, v: &[f64]) -> Vec<f64> {
    (0..inst.n_states())
        .map(|s| {
            (0..inst.n_actions())
                .map(|a| inst.q_value(s, a, v))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Index of the largest entry; among entries within a relative `1e-12` of the
/// maximum the lowest index wins.
pub fn argmax_lowest(q: &[f64]) -> usize {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + max.abs());
    q.iter().position(|&x| x >= max - tol).unwrap_or(0)
}

/// Deterministic greedy policy `argmax_a P[s][a]·(r[s][a] + λ v)`.
pub fn greedy_policy(inst: &MdpInstance, v: &[f64]) -> StationaryPolicy {
    let actions: Vec<usize> = (0..inst.n_states())
        .map(|s| argmax_lowest(&inst.q_values(s, v)))
        .collect();
    StationaryPolicy::deterministic(&actions, inst.n_actions()).expect("argmax within range")
}

/// Stopping threshold on `‖v − f(v)‖∞` for an `tol`-optimal policy.
pub fn stopping_threshold(tol: f64, discount: f64) -> f64 {
    tol * (1.0 - discount) / (2.0 * discount)
}

/// Runs `v ← op(v)` from `v = 0` until `‖v − op(v)‖∞ ≤ threshold`.
///
/// Returns the last image `op(v_t)`, the iteration count and the residual at
/// the stopping iterate. When the threshold is below what floating point can
/// resolve at the scale of `v`, iteration stops once the residual reaches that
/// roundoff floor.
pub(crate) fn fixed_point<F>(n: usize, threshold: f64, mut op: F) -> Result<(Vec<f64>, usize, f64)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    for it in 1..=MAX_ITERATIONS {
        op(&v, &mut next);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("value iteration diverged".into()));
        }
        let res = sup_dist(&v, &next);
        std::mem::swap(&mut v, &mut next);
        let floor = 8.0 * f64::EPSILON * sup_norm(&v).max(1.0);
        if res <= threshold || res <= floor {
            return Ok((v, it, res));
        }
        if res < best {
            best = res;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 1000 {
                return Ok((v, it, res));
            }
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        residual: best,
    })
}

/// Optimal nominal policy by value iteration with the classical Bellman operator.
pub fn solve_nominal(inst: &MdpInstance, tol: f64) -> Result<SolveResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if inst.rewards().iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("rewards contain non-finite entries".into()));
    }
    inst.ensure_valid()?;
    let threshold = stopping_threshold(tol, inst.discount());
    let (v, iterations, residual) = fixed_point(inst.n_states(), threshold, |v, out| {
        for s in 0..inst.n_states() {
            out[s] = (0..inst.n_actions())
                .map(|a| inst.q_value(s, a, v))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    })?;
    let policy = greedy_policy(inst, &v);
    let (value, ret) = evaluate_policy(inst, &policy)?;
    Ok(SolveResult {
        recommendation: policy.clone(),
        effective: policy,
        value,
        ret,
        iterations,
        residual,
    })
}
