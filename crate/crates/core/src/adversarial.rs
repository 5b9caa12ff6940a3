//! Adversarial and random adherence: best responses of an adversary choosing
//! `u ∈ [θ, 1]`, saddle-point checks and Monte Carlo simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adherence::{
    effective_policy_per_state, effective_scalar, solve_adamdp_with_rule, AdherenceSpec, ZeroLevelRule,
};
use crate::enumerate::deterministic_policies;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_policy, fixed_point, stopping_threshold, SolveResult};
use crate::mdp::MdpInstance;
use crate::policy::StationaryPolicy;

/// Grid size for the scalar adversary in [`check_saddle`].
pub const SADDLE_GRID: usize = 1001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversaryKind {
    /// `u_{s,t}` free per state and period.
    Unconstrained,
    /// `u_s` per state, constant over time.
    TimeInvariant,
    /// `u_t` per period, shared by all states.
    StateInvariant,
    /// A single `u` for all states and periods.
    TimeStateInvariant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversaryModel {
    pub kind: AdversaryKind,
    pub theta: f64,
}

#[derive(Clone, Debug)]
pub struct AdversaryResponse {
    pub worst_u: Vec<f64>,
    pub worst_return: f64,
    pub iterations: usize,
}

/// Worst-case adherence decisions against a fixed recommendation.
///
/// Runs value iteration on `v_s ← min_{u ∈ {θ, 1}} u T^alg_s(v) + (1−u) T^base_s(v)`
/// (the inner objective is linear in `u`, so the endpoints suffice). Ties go
/// to `u = θ`. The returned `worst_return` is the exact return of the extracted
/// stationary decisions.
pub fn adversary_best_response(
    inst: &MdpInstance,
    pi_alg: &StationaryPolicy,
    pi_base: &StationaryPolicy,
    model: AdversaryModel,
    tol: f64,
) -> Result<AdversaryResponse> {
    match model.kind {
        AdversaryKind::Unconstrained | AdversaryKind::TimeInvariant => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "{other:?} adversaries are checked by grid search in check_saddle"
            )))
        }
    }
    let theta = model.theta;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta = {theta} not in [0,1]")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    inst.ensure_valid()?;
    pi_alg.ensure_compatible(inst)?;
    pi_base.ensure_compatible(inst)?;
    let n = inst.n_states();
    let low = effective_scalar(pi_alg, pi_base, theta)?;
    let threshold = stopping_threshold(tol, inst.discount());
    let (v, iterations, _) = fixed_point(n, threshold, |v, out| {
        for s in 0..n {
            let q = inst.q_values(s, v);
            out[s] = low.expect_row(s, &q).min(pi_alg.expect_row(s, &q));
        }
    })?;
    let worst_u: Vec<f64> = (0..n)
        .map(|s| {
            let q = inst.q_values(s, &v);
            let at_theta = low.expect_row(s, &q);
            let at_one = pi_alg.expect_row(s, &q);
            if at_one < at_theta - 1e-12 * (1.0 + at_theta.abs()) {
                1.0
            } else {
                theta
            }
        })
        .collect();
    let eff = effective_policy_per_state(pi_alg, pi_base, &worst_u)?;
    let worst_return = evaluate_policy(inst, &eff)?.1;
    Ok(AdversaryResponse {
        worst_u,
        worst_return,
        iterations,
    })
}

/// Comparison of the adherence-aware optimum with the adversarial models.
#[derive(Clone, Debug)]
pub struct SaddleReport {
    pub theta: f64,
    pub optimum: SolveResult,
    /// Per-state worst `u` against the optimal recommendation (time-varying adversary).
    pub unconstrained_u: Vec<f64>,
    pub unconstrained_return: f64,
    /// Same for the time-invariant adversary.
    pub time_invariant_u: Vec<f64>,
    pub time_invariant_return: f64,
    /// `max_π min_{u ∈ grid} R(π_eff(π, u))` over deterministic recommendations.
    pub scalar_max_min: f64,
    /// `min_{u ∈ grid} max_π R(π_eff(π, u))`.
    pub scalar_min_max: f64,
    pub grid_resolution: f64,
    /// Largest deviation of any worst `u` from `θ`.
    pub max_u_deviation: f64,
    /// Largest absolute gap between any reported value and the optimum.
    pub max_gap: f64,
    pub passed: bool,
}

/// Checks that `u ≡ θ` is the adversary's best response at the optimal
/// recommendation and that max-min equals min-max for every model.
pub fn check_saddle(inst: &MdpInstance, pi_base: &StationaryPolicy, theta: f64, tol: f64) -> Result<SaddleReport> {
    let policies = deterministic_policies(inst.n_states(), inst.n_actions())?;
    // at θ = 0 any recommendation is optimal; the limit from above is the one
    // against which u ≡ θ is a best response
    let optimum = solve_adamdp_with_rule(
        inst,
        pi_base,
        &AdherenceSpec::Scalar(theta),
        tol.min(1e-9),
        ZeroLevelRule::Limit,
    )?;
    let rec = &optimum.recommendation;
    let model = |kind| AdversaryModel { kind, theta };
    let b_inf = adversary_best_response(inst, rec, pi_base, model(AdversaryKind::Unconstrained), tol.min(1e-9))?;
    let b_one = adversary_best_response(inst, rec, pi_base, model(AdversaryKind::TimeInvariant), tol.min(1e-9))?;

    let grid: Vec<f64> = if theta == 1.0 {
        vec![1.0]
    } else {
        (0..SADDLE_GRID)
            .map(|i| {
                if i + 1 == SADDLE_GRID {
                    1.0
                } else {
                    theta + (1.0 - theta) * i as f64 / (SADDLE_GRID - 1) as f64
                }
            })
            .collect()
    };
    // table[π][u]
    let table: Vec<Vec<f64>> = policies
        .par_iter()
        .map(|pi| {
            grid.iter()
                .map(|&u| Ok(evaluate_policy(inst, &effective_scalar(pi, pi_base, u)?)?.1))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let scalar_max_min = table
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let scalar_min_max = (0..grid.len())
        .map(|j| table.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    let grid_resolution = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };

    let max_u_deviation = b_inf
        .worst_u
        .iter()
        .chain(&b_one.worst_u)
        .map(|u| (u - theta).abs())
        .fold(0.0, f64::max);
    let max_gap = [b_inf.worst_return, b_one.worst_return, scalar_max_min, scalar_min_max]
        .iter()
        .map(|x| (x - optimum.ret).abs())
        .fold(0.0, f64::max);
    let passed = max_u_deviation <= tol && max_gap <= tol + grid_resolution;
    Ok(SaddleReport {
        theta,
        optimum,
        unconstrained_u: b_inf.worst_u,
        unconstrained_return: b_inf.worst_return,
        time_invariant_u: b_one.worst_u,
        time_invariant_return: b_one.worst_return,
        scalar_max_min,
        scalar_min_max,
        grid_resolution,
        max_u_deviation,
        max_gap,
        passed,
    })
}

/// Law of the per-period adherence decision, all with mean `θ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdherenceDistribution {
    Bernoulli(f64),
    /// Uniform on `[max(0, 2θ−1), min(1, 2θ)]`.
    Uniform(f64),
    Constant(f64),
}

impl AdherenceDistribution {
    pub fn theta(&self) -> f64 {
        match *self {
            AdherenceDistribution::Bernoulli(t)
            | AdherenceDistribution::Uniform(t)
            | AdherenceDistribution::Constant(t) => t,
        }
    }

    /// Support of the uniform variant.
    pub fn uniform_support(theta: f64) -> (f64, f64) {
        ((2.0 * theta - 1.0).max(0.0), (2.0 * theta).min(1.0))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            AdherenceDistribution::Bernoulli(t) => {
                if rng.random::<f64>() < t {
                    1.0
                } else {
                    0.0
                }
            }
            AdherenceDistribution::Uniform(t) => {
                let (lo, hi) = Self::uniform_support(t);
                lo + (hi - lo) * rng.random::<f64>()
            }
            AdherenceDistribution::Constant(t) => t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McReport {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
    pub horizon: usize,
    pub seed: u64,
    /// `λ^H r∞ / (1−λ)`: bound on the discarded tail.
    pub truncation: f64,
}

/// `λ^horizon · r∞ / (1 − λ)`.
pub fn truncation_bound(inst: &MdpInstance, horizon: usize) -> f64 {
    inst.discount().powi(horizon as i32) * inst.r_max() / (1.0 - inst.discount())
}

/// Smallest horizon whose truncation bound is at most `budget`.
pub fn horizon_for_budget(inst: &MdpInstance, budget: f64) -> usize {
    let mut h = 1;
    while truncation_bound(inst, h) > budget && h < 1_000_000 {
        h += 1;
    }
    h
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Compensated summation.
fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0, 0.0);
    for x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Monte Carlo estimate of the return when each period's adherence decision
/// `u_t` is drawn from `dist` (shared by all states in that period).
///
/// Trial `i` uses its own ChaCha stream derived from `seed`, so the output does
/// not depend on the number of worker threads.
pub fn simulate_random_adherence(
    inst: &MdpInstance,
    pi_alg: &StationaryPolicy,
    pi_base: &StationaryPolicy,
    dist: AdherenceDistribution,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<McReport> {
    if horizon == 0 || trials == 0 {
        return Err(Error::InvalidArgument("horizon and trials must be positive".into()));
    }
    let theta = dist.theta();
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta = {theta} not in [0,1]")));
    }
    inst.ensure_valid()?;
    pi_alg.ensure_compatible(inst)?;
    pi_base.ensure_compatible(inst)?;
    let lambda = inst.discount();
    let m = inst.n_actions();
    let returns: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut s = sample_index(&mut rng, inst.initial_dist());
            let mut total = 0.0;
            let mut weight = 1.0;
            let mut mixed = vec![0.0; m];
            for _ in 0..horizon {
                let u = dist.sample(&mut rng);
                for a in 0..m {
                    mixed[a] = u * pi_alg.prob(s, a) + (1.0 - u) * pi_base.prob(s, a);
                }
                let a = sample_index(&mut rng, &mixed);
                let next = sample_index(&mut rng, inst.transition_row(s, a));
                total += weight * inst.reward(s, a, next);
                weight *= lambda;
                s = next;
            }
            total
        })
        .collect();
    let nf = trials as f64;
    let mean = kahan_sum(returns.iter().copied()) / nf;
    let var = if trials > 1 {
        kahan_sum(returns.iter().map(|x| (x - mean) * (x - mean))) / (nf - 1.0)
    } else {
        0.0
    };
    Ok(McReport {
        mean,
        std_error: (var / nf).sqrt(),
        trials,
        horizon,
        seed,
        truncation: truncation_bound(inst, horizon),
    })
}
