//! Robust variants: an adherence level known only up to an interval, and a
//! baseline known only up to an s-rectangular polytope given by vertices.

use rayon::prelude::*;

use crate::adherence::{effective_scalar, mix, solve_adamdp, AdherenceSpec};
use crate::enumerate::{count_deterministic, deterministic_policies, guard};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_policy, fixed_point, stopping_threshold, SolveResult};
use crate::mdp::{MdpInstance, VALIDATION_TOL};
use crate::policy::StationaryPolicy;

/// Points of the certificate grid over `[lo, hi]`.
pub const CERTIFICATE_GRID: usize = 101;

const MAX_VERTICES: usize = 32;
const MAX_ACTIONS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ThetaInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "[{lo}, {hi}] is not a sub-interval of [0,1]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn grid(&self, points: usize) -> Vec<f64> {
        if points < 2 || self.lo == self.hi {
            return vec![self.lo];
        }
        (0..points)
            .map(|i| {
                if i + 1 == points {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / (points - 1) as f64
                }
            })
            .collect()
    }
}

/// Brute-force check that the returned recommendation is max-min optimal over
/// a grid on the interval.
#[derive(Clone, Debug)]
pub struct ThetaCertificate {
    pub grid_points: usize,
    pub policies_checked: usize,
    /// `max_π min_{θ ∈ grid} R(π_eff(π, θ))`.
    pub max_min: f64,
    /// `min_{θ ∈ grid} R(π_eff(π_rec, θ))`.
    pub recommendation_min: f64,
    pub grid_resolution: f64,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct RobustThetaResult {
    pub result: SolveResult,
    pub certificate: ThetaCertificate,
}

/// Optimal recommendation when only `θ ∈ [lo, hi]` is known: solve at `lo`.
pub fn robust_theta_solve(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    interval: ThetaInterval,
    tol: f64,
) -> Result<RobustThetaResult> {
    ThetaInterval::new(interval.lo, interval.hi)?;
    guard(
        "deterministic policies",
        count_deterministic(inst.n_states(), inst.n_actions()),
    )?;
    let result = solve_adamdp(inst, pi_base, &AdherenceSpec::Scalar(interval.lo), tol)?;
    let grid = interval.grid(CERTIFICATE_GRID);
    let worst = |pi: &StationaryPolicy| -> Result<f64> {
        let mut m = f64::INFINITY;
        for &t in &grid {
            let eff = effective_scalar(pi, pi_base, t)?;
            m = m.min(evaluate_policy(inst, &eff)?.1);
        }
        Ok(m)
    };
    let policies = deterministic_policies(inst.n_states(), inst.n_actions())?;
    let worst_cases: Vec<f64> = policies.par_iter().map(worst).collect::<Result<_>>()?;
    let max_min = worst_cases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let recommendation_min = worst(&result.recommendation)?;
    let grid_resolution = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
    let slack = tol + grid_resolution;
    let holds = (max_min - result.ret).abs() <= slack && (recommendation_min - result.ret).abs() <= slack;
    Ok(RobustThetaResult {
        result,
        certificate: ThetaCertificate {
            grid_points: grid.len(),
            policies_checked: policies.len(),
            max_min,
            recommendation_min,
            grid_resolution,
            holds,
        },
    })
}

/// Per-state vertex lists of the baseline ambiguity set `Γ = ×_s Γ_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineAmbiguity {
    pub per_state_vertices: Vec<Vec<Vec<f64>>>,
}

impl BaselineAmbiguity {
    pub fn new(per_state_vertices: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_actions = per_state_vertices.iter().flatten().next().map_or(0, Vec::len);
        let amb = Self { per_state_vertices };
        amb.validate(amb.per_state_vertices.len(), n_actions)?;
        Ok(amb)
    }

    /// Every state gets exactly the row of `pi`.
    pub fn singleton(pi: &StationaryPolicy) -> Self {
        Self {
            per_state_vertices: (0..pi.n_states()).map(|s| vec![pi.row(s).to_vec()]).collect(),
        }
    }

    /// Every state gets the rows of all listed policies.
    pub fn from_policies(policies: &[StationaryPolicy]) -> Result<Self> {
        let first = policies
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one baseline is required".into()))?;
        let per_state = (0..first.n_states())
            .map(|s| policies.iter().map(|p| p.row(s).to_vec()).collect())
            .collect();
        Self::new(per_state)
    }

    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.per_state_vertices.len() != n_states {
            return Err(Error::DimensionMismatch(format!(
                "ambiguity set lists {} states, instance has {n_states}",
                self.per_state_vertices.len()
            )));
        }
        for (s, verts) in self.per_state_vertices.iter().enumerate() {
            if verts.is_empty() {
                return Err(Error::InvalidArgument(format!("state {s} has no baseline vertex")));
            }
            for (k, v) in verts.iter().enumerate() {
                if v.len() != n_actions {
                    return Err(Error::DimensionMismatch(format!(
                        "vertex {k} of state {s} has {} entries, expected {n_actions}",
                        v.len()
                    )));
                }
                let sum: f64 = v.iter().sum();
                if v.iter().any(|p| !p.is_finite() || *p < -VALIDATION_TOL) || (sum - 1.0).abs() > VALIDATION_TOL {
                    return Err(Error::InvalidPolicy(format!(
                        "vertex {k} of state {s} is not a distribution"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Solution of a finite zero-sum matrix game.
#[derive(Clone, Debug)]
pub struct GameSolution {
    pub value: f64,
    /// Optimal mixed strategy of the row (maximizing) player.
    pub row_strategy: Vec<f64>,
}

/// Solves `max_x min_k Σ_a x_a payoff[a][k]` over the simplex.
///
/// Uses the classical reduction: after shifting payoffs to be positive,
/// `1 / value = max Σ y s.t. payoff·y ≤ 1, y ≥ 0`, and the row player's
/// strategy is read from the constraint duals. Dense tableau, Bland's rule.
pub fn solve_matrix_game(payoff: &[Vec<f64>]) -> Result<GameSolution> {
    let rows = payoff.len();
    let cols = payoff.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || payoff.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch(
            "game matrix must be non-empty and rectangular".into(),
        ));
    }
    let min = payoff.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let max = payoff.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::NonFinite("game payoff".into()));
    }
    let shift = 1.0 - min + (max - min);
    let width = cols + rows + 1;
    // tableau rows: constraints then objective; columns: y, slacks, rhs
    let mut t = vec![vec![0.0; width]; rows + 1];
    for a in 0..rows {
        for k in 0..cols {
            t[a][k] = payoff[a][k] + shift;
        }
        t[a][cols + a] = 1.0;
        t[a][width - 1] = 1.0;
    }
    for k in 0..cols {
        t[rows][k] = -1.0;
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    let eps = 1e-12;
    for _ in 0..10_000 {
        let Some(enter) = (0..width - 1).find(|&j| t[rows][j] < -eps) else {
            let obj = t[rows][width - 1];
            let mut x: Vec<f64> = (0..rows).map(|a| t[rows][cols + a].max(0.0)).collect();
            let sx: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= sx);
            // recompute the value from the strategy to avoid dividing rounding
            let value = (0..cols)
                .map(|k| (0..rows).map(|a| x[a] * payoff[a][k]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            debug_assert!((1.0 / obj - shift - value).abs() < 1e-6 * (1.0 + value.abs()));
            return Ok(GameSolution { value, row_strategy: x });
        };
        let mut leave = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            if t[i][enter] > eps {
                let ratio = t[i][width - 1] / t[i][enter];
                if ratio < best - 1e-15 || (ratio <= best + 1e-15 && leave.is_some_and(|l: usize| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let r = leave.ok_or_else(|| Error::NonFinite("unbounded game program".into()))?;
        let piv = t[r][enter];
        t[r].iter_mut().for_each(|v| *v /= piv);
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r {
                let f = row[enter];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        basis[r] = enter;
    }
    Err(Error::NotConverged {
        iterations: 10_000,
        residual: f64::NAN,
    })
}

fn state_game(inst: &MdpInstance, amb: &BaselineAmbiguity, theta: f64, s: usize, v: &[f64]) -> Vec<Vec<f64>> {
    let q = inst.q_values(s, v);
    let base: Vec<f64> = amb.per_state_vertices[s]
        .iter()
        .map(|b| b.iter().zip(&q).map(|(p, x)| p * x).sum())
        .collect();
    q.iter()
        .map(|&qa| base.iter().map(|&bq| mix(theta, qa, bq)).collect())
        .collect()
}

/// Worst-case return of a fixed recommendation over the ambiguity set,
/// computed exactly by policy iteration over per-state vertex choices.
/// Returns the value, the return and the worst vertex index per state.
pub fn robust_evaluate(
    inst: &MdpInstance,
    recommendation: &StationaryPolicy,
    amb: &BaselineAmbiguity,
    theta: f64,
) -> Result<(Vec<f64>, f64, Vec<usize>)> {
    let n = inst.n_states();
    let mut choice = vec![0usize; n];
    for _ in 0..10_000 {
        let base = chosen_baseline(amb, &choice, inst.n_actions());
        let eff = effective_scalar(recommendation, &base, theta)?;
        let (v, ret) = evaluate_policy(inst, &eff)?;
        let mut changed = false;
        for s in 0..n {
            let q = inst.q_values(s, v.values());
            let score = |k: usize| -> f64 { amb.per_state_vertices[s][k].iter().zip(&q).map(|(p, x)| p * x).sum() };
            let current = score(choice[s]);
            let (best_k, best) = (0..amb.per_state_vertices[s].len())
                .map(|k| (k, score(k)))
                .fold((choice[s], current), |acc, x| if x.1 < acc.1 { x } else { acc });
            if best < current - 1e-12 * (1.0 + current.abs()) {
                choice[s] = best_k;
                changed = true;
            }
        }
        if !changed {
            return Ok((v.0, ret, choice));
        }
    }
    Err(Error::NotConverged {
        iterations: 10_000,
        residual: f64::NAN,
    })
}

fn chosen_baseline(amb: &BaselineAmbiguity, choice: &[usize], n_actions: usize) -> StationaryPolicy {
    let probs: Vec<f64> = choice
        .iter()
        .enumerate()
        .flat_map(|(s, &k)| amb.per_state_vertices[s][k].iter().copied())
        .collect();
    StationaryPolicy::from_flat_trusted(choice.len(), n_actions, probs)
}

/// Optimal recommendation against the worst baseline in `amb`.
///
/// `effective` is the effective policy under the worst-case baseline and
/// `ret` is the exact robust return of the recommendation.
pub fn robust_baseline_solve(inst: &MdpInstance, amb: &BaselineAmbiguity, theta: f64, tol: f64) -> Result<SolveResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta = {theta} not in [0,1]")));
    }
    inst.ensure_valid()?;
    amb.validate(inst.n_states(), inst.n_actions())?;
    let widest = amb.per_state_vertices.iter().map(Vec::len).max().unwrap_or(0);
    if widest > MAX_VERTICES {
        return Err(Error::GuardExceeded {
            what: "baseline vertices per state",
            count: widest as f64,
            limit: MAX_VERTICES as f64,
        });
    }
    if inst.n_actions() > MAX_ACTIONS {
        return Err(Error::GuardExceeded {
            what: "actions per state",
            count: inst.n_actions() as f64,
            limit: MAX_ACTIONS as f64,
        });
    }
    let n = inst.n_states();
    let threshold = stopping_threshold(tol, inst.discount());
    let mut game_error = None;
    let (v, iterations, residual) = fixed_point(n, threshold, |v, out| {
        for s in 0..n {
            match solve_matrix_game(&state_game(inst, amb, theta, s, v)) {
                Ok(g) => out[s] = g.value,
                Err(e) => {
                    out[s] = f64::NAN;
                    game_error.get_or_insert(e);
                }
            }
        }
    })
    .map_err(|e| game_error.take().unwrap_or(e))?;
    let mut probs = Vec::with_capacity(n * inst.n_actions());
    for s in 0..n {
        probs.extend(solve_matrix_game(&state_game(inst, amb, theta, s, &v))?.row_strategy);
    }
    let recommendation = StationaryPolicy::from_flat_trusted(n, inst.n_actions(), probs);
    let (value, ret, choice) = robust_evaluate(inst, &recommendation, amb, theta)?;
    let base = chosen_baseline(amb, &choice, inst.n_actions());
    let effective = effective_scalar(&recommendation, &base, theta)?;
    Ok(SolveResult {
        recommendation,
        effective,
        value: crate::evaluation::ValueFunction(value),
        ret,
        iterations,
        residual,
    })
}
