//! How optimal recommendations and returns change with the adherence level.

use rayon::prelude::*;

use crate::adherence::{effective_scalar, solve_scalar, solve_scalar_limit};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_policy, solve_nominal, sup_norm};
use crate::instances::{toy_alg_return, toy_counterexample, toy_theta_tilde, InstanceBundle};
use crate::mdp::MdpInstance;
use crate::policy::StationaryPolicy;

/// Value-iteration tolerance used inside sweeps, tight enough that argmax
/// changes are located by the recommendation and not by iteration noise.
pub const SWEEP_TOL: f64 = 1e-11;

/// One interval of constant optimal recommendation.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub recommendation: StationaryPolicy,
}

#[derive(Clone, Debug)]
pub struct ThetaSweep {
    pub grid: Vec<f64>,
    /// `R(π_eff*(θ))`.
    pub returns_opt: Vec<f64>,
    /// `R(π_eff(π*(1), θ))`.
    pub returns_naive: Vec<f64>,
    pub recommendations: Vec<StationaryPolicy>,
    pub segments: Vec<Segment>,
    pub breakpoints: Vec<f64>,
    /// The nominal optimum `π*(1)`.
    pub nominal: StationaryPolicy,
    /// The top segment recommends `π*(1)`.
    pub top_is_nominal: bool,
    /// Below the largest grid point recommending the baseline, every grid
    /// point recommends the baseline too.
    pub baseline_closed_below: bool,
}

impl ThetaSweep {
    /// Index of the segment containing grid point `i`.
    pub fn segment_of(&self, theta: f64) -> usize {
        self.breakpoints.iter().filter(|&&b| b < theta).count()
    }

    /// `(R_opt − R_naive) / R_opt` per grid point, `None` where `R_opt = 0`.
    pub fn deterioration(&self) -> Vec<Option<f64>> {
        self.returns_opt
            .iter()
            .zip(&self.returns_naive)
            .map(|(&o, &n)| (o != 0.0).then(|| (o - n) / o))
            .collect()
    }
}

/// Uniform grid of `n ≥ 2` points on `[0, 1]` with exact endpoints.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { 1.0 } else { i as f64 / (n - 1) as f64 })
        .collect()
}

/// Solves on a uniform grid, then bisects every change of recommendation
/// down to `bisection_tol`.
///
/// At `θ = 0` every recommendation is optimal; the sweep reports the limit
/// from above so that no artificial breakpoint appears next to 0.
///
/// A segment that starts and ends between two neighbouring grid points is not
/// seen; refine the grid if that matters.
pub fn theta_sweep(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    grid_size: usize,
    bisection_tol: f64,
) -> Result<ThetaSweep> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid size must be at least 2, got {grid_size}"
        )));
    }
    if !(bisection_tol > 0.0) {
        return Err(Error::InvalidArgument("bisection tolerance must be positive".into()));
    }
    let nominal = solve_nominal(inst, SWEEP_TOL)?.recommendation;
    let grid = uniform_grid(grid_size);
    let solves: Vec<(StationaryPolicy, f64, f64)> = grid
        .par_iter()
        .map(|&t| {
            let res = solve_scalar_limit(inst, pi_base, t, SWEEP_TOL)?;
            let naive = evaluate_policy(inst, &effective_scalar(&nominal, pi_base, t)?)?.1;
            Ok((res.recommendation, res.ret, naive))
        })
        .collect::<Result<_>>()?;
    let mut recommendations = Vec::with_capacity(grid_size);
    let mut returns_opt = Vec::with_capacity(grid_size);
    let mut returns_naive = Vec::with_capacity(grid_size);
    for (r, o, n) in solves {
        recommendations.push(r);
        returns_opt.push(o);
        returns_naive.push(n);
    }

    let rec_at = |t: f64| solve_scalar_limit(inst, pi_base, t, SWEEP_TOL).map(|r| r.recommendation);
    let pairs: Vec<usize> = (0..grid_size - 1)
        .filter(|&i| recommendations[i] != recommendations[i + 1])
        .collect();
    let refined: Vec<Vec<(f64, StationaryPolicy)>> = pairs
        .par_iter()
        .map(|&i| {
            refine(
                &rec_at,
                grid[i],
                &recommendations[i],
                grid[i + 1],
                &recommendations[i + 1],
                bisection_tol,
            )
        })
        .collect::<Result<_>>()?;

    let mut breakpoints = Vec::new();
    let mut segments = Vec::new();
    let mut lo = 0.0;
    let mut current = recommendations[0].clone();
    for found in refined.into_iter().flatten() {
        let (b, right) = found;
        segments.push(Segment {
            lo,
            hi: b,
            recommendation: current,
        });
        breakpoints.push(b);
        lo = b;
        current = right;
    }
    segments.push(Segment {
        lo,
        hi: 1.0,
        recommendation: current,
    });

    let top_is_nominal = segments.last().is_some_and(|s| s.recommendation == nominal);
    let baseline_closed_below = match recommendations.iter().rposition(|r| r == pi_base) {
        Some(last) => recommendations[..=last].iter().all(|r| r == pi_base),
        None => true,
    };
    Ok(ThetaSweep {
        grid,
        returns_opt,
        returns_naive,
        recommendations,
        segments,
        breakpoints,
        nominal,
        top_is_nominal,
        baseline_closed_below,
    })
}

/// Breakpoints in `(lo, hi)` with the recommendation to the right of each.
fn refine<F>(
    rec_at: &F,
    lo: f64,
    rec_lo: &StationaryPolicy,
    hi: f64,
    rec_hi: &StationaryPolicy,
    tol: f64,
) -> Result<Vec<(f64, StationaryPolicy)>>
where
    F: Fn(f64) -> Result<StationaryPolicy>,
{
    if hi - lo <= tol {
        return Ok(vec![(0.5 * (lo + hi), rec_hi.clone())]);
    }
    let mid = 0.5 * (lo + hi);
    let rec_mid = rec_at(mid)?;
    if rec_mid == *rec_lo {
        refine(rec_at, mid, &rec_mid, hi, rec_hi, tol)
    } else if rec_mid == *rec_hi {
        refine(rec_at, lo, rec_lo, mid, &rec_mid, tol)
    } else {
        let mut left = refine(rec_at, lo, rec_lo, mid, &rec_mid, tol)?;
        left.extend(refine(rec_at, mid, &rec_mid, hi, rec_hi, tol)?);
        Ok(left)
    }
}

/// Proportional loss from recommending `π*(1)` instead of the θ-aware optimum.
pub fn deterioration_curve(inst: &MdpInstance, pi_base: &StationaryPolicy, grid: &[f64]) -> Result<Vec<f64>> {
    let nominal = solve_nominal(inst, SWEEP_TOL)?.recommendation;
    grid.par_iter()
        .map(|&t| {
            let opt = solve_scalar(inst, pi_base, t, SWEEP_TOL)?.ret;
            if opt == 0.0 {
                return Err(Error::ZeroDenominator { theta: t });
            }
            let naive = evaluate_policy(inst, &effective_scalar(&nominal, pi_base, t)?)?.1;
            Ok((opt - naive) / opt)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct WorstCase {
    pub bundle: InstanceBundle,
    pub lambda: f64,
    /// `R(π_base) − R(π_eff(π, θ))` minimized over the two nominal optima
    /// `opt` and `alg`, by exact evaluation.
    pub gap: f64,
    pub gap_opt: f64,
    pub gap_alg: f64,
    /// Closed form of `gap_alg`: `2θ λ²/(1−λ) (θ̃ − θ)`.
    pub closed_form_gap: f64,
}

fn alg_gap(lambda: f64, theta: f64) -> f64 {
    2.0 * theta * lambda * lambda / (1.0 - lambda) * (toy_theta_tilde(lambda) - theta)
}

/// `opt` reaches state 4 from state 3, so only the detour through state 2 costs.
fn opt_gap(lambda: f64, theta: f64) -> f64 {
    theta * (1.0 - theta) * lambda * lambda / (1.0 - lambda) - 0.1 * theta * lambda
}

fn toy_gap(lambda: f64, theta: f64) -> f64 {
    alg_gap(lambda, theta).min(opt_gap(lambda, theta))
}

/// A toy instance on which recommending a return-optimal nominal policy
/// (`opt` or `alg`; both are optimal at `θ = 1`) at adherence `θ` loses at
/// least `m` against keeping the baseline.
///
/// The discount is found by bisection on the closed-form gaps, which are
/// increasing in `λ` once positive.
pub fn worst_case_family(m: f64, theta: f64) -> Result<WorstCase> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta = {theta} not in (0,1)")));
    }
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target gap {m} must be finite and non-negative"
        )));
    }
    // θ < θ̃(λ) once λ is large enough; the gap then grows like 1/(1−λ)
    let mut hi_gap = 0.5;
    let mut k = 1;
    let target = m.max(f64::MIN_POSITIVE) * (1.0 + 1e-9);
    while toy_gap(1.0 - hi_gap, theta) < target {
        hi_gap *= 0.5;
        k += 1;
        if k > 60 {
            return Err(Error::InvalidArgument(format!(
                "gap {m} is out of reach in double precision"
            )));
        }
    }
    let mut lo = 1.0 - 2.0 * hi_gap;
    let mut hi = 1.0 - hi_gap;
    if toy_gap(lo, theta) >= target {
        hi = lo;
    }
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if toy_gap(mid, theta) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = hi;
    let bundle = toy_counterexample(lambda, -1.0)?;
    let base = bundle.baseline("base")?;
    let r_base = evaluate_policy(&bundle.instance, base)?.1;
    let loss = |name: &str| -> Result<f64> {
        let pi = bundle.baseline(name)?;
        Ok(r_base - evaluate_policy(&bundle.instance, &effective_scalar(pi, base, theta)?)?.1)
    };
    let (gap_opt, gap_alg) = (loss("opt")?, loss("alg")?);
    debug_assert!((r_base - gap_alg - toy_alg_return(lambda, -1.0, theta)).abs() < 1e-6 * (1.0 + r_base.abs()));
    Ok(WorstCase {
        lambda,
        gap: gap_opt.min(gap_alg),
        gap_opt,
        gap_alg,
        closed_form_gap: alg_gap(lambda, theta),
        bundle,
    })
}

#[derive(Clone, Debug)]
pub struct ValueSimilarRow {
    pub theta: f64,
    /// `v^{π_eff*(θ)}` at the checked state.
    pub optimal_value: f64,
    /// Same after replacing the recommendation's row there by the baseline's.
    pub replaced_value: f64,
}

#[derive(Clone, Debug)]
pub struct ValueSimilarReport {
    pub state: usize,
    pub precondition_met: bool,
    pub reference_value: f64,
    pub rows: Vec<ValueSimilarRow>,
    pub holds: bool,
}

/// For a state where `π*(1)` and the baseline have the same value, checks that
/// the optimal effective value there is unchanged for every θ and that
/// recommending the baseline action at that state costs nothing.
pub fn value_similar_check(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    s_bar: usize,
    thetas: &[f64],
    tol: f64,
) -> Result<ValueSimilarReport> {
    if s_bar >= inst.n_states() {
        return Err(Error::InvalidArgument(format!("state {s_bar} out of range")));
    }
    let nominal = solve_nominal(inst, SWEEP_TOL)?;
    let (v_base, _) = evaluate_policy(inst, pi_base)?;
    let reference_value = v_base[s_bar];
    let precondition_met = (nominal.value[s_bar] - reference_value).abs() <= 1e-8;
    if !precondition_met {
        return Ok(ValueSimilarReport {
            state: s_bar,
            precondition_met,
            reference_value,
            rows: Vec::new(),
            holds: false,
        });
    }
    let rows: Vec<ValueSimilarRow> = thetas
        .iter()
        .map(|&t| {
            let res = solve_scalar(inst, pi_base, t, SWEEP_TOL)?;
            let replaced = res.recommendation.with_row_from(pi_base, s_bar);
            let (v_rep, _) = evaluate_policy(inst, &effective_scalar(&replaced, pi_base, t)?)?;
            Ok(ValueSimilarRow {
                theta: t,
                optimal_value: res.value[s_bar],
                replaced_value: v_rep[s_bar],
            })
        })
        .collect::<Result<_>>()?;
    let holds = rows
        .iter()
        .all(|r| (r.optimal_value - reference_value).abs() <= tol && (r.replaced_value - r.optimal_value).abs() <= tol);
    Ok(ValueSimilarReport {
        state: s_bar,
        precondition_met,
        reference_value,
        rows,
        holds,
    })
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub bound: f64,
    pub actual: f64,
    pub holds: bool,
}

/// `bound = θ/(1−λ) · max_s ‖π*_alg(θ)_s − π_alg,s‖₁ · ‖v^{π_eff*(θ)}‖∞` against
/// `actual = ‖v^{π_eff*(θ)} − v^{π_eff(π_alg, θ)}‖∞`.
pub fn suboptimality_bound(
    inst: &MdpInstance,
    pi_base: &StationaryPolicy,
    pi_alg: &StationaryPolicy,
    theta: f64,
) -> Result<BoundReport> {
    pi_alg.ensure_compatible(inst)?;
    let opt = solve_scalar(inst, pi_base, theta, SWEEP_TOL)?;
    let dist = (0..inst.n_states())
        .map(|s| opt.recommendation.l1_row_distance(pi_alg, s))
        .fold(0.0, f64::max);
    let bound = theta / (1.0 - inst.discount()) * dist * opt.value.sup_norm();
    let (v_alg, _) = evaluate_policy(inst, &effective_scalar(pi_alg, pi_base, theta)?)?;
    let diff: Vec<f64> = opt
        .value
        .values()
        .iter()
        .zip(v_alg.values())
        .map(|(a, b)| a - b)
        .collect();
    let actual = sup_norm(&diff);
    Ok(BoundReport {
        bound,
        actual,
        holds: actual <= bound + 1e-8,
    })
}
