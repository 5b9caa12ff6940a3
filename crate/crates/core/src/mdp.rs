//! Dense finite MDP instances and their validation.
//!
//! Transitions and rewards are stored as flat row-major tensors indexed by
//! `(s, a, s')`. Instances are immutable once built.

use std::fmt;

use crate::error::{Error, Result};

/// Absolute tolerance used for probability-simplex checks.
pub const VALIDATION_TOL: f64 = 1e-9;

/// A discounted MDP `(S, A, P, r, p0, λ)` with dense storage.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpInstance {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    initial_dist: Vec<f64>,
    discount: f64,
}

/// One failed instance invariant, with its location and magnitude.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    TransitionRowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeTransition {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    NonFiniteTransition {
        state: usize,
        action: usize,
        next: usize,
    },
    /// Placeholder row that has to be supplied from an external source.
    RequiredExternal {
        state: usize,
        action: usize,
    },
    NonFiniteReward {
        state: usize,
        action: usize,
        next: usize,
    },
    InitialDistSum {
        sum: f64,
    },
    NegativeInitial {
        state: usize,
        value: f64,
    },
    Discount {
        value: f64,
    },
}

impl Violation {
    /// Size of the defect (for row sums: `1 - sum`).
    pub fn magnitude(&self) -> f64 {
        match *self {
            Violation::TransitionRowSum { sum, .. } | Violation::InitialDistSum { sum } => 1.0 - sum,
            Violation::NegativeTransition { value, .. } | Violation::NegativeInitial { value, .. } => value,
            Violation::Discount { value } => value,
            _ => f64::NAN,
        }
    }

    pub fn is_required_external(&self) -> bool {
        matches!(self, Violation::RequiredExternal { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::TransitionRowSum { state, action, sum } => write!(
                f,
                "transition row (s={state}, a={action}) sums to {sum} (deficit {:.3e})",
                1.0 - sum
            ),
            Violation::NegativeTransition {
                state,
                action,
                next,
                value,
            } => write!(
                f,
                "negative transition probability P[{state}][{action}][{next}] = {value}"
            ),
            Violation::NonFiniteTransition { state, action, next } => {
                write!(f, "non-finite transition probability P[{state}][{action}][{next}]")
            }
            Violation::RequiredExternal { state, action } => write!(
                f,
                "REQUIRED-EXTERNAL: transition row (s={state}, a={action}) must be supplied"
            ),
            Violation::NonFiniteReward { state, action, next } => {
                write!(f, "non-finite reward r[{state}][{action}][{next}]")
            }
            Violation::InitialDistSum { sum } => {
                write!(f, "initial distribution sums to {sum} (deficit {:.3e})", 1.0 - sum)
            }
            Violation::NegativeInitial { state, value } => {
                write!(f, "negative initial probability p0[{state}] = {value}")
            }
            Violation::Discount { value } => write!(f, "discount not in (0,1): {value}"),
        }
    }
}

impl MdpInstance {
    /// Builds an instance and rejects it if any invariant fails.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let inst = Self::from_parts_unchecked(n_states, n_actions, transitions, rewards, initial_dist, discount)?;
        let violations = inst.validate();
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(Error::InvalidInstance(violations))
        }
    }

    /// Builds an instance checking only tensor shapes. Use [`MdpInstance::validate`]
    /// before solving.
    pub fn from_parts_unchecked(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::DimensionMismatch(
                "an instance needs at least one state and one action".into(),
            ));
        }
        let cube = n_states * n_actions * n_states;
        if transitions.len() != cube {
            return Err(Error::DimensionMismatch(format!(
                "transition tensor has {} entries, expected {cube}",
                transitions.len()
            )));
        }
        if rewards.len() != cube {
            return Err(Error::DimensionMismatch(format!(
                "reward tensor has {} entries, expected {cube}",
                rewards.len()
            )));
        }
        if initial_dist.len() != n_states {
            return Err(Error::DimensionMismatch(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial_dist.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            initial_dist,
            discount,
        })
    }

    /// Builds an instance from nested `P[s][a][s']` and `r[s][a][s']` arrays.
    pub fn from_nested(
        transitions: &[Vec<Vec<f64>>],
        rewards: &[Vec<Vec<f64>>],
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        let flat_p = flatten3(transitions, n_states, n_actions, "transitions")?;
        let flat_r = flatten3(rewards, n_states, n_actions, "rewards")?;
        Self::new(n_states, n_actions, flat_p, flat_r, initial_dist, discount)
    }

    /// Builds an instance whose rewards depend on `(s, a)` only; the reward is
    /// replicated over next states.
    pub fn with_state_action_rewards(
        transitions: &[Vec<Vec<f64>>],
        rewards: &[Vec<f64>],
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let expanded: Vec<Vec<Vec<f64>>> = rewards
            .iter()
            .map(|row| row.iter().map(|&r| vec![r; n_states]).collect())
            .collect();
        Self::from_nested(transitions, &expanded, initial_dist, discount)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    #[inline]
    fn offset(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states
    }

    /// `P[s][a][·]`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.transitions[o..o + self.n_states]
    }

    /// `r[s][a][·]`.
    #[inline]
    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.rewards[o..o + self.n_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[self.offset(s, a) + next]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.rewards[self.offset(s, a) + next]
    }

    /// Expected one-step reward `P[s][a]·r[s][a]`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        dot(self.transition_row(s, a), self.reward_row(s, a))
    }

    /// `P[s][a]·(r[s][a] + λ v)`.
    #[inline]
    pub fn q_value(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let p = self.transition_row(s, a);
        let r = self.reward_row(s, a);
        let mut acc = 0.0;
        for k in 0..self.n_states {
            acc += p[k] * (r[k] + self.discount * v[k]);
        }
        acc
    }

    /// All Q-values of state `s` at `v`.
    pub fn q_values(&self, s: usize, v: &[f64]) -> Vec<f64> {
        (0..self.n_actions).map(|a| self.q_value(s, a, v)).collect()
    }

    /// Largest absolute reward `r∞`.
    pub fn r_max(&self) -> f64 {
        self.rewards.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// Returns every invariant violation; an empty list means the instance is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.n_states;
        for s in 0..n {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                if row.iter().all(|p| p.is_nan()) {
                    out.push(Violation::RequiredExternal { state: s, action: a });
                    continue;
                }
                let mut row_ok = true;
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        out.push(Violation::NonFiniteTransition {
                            state: s,
                            action: a,
                            next,
                        });
                        row_ok = false;
                    } else if p < 0.0 {
                        out.push(Violation::NegativeTransition {
                            state: s,
                            action: a,
                            next,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if row_ok && (sum - 1.0).abs() > VALIDATION_TOL {
                    out.push(Violation::TransitionRowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                for (next, r) in self.reward_row(s, a).iter().enumerate() {
                    if !r.is_finite() {
                        out.push(Violation::NonFiniteReward {
                            state: s,
                            action: a,
                            next,
                        });
                    }
                }
            }
        }
        for (s, &p) in self.initial_dist.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                out.push(Violation::NegativeInitial { state: s, value: p });
            }
        }
        let sum: f64 = self.initial_dist.iter().sum();
        if (sum - 1.0).abs() > VALIDATION_TOL {
            out.push(Violation::InitialDistSum { sum });
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            out.push(Violation::Discount { value: self.discount });
        }
        out
    }

    /// `Ok(())` if [`MdpInstance::validate`] reports nothing.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(v))
        }
    }

    /// Copy of this instance with a different initial distribution.
    pub fn with_initial_dist(&self, initial_dist: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            self.rewards.clone(),
            initial_dist,
            self.discount,
        )
    }
}

/// Free-function form of [`MdpInstance::validate`].
pub fn validate_instance(inst: &MdpInstance) -> Vec<Violation> {
    inst.validate()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn flatten3(t: &[Vec<Vec<f64>>], n_states: usize, n_actions: usize, what: &str) -> Result<Vec<f64>> {
    if t.len() != n_states {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected {n_states} states, got {}",
            t.len()
        )));
    }
    let mut out = Vec::with_capacity(n_states * n_actions * n_states);
    for (s, per_action) in t.iter().enumerate() {
        if per_action.len() != n_actions {
            return Err(Error::DimensionMismatch(format!(
                "{what}[{s}]: expected {n_actions} actions, got {}",
                per_action.len()
            )));
        }
        for (a, row) in per_action.iter().enumerate() {
            if row.len() != n_states {
                return Err(Error::DimensionMismatch(format!(
                    "{what}[{s}][{a}]: expected {n_states} entries, got {}",
                    row.len()
                )));
            }
            out.extend_from_slice(row);
        }
    }
    Ok(out)
}
