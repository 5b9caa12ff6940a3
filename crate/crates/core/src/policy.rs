use crate::error::{Error, Result};
use crate::mdp::{MdpInstance, VALIDATION_TOL};

/// A stationary policy `π[s][a]`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    /// Builds a policy from per-state rows; every row must be a distribution.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidPolicy("empty policy".into()));
        }
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::InvalidPolicy(format!(
                    "row {s} has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            probs.extend_from_slice(row);
        }
        Self::from_flat(n_states, n_actions, probs)
    }

    pub fn from_flat(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::InvalidPolicy(format!(
                "{} entries for a {n_states}x{n_actions} policy",
                probs.len()
            )));
        }
        let pol = Self {
            n_states,
            n_actions,
            probs,
        };
        pol.check_rows()?;
        Ok(pol)
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidPolicy(format!(
                    "action {a} at state {s} out of range (n_actions = {n_actions})"
                )));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::from_flat(actions.len(), n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    fn check_rows(&self) -> Result<()> {
        for s in 0..self.n_states {
            let row = self.row(s);
            if let Some(a) = row.iter().position(|p| !p.is_finite() || *p < -VALIDATION_TOL) {
                return Err(Error::InvalidPolicy(format!(
                    "entry ({s},{a}) = {} is not a probability",
                    row[a]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > VALIDATION_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.row(s).to_vec()).collect()
    }

    /// True iff every row puts all its mass on a single action.
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states).all(|s| self.action(s).is_some())
    }

    /// The action chosen at `s` when the row is a point mass.
    pub fn action(&self, s: usize) -> Option<usize> {
        let row = self.row(s);
        let a = row.iter().position(|&p| p == 1.0)?;
        row.iter().enumerate().all(|(b, &p)| b == a || p == 0.0).then_some(a)
    }

    /// Per-state actions of a deterministic policy.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.n_states).map(|s| self.action(s)).collect()
    }

    /// `‖π_s − π'_s‖₁`.
    pub fn l1_row_distance(&self, other: &Self, s: usize) -> f64 {
        self.row(s).iter().zip(other.row(s)).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Copy with row `s` replaced by `other`'s row.
    pub fn with_row_from(&self, other: &Self, s: usize) -> Self {
        let mut out = self.clone();
        let n = self.n_actions;
        out.probs[s * n..(s + 1) * n].copy_from_slice(other.row(s));
        out
    }

    pub fn ensure_compatible(&self, inst: &MdpInstance) -> Result<()> {
        if self.n_states != inst.n_states() || self.n_actions != inst.n_actions() {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, instance is {}x{}",
                self.n_states,
                self.n_actions,
                inst.n_states(),
                inst.n_actions()
            )));
        }
        Ok(())
    }

    /// Row-wise `Σ_a π[s][a] x[s][a]` for a per-(s,a) quantity laid out like the policy.
    pub(crate) fn expect_row(&self, s: usize, per_action: &[f64]) -> f64 {
        self.row(s).iter().zip(per_action).map(|(p, x)| p * x).sum()
    }

    /// Unchecked constructor for rows known to be distributions up to rounding.
    pub(crate) fn from_flat_trusted(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            probs,
        }
    }
}
