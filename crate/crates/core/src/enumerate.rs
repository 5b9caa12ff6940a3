//! Exhaustive enumeration of deterministic policies, with a size guard.

use crate::error::{Error, Result};
use crate::policy::StationaryPolicy;

/// Largest number of cases any exhaustive routine will visit.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// `|A|^|S|` as a float (it overflows integers quickly).
pub fn count_deterministic(n_states: usize, n_actions: usize) -> f64 {
    (n_actions as f64).powi(n_states as i32)
}

pub(crate) fn guard(what: &'static str, count: f64) -> Result<()> {
    if count > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            what,
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Every deterministic policy, in lexicographic order of the action vector.
pub fn deterministic_policies(n_states: usize, n_actions: usize) -> Result<Vec<StationaryPolicy>> {
    guard("deterministic policies", count_deterministic(n_states, n_actions))?;
    Ok(action_vectors(n_states, n_actions)
        .into_iter()
        .map(|a| StationaryPolicy::deterministic(&a, n_actions).expect("actions in range"))
        .collect())
}

/// All vectors in `{0..m-1}^n`, lexicographic, first coordinate most significant.
pub fn action_vectors(n: usize, m: usize) -> Vec<Vec<usize>> {
    let total = m.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0usize; n];
    for _ in 0..total {
        out.push(cur.clone());
        for i in (0..n).rev() {
            cur[i] += 1;
            if cur[i] < m {
                break;
            }
            cur[i] = 0;
        }
    }
    out
}

/// `Σ_{j ≤ k} C(n, j)`.
pub fn count_subsets_up_to(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    let mut total = 0.0;
    for j in 0..=k.min(n) {
        if j > 0 {
            c = c * (n - j + 1) as f64 / j as f64;
        }
        total += c;
    }
    total
}

/// Binary vectors with at most `k` ones, lexicographic with 0 before 1.
pub fn binary_vectors_up_to(n: usize, k: usize) -> Vec<Vec<u8>> {
    fn rec(i: usize, ones: usize, k: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        cur[i] = 0;
        rec(i + 1, ones, k, cur, out);
        if ones < k {
            cur[i] = 1;
            rec(i + 1, ones + 1, k, cur, out);
            cur[i] = 0;
        }
    }
    let mut out = Vec::new();
    rec(0, 0, k, &mut vec![0; n], &mut out);
    out
}
