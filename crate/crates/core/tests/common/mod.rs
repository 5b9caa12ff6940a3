//! Test-only oracles. They deliberately avoid the solver code paths: mixing,
//! evaluation and enumeration are reimplemented from scratch here.
#![allow(dead_code)]

pub mod lp_grammar;

use adamdp::{MdpInstance, StationaryPolicy};

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Value function of an arbitrary per-state action distribution `rows[s][a]`.
pub fn values_of(inst: &MdpInstance, rows: &[Vec<f64>]) -> Vec<f64> {
    let n = inst.n_states();
    let lambda = inst.discount();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] += 1.0;
        for (act, &w) in rows[s].iter().enumerate() {
            for k in 0..n {
                let p = inst.prob(s, act, k);
                b[s] += w * p * inst.reward(s, act, k);
                a[s][k] -= lambda * w * p;
            }
        }
    }
    solve_dense(a, b)
}

pub fn return_of(inst: &MdpInstance, rows: &[Vec<f64>]) -> f64 {
    values_of(inst, rows)
        .iter()
        .zip(inst.initial_dist())
        .map(|(v, p)| v * p)
        .sum()
}

/// Rows of `u_s alg_s + (1 − u_s) base_s`.
pub fn mixture(alg: &StationaryPolicy, base: &StationaryPolicy, u: &[f64]) -> Vec<Vec<f64>> {
    (0..alg.n_states())
        .map(|s| {
            (0..alg.n_actions())
                .map(|a| u[s] * alg.prob(s, a) + (1.0 - u[s]) * base.prob(s, a))
                .collect()
        })
        .collect()
}

pub fn one_hot_rows(actions: &[usize], m: usize) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|&a| (0..m).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// All vectors in `{0..m-1}^n`.
pub fn all_action_vectors(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..m).map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

/// Best deterministic recommendation at scalar θ by exhaustive scoring.
pub fn brute_force_best(inst: &MdpInstance, base: &StationaryPolicy, theta: f64) -> (Vec<usize>, f64) {
    let (n, m) = (inst.n_states(), inst.n_actions());
    let mut best = (vec![], f64::NEG_INFINITY);
    for acts in all_action_vectors(n, m) {
        let alg = StationaryPolicy::deterministic(&acts, m).unwrap();
        let r = return_of(inst, &mixture(&alg, base, &vec![theta; n]));
        if r > best.1 {
            best = (acts, r);
        }
    }
    best
}

/// Best deterministic policy of the nominal problem by exhaustive scoring.
pub fn brute_force_nominal(inst: &MdpInstance) -> f64 {
    let m = inst.n_actions();
    all_action_vectors(inst.n_states(), m)
        .iter()
        .map(|a| return_of(inst, &one_hot_rows(a, m)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum over binary `u` (optionally with `Σu ≤ k`) of the mixture return.
pub fn brute_force_binary_min(inst: &MdpInstance, alg: &StationaryPolicy, base: &StationaryPolicy, k: usize) -> f64 {
    let n = inst.n_states();
    (0..1u32 << n)
        .filter(|mask| mask.count_ones() as usize <= k)
        .map(|mask| {
            let u: Vec<f64> = (0..n).map(|s| ((mask >> s) & 1) as f64).collect();
            return_of(inst, &mixture(alg, base, &u))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Robust value with per-state vertex lists, by plain value iteration on
/// the decoupled form `θ max_a Q_sa + (1 − θ) min_k b_k·Q_s`.
pub fn robust_value_decoupled(inst: &MdpInstance, vertices: &[Vec<Vec<f64>>], theta: f64) -> f64 {
    let n = inst.n_states();
    let mut v = vec![0.0; n];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let q: Vec<f64> = (0..inst.n_actions()).map(|a| inst.q_value(s, a, &v)).collect();
                let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let worst = vertices[s]
                    .iter()
                    .map(|b| b.iter().zip(&q).map(|(p, x)| p * x).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                theta * best + (1.0 - theta) * worst
            })
            .collect();
        let d = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if d < 1e-14 {
            break;
        }
    }
    v.iter().zip(inst.initial_dist()).map(|(x, p)| x * p).sum()
}

/// Toy-instance return of `θ alg + (1−θ) base` for `ε = −1`:
/// `R_base + 2θ R_base (θ − θ̃)`.
pub fn toy_quadratic_minus(lambda: f64, theta: f64) -> f64 {
    let r_base = lambda * lambda / (1.0 - lambda);
    let tt = 1.0 - 0.1 * (1.0 - lambda) / (2.0 * lambda);
    r_base + 2.0 * theta * r_base * (theta - tt)
}

/// Same for `ε = +1`: `R_alg + 2 R_base (1−θ)(θ − (1 − θ̃))`.
pub fn toy_quadratic_plus(lambda: f64, theta: f64) -> f64 {
    let r_base = lambda * lambda / (1.0 - lambda);
    let r_alg = 0.1 * lambda + r_base;
    let tt = 1.0 - 0.1 * (1.0 - lambda) / (2.0 * lambda);
    r_alg + 2.0 * r_base * (1.0 - theta) * (theta - (1.0 - tt))
}

pub fn det(actions: &[usize], m: usize) -> StationaryPolicy {
    StationaryPolicy::deterministic(actions, m).unwrap()
}

/// Small deterministic xorshift for picking test parameters.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}
