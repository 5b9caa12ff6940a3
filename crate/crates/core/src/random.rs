//! Seeded random instances and policies for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::MdpInstance;
use crate::policy::StationaryPolicy;

fn simplex(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if sparse && rng.random_bool(0.4) {
                0.0
            } else {
                -rng.random::<f64>().max(1e-300).ln()
            }
        })
        .collect();
    if w.iter().all(|x| *x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Random instance with rewards uniform on `[0, 1]` and partly sparse
/// transition rows. Same seed, same instance.
pub fn random_instance(n_states: usize, n_actions: usize, discount: f64, seed: u64) -> MdpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cube = n_states * n_actions * n_states;
    let mut transitions = Vec::with_capacity(cube);
    for _ in 0..n_states * n_actions {
        transitions.extend(simplex(&mut rng, n_states, true));
    }
    let rewards = (0..cube).map(|_| rng.random::<f64>()).collect();
    let p0 = simplex(&mut rng, n_states, false);
    MdpInstance::new(n_states, n_actions, transitions, rewards, p0, discount).expect("generated instance is valid")
}

/// Random stochastic policy.
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> StationaryPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n_states).map(|_| simplex(&mut rng, n_actions, false)).collect();
    StationaryPolicy::new(rows).expect("rows are distributions")
}

/// Random deterministic policy.
pub fn random_deterministic_policy(n_states: usize, n_actions: usize, seed: u64) -> StationaryPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions: Vec<usize> = (0..n_states).map(|_| rng.random_range(0..n_actions)).collect();
    StationaryPolicy::deterministic(&actions, n_actions).expect("actions in range")
}
