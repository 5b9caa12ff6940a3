//! Adherence-aware Markov decision processes.
//!
//! A decision maker follows an algorithmic recommendation `π_alg` with
//! probability `θ` and otherwise falls back to a baseline `π_base`. This crate
//! computes optimal recommendations under that behaviour model, analyzes how
//! they change with `θ`, and provides adversarial, constrained and robust
//! variants together with verification helpers.

pub mod adherence;
pub mod adversarial;
pub mod analysis;
pub mod constrained;
pub mod enumerate;
pub mod error;
pub mod evaluation;
pub mod instances;
pub mod lp;
pub mod mdp;
pub mod policy;
pub mod random;
pub mod robust;

pub use adherence::{
    build_surrogate, build_surrogate_state_action, effective_policy, export_lp, solve_adamdp, AdherenceSpec,
};
pub use adversarial::{
    adversary_best_response, check_saddle, simulate_random_adherence, AdherenceDistribution, AdversaryKind,
    AdversaryModel, McReport, SaddleReport,
};
pub use analysis::{
    deterioration_curve, suboptimality_bound, theta_sweep, value_similar_check, worst_case_family, ThetaSweep,
};
pub use constrained::{evaluate_constrained, export_mip, CardinalityBudget};
pub use error::{Error, Result};
pub use evaluation::{evaluate_policy, solve_nominal, SolveResult, ValueFunction};
pub use instances::{load_bundle, save_bundle, InstanceBundle};
pub use mdp::{validate_instance, MdpInstance, Violation};
pub use policy::StationaryPolicy;
pub use robust::{robust_baseline_solve, robust_theta_solve, BaselineAmbiguity, ThetaInterval};
