//! Client-selection policies: E3CS and the Random, FedCS and pow-d baselines.

pub mod alloc;
pub mod baselines;
pub mod exp3;
pub mod policy;

pub use alloc::{check_quota, prob_alloc, prob_alloc_log, solve_alpha, ProbAllocation};
pub use baselines::{fedcs_policy, powd_policy, powd_select, random_policy};
pub use exp3::{
    estimate, check_eta, tuned_eta, update_exponent, update_weights, ExpWeightState, FairnessSchedule,
    DEFAULT_ETA,
};
pub use policy::{Decision, E3cs, LossProbe, PolicyKind, RoundContext, SelectionPolicy};
