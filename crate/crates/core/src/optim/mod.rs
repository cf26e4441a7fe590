//! Policy improvement and policy exploration steps.

mod adam;
mod diversity;
mod gae;
mod penalty;
mod ppo;
mod trust;

pub use adam::Adam;
pub use diversity::{
    diversity_gradient, diversity_gradient_traces, diversity_surrogate, DiversityGradient,
};
pub use gae::{compute_gae, normalize_advantages};
pub use penalty::{
    adapt_sigma, guidance_penalty_gradient, hinge_distances, penalty_weights,
    score_function_gradient, weighted_log_likelihood, PenaltyState,
};
pub use ppo::{
    build_samples, mean_entropy, policy_improvement_step, ppo_clip_objective, value_loss,
    AgentOptimizers, ImprovementStats, PpoConfig, Sample,
};
pub use trust::{
    conjugate_gradient, exploration_step, first_order_exploration, fisher_vector_product,
    output_fisher_product, CgSolution, ExploreConfig, ExploreOutcome, PolicyExploreModel,
    TrustRegionModel,
};
