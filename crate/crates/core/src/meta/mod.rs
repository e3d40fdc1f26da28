//! Graph-level FiLM adaptation, task-level gradient adaptation, and the
//! episodic meta-training loop.

mod adam;
mod adapt;
pub mod checkpoint;
mod config;
mod prior;
mod train;

pub use adam::Adam;
pub use adapt::{
    adapted_params, decide, descend, dual_adapt, episode_gradient, episode_objective,
    episode_value, node_loss, query_loss, support_loss, task_adapt, Episode, EpisodeGrad,
    Objective,
};
pub use config::{HyperParams, MetaConfig};
pub use prior::{embed, film, film_factors, graph_adapt, graph_embedding, GraphPrior, PriorLayout};
pub use train::{
    mean_film_norm, predict, train, train_logged, validation_episodes, EpochLog, MetaState,
    VALIDATION_SALT,
};
pub(crate) use train::{optimize, ItemGrad, LoopSettings};
