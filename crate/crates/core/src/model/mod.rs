//! Learned vehicle dynamics and the split prediction scheme.

mod dynamics;
mod ensemble;
mod normalizer;
mod split;

pub use dynamics::{
    average_rates, predict_rates, rate_dataset, write_model_input, DynamicsModel, MemberSelect, OracleDynamics,
    MODEL_INPUT_DIM,
};
pub use ensemble::{member_nll, EarlyStopping, EnsembleConfig, ModelTrainConfig, ProbabilisticEnsemble, TrainReport};
pub use normalizer::{Normalizer, STD_FLOOR};
pub use split::{
    evaluate_sequences, propagate_particles, split_predict, split_predict_sampled, split_step, ModelState,
    RolloutConfig, SplitOutcome,
};
