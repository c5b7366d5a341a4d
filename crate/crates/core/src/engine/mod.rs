//! BON and BON++ training: generator population, misclassification gate,
//! streaming parameter importance and the epoch drivers.

pub mod config;
pub mod ops;
pub mod population;
pub mod train;

pub use config::{BatchReduction, BonConfig, GateTiming, MasUpdate, Mode};
pub use ops::{
    argmax, classifier_loss, evaluate, gate, generate, generator_step, importance_sample,
    mas_multiplier, mas_penalty, omega_update, Evaluation, Prediction, StepReport, SyntheticPoint,
    MAS_MULTIPLIER_CAP,
};
pub use population::{GeneratorMember, GeneratorPopulation, OmegaStore, ParamSnapshot};
pub use train::{
    baseline_epoch, bon_epoch, bonpp_epoch, init_classifier, synthetic_summary, train_epoch,
    EpochMetrics, TrainObserver, TrainState,
};
