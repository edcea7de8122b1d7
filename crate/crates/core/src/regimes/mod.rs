//! Pre-training procedures: reconstruction only, contrastive only, joint
//! multi-task training, two-phase grafting in either order and layer
//! grafting with per-stage learning rates.

mod anchor;
mod model;
mod momentum;
mod optim;
mod schedule;
mod stage;
mod train;

pub use anchor::l2_anchor_penalty;
pub use model::{build_views, Model, ViewNeeds, Views, MOMENTUM_PREFIXES};
pub use momentum::{MomentumEncoder, MomentumSchedule};
pub use optim::{decay_exempt, AdamW, AdamWConfig};
pub use schedule::{lr_schedule, LrSchedule};
pub use stage::{StageAssignment, StagePlan, STAGE_LR_GRID};
pub use train::{
    encoder_init_seed, measure_conflict, regime_phases, run_phase, run_regime, step_losses, GraftOrder, LowerMode,
    LrMode, MimView, Objective, PhasePlan, Regime, RegimeConfig, RegimeOutput, StepLosses, TrainEvent, TrainLogRow,
};
