//! Experiment plumbing: synthetic instances, a toy trainer that runs plain
//! gradient descent directly on logits (and optionally boxes), gradient
//! checking, and report files.

mod config;
mod experiment;
mod generate;
mod gradcheck;
mod train;

pub use config::{
    AssignerConfig, AssignerKind, LogitInit, ScenarioConfig, TrainerConfig, SEED_ENV_VAR,
};
pub use experiment::{
    eval_file, load_config, nms_demo, run_experiment, run_sweep, write_trajectory_csv,
    EvalInput, NmsDemoInput, NmsDemoOutput, RunSummary, SweepParam, SweepRow,
};
pub use generate::{generate_instance, random_instance};
pub use gradcheck::{grad_check, grad_check_giou, GradCheckReport, GradCheckTarget, FD_STEP};
pub use train::{train_toy, TrainingTrajectory, TrajectoryPoint};
