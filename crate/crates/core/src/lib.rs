//! Core algorithms for learning grasp poses from images: mapping image
//! centroids to end-effector positions, and learning a discrete gripper
//! orientation with a deep Q-network trained in a simulated grasp cycle.
//!
//! The crate is `no_std` and needs only `alloc`; file formats, configuration
//! and the experiment driver live in the `graspolab` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod gdqn;
pub mod geometry;
pub mod linalg;
pub mod mapping;
pub mod nn;
pub mod sim;

pub use gdqn::{
    action_angles, epsilon_at, evaluate_greedy, select_action, train, train_agent, train_while,
    Agent, AgentConfig, AgentError, EpisodeRecord, ReplayMemory, Transition,
};
pub use geometry::{
    angular_distance, bbox_center, BoundingBox, EEPosition, ImagePoint, WorkspaceConfig,
};
pub use linalg::Matrix;
pub use mapping::{
    assemble_observations, fitness, ga_fit, lr_fit, lr_fit_with, pi_fit, predict_position, rmse,
    AxisLine, Chromosome, FitnessKind, GaConfig, GaResult, MappingError, MappingMatrix,
    ObservationSet, PositionModel,
};
pub use nn::{Network, Tensor};
pub use sim::{
    gen_position_dataset, random_policy_success_rate, EnvConfig, EnvError, GraspEnvironment,
    SimEnv, StepResult,
};
