//! Deterministic kinematic simulation of a 12-DoF biped walking over unknown
//! terrain, with a four-probe predictive foot sensor driving a cumulative
//! ankle-angle controller and an early-touchdown landing guard.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: physical parameters (joint specs, leg lengths, foot/probe geometry, masses).
//! - [`kinematics`]: leg forward/inverse kinematics and lumped-mass centre of mass.
//! - [`poly`]: piecewise polynomial trajectories.
//! - [`planner`]: footsteps, phase timeline, swing trajectories, ZMP-optimal pelvis motion.
//! - [`sensor`]: corner-probe measurement model and aggregation.
//! - [`controller`]: cumulative ankle correction, landing guard, phase machine.
//! - [`sim`]: terrain, structural deflection, the 200 Hz episode loop.
//! - [`scenario`], [`trace`], [`sweep`]: file formats and batch runs used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod kinematics;
pub mod model;
pub mod planner;
pub mod poly;
pub mod scenario;
pub mod sensor;
pub mod sim;
pub mod sweep;
pub mod trace;
mod units;

pub use controller::{AdaptationState, AnkleCommand, ControllerConfig, ControllerError};
pub use kinematics::{LegJointVector, Pose, Side};
pub use model::{default_model, load_model, RobotModel};
pub use planner::{GaitParams, GaitPlan, Phase};
pub use poly::PiecewisePolynomial;
pub use scenario::ScenarioConfig;
pub use sensor::{ProbeReading, SensorFeedback};
pub use sim::{run_episode, Episode, ImpactMetrics, SimTrace};

/// Gravitational acceleration, m/s².
pub const GRAVITY: f64 = 9.81;

/// Control period of the 200 Hz loop, s.
pub const CONTROL_DT: f64 = 0.005;
