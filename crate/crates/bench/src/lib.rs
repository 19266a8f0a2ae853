//! Fixtures shared by the criterion benchmarks.

use biped_core::sim::DeflectionModel;
use biped_core::{default_model, RobotModel, ScenarioConfig};

pub fn model() -> RobotModel {
    default_model()
}

/// Default gait with the given number of steps and tip error.
pub fn scenario(n_steps: usize, tip_error: f64) -> ScenarioConfig {
    let mut sc = ScenarioConfig::with_seed(1);
    sc.gait.n_steps = n_steps;
    if tip_error > 0.0 {
        sc.deflection = DeflectionModel::constant(tip_error);
    }
    sc
}
