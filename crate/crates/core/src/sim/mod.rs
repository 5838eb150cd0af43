//! Plan compilation and deterministic kinematic execution.

mod agents;
mod clearance;
mod path;
mod plan;
mod run;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::RobotDescriptor;
use crate::model::Pose;
use crate::worldgen::SimWorld;

pub use agents::{load_agents, parse_agents, AgentError, AgentScript, Waypoint};
pub use clearance::{
    cross_section_clearance, distance_field, orientation_fit, orientation_fit_with, path_clearances,
    swept_half_widths, CarryOrientation, DistanceField, FitError, OrientationPlan, SegmentFit,
};
pub use path::{inflate, plan_cells, plan_on, plan_path, Cell, GridCost, NavGrid, Path, PathError};
pub use plan::{
    action_kind, compile_plan, install_standoff, ActionKind, ActionPlan, BoundAction, BoundValue, CompileError,
};
pub use run::{carried_pose, run};
pub use trace::{AgentInfo, AttachedState, Event, EventKind, PlanInfo, Tick, Trace, TraceError, TraceHeader};

/// Site-object tag marking the robot's initial pose.
pub const ROBOT_START_TAG: &str = "robot_start";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Trace sampling step (s).
    pub dt: f64,
    /// Skip all plans after the first failure.
    pub abort_on_failure: bool,
    /// Gap between the robot footprint and an install target at NV-2's goal (m).
    pub standoff_clearance: f64,
    /// Trace length when there is nothing to execute (s).
    pub idle_horizon: f64,
    /// An agent is "in path" within footprint radius plus this margin (m).
    pub in_path_margin: f64,
    /// Length of upcoming path checked for agents (m).
    pub path_lookahead: f64,
    /// Overrides the world's `robot_start` marker.
    pub start: Option<Pose>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.1,
            abort_on_failure: false,
            standoff_clearance: 0.2,
            idle_horizon: 60.0,
            in_path_margin: 0.3,
            path_lookahead: 2.0,
            start: None,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Params(m.into()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.standoff_clearance.is_finite() && self.standoff_clearance >= 0.0) {
            return bad("standoff_clearance must be non-negative");
        }
        if !(self.idle_horizon.is_finite() && self.idle_horizon >= 0.0) {
            return bad("idle_horizon must be non-negative");
        }
        if !(self.in_path_margin.is_finite() && self.path_lookahead.is_finite() && self.path_lookahead >= 0.0) {
            return bad("in_path_margin and path_lookahead must be finite");
        }
        if self.start.is_some_and(|p| !p.is_finite()) {
            return bad("start pose must be finite");
        }
        Ok(())
    }

    /// Obstacle inflation for navigation on a grid of `resolution`: the
    /// inscribed radius plus half a cell diagonal, so every point of an
    /// unblocked cell keeps the inscribed radius from any non-free square.
    pub fn inflation_radius(robot: &RobotDescriptor, resolution: f64) -> f64 {
        robot.inscribed_radius + resolution * std::f64::consts::SQRT_2 / 2.0
    }

    /// Robot pose before the first plan.
    pub fn robot_start(&self, world: &SimWorld) -> Result<Pose, SimError> {
        self.start
            .or_else(|| world.named_poses.get(ROBOT_START_TAG).copied())
            .ok_or(SimError::NoStart)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    Params(String),
    #[error("no start pose: set sim.start or add a site object tagged {ROBOT_START_TAG:?}")]
    NoStart,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("effective navigation speed {speed} m/s is below the site minimum {min} m/s")]
    SpeedBelowMinimum { speed: f64, min: f64 },
}
