//! Compiling a robotized task into bound, executable action plans.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::path::NavGrid;
use super::SimParams;
use crate::fleet::RobotDescriptor;
use crate::kb::{resolve_skills, BindingExpr, KnowledgeBase, SemanticType, SkillDef, TaskSpecification};
use crate::model::{normalize_angle, Pose, ScheduleTask};
use crate::reqs::resolve_world_object_pose_in;
use crate::worldgen::SimWorld;

/// Concrete value of a skill input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundValue {
    Pose { pose: Pose },
    Point { point: [f64; 3] },
    /// Reference to the world's working occupancy grid.
    Map { resolution: f64, width: usize, height: usize },
    Scalar { value: f64 },
}

/// How the executor runs a skill, decided by its input types: a metric map
/// means navigation, a local point a grasp, a target element pose a release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Navigate,
    Grasp,
    Release,
    /// Arm motion only.
    Manipulate,
}

pub fn action_kind(skill: &SkillDef) -> ActionKind {
    let has = |t: SemanticType| skill.input_args.iter().any(|a| a.semantic_type == t);
    if has(SemanticType::MetricMap) {
        ActionKind::Navigate
    } else if has(SemanticType::LocalPoint) {
        ActionKind::Grasp
    } else if has(SemanticType::TargetElementPose) {
        ActionKind::Release
    } else {
        ActionKind::Manipulate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundAction {
    pub action_name: String,
    pub skill_id: String,
    pub kind: ActionKind,
    pub bound_inputs: BTreeMap<String, BoundValue>,
    pub target_element_id: Option<String>,
    /// Arm poses visited, in order; the last is the skill pose.
    pub pose_sequence: Vec<String>,
}

impl BoundAction {
    pub fn pose_input(&self, arg: &str) -> Option<Pose> {
        match self.bound_inputs.get(arg) {
            Some(BoundValue::Pose { pose }) => Some(*pose),
            _ => None,
        }
    }

    pub fn point_input(&self) -> Option<[f64; 3]> {
        self.bound_inputs.values().find_map(|v| match v {
            BoundValue::Point { point } => Some(*point),
            _ => None,
        })
    }
}

/// One task execution on one target element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub task_id: String,
    pub robot_id: String,
    pub element_id: String,
    /// `(length, width)` of the element footprint, used for carry fitting.
    pub carried_extent: (f64, f64),
    pub steps: Vec<BoundAction>,
    /// Non-fatal findings, e.g. a destination inside an inflated obstacle.
    pub warnings: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("task {task:?} is not robotized")]
    NotRobotized { task: String },
    #[error("task {task:?}, action {action:?}: argument {arg:?} cannot be bound: {reason}")]
    Unbound {
        task: String,
        action: String,
        arg: String,
        reason: String,
    },
    #[error("robot {robot:?} has no pose sequence for skill {skill:?}")]
    MissingPoses { robot: String, skill: String },
    #[error("robot {robot:?}: pose {pose:?} is used while holding an object but has no carried_object_transform")]
    NoCarryTransform { robot: String, pose: String },
}

/// Robot pose facing an install target from `standoff` meters along the
/// target's local +y axis, or along -y if that side is blocked.
pub fn install_standoff(target: &Pose, standoff: f64, nav: Option<&NavGrid>) -> (Pose, bool) {
    let n = [-target.yaw.sin(), target.yaw.cos()];
    let candidate = |s: f64| {
        let (nx, ny) = (s * n[0], s * n[1]);
        Pose::planar(
            target.x + standoff * nx,
            target.y + standoff * ny,
            normalize_angle((-ny).atan2(-nx)),
        )
    };
    let front = candidate(1.0);
    let Some(nav) = nav else { return (front, true) };
    if nav.is_free_point(front.x, front.y) {
        return (front, true);
    }
    let back = candidate(-1.0);
    if nav.is_free_point(back.x, back.y) {
        return (back, true);
    }
    (front, false)
}

/// One plan per element of `task`, in the task's element order, with every
/// input bound. `start` is the robot pose before the first plan; the initial
/// pose of each navigation is the destination of the one before it.
pub fn compile_plan(
    task: &ScheduleTask,
    spec: &TaskSpecification,
    kb: &KnowledgeBase,
    world: &SimWorld,
    robot: &RobotDescriptor,
    start: Pose,
    params: &SimParams,
) -> Result<Vec<ActionPlan>, CompileError> {
    if !task.robotization {
        return Err(CompileError::NotRobotized { task: task.id.clone() });
    }
    let pairs = resolve_skills(kb, spec).pairs;
    let mut sequences = Vec::with_capacity(pairs.len());
    for (action, _) in &pairs {
        let seq = robot
            .skill_pose_sequence(&action.skill_id)
            .ok_or_else(|| CompileError::MissingPoses {
                robot: robot.id.clone(),
                skill: action.skill_id.clone(),
            })?;
        sequences.push(seq.iter().map(|p| p.pose_name.clone()).collect::<Vec<_>>());
    }
    // every pose entered between grasp and release must define a carry transform
    let kinds: Vec<ActionKind> = pairs.iter().map(|(_, s)| action_kind(s)).collect();
    let mut holding = false;
    for (k, seq) in kinds.iter().zip(&sequences) {
        match k {
            ActionKind::Grasp => {
                let last = seq.last().expect("sequences are non-empty");
                check_carry(robot, last)?;
                holding = true;
            }
            ActionKind::Release => {
                for p in seq {
                    check_carry(robot, p)?;
                }
                holding = false;
            }
            _ if holding => {
                for p in seq {
                    check_carry(robot, p)?;
                }
            }
            _ => {}
        }
    }

    let nav_static = NavGrid::new(&world.grid, SimParams::inflation_radius(robot, world.grid.resolution));
    let standoff = robot.footprint_radius + params.standoff_clearance;
    let map = BoundValue::Map {
        resolution: world.grid.resolution,
        width: world.grid.width,
        height: world.grid.height,
    };
    let mut plans = Vec::new();
    let mut robot_pose = start;
    for element_id in &task.element_ids {
        let Some(sched) = world.partition.scheduled_element(element_id) else {
            continue;
        };
        let element = &sched.element;
        let mut warnings = Vec::new();
        let mut steps = Vec::with_capacity(pairs.len());
        for (idx, (action, skill)) in pairs.iter().enumerate() {
            let mut bound = BTreeMap::new();
            for arg in &skill.input_args {
                let binding = &action.input_bindings[&arg.arg_name];
                let unbound = |reason: String| CompileError::Unbound {
                    task: task.id.clone(),
                    action: action.action_name.clone(),
                    arg: arg.arg_name.clone(),
                    reason,
                };
                let value = match binding {
                    BindingExpr::WorldObjectPose { category, tag, approach } => {
                        let pose = resolve_world_object_pose_in(
                            world.partition.all_elements(),
                            *category,
                            tag,
                            approach.as_deref(),
                        )
                        .ok_or_else(|| unbound(format!("no {category} object tagged {tag:?}")))?;
                        BoundValue::Pose { pose }
                    }
                    BindingExpr::ElementLocalPoint { point_name } => {
                        let point = *element
                            .local_points
                            .get(point_name)
                            .ok_or_else(|| unbound(format!("element {element_id:?} has no point {point_name:?}")))?;
                        BoundValue::Point { point }
                    }
                    BindingExpr::ElementTargetPose => {
                        let target = sched
                            .target
                            .ok_or_else(|| unbound(format!("element {element_id:?} has no placement")))?;
                        if arg.semantic_type == SemanticType::WorldPose {
                            // a navigation goal next to the target, not the target itself
                            let (pose, ok) = install_standoff(&target, standoff, Some(&nav_static));
                            if !ok {
                                warnings.push(format!(
                                    "install standoff for {element_id} at ({:.2}, {:.2}) is blocked",
                                    pose.x, pose.y
                                ));
                            }
                            BoundValue::Pose { pose }
                        } else {
                            BoundValue::Pose { pose: target }
                        }
                    }
                    BindingExpr::UserParam { param_name } => BoundValue::Scalar {
                        value: world
                            .site
                            .scalar(param_name)
                            .ok_or_else(|| unbound(format!("site parameter {param_name:?} is not set")))?,
                    },
                    BindingExpr::GeneratedMap => map.clone(),
                    BindingExpr::CurrentRobotPose => BoundValue::Pose { pose: robot_pose },
                };
                bound.insert(arg.arg_name.clone(), value);
            }
            if kinds[idx] == ActionKind::Navigate {
                if let Some(BoundValue::Pose { pose }) = bound.get("destination") {
                    if !nav_static.is_free_point(pose.x, pose.y) {
                        warnings.push(format!(
                            "{}: destination ({:.2}, {:.2}) is outside free space",
                            action.action_name, pose.x, pose.y
                        ));
                    }
                    robot_pose = *pose;
                }
            }
            steps.push(BoundAction {
                action_name: action.action_name.clone(),
                skill_id: action.skill_id.clone(),
                kind: kinds[idx],
                bound_inputs: bound,
                target_element_id: Some(element_id.clone()),
                pose_sequence: sequences[idx].clone(),
            });
        }
        plans.push(ActionPlan {
            task_id: task.id.clone(),
            robot_id: robot.id.clone(),
            element_id: element_id.clone(),
            carried_extent: element.geometry.plan_extent(),
            steps,
            warnings,
        });
    }
    Ok(plans)
}

fn check_carry(robot: &RobotDescriptor, pose: &str) -> Result<(), CompileError> {
    match robot.pose_library.get(pose) {
        Some(p) if p.carried_object_transform.is_some() => Ok(()),
        _ => Err(CompileError::NoCarryTransform {
            robot: robot.id.clone(),
            pose: pose.to_string(),
        }),
    }
}
