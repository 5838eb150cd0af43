//! Additional modeling requirements and jobsite parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{lookup_spec, resolve_skills, BindingExpr, KbError, KnowledgeBase};
use crate::model::{Category, Element, Pose, Project, ScheduleTask};

/// Jobsite restrictions and tunable navigation parameters.
///
/// Omitted fields take these defaults: footprint radius cap 0.6 m, weight cap
/// 150 kg, navigation speed 0.2 to 1.0 m/s, no prohibited zones, no zone caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiteParams {
    pub allowable_robot_footprint_radius_max: f64,
    pub allowable_robot_weight_max: f64,
    pub nav_speed_min: f64,
    pub nav_speed_max: f64,
    pub prohibited_zones: Vec<String>,
    /// zone_marker element id -> speed cap (m/s) while inside that zone.
    pub zone_speed_caps: BTreeMap<String, f64>,
    /// Free-form scalar inputs for `user_param` bindings.
    pub user_params: BTreeMap<String, f64>,
}

impl Default for SiteParams {
    fn default() -> Self {
        SiteParams {
            allowable_robot_footprint_radius_max: 0.6,
            allowable_robot_weight_max: 150.0,
            nav_speed_min: 0.2,
            nav_speed_max: 1.0,
            prohibited_zones: Vec::new(),
            zone_speed_caps: BTreeMap::new(),
            user_params: BTreeMap::new(),
        }
    }
}

impl SiteParams {
    /// Scalar lookup used by `user_param` bindings. Built-in names shadow
    /// entries in `user_params`.
    pub fn scalar(&self, name: &str) -> Option<f64> {
        match name {
            "nav_speed_min" => Some(self.nav_speed_min),
            "nav_speed_max" => Some(self.nav_speed_max),
            "allowable_robot_footprint_radius_max" => Some(self.allowable_robot_footprint_radius_max),
            "allowable_robot_weight_max" => Some(self.allowable_robot_weight_max),
            other => self.user_params.get(other).copied(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReqsError {
    #[error("task {task:?}: {source}")]
    Spec {
        task: String,
        #[source]
        source: KbErrorMessage,
    },
    #[error("navigation speed bounds inverted: min {min} > max {max}")]
    InvertedSpeed { min: f64, max: f64 },
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: String, value: f64 },
    #[error("zone {0:?} is not a zone_marker element of the project")]
    DanglingZone(String),
    #[error("speed cap {cap} for zone {zone:?} is below nav_speed_min {min}")]
    CapBelowMinimum { zone: String, cap: f64, min: f64 },
}

/// Display-only copy of a KB lookup failure (keeps `ReqsError: PartialEq`).
#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct KbErrorMessage(pub String);

impl From<KbError> for KbErrorMessage {
    fn from(e: KbError) -> Self {
        KbErrorMessage(e.to_string())
    }
}

/// Invariant-checked parameters with zone references resolved.
pub fn validate_site_params(params: &SiteParams, project: &Project) -> Result<SiteParams, ReqsError> {
    for (field, value) in [
        ("nav_speed_min", params.nav_speed_min),
        ("nav_speed_max", params.nav_speed_max),
        ("allowable_robot_footprint_radius_max", params.allowable_robot_footprint_radius_max),
        ("allowable_robot_weight_max", params.allowable_robot_weight_max),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(ReqsError::NonPositive {
                field: field.into(),
                value,
            });
        }
    }
    if params.nav_speed_min > params.nav_speed_max {
        return Err(ReqsError::InvertedSpeed {
            min: params.nav_speed_min,
            max: params.nav_speed_max,
        });
    }
    let is_zone = |id: &str| {
        project
            .element(id)
            .is_some_and(|e| e.category == Category::ZoneMarker)
    };
    for z in &params.prohibited_zones {
        if !is_zone(z) {
            return Err(ReqsError::DanglingZone(z.clone()));
        }
    }
    for (z, &cap) in &params.zone_speed_caps {
        if !is_zone(z) {
            return Err(ReqsError::DanglingZone(z.clone()));
        }
        if !(cap.is_finite() && cap > 0.0) {
            return Err(ReqsError::NonPositive {
                field: format!("zone_speed_caps.{z}"),
                value: cap,
            });
        }
        if cap < params.nav_speed_min {
            return Err(ReqsError::CapBelowMinimum {
                zone: z.clone(),
                cap,
                min: params.nav_speed_min,
            });
        }
    }
    for (name, v) in &params.user_params {
        if !v.is_finite() {
            return Err(ReqsError::NonPositive {
                field: format!("user_params.{name}"),
                value: *v,
            });
        }
    }
    Ok(params.clone())
}

// ---------------------------------------------------------------------------
// Binding resolution against a project
// ---------------------------------------------------------------------------

/// First placed element with the category and tag, in manifest order.
pub fn find_world_object<'a>(project: &'a Project, category: Category, tag: &str) -> Option<&'a Element> {
    find_in(&project.elements, category, tag)
}

fn find_in<'a, I>(elements: I, category: Category, tag: &str) -> Option<&'a Element>
where
    I: IntoIterator<Item = &'a Element>,
{
    elements
        .into_iter()
        .find(|e| e.category == category && e.has_tag(tag) && e.placement.is_some())
}

/// Resolves a world-object binding to a pose. With an approach tag the pose of
/// the closest matching zone marker is returned (ties go to manifest order).
pub fn resolve_world_object_pose(
    project: &Project,
    category: Category,
    tag: &str,
    approach: Option<&str>,
) -> Option<Pose> {
    resolve_world_object_pose_in(&project.elements, category, tag, approach)
}

/// [`resolve_world_object_pose`] over an arbitrary element collection.
pub fn resolve_world_object_pose_in<'a, I>(
    elements: I,
    category: Category,
    tag: &str,
    approach: Option<&str>,
) -> Option<Pose>
where
    I: IntoIterator<Item = &'a Element> + Clone,
{
    let object = find_in(elements.clone(), category, tag)?;
    let object_pose = object.placement?;
    let Some(approach) = approach else {
        return Some(object_pose);
    };
    let mut best: Option<(f64, Pose)> = None;
    for e in elements {
        if e.category != Category::ZoneMarker || !e.has_tag(approach) {
            continue;
        }
        let Some(p) = e.placement else { continue };
        let d = p.planar_distance(&object_pose);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequirementKind {
    WorldObject {
        category: Category,
        tag: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        approach: Option<String>,
    },
    ElementLocalPoint { point_name: String },
    UserParam { param_name: String },
}

impl RequirementKind {
    fn describe(&self) -> String {
        match self {
            RequirementKind::WorldObject { category, tag, approach } => {
                let mut s = format!("model a {category} object tagged {tag:?}");
                if let Some(a) = approach {
                    s.push_str(&format!(" together with a zone_marker tagged {a:?} next to it"));
                }
                s
            }
            RequirementKind::ElementLocalPoint { point_name } => {
                format!("specify local point {point_name:?} on every element of the task")
            }
            RequirementKind::UserParam { param_name } => format!("provide site parameter {param_name:?}"),
        }
    }
}

/// One unresolvable (task, action, argument) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelingRequirement {
    pub task_id: String,
    pub action_index: usize,
    pub action_name: String,
    pub skill_id: String,
    pub missing_arg: String,
    pub requirement_kind: RequirementKind,
    pub description: String,
    pub satisfied: bool,
}

/// `None` if the binding resolves against the project; otherwise the
/// requirement that would make it resolvable.
pub fn unresolved_kind(project: &Project, task: &ScheduleTask, binding: &BindingExpr) -> Option<RequirementKind> {
    match binding {
        BindingExpr::WorldObjectPose { category, tag, approach } => {
            match resolve_world_object_pose(project, *category, tag, approach.as_deref()) {
                Some(_) => None,
                None => Some(RequirementKind::WorldObject {
                    category: *category,
                    tag: tag.clone(),
                    approach: approach.clone(),
                }),
            }
        }
        BindingExpr::ElementLocalPoint { point_name } => {
            let all = project
                .task_elements(task)
                .all(|e| e.local_points.contains_key(point_name));
            (!all).then(|| RequirementKind::ElementLocalPoint {
                point_name: point_name.clone(),
            })
        }
        BindingExpr::UserParam { param_name } => {
            project
                .site_params
                .scalar(param_name)
                .is_none()
                .then(|| RequirementKind::UserParam {
                    param_name: param_name.clone(),
                })
        }
        BindingExpr::ElementTargetPose | BindingExpr::GeneratedMap | BindingExpr::CurrentRobotPose => None,
    }
}

fn kind_satisfied(project: &Project, task: Option<&ScheduleTask>, kind: &RequirementKind) -> bool {
    match kind {
        RequirementKind::WorldObject { category, tag, approach } => {
            resolve_world_object_pose(project, *category, tag, approach.as_deref()).is_some()
        }
        RequirementKind::ElementLocalPoint { point_name } => task.is_some_and(|t| {
            project.task_elements(t).all(|e| e.local_points.contains_key(point_name))
        }),
        RequirementKind::UserParam { param_name } => project.site_params.scalar(param_name).is_some(),
    }
}

/// One requirement per unresolvable argument of every robotized task.
pub fn derive_requirements(project: &Project, kb: &KnowledgeBase) -> Result<Vec<ModelingRequirement>, ReqsError> {
    let mut out = Vec::new();
    for task in project.robotized_tasks() {
        let spec_id = task.task_spec_id.as_deref().unwrap_or_default();
        let spec = lookup_spec(kb, spec_id).map_err(|e| ReqsError::Spec {
            task: task.id.clone(),
            source: e.into(),
        })?;
        for (index, (action, skill)) in resolve_skills(kb, spec).pairs.into_iter().enumerate() {
            for arg in &skill.input_args {
                let binding = &action.input_bindings[&arg.arg_name];
                if let Some(kind) = unresolved_kind(project, task, binding) {
                    out.push(ModelingRequirement {
                        task_id: task.id.clone(),
                        action_index: index,
                        action_name: action.action_name.clone(),
                        skill_id: skill.skill_id.clone(),
                        missing_arg: arg.arg_name.clone(),
                        description: format!(
                            "{} ({}) needs {:?}: {}",
                            action.action_name,
                            skill.skill_id,
                            arg.arg_name,
                            kind.describe()
                        ),
                        requirement_kind: kind,
                        satisfied: false,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionReport {
    pub requirements: Vec<ModelingRequirement>,
    pub pass: bool,
}

impl SatisfactionReport {
    pub fn unsatisfied(&self) -> impl Iterator<Item = &ModelingRequirement> {
        self.requirements.iter().filter(|r| !r.satisfied)
    }

    /// Fixed-width table for terminal output.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<10} {:<36} {:<8} {:<14} {:<10} description\n",
            "task", "action", "skill", "argument", "status"
        );
        for r in &self.requirements {
            s.push_str(&format!(
                "{:<10} {:<36} {:<8} {:<14} {:<10} {}\n",
                r.task_id,
                r.action_name,
                r.skill_id,
                r.missing_arg,
                if r.satisfied { "satisfied" } else { "MISSING" },
                r.description
            ));
        }
        s.push_str(&format!(
            "{} requirement(s), {} unsatisfied\n",
            self.requirements.len(),
            self.unsatisfied().count()
        ));
        s
    }
}

/// Re-evaluates earlier requirements against the current project.
pub fn check_satisfaction(project: &Project, reqs: &[ModelingRequirement]) -> SatisfactionReport {
    let requirements: Vec<ModelingRequirement> = reqs
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.satisfied = kind_satisfied(project, project.task(&r.task_id), &r.requirement_kind);
            r
        })
        .collect();
    let pass = requirements.iter().all(|r| r.satisfied);
    SatisfactionReport { requirements, pass }
}
