//! Robot descriptors, capability matching and arm pose libraries.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::TaskSpecification;
use crate::model::Pose;
use crate::reqs::SiteParams;

const DEFAULT_FLEET: &str = include_str!("../../../assets/fleet/default_fleet.toml");

/// Named arm configuration. Arm motion is abstracted to a pose state entered
/// in `transition_duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmPose {
    pub pose_name: String,
    /// End-effector pose relative to the robot base while an object is held.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carried_object_transform: Option<Pose>,
    /// Largest XY half-extent of robot plus arm in this pose.
    pub lateral_extent: f64,
    pub transition_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDescriptor {
    pub id: String,
    pub capabilities: BTreeSet<String>,
    /// Circumscribed radius, compared against site size limits.
    pub footprint_radius: f64,
    /// Inscribed radius (half the base width); the navigation clearance disc.
    pub inscribed_radius: f64,
    pub height: f64,
    pub weight: f64,
    pub max_speed: f64,
    pub arm_reach: f64,
    /// Seconds to rotate a carried object between carry orientations.
    #[serde(default)]
    pub reorient_duration: f64,
    #[serde(rename = "poses", with = "pose_list")]
    pub pose_library: BTreeMap<String, ArmPose>,
    /// Ordered arm poses visited by each skill; the last one is the skill pose.
    #[serde(default)]
    pub skill_poses: BTreeMap<String, Vec<String>>,
}

mod pose_list {
    use super::ArmPose;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, ArmPose>, s: S) -> Result<S::Ok, S::Error> {
        m.values().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, ArmPose>, D::Error> {
        let list = Vec::<ArmPose>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for p in list {
            let name = p.pose_name.clone();
            if out.insert(name.clone(), p).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate pose {name:?}")));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed fleet file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("robot {robot:?}: {reason}")]
    Invalid { robot: String, reason: String },
    #[error("robot {robot:?} has no pose {name:?}; available: {available:?}")]
    UnknownPose {
        robot: String,
        name: String,
        available: Vec<String>,
    },
    #[error("no robot named {0:?} in fleet")]
    UnknownRobot(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FleetFile {
    #[serde(default)]
    robots: Vec<RobotDescriptor>,
}

impl RobotDescriptor {
    pub fn validate(&self) -> Result<(), FleetError> {
        let bad = |reason: String| FleetError::Invalid {
            robot: self.id.clone(),
            reason,
        };
        for (name, v) in [
            ("footprint_radius", self.footprint_radius),
            ("inscribed_radius", self.inscribed_radius),
            ("max_speed", self.max_speed),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(format!("{name} must be positive, got {v}")));
            }
        }
        if self.inscribed_radius > self.footprint_radius {
            return Err(bad("inscribed_radius exceeds footprint_radius".into()));
        }
        if !(self.reorient_duration >= 0.0 && self.reorient_duration.is_finite()) {
            return Err(bad("reorient_duration must be non-negative".into()));
        }
        for p in self.pose_library.values() {
            if !(p.transition_duration >= 0.0 && p.transition_duration.is_finite()) {
                return Err(bad(format!("pose {:?} has a negative duration", p.pose_name)));
            }
            if !(p.lateral_extent >= 0.0 && p.lateral_extent.is_finite()) {
                return Err(bad(format!("pose {:?} has an invalid lateral_extent", p.pose_name)));
            }
        }
        for (skill, seq) in &self.skill_poses {
            if seq.is_empty() {
                return Err(bad(format!("skill {skill:?} has an empty pose sequence")));
            }
            if let Some(missing) = seq.iter().find(|n| !self.pose_library.contains_key(*n)) {
                return Err(bad(format!("skill {skill:?} uses unknown pose {missing:?}")));
            }
        }
        Ok(())
    }

    /// Arm poses visited when executing `skill_id`, falling back to a pose
    /// named after the skill.
    pub fn skill_pose_sequence(&self, skill_id: &str) -> Option<Vec<&ArmPose>> {
        match self.skill_poses.get(skill_id) {
            Some(seq) => seq.iter().map(|n| self.pose_library.get(n)).collect(),
            None => self.pose_library.get(skill_id).map(|p| vec![p]),
        }
    }

    /// Checks that the default pose and every skill of `spec` have poses.
    pub fn supports_spec(&self, spec: &TaskSpecification) -> Result<(), FleetError> {
        pose_lookup(self, "default")?;
        for a in &spec.actions {
            if self.skill_pose_sequence(&a.skill_id).is_none() {
                return Err(FleetError::UnknownPose {
                    robot: self.id.clone(),
                    name: a.skill_id.clone(),
                    available: self.pose_library.keys().cloned().collect(),
                });
            }
        }
        Ok(())
    }
}

pub fn parse_fleet(text: &str, path: &Path) -> Result<Vec<RobotDescriptor>, FleetError> {
    let file: FleetFile = toml::from_str(text).map_err(|e| FleetError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut ids = BTreeSet::new();
    for r in &file.robots {
        if !ids.insert(r.id.as_str()) {
            return Err(FleetError::Invalid {
                robot: r.id.clone(),
                reason: "duplicate robot id".into(),
            });
        }
        r.validate()?;
    }
    Ok(file.robots)
}

pub fn load_fleet(path: &Path) -> Result<Vec<RobotDescriptor>, FleetError> {
    let text = std::fs::read_to_string(path).map_err(|source| FleetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_fleet(&text, path)
}

/// The shipped fleet: a single `husky_ur5` descriptor.
pub fn default_fleet() -> Vec<RobotDescriptor> {
    parse_fleet(DEFAULT_FLEET, Path::new("<default>")).expect("bundled fleet is valid")
}

/// Robots whose capabilities cover `required_caps` and that fit the
/// site size and weight limits. Fleet order is preserved.
pub fn match_robots<'a>(
    fleet: &'a [RobotDescriptor],
    required_caps: &BTreeSet<String>,
    site: &SiteParams,
) -> Vec<&'a RobotDescriptor> {
    fleet
        .iter()
        .filter(|r| {
            required_caps.is_subset(&r.capabilities)
                && r.footprint_radius <= site.allowable_robot_footprint_radius_max
                && r.weight <= site.allowable_robot_weight_max
        })
        .collect()
}

pub fn pose_lookup<'a>(robot: &'a RobotDescriptor, pose_name: &str) -> Result<&'a ArmPose, FleetError> {
    robot
        .pose_library
        .get(pose_name)
        .ok_or_else(|| FleetError::UnknownPose {
            robot: robot.id.clone(),
            name: pose_name.to_string(),
            available: robot.pose_library.keys().cloned().collect(),
        })
}
