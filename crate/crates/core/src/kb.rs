//! Construction robot knowledge base: task specifications and the robot
//! skill database.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Category;

pub const KB_SCHEMA_VERSION: u32 = 1;

const DEFAULT_KB: &str = include_str!("../../../assets/kb/default_kb.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    WorldPose,
    LocalPoint,
    MetricMap,
    TargetElementPose,
    ScalarParam,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgSpec {
    pub arg_name: String,
    pub semantic_type: SemanticType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillDef {
    pub skill_id: String,
    pub name: String,
    #[serde(default)]
    pub input_args: Vec<ArgSpec>,
    #[serde(default)]
    pub required_capabilities: Vec<String>,
}

/// Where a skill argument's concrete value comes from in the simulation world.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum BindingExpr {
    /// Pose of a world object found by category and tag. With `approach`, the
    /// value is the pose of the nearest `zone_marker` carrying that tag
    /// (e.g. the robot pickup spot beside a storage rack).
    WorldObjectPose {
        category: Category,
        tag: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        approach: Option<String>,
    },
    ElementLocalPoint { point_name: String },
    ElementTargetPose,
    UserParam { param_name: String },
    GeneratedMap,
    /// Ground-truth robot pose when the action starts.
    CurrentRobotPose,
}

impl BindingExpr {
    fn accepts(&self, ty: SemanticType) -> bool {
        use BindingExpr::*;
        match ty {
            SemanticType::WorldPose => matches!(self, WorldObjectPose { .. } | ElementTargetPose | CurrentRobotPose),
            SemanticType::LocalPoint => matches!(self, ElementLocalPoint { .. }),
            SemanticType::MetricMap => matches!(self, GeneratedMap),
            SemanticType::TargetElementPose => matches!(self, ElementTargetPose),
            SemanticType::ScalarParam => matches!(self, UserParam { .. }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDef {
    pub action_name: String,
    pub skill_id: String,
    #[serde(default)]
    pub input_bindings: BTreeMap<String, BindingExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpecification {
    pub spec_id: String,
    #[serde(default)]
    pub name: String,
    pub actions: Vec<ActionDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeBase {
    pub specs: BTreeMap<String, TaskSpecification>,
    pub skills: BTreeMap<String, SkillDef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    #[serde(default = "default_version")]
    schema_version: u32,
    #[serde(default)]
    skills: Vec<SkillDef>,
    #[serde(default)]
    specs: Vec<TaskSpecification>,
}

fn default_version() -> u32 {
    KB_SCHEMA_VERSION
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed KB file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}: unsupported schema_version {version}")]
    SchemaVersion { path: PathBuf, version: u32 },
    #[error("duplicate task specification {0:?}")]
    DuplicateSpec(String),
    #[error("duplicate skill {0:?}")]
    DuplicateSkill(String),
    #[error("skill {skill:?} declares argument {arg:?} twice")]
    DuplicateArg { skill: String, arg: String },
    #[error("specification {0:?} has no actions")]
    EmptySpec(String),
    #[error("{spec}: action {action:?} references undefined skill {skill:?}")]
    UnresolvedSkill { spec: String, action: String, skill: String },
    #[error("{spec}: action {action:?} leaves skill argument {arg:?} unbound")]
    UnboundArg { spec: String, action: String, arg: String },
    #[error("{spec}: action {action:?} binds {arg:?}, which skill {skill:?} does not take")]
    UnknownArg {
        spec: String,
        action: String,
        skill: String,
        arg: String,
    },
    #[error("{spec}: action {action:?} binds {arg:?} ({ty:?}) to an incompatible source")]
    IncompatibleBinding {
        spec: String,
        action: String,
        arg: String,
        ty: SemanticType,
    },
    #[error("unknown task specification {id:?}; known: {known:?}")]
    SpecNotFound { id: String, known: Vec<String> },
}

impl KnowledgeBase {
    /// The shipped knowledge base (interior wall framing, I-W-F-#1).
    pub fn default_kb() -> KnowledgeBase {
        let mut kb = KnowledgeBase::default();
        kb.merge_str(DEFAULT_KB, Path::new("<default>"))
            .expect("bundled KB is valid");
        kb.validate().expect("bundled KB is valid");
        kb
    }

    fn merge_str(&mut self, text: &str, path: &Path) -> Result<(), KbError> {
        let file: KbFile = toml::from_str(text).map_err(|e| KbError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if file.schema_version != KB_SCHEMA_VERSION {
            return Err(KbError::SchemaVersion {
                path: path.to_path_buf(),
                version: file.schema_version,
            });
        }
        for skill in file.skills {
            if self.skills.contains_key(&skill.skill_id) {
                return Err(KbError::DuplicateSkill(skill.skill_id));
            }
            self.skills.insert(skill.skill_id.clone(), skill);
        }
        for spec in file.specs {
            if self.specs.contains_key(&spec.spec_id) {
                return Err(KbError::DuplicateSpec(spec.spec_id));
            }
            self.specs.insert(spec.spec_id.clone(), spec);
        }
        Ok(())
    }

    /// Checks cross-references after all files are merged.
    pub fn validate(&self) -> Result<(), KbError> {
        for skill in self.skills.values() {
            let mut seen = BTreeSet::new();
            for a in &skill.input_args {
                if !seen.insert(a.arg_name.as_str()) {
                    return Err(KbError::DuplicateArg {
                        skill: skill.skill_id.clone(),
                        arg: a.arg_name.clone(),
                    });
                }
            }
        }
        for spec in self.specs.values() {
            if spec.actions.is_empty() {
                return Err(KbError::EmptySpec(spec.spec_id.clone()));
            }
            for action in &spec.actions {
                let Some(skill) = self.skills.get(&action.skill_id) else {
                    return Err(KbError::UnresolvedSkill {
                        spec: spec.spec_id.clone(),
                        action: action.action_name.clone(),
                        skill: action.skill_id.clone(),
                    });
                };
                for arg in &skill.input_args {
                    let Some(binding) = action.input_bindings.get(&arg.arg_name) else {
                        return Err(KbError::UnboundArg {
                            spec: spec.spec_id.clone(),
                            action: action.action_name.clone(),
                            arg: arg.arg_name.clone(),
                        });
                    };
                    if !binding.accepts(arg.semantic_type) {
                        return Err(KbError::IncompatibleBinding {
                            spec: spec.spec_id.clone(),
                            action: action.action_name.clone(),
                            arg: arg.arg_name.clone(),
                            ty: arg.semantic_type,
                        });
                    }
                }
                if let Some(extra) = action
                    .input_bindings
                    .keys()
                    .find(|k| !skill.input_args.iter().any(|a| &a.arg_name == *k))
                {
                    return Err(KbError::UnknownArg {
                        spec: spec.spec_id.clone(),
                        action: action.action_name.clone(),
                        skill: skill.skill_id.clone(),
                        arg: extra.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Loads and merges KB files. The result does not depend on file order.
pub fn load_kb<P: AsRef<Path>>(paths: &[P]) -> Result<KnowledgeBase, KbError> {
    let mut kb = KnowledgeBase::default();
    for p in paths {
        let path = p.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        kb.merge_str(&text, path)?;
    }
    kb.validate()?;
    Ok(kb)
}

/// Task specification by id, exact match only.
pub fn lookup_spec<'a>(kb: &'a KnowledgeBase, spec_id: &str) -> Result<&'a TaskSpecification, KbError> {
    kb.specs.get(spec_id).ok_or_else(|| KbError::SpecNotFound {
        id: spec_id.to_string(),
        known: kb.specs.keys().cloned().collect(),
    })
}

/// Actions paired with their skills.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSkills<'a> {
    pub pairs: Vec<(&'a ActionDef, &'a SkillDef)>,
    pub required_capabilities: BTreeSet<String>,
}

/// Pairs each action with its skill definition, in action order.
pub fn resolve_skills<'a>(kb: &'a KnowledgeBase, spec: &'a TaskSpecification) -> ResolvedSkills<'a> {
    let pairs: Vec<(&ActionDef, &SkillDef)> = spec
        .actions
        .iter()
        .map(|a| {
            let skill = kb
                .skills
                .get(&a.skill_id)
                .expect("skill references are checked when the KB is loaded");
            (a, skill)
        })
        .collect();
    let required_capabilities = pairs
        .iter()
        .flat_map(|(_, s)| s.required_capabilities.iter().cloned())
        .collect();
    ResolvedSkills {
        pairs,
        required_capabilities,
    }
}
