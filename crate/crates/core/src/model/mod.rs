//! 4D BIM interchange: project manifest, elements, schedule and geometry.

mod collada;
mod geometry;
mod pose;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use collada::{parse_collada_mesh, parse_collada_str, ColladaError, ColladaWarning, Mesh, ParsedMesh};
pub use geometry::{
    bounds, clip_to_rect, clip_triangle_to_band, convex_contains, convex_hull, polygon_area, Point2, Point3,
};
pub use pose::{normalize_angle, Pose, Rot3};

use crate::reqs::SiteParams;

/// Manifest schema version understood by this build.
pub const PROJECT_SCHEMA_VERSION: u32 = 1;

/// Local-point key for the end-effector attachment point on a material.
pub const PICK_POINT: &str = "pick_point";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Building,
    SiteObject,
    Storage,
    ZoneMarker,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Building => "building",
            Category::SiteObject => "site_object",
            Category::Storage => "storage",
            Category::ZoneMarker => "zone_marker",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Element geometry. Boxes are centered in x/y with their base on the local
/// z = 0 plane; meshes are used as authored (after unit scaling).
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Box { size: [f64; 3] },
    Mesh { uri: String, mesh: Arc<Mesh> },
}

const BOX_FACES: [[usize; 3]; 12] = [
    [0, 2, 1],
    [0, 3, 2],
    [4, 5, 6],
    [4, 6, 7],
    [0, 1, 5],
    [0, 5, 4],
    [1, 2, 6],
    [1, 6, 5],
    [2, 3, 7],
    [2, 7, 6],
    [3, 0, 4],
    [3, 4, 7],
];

impl Geometry {
    /// Triangles in the element-local frame.
    pub fn local_triangles(&self) -> Vec<[Point3; 3]> {
        match self {
            Geometry::Box { size } => {
                let (hx, hy, h) = (size[0] / 2.0, size[1] / 2.0, size[2]);
                let c = [
                    [-hx, -hy, 0.0],
                    [hx, -hy, 0.0],
                    [hx, hy, 0.0],
                    [-hx, hy, 0.0],
                    [-hx, -hy, h],
                    [hx, -hy, h],
                    [hx, hy, h],
                    [-hx, hy, h],
                ];
                BOX_FACES.iter().map(|f| [c[f[0]], c[f[1]], c[f[2]]]).collect()
            }
            Geometry::Mesh { mesh, .. } => mesh
                .triangles
                .iter()
                .map(|t| [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]])
                .collect(),
        }
    }

    pub fn triangle_count(&self) -> usize {
        match self {
            Geometry::Box { .. } => 12,
            Geometry::Mesh { mesh, .. } => mesh.triangles.len(),
        }
    }

    /// Local-frame bounds `(min, max)`.
    pub fn local_bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Geometry::Box { size } => ([-size[0] / 2.0, -size[1] / 2.0, 0.0], [size[0] / 2.0, size[1] / 2.0, size[2]]),
            Geometry::Mesh { mesh, .. } => mesh.bounds(),
        }
    }

    /// Longest and shortest horizontal extent, `(length, width)`.
    pub fn plan_extent(&self) -> (f64, f64) {
        let (lo, hi) = self.local_bounds();
        let (a, b) = (hi[0] - lo[0], hi[1] - lo[1]);
        (a.max(b), a.min(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    pub name: String,
    pub category: Category,
    pub geometry: Geometry,
    /// World placement. Only building elements linked to a schedule task may
    /// leave it unset while their final position is still being planned.
    pub placement: Option<Pose>,
    pub local_points: BTreeMap<String, [f64; 3]>,
    pub linked_task_id: Option<String>,
    pub tags: Vec<String>,
}

impl Element {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// World-frame triangles; empty when the element has no placement.
    pub fn world_triangles(&self) -> Vec<[Point3; 3]> {
        let Some(place) = self.placement else {
            return Vec::new();
        };
        self.geometry
            .local_triangles()
            .into_iter()
            .map(|t| t.map(|p| place.transform_point(p)))
            .collect()
    }
}

/// Convex hull of the XY projection of the element geometry lying inside the
/// `[z_min, z_max]` band (after world placement). Empty when nothing
/// intersects the band.
pub fn element_footprint(element: &Element, z_band: [f64; 2]) -> Vec<Point2> {
    let pts: Vec<Point2> = element
        .world_triangles()
        .into_iter()
        .flat_map(|t| clip_triangle_to_band(t, z_band[0], z_band[1]))
        .map(|p| [p[0], p[1]])
        .collect();
    convex_hull(&pts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTask {
    pub id: String,
    pub name: String,
    pub start_date: NaiveDate,
    pub finish_date: NaiveDate,
    pub robotization: bool,
    pub task_spec_id: Option<String>,
    pub element_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub name: String,
    pub elements: Vec<Element>,
    pub tasks: Vec<ScheduleTask>,
    pub site_params: SiteParams,
    pub simulation_start_date: NaiveDate,
}

impl Project {
    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn task(&self, id: &str) -> Option<&ScheduleTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn task_elements<'a>(&'a self, task: &'a ScheduleTask) -> impl Iterator<Item = &'a Element> + 'a {
        task.element_ids.iter().filter_map(move |id| self.element(id))
    }

    pub fn robotized_tasks(&self) -> impl Iterator<Item = &ScheduleTask> {
        self.tasks.iter().filter(|t| t.robotization)
    }

    /// Checks every type invariant and cross-reference.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut ids = BTreeSet::new();
        for e in &self.elements {
            if !ids.insert(e.id.as_str()) {
                return Err(ModelError::DuplicateId(e.id.clone()));
            }
            match &e.geometry {
                Geometry::Box { size } => {
                    if !size.iter().all(|s| s.is_finite() && *s > 0.0) {
                        return Err(ModelError::InvalidGeometry {
                            element: e.id.clone(),
                            reason: format!("box extents {size:?} must be strictly positive"),
                        });
                    }
                }
                Geometry::Mesh { mesh, .. } => mesh.validate().map_err(|err| ModelError::InvalidGeometry {
                    element: e.id.clone(),
                    reason: err.to_string(),
                })?,
            }
            if let Some(p) = &e.placement {
                if !p.is_finite() {
                    return Err(ModelError::InvalidGeometry {
                        element: e.id.clone(),
                        reason: "placement has non-finite values".into(),
                    });
                }
            } else if e.category != Category::Building || e.linked_task_id.is_none() {
                return Err(ModelError::MissingPlacement(e.id.clone()));
            }
            if let Some((name, _)) = e.local_points.iter().find(|(_, p)| !p.iter().all(|v| v.is_finite())) {
                return Err(ModelError::InvalidGeometry {
                    element: e.id.clone(),
                    reason: format!("local point {name} is not finite"),
                });
            }
        }
        let mut task_ids = BTreeSet::new();
        for t in &self.tasks {
            if !task_ids.insert(t.id.as_str()) {
                return Err(ModelError::DuplicateId(t.id.clone()));
            }
            if t.start_date > t.finish_date {
                return Err(ModelError::DateOrder(t.id.clone()));
            }
            if t.robotization && t.task_spec_id.is_none() {
                return Err(ModelError::MissingSpecId(t.id.clone()));
            }
            for eid in &t.element_ids {
                let Some(e) = self.element(eid) else {
                    return Err(ModelError::DanglingElement {
                        task: t.id.clone(),
                        element: eid.clone(),
                    });
                };
                if e.linked_task_id.as_deref() != Some(t.id.as_str()) {
                    return Err(ModelError::InconsistentLink {
                        task: t.id.clone(),
                        element: eid.clone(),
                    });
                }
            }
        }
        for e in &self.elements {
            if let Some(tid) = &e.linked_task_id {
                match self.task(tid) {
                    None => {
                        return Err(ModelError::DanglingTask {
                            element: e.id.clone(),
                            task: tid.clone(),
                        })
                    }
                    Some(t) if !t.element_ids.contains(&e.id) => {
                        return Err(ModelError::InconsistentLink {
                            task: tid.clone(),
                            element: e.id.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("unsupported manifest schema_version {0} (expected {PROJECT_SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("invalid date in {field}: {value:?}")]
    InvalidDate { field: String, value: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("task {task:?} references unknown element {element:?}")]
    DanglingElement { task: String, element: String },
    #[error("element {element:?} is linked to unknown task {task:?}")]
    DanglingTask { element: String, task: String },
    #[error("task {task:?} and element {element:?} do not reference each other")]
    InconsistentLink { task: String, element: String },
    #[error("task {0:?} starts after it finishes")]
    DateOrder(String),
    #[error("task {0:?} is robotized but has no task_spec_id")]
    MissingSpecId(String),
    #[error("element {0:?} has no placement")]
    MissingPlacement(String),
    #[error("element {element:?}: mesh file {path} cannot be resolved")]
    MeshNotFound { element: String, path: PathBuf },
    #[error("element {element:?}: mesh {path}: {source}")]
    Mesh {
        element: String,
        path: PathBuf,
        #[source]
        source: ColladaError,
    },
    #[error("element {element:?}: {reason}")]
    InvalidGeometry { element: String, reason: String },
}

// ---------------------------------------------------------------------------
// Manifest records
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    #[serde(default)]
    name: String,
    simulation_start_date: String,
    #[serde(default)]
    site_params: SiteParams,
    #[serde(default)]
    elements: Vec<ElementRecord>,
    #[serde(default)]
    tasks: Vec<TaskRecord>,
}

fn default_schema_version() -> u32 {
    PROJECT_SCHEMA_VERSION
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GeometryRecord {
    Box([f64; 3]),
    Mesh(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementRecord {
    id: String,
    #[serde(default)]
    name: String,
    category: Category,
    geometry: GeometryRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    placement: Option<Pose>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tags: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    local_points: BTreeMap<String, [f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    linked_task_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRecord {
    id: String,
    #[serde(default)]
    name: String,
    start_date: String,
    finish_date: String,
    #[serde(default)]
    robotization: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task_spec_id: Option<String>,
    #[serde(default)]
    element_ids: Vec<String>,
}

fn parse_date(field: String, value: &str) -> Result<NaiveDate, ModelError> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|_| ModelError::InvalidDate {
        field,
        value: value.to_string(),
    })
}

/// Loads a project manifest, resolving mesh references relative to the
/// manifest's directory.
pub fn load_project(manifest_path: &Path) -> Result<Project, ModelError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|source| ModelError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    parse_project(&text, base).map_err(|e| match e {
        ModelError::Malformed { message, .. } => ModelError::Malformed {
            path: manifest_path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses manifest text; `base_dir` anchors relative mesh paths.
pub fn parse_project(text: &str, base_dir: &Path) -> Result<Project, ModelError> {
    let record: ManifestRecord = toml::from_str(text).map_err(|e| ModelError::Malformed {
        path: PathBuf::new(),
        message: e.to_string(),
    })?;
    if record.schema_version != PROJECT_SCHEMA_VERSION {
        return Err(ModelError::SchemaVersion(record.schema_version));
    }
    let simulation_start_date = parse_date("simulation_start_date".into(), &record.simulation_start_date)?;

    let mut mesh_cache: HashMap<PathBuf, Arc<Mesh>> = HashMap::new();
    let mut elements = Vec::with_capacity(record.elements.len());
    for er in record.elements {
        let geometry = match er.geometry {
            GeometryRecord::Box(size) => Geometry::Box { size },
            GeometryRecord::Mesh(uri) => {
                let path = base_dir.join(&uri);
                let mesh = match mesh_cache.get(&path) {
                    Some(m) => m.clone(),
                    None => {
                        if !path.is_file() {
                            return Err(ModelError::MeshNotFound { element: er.id, path });
                        }
                        let parsed = parse_collada_mesh(&path).map_err(|source| ModelError::Mesh {
                            element: er.id.clone(),
                            path: path.clone(),
                            source,
                        })?;
                        let m = Arc::new(parsed.mesh);
                        mesh_cache.insert(path, m.clone());
                        m
                    }
                };
                Geometry::Mesh { uri, mesh }
            }
        };
        elements.push(Element {
            id: er.id,
            name: er.name,
            category: er.category,
            geometry,
            placement: er.placement,
            local_points: er.local_points,
            linked_task_id: er.linked_task_id,
            tags: er.tags,
        });
    }
    let mut tasks = Vec::with_capacity(record.tasks.len());
    for tr in record.tasks {
        tasks.push(ScheduleTask {
            start_date: parse_date(format!("tasks.{}.start_date", tr.id), &tr.start_date)?,
            finish_date: parse_date(format!("tasks.{}.finish_date", tr.id), &tr.finish_date)?,
            id: tr.id,
            name: tr.name,
            robotization: tr.robotization,
            task_spec_id: tr.task_spec_id,
            element_ids: tr.element_ids,
        });
    }
    let project = Project {
        name: record.name,
        elements,
        tasks,
        site_params: record.site_params,
        simulation_start_date,
    };
    project.validate()?;
    Ok(project)
}

/// Serializes a project back into manifest text. Mesh references keep the
/// path they were loaded with.
pub fn project_to_manifest(project: &Project) -> String {
    let record = ManifestRecord {
        schema_version: PROJECT_SCHEMA_VERSION,
        name: project.name.clone(),
        simulation_start_date: project.simulation_start_date.format("%Y-%m-%d").to_string(),
        site_params: project.site_params.clone(),
        elements: project
            .elements
            .iter()
            .map(|e| ElementRecord {
                id: e.id.clone(),
                name: e.name.clone(),
                category: e.category,
                geometry: match &e.geometry {
                    Geometry::Box { size } => GeometryRecord::Box(*size),
                    Geometry::Mesh { uri, .. } => GeometryRecord::Mesh(uri.clone()),
                },
                placement: e.placement,
                tags: e.tags.clone(),
                local_points: e.local_points.clone(),
                linked_task_id: e.linked_task_id.clone(),
            })
            .collect(),
        tasks: project
            .tasks
            .iter()
            .map(|t| TaskRecord {
                id: t.id.clone(),
                name: t.name.clone(),
                start_date: t.start_date.format("%Y-%m-%d").to_string(),
                finish_date: t.finish_date.format("%Y-%m-%d").to_string(),
                robotization: t.robotization,
                task_spec_id: t.task_spec_id.clone(),
                element_ids: t.element_ids.clone(),
            })
            .collect(),
    };
    toml::to_string(&record).expect("manifest records always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn boxed(id: &str, size: [f64; 3], placement: Pose) -> Element {
        Element {
            id: id.into(),
            name: id.into(),
            category: Category::Building,
            geometry: Geometry::Box { size },
            placement: Some(placement),
            local_points: BTreeMap::new(),
            linked_task_id: None,
            tags: vec![],
        }
    }

    #[test]
    fn empty_manifest_loads() {
        let p = parse_project("simulation_start_date = \"2022-05-10\"\n", Path::new(".")).unwrap();
        assert!(p.elements.is_empty());
        assert!(p.tasks.is_empty());
    }

    #[test]
    fn box_footprint_in_band() {
        let e = boxed("b", [1.0, 1.0, 3.0], Pose::default());
        let fp = element_footprint(&e, [0.1, 1.5]);
        assert_eq!(fp.len(), 4);
        assert!((polygon_area(&fp) - 1.0).abs() < 1e-12);
        let (lo, hi) = bounds(&fp).unwrap();
        assert_eq!(lo, [-0.5, -0.5]);
        assert_eq!(hi, [0.5, 0.5]);
        assert!(element_footprint(&e, [5.0, 6.0]).is_empty());
    }

    #[test]
    fn rotated_box_footprint_matches_corner_projection() {
        let e = boxed("r", [2.0, 1.0, 1.0], Pose::planar(0.0, 0.0, FRAC_PI_4));
        let fp = element_footprint(&e, [-1.0, 2.0]);
        assert_eq!(fp.len(), 4);
        assert!((polygon_area(&fp) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_date_is_reported() {
        let err = parse_project("simulation_start_date = \"2022-13-40\"\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, ModelError::InvalidDate { .. }), "{err}");
    }

    #[test]
    fn malformed_manifest_has_location() {
        let err = parse_project(
            "simulation_start_date = \"2022-05-10\"\n[[elements]]\nid = \"a\"\ncategory = \"nope\"\n",
            Path::new("."),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn dangling_task_reference() {
        let text = r#"
simulation_start_date = "2022-05-10"
[[elements]]
id = "w"
category = "building"
geometry = { box = [1.0, 1.0, 1.0] }
placement = { x = 0.0 }
linked_task_id = "T9"
"#;
        assert!(matches!(
            parse_project(text, Path::new(".")),
            Err(ModelError::DanglingTask { .. })
        ));
    }

    #[test]
    fn robotized_task_needs_spec() {
        let text = r#"
simulation_start_date = "2022-05-10"
[[tasks]]
id = "T1"
start_date = "2022-05-10"
finish_date = "2022-05-23"
robotization = true
"#;
        assert!(matches!(
            parse_project(text, Path::new(".")),
            Err(ModelError::MissingSpecId(_))
        ));
    }
}
