//! Project to simulation world: element partitioning by schedule, SDF
//! emission and the occupancy-grid metric map.

mod grid;
mod pgm;
mod sdf;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{grid_for_polygons, CellState, OccupancyGrid};
pub use pgm::{
    decode_pgm, encode_pgm, read_map_pgm, write_map_pgm, MapMetadata, FREE_PIXEL, FREE_THRESH, OCCUPIED_PIXEL,
    OCCUPIED_THRESH, UNKNOWN_PIXEL,
};
pub use sdf::{
    emit_sdf, file_artifact, render_element_model, render_world, sha256_hex, validate_sdf, write_manifest, Artifact, SdfError,
    SdfSummary, WorldManifest, INERTIA_DIAGONAL, MODEL_MASS,
};

use crate::kb::{lookup_spec, BindingExpr, KnowledgeBase};
use crate::model::{element_footprint, Category, Element, Point2, Pose, Project};
use crate::reqs::{validate_site_params, ReqsError, SiteParams};

#[derive(Debug, Error)]
pub enum WorldgenError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("element {element:?} is linked to robotized task {task:?} but has no placement")]
    MissingPlacement { element: String, task: String },
    #[error("element {0:?} has no placement and cannot be part of the static world")]
    UnplacedStatic(String),
    #[error("element {0:?} has no triangles")]
    EmptyGeometry(String),
    #[error("invalid world parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Site(#[from] ReqsError),
    #[error("task {task:?}: tag {tag:?} does not resolve to any named pose in the world")]
    UnresolvedTag { task: String, tag: String },
    #[error("bad map file {path}: {message}")]
    MapFormat { path: PathBuf, message: String },
    #[error("generated SDF failed validation: {0}")]
    Sdf(#[from] SdfError),
}

/// A building element still to be installed, with its final BIM placement.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledElement {
    pub element: Element,
    pub task_id: String,
    pub target: Option<Pose>,
}

/// Disjoint cover of the project elements, each set in manifest order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldPartition {
    pub preexisting: Vec<Element>,
    pub scheduled: Vec<ScheduledElement>,
    pub site_objects: Vec<Element>,
}

impl WorldPartition {
    pub fn len(&self) -> usize {
        self.preexisting.len() + self.scheduled.len() + self.site_objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements present in the world from the start.
    pub fn static_elements(&self) -> impl Iterator<Item = &Element> + Clone {
        self.preexisting.iter().chain(&self.site_objects)
    }

    pub fn all_elements(&self) -> impl Iterator<Item = &Element> + Clone {
        self.static_elements().chain(self.scheduled.iter().map(|s| &s.element))
    }

    pub fn scheduled_element(&self, id: &str) -> Option<&ScheduledElement> {
        self.scheduled.iter().find(|s| s.element.id == id)
    }
}

fn is_site_category(c: Category) -> bool {
    matches!(c, Category::SiteObject | Category::Storage | Category::ZoneMarker)
}

/// Splits elements by schedule relative to the simulation start date. Site
/// categories always go to `site_objects`; building elements whose task
/// finishes before the start, or that have no task, are preexisting.
pub fn partition_elements(project: &Project) -> Result<WorldPartition, WorldgenError> {
    let mut part = WorldPartition::default();
    for e in &project.elements {
        if is_site_category(e.category) {
            part.site_objects.push(e.clone());
            continue;
        }
        let task = e.linked_task_id.as_deref().and_then(|t| project.task(t));
        match task {
            Some(t) if t.finish_date >= project.simulation_start_date => {
                if t.robotization && e.placement.is_none() {
                    return Err(WorldgenError::MissingPlacement {
                        element: e.id.clone(),
                        task: t.id.clone(),
                    });
                }
                part.scheduled.push(ScheduledElement {
                    element: e.clone(),
                    task_id: t.id.clone(),
                    target: e.placement,
                });
            }
            _ => part.preexisting.push(e.clone()),
        }
    }
    Ok(part)
}

/// Rasterization and map-extent parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub z_band: [f64; 2],
    pub resolution: f64,
    pub margin: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            z_band: [0.1, 1.8],
            resolution: 0.05,
            margin: 1.0,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), WorldgenError> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(WorldgenError::Params(format!("resolution {} must be positive", self.resolution)));
        }
        if !(self.z_band[0] <= self.z_band[1]) {
            return Err(WorldgenError::Params(format!("z_band {:?} is not ordered", self.z_band)));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(WorldgenError::Params(format!("margin {} must be non-negative", self.margin)));
        }
        Ok(())
    }
}

/// Region of the site with navigation restrictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: String,
    pub polygon: Vec<Point2>,
    pub prohibited: bool,
    pub speed_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub name: String,
    pub params: WorldParams,
    pub partition: WorldPartition,
    /// Static map: preexisting and site-object footprints only.
    pub grid: OccupancyGrid,
    /// Tag -> pose of the first placed site object carrying the tag.
    pub named_poses: BTreeMap<String, Pose>,
    pub install_targets: BTreeMap<String, Pose>,
    pub zones: Vec<Zone>,
    pub site: SiteParams,
    pub warnings: Vec<String>,
}

/// Footprints of the static elements that intersect the height band. Zone
/// markers are annotations and never occupy space.
pub fn static_footprints(partition: &WorldPartition, z_band: [f64; 2]) -> Vec<(String, Vec<Point2>)> {
    partition
        .static_elements()
        .filter(|e| e.category != Category::ZoneMarker)
        .map(|e| (e.id.clone(), element_footprint(e, z_band)))
        .filter(|(_, f)| f.len() >= 3)
        .collect()
}

/// Occupied iff a cell overlaps a preexisting or site-object footprint by a
/// positive area; scheduled elements are left out.
pub fn build_occupancy_grid(
    partition: &WorldPartition,
    z_band: [f64; 2],
    resolution: f64,
    margin: f64,
) -> (OccupancyGrid, Option<String>) {
    let polys: Vec<Vec<Point2>> = static_footprints(partition, z_band).into_iter().map(|(_, p)| p).collect();
    grid_for_polygons(&polys, resolution, margin)
}

/// Whole-height footprint, used for zone membership.
pub fn zone_polygon(e: &Element) -> Vec<Point2> {
    element_footprint(e, [f64::NEG_INFINITY, f64::INFINITY])
}

/// Assembles the simulation world. Unless `allow_unresolved` is set, every
/// world-object tag used by the active task specifications must resolve.
pub fn build_world(
    project: &Project,
    kb: &KnowledgeBase,
    params: WorldParams,
    allow_unresolved: bool,
) -> Result<SimWorld, WorldgenError> {
    params.validate()?;
    let site = validate_site_params(&project.site_params, project)?;
    let partition = partition_elements(project)?;
    for e in partition.static_elements() {
        if e.placement.is_none() {
            return Err(WorldgenError::UnplacedStatic(e.id.clone()));
        }
        if e.geometry.triangle_count() == 0 {
            return Err(WorldgenError::EmptyGeometry(e.id.clone()));
        }
    }
    let (grid, warning) = build_occupancy_grid(&partition, params.z_band, params.resolution, params.margin);

    let mut named_poses = BTreeMap::new();
    for e in &partition.site_objects {
        let Some(p) = e.placement else { continue };
        for t in &e.tags {
            named_poses.entry(t.clone()).or_insert(p);
        }
    }
    let install_targets: BTreeMap<String, Pose> = partition
        .scheduled
        .iter()
        .filter_map(|s| s.target.map(|t| (s.element.id.clone(), t)))
        .collect();

    let prohibited: BTreeSet<&str> = site.prohibited_zones.iter().map(String::as_str).collect();
    let zones = partition
        .site_objects
        .iter()
        .filter(|e| e.category == Category::ZoneMarker)
        .filter(|e| prohibited.contains(e.id.as_str()) || site.zone_speed_caps.contains_key(&e.id))
        .map(|e| Zone {
            id: e.id.clone(),
            polygon: zone_polygon(e),
            prohibited: prohibited.contains(e.id.as_str()),
            speed_cap: site.zone_speed_caps.get(&e.id).copied(),
        })
        .collect();

    let world = SimWorld {
        name: if project.name.is_empty() {
            "world".into()
        } else {
            project.name.clone()
        },
        params,
        partition,
        grid,
        named_poses,
        install_targets,
        zones,
        site,
        warnings: warning.into_iter().collect(),
    };
    if !allow_unresolved {
        if let Some((task, tag)) = world.unresolved_tags(project, kb).into_iter().next() {
            return Err(WorldgenError::UnresolvedTag { task, tag });
        }
    }
    Ok(world)
}

impl SimWorld {
    /// `(task, tag)` pairs of world-object bindings with no named pose.
    pub fn unresolved_tags(&self, project: &Project, kb: &KnowledgeBase) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for task in project.robotized_tasks() {
            let Ok(spec) = lookup_spec(kb, task.task_spec_id.as_deref().unwrap_or_default()) else {
                continue;
            };
            for action in &spec.actions {
                for binding in action.input_bindings.values() {
                    if let BindingExpr::WorldObjectPose { tag, approach, .. } = binding {
                        for t in std::iter::once(tag).chain(approach) {
                            if !self.named_poses.contains_key(t) && !out.contains(&(task.id.clone(), t.clone())) {
                                out.push((task.id.clone(), t.clone()));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn speed_zones(&self) -> impl Iterator<Item = (&Zone, f64)> {
        self.zones.iter().filter_map(|z| z.speed_cap.map(|c| (z, c)))
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), WorldgenError> {
    std::fs::write(path, bytes).map_err(|source| WorldgenError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_project;

    const SMALL: &str = r#"
name = "small"
simulation_start_date = "2022-05-10"

[[elements]]
id = "wall"
category = "building"
geometry = { box = [4.0, 0.2, 2.5] }
placement = { x = 0.0, y = 2.0 }
linked_task_id = "walls"

[[elements]]
id = "frame_0"
category = "building"
geometry = { box = [1.2, 0.1, 2.4] }
placement = { x = 1.0, y = 0.0 }
linked_task_id = "framing"

[[elements]]
id = "store"
category = "storage"
geometry = { box = [1.0, 1.0, 1.0] }
placement = { x = -3.0, y = 0.0 }
tags = ["frame_material_storage"]

[[tasks]]
id = "walls"
start_date = "2022-04-01"
finish_date = "2022-04-20"
element_ids = ["wall"]

[[tasks]]
id = "framing"
start_date = "2022-05-10"
finish_date = "2022-05-23"
robotization = true
task_spec_id = "I-W-F-#1"
element_ids = ["frame_0"]
"#;

    #[test]
    fn partition_by_schedule() {
        let p = parse_project(SMALL, Path::new(".")).unwrap();
        let part = partition_elements(&p).unwrap();
        assert_eq!(part.preexisting.len(), 1);
        assert_eq!(part.scheduled.len(), 1);
        assert_eq!(part.site_objects.len(), 1);
        assert_eq!(part.scheduled[0].target, p.element("frame_0").unwrap().placement);
    }

    #[test]
    fn missing_pickup_tag_blocks_build_unless_allowed() {
        let p = parse_project(SMALL, Path::new(".")).unwrap();
        let kb = KnowledgeBase::default_kb();
        let err = build_world(&p, &kb, WorldParams::default(), false).unwrap_err();
        assert!(matches!(err, WorldgenError::UnresolvedTag { ref tag, .. } if tag == "pickup_location"), "{err}");
        let w = build_world(&p, &kb, WorldParams::default(), true).unwrap();
        assert!(w.named_poses.contains_key("frame_material_storage"));
        assert_eq!(w.install_targets.len(), 1);
    }

    #[test]
    fn scheduled_frame_does_not_mark_the_map() {
        let p = parse_project(SMALL, Path::new(".")).unwrap();
        let w = build_world(&p, &KnowledgeBase::default_kb(), WorldParams::default(), true).unwrap();
        let (r, c) = w.grid.cell_of(1.0, 0.0).unwrap();
        assert_eq!(w.grid.get(r, c), CellState::Free);
        let (r, c) = w.grid.cell_of(0.0, 2.0).unwrap();
        assert_eq!(w.grid.get(r, c), CellState::Occupied);
    }
}
