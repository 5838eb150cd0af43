//! SDF 1.6 emission and a structural validator for the subset we emit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{write_file, SimWorld, WorldgenError};
use crate::model::{Category, Element, Geometry, Mesh, Pose};

/// Placeholder mass for static models; simulators ignore it for static bodies.
pub const MODEL_MASS: f64 = 1.0;
/// Diagonal of the placeholder inertia tensor (kg m^2).
pub const INERTIA_DIAGONAL: f64 = 1.0;

pub const SDF_VERSION: &str = "1.6";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldManifest {
    pub project: String,
    pub resolution: f64,
    pub z_band: [f64; 2],
    pub margin: f64,
    /// Set when the world was built past unsatisfied requirements.
    pub force_override: bool,
    pub unsatisfied_requirements: usize,
    pub scheduled_elements: Vec<String>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

/// Formats a float with the shortest round-trip representation; `-0` prints
/// as `0`.
fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

fn nums(vs: &[f64]) -> String {
    vs.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
}

fn pose_text(p: &Pose) -> String {
    nums(&[p.x, p.y, p.z, p.roll, p.pitch, p.yaw])
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn mesh_file_names<'a>(elements: impl Iterator<Item = &'a Element>) -> BTreeMap<String, String> {
    let mut names = BTreeMap::new();
    let mut used = BTreeSet::new();
    for e in elements {
        if let Geometry::Mesh { uri, .. } = &e.geometry {
            if names.contains_key(uri) {
                continue;
            }
            let stem: String = Path::new(uri)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "mesh".into())
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            let mut name = format!("{stem}.dae");
            let mut k = 1;
            while !used.insert(name.clone()) {
                name = format!("{stem}_{k}.dae");
                k += 1;
            }
            names.insert(uri.clone(), name);
        }
    }
    names
}

fn geometry_block(out: &mut String, indent: &str, g: &Geometry, mesh_names: &BTreeMap<String, String>) {
    match g {
        Geometry::Box { size } => {
            let _ = writeln!(out, "{indent}<pose>0 0 {} 0 0 0</pose>", num(size[2] / 2.0));
            let _ = writeln!(
                out,
                "{indent}<geometry><box><size>{}</size></box></geometry>",
                nums(size)
            );
        }
        Geometry::Mesh { uri, .. } => {
            let _ = writeln!(
                out,
                "{indent}<geometry><mesh><uri>meshes/{}</uri></mesh></geometry>",
                esc(&mesh_names[uri])
            );
        }
    }
}

fn material(category: Category) -> &'static str {
    match category {
        Category::Building => "0.8 0.8 0.75 1",
        Category::SiteObject => "0.5 0.5 0.5 1",
        Category::Storage => "0.7 0.5 0.3 1",
        Category::ZoneMarker => "0.2 0.7 0.2 0.4",
    }
}

fn model_block(out: &mut String, indent: &str, e: &Element, pose: Option<&Pose>, mesh_names: &BTreeMap<String, String>) {
    let i1 = format!("{indent}  ");
    let i2 = format!("{indent}    ");
    let i3 = format!("{indent}      ");
    let _ = writeln!(out, "{indent}<model name=\"{}\">", esc(&e.id));
    let _ = writeln!(out, "{i1}<static>true</static>");
    if let Some(p) = pose {
        let _ = writeln!(out, "{i1}<pose>{}</pose>", pose_text(p));
    }
    let _ = writeln!(out, "{i1}<link name=\"link\">");
    let _ = writeln!(
        out,
        "{i2}<inertial><mass>{}</mass><inertia><ixx>{d}</ixx><ixy>0</ixy><ixz>0</ixz><iyy>{d}</iyy><iyz>0</iyz><izz>{d}</izz></inertia></inertial>",
        num(MODEL_MASS),
        d = num(INERTIA_DIAGONAL)
    );
    if e.category != Category::ZoneMarker {
        let _ = writeln!(out, "{i2}<collision name=\"collision\">");
        geometry_block(out, &i3, &e.geometry, mesh_names);
        let _ = writeln!(out, "{i2}</collision>");
    }
    let _ = writeln!(out, "{i2}<visual name=\"visual\">");
    geometry_block(out, &i3, &e.geometry, mesh_names);
    let c = material(e.category);
    let _ = writeln!(out, "{i3}<material><ambient>{c}</ambient><diffuse>{c}</diffuse></material>");
    let _ = writeln!(out, "{i2}</visual>");
    let _ = writeln!(out, "{i1}</link>");
    let _ = writeln!(out, "{indent}</model>");
}

fn mesh_names_for(world: &SimWorld) -> BTreeMap<String, String> {
    mesh_file_names(world.partition.all_elements())
}

/// World file: ground plane, sun and every static model inline.
pub fn render_world(world: &SimWorld) -> String {
    let names = mesh_names_for(world);
    let g = &world.grid;
    let (w, h) = (g.width as f64 * g.resolution, g.height as f64 * g.resolution);
    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\"?>");
    let _ = writeln!(s, "<sdf version=\"{SDF_VERSION}\">");
    let _ = writeln!(s, "  <world name=\"{}\">", esc(&world.name));
    let _ = writeln!(s, "    <gravity>0 0 -9.8</gravity>");
    let _ = writeln!(s, "    <light name=\"sun\" type=\"directional\">");
    let _ = writeln!(s, "      <cast_shadows>true</cast_shadows>");
    let _ = writeln!(s, "      <pose>0 0 10 0 0 0</pose>");
    let _ = writeln!(s, "      <diffuse>0.8 0.8 0.8 1</diffuse>");
    let _ = writeln!(s, "      <direction>-0.5 0.1 -0.9</direction>");
    let _ = writeln!(s, "    </light>");
    let _ = writeln!(s, "    <model name=\"ground_plane\">");
    let _ = writeln!(s, "      <static>true</static>");
    let _ = writeln!(
        s,
        "      <pose>{}</pose>",
        nums(&[g.origin.x + w / 2.0, g.origin.y + h / 2.0, 0.0, 0.0, 0.0, 0.0])
    );
    let _ = writeln!(s, "      <link name=\"link\">");
    for tag in ["collision", "visual"] {
        let _ = writeln!(
            s,
            "        <{tag} name=\"{tag}\"><geometry><plane><normal>0 0 1</normal><size>{}</size></plane></geometry></{tag}>",
            nums(&[w, h])
        );
    }
    let _ = writeln!(s, "      </link>");
    let _ = writeln!(s, "    </model>");
    for e in world.partition.static_elements() {
        model_block(&mut s, "    ", e, e.placement.as_ref(), &names);
    }
    let _ = writeln!(s, "  </world>");
    let _ = writeln!(s, "</sdf>");
    s
}

/// Standalone model file for an element inserted at install time.
pub fn render_element_model(world: &SimWorld, e: &Element, target: Option<&Pose>) -> String {
    let names = mesh_names_for(world);
    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\"?>");
    let _ = writeln!(s, "<sdf version=\"{SDF_VERSION}\">");
    model_block(&mut s, "  ", e, target, &names);
    let _ = writeln!(s, "</sdf>");
    s
}

/// Minimal COLLADA document (meters, Z up) holding one triangle mesh.
fn render_dae(mesh: &Mesh) -> String {
    let pos: Vec<String> = mesh.vertices.iter().flat_map(|v| v.iter().map(|c| num(*c))).collect();
    let idx: Vec<String> = mesh.triangles.iter().flat_map(|t| t.iter().map(|i| i.to_string())).collect();
    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\" encoding=\"utf-8\"?>");
    let _ = writeln!(s, "<COLLADA xmlns=\"http://www.collada.org/2005/11/COLLADASchema\" version=\"1.4.1\">");
    let _ = writeln!(s, "  <asset><unit name=\"meter\" meter=\"1\"/><up_axis>Z_UP</up_axis></asset>");
    let _ = writeln!(s, "  <library_geometries>");
    let _ = writeln!(s, "    <geometry id=\"mesh\"><mesh>");
    let _ = writeln!(
        s,
        "      <source id=\"mesh-pos\"><float_array id=\"mesh-pos-array\" count=\"{}\">{}</float_array>",
        pos.len(),
        pos.join(" ")
    );
    let _ = writeln!(
        s,
        "        <technique_common><accessor source=\"#mesh-pos-array\" count=\"{}\" stride=\"3\"><param name=\"X\" type=\"float\"/><param name=\"Y\" type=\"float\"/><param name=\"Z\" type=\"float\"/></accessor></technique_common>",
        mesh.vertices.len()
    );
    let _ = writeln!(s, "      </source>");
    let _ = writeln!(s, "      <vertices id=\"mesh-vtx\"><input semantic=\"POSITION\" source=\"#mesh-pos\"/></vertices>");
    let _ = writeln!(
        s,
        "      <triangles count=\"{}\"><input semantic=\"VERTEX\" source=\"#mesh-vtx\" offset=\"0\"/><p>{}</p></triangles>",
        mesh.triangles.len(),
        idx.join(" ")
    );
    let _ = writeln!(s, "    </mesh></geometry>");
    let _ = writeln!(s, "  </library_geometries>");
    let _ = writeln!(s, "  <library_visual_scenes><visual_scene id=\"scene\"><node id=\"node\"><instance_geometry url=\"#mesh\"/></node></visual_scene></library_visual_scenes>");
    let _ = writeln!(s, "  <scene><instance_visual_scene url=\"#scene\"/></scene>");
    let _ = writeln!(s, "</COLLADA>");
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash record for a file under `out_dir`.
pub fn file_artifact(out_dir: &Path, path: &Path) -> Result<Artifact, WorldgenError> {
    let bytes = std::fs::read(path).map_err(|source| WorldgenError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rel = path.strip_prefix(out_dir).unwrap_or(path);
    Ok(Artifact {
        path: rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/"),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

fn emit(out_dir: &Path, rel: &str, text: &str, out: &mut Vec<Artifact>) -> Result<(), WorldgenError> {
    let path = out_dir.join(rel);
    write_file(&path, text.as_bytes())?;
    out.push(Artifact {
        path: rel.to_string(),
        sha256: sha256_hex(text.as_bytes()),
        bytes: text.len() as u64,
    });
    Ok(())
}

/// Writes `world.sdf`, one `<element_id>.sdf` per scheduled element and the
/// referenced meshes under `meshes/`. Every SDF document is validated before
/// it is written. Artifacts are returned sorted by path.
pub fn emit_sdf(world: &SimWorld, out_dir: &Path) -> Result<Vec<Artifact>, WorldgenError> {
    for e in world.partition.all_elements() {
        if e.geometry.triangle_count() == 0 {
            return Err(WorldgenError::EmptyGeometry(e.id.clone()));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|source| WorldgenError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut artifacts = Vec::new();
    let world_text = render_world(world);
    validate_sdf(&world_text)?;
    emit(out_dir, "world.sdf", &world_text, &mut artifacts)?;
    for s in &world.partition.scheduled {
        let text = render_element_model(world, &s.element, s.target.as_ref());
        validate_sdf(&text)?;
        emit(out_dir, &format!("{}.sdf", s.element.id), &text, &mut artifacts)?;
    }
    let names = mesh_names_for(world);
    if !names.is_empty() {
        let mesh_dir = out_dir.join("meshes");
        std::fs::create_dir_all(&mesh_dir).map_err(|source| WorldgenError::Io { path: mesh_dir, source })?;
        let mut written = BTreeSet::new();
        for e in world.partition.all_elements() {
            if let Geometry::Mesh { uri, mesh } = &e.geometry {
                if written.insert(uri.clone()) {
                    emit(out_dir, &format!("meshes/{}", names[uri]), &render_dae(mesh), &mut artifacts)?;
                }
            }
        }
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(artifacts)
}

pub fn write_manifest(out_dir: &Path, manifest: &WorldManifest) -> Result<std::path::PathBuf, WorldgenError> {
    let path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Structural validation
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq)]
pub enum SdfError {
    #[error("not well-formed XML: {0}")]
    Xml(String),
    #[error("{0}")]
    Structure(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SdfSummary {
    pub worlds: usize,
    pub models: usize,
    pub links: usize,
    pub geometries: usize,
}

type Node<'a, 'i> = roxmltree::Node<'a, 'i>;

fn bad(msg: impl Into<String>) -> SdfError {
    SdfError::Structure(msg.into())
}

fn elems<'a, 'i>(n: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    n.children().filter(|c| c.is_element())
}

fn floats(n: Node, expect: usize, what: &str) -> Result<Vec<f64>, SdfError> {
    let text = n.text().unwrap_or("");
    let vals: Result<Vec<f64>, _> = text.split_whitespace().map(str::parse::<f64>).collect();
    let vals = vals.map_err(|_| bad(format!("<{what}> holds non-numeric text {text:?}")))?;
    if vals.len() != expect || !vals.iter().all(|v| v.is_finite()) {
        return Err(bad(format!("<{what}> needs {expect} finite numbers, got {text:?}")));
    }
    Ok(vals)
}

fn named<'a>(n: Node<'a, '_>) -> Result<&'a str, SdfError> {
    n.attribute("name")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(format!("<{}> without a name attribute", n.tag_name().name())))
}

fn check_pose(n: Node) -> Result<(), SdfError> {
    for p in elems(n).filter(|c| c.has_tag_name("pose")) {
        floats(p, 6, "pose")?;
    }
    Ok(())
}

fn check_geometry(n: Node, sum: &mut SdfSummary) -> Result<(), SdfError> {
    let kids: Vec<_> = elems(n).collect();
    if kids.len() != 1 {
        return Err(bad("<geometry> must contain exactly one shape"));
    }
    let shape = kids[0];
    match shape.tag_name().name() {
        "box" => {
            let size = elems(shape)
                .find(|c| c.has_tag_name("size"))
                .ok_or_else(|| bad("<box> without <size>"))?;
            if floats(size, 3, "size")?.iter().any(|v| *v <= 0.0) {
                return Err(bad("<box><size> must be positive"));
            }
        }
        "plane" => {
            for (tag, k) in [("normal", 3), ("size", 2)] {
                let c = elems(shape)
                    .find(|c| c.has_tag_name(tag))
                    .ok_or_else(|| bad(format!("<plane> without <{tag}>")))?;
                floats(c, k, tag)?;
            }
        }
        "mesh" => {
            let uri = elems(shape)
                .find(|c| c.has_tag_name("uri"))
                .and_then(|c| c.text())
                .unwrap_or("");
            if uri.trim().is_empty() {
                return Err(bad("<mesh> without <uri>"));
            }
        }
        "sphere" | "cylinder" => {}
        other => return Err(bad(format!("unsupported shape <{other}>"))),
    }
    sum.geometries += 1;
    Ok(())
}

fn check_link(n: Node, sum: &mut SdfSummary) -> Result<(), SdfError> {
    named(n)?;
    check_pose(n)?;
    let mut names = BTreeSet::new();
    for c in elems(n) {
        match c.tag_name().name() {
            "collision" | "visual" => {
                let key = (c.tag_name().name(), named(c)?);
                if !names.insert(key) {
                    return Err(bad(format!("duplicate <{}> name {:?}", key.0, key.1)));
                }
                check_pose(c)?;
                let geoms: Vec<_> = elems(c).filter(|g| g.has_tag_name("geometry")).collect();
                if geoms.len() != 1 {
                    return Err(bad(format!("<{}> needs exactly one <geometry>", key.0)));
                }
                check_geometry(geoms[0], sum)?;
            }
            "inertial" => {
                let mass = elems(c).find(|m| m.has_tag_name("mass"));
                if let Some(m) = mass {
                    if floats(m, 1, "mass")?[0] <= 0.0 {
                        return Err(bad("<mass> must be positive"));
                    }
                }
            }
            _ => {}
        }
    }
    sum.links += 1;
    Ok(())
}

fn check_model(n: Node, sum: &mut SdfSummary) -> Result<(), SdfError> {
    let name = named(n)?;
    check_pose(n)?;
    if let Some(s) = elems(n).find(|c| c.has_tag_name("static")) {
        if !matches!(s.text().map(str::trim), Some("true" | "false" | "0" | "1")) {
            return Err(bad(format!("model {name:?}: <static> must be boolean")));
        }
    }
    let mut links = BTreeSet::new();
    for l in elems(n).filter(|c| c.has_tag_name("link")) {
        if !links.insert(named(l)?) {
            return Err(bad(format!("model {name:?}: duplicate link name")));
        }
        check_link(l, sum)?;
    }
    if links.is_empty() {
        return Err(bad(format!("model {name:?} has no <link>")));
    }
    sum.models += 1;
    Ok(())
}

/// Checks the structural rules of the SDF 1.6 subset this crate emits.
pub fn validate_sdf(text: &str) -> Result<SdfSummary, SdfError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| SdfError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("sdf") {
        return Err(bad(format!("root element is <{}>, expected <sdf>", root.tag_name().name())));
    }
    if root.attribute("version") != Some(SDF_VERSION) {
        return Err(bad(format!("sdf version must be {SDF_VERSION:?}")));
    }
    let kids: Vec<_> = elems(root).collect();
    if kids.len() != 1 {
        return Err(bad("<sdf> must contain exactly one <world> or <model>"));
    }
    let mut sum = SdfSummary::default();
    let top = kids[0];
    match top.tag_name().name() {
        "world" => {
            named(top)?;
            let mut names = BTreeSet::new();
            for c in elems(top) {
                match c.tag_name().name() {
                    "model" => {
                        if !names.insert(named(c)?) {
                            return Err(bad(format!("duplicate model name {:?}", named(c)?)));
                        }
                        check_model(c, &mut sum)?;
                    }
                    "light" => {
                        named(c)?;
                        check_pose(c)?;
                    }
                    "gravity" => {
                        floats(c, 3, "gravity")?;
                    }
                    _ => {}
                }
            }
            sum.worlds = 1;
        }
        "model" => check_model(top, &mut sum)?,
        other => return Err(bad(format!("unexpected <{other}> under <sdf>"))),
    }
    Ok(sum)
}
