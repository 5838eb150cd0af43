//! Reader for the COLLADA subset used for per-element geometry.
//!
//! Supported: `<asset><unit meter=..>`, `<up_axis>` (`Z_UP` or `Y_UP`), a single
//! `<geometry>` holding `<triangles>` (or a `<polylist>` whose `vcount` values
//! are all 3), and node transforms (`matrix`, `translate`, `rotate`, `scale`)
//! on the visual-scene node instancing that geometry.

use std::path::{Path, PathBuf};

use roxmltree::{Document, Node};
use thiserror::Error;

/// Triangle mesh in meters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn validate(&self) -> Result<(), ColladaError> {
        if self.triangles.is_empty() {
            return Err(ColladaError::Empty);
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ColladaError::Malformed("non-finite vertex coordinate".into()));
        }
        if let Some(bad) = self.triangles.iter().flatten().find(|&&i| i >= self.vertices.len()) {
            return Err(ColladaError::Malformed(format!(
                "triangle index {bad} out of range ({} vertices)",
                self.vertices.len()
            )));
        }
        Ok(())
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColladaWarning {
    MissingUnit,
    /// Y-up content was rotated into the Z-up world frame.
    ConvertedYUp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMesh {
    pub mesh: Mesh,
    pub warnings: Vec<ColladaWarning>,
}

#[derive(Debug, Error)]
pub enum ColladaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed XML: {0}")]
    Xml(#[from] roxmltree::Error),
    #[error("unsupported primitive <{0}>; only triangles are supported")]
    UnsupportedPrimitive(String),
    #[error("unsupported up axis {0}")]
    UnsupportedUpAxis(String),
    #[error("expected exactly one <geometry>, found {0}")]
    GeometryCount(usize),
    #[error("mesh has no triangles")]
    Empty,
    #[error("malformed COLLADA: {0}")]
    Malformed(String),
}

pub fn parse_collada_mesh(path: &Path) -> Result<ParsedMesh, ColladaError> {
    let text = std::fs::read_to_string(path).map_err(|source| ColladaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_collada_str(&text)
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == name)
}

fn children<'a, 'i>(node: Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children().filter(move |c| c.is_element() && c.tag_name().name() == name)
}

fn numbers(node: Node) -> Result<Vec<f64>, ColladaError> {
    node.text()
        .unwrap_or("")
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| ColladaError::Malformed(format!("bad number {t:?} in <{}>", node.tag_name().name())))
        })
        .collect()
}

fn indices(node: Node) -> Result<Vec<usize>, ColladaError> {
    node.text()
        .unwrap_or("")
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| ColladaError::Malformed(format!("bad index {t:?}"))))
        .collect()
}

fn attr_f64(node: Node, name: &str) -> Result<Option<f64>, ColladaError> {
    node.attribute(name)
        .map(|v| v.parse::<f64>().map_err(|_| ColladaError::Malformed(format!("bad {name}={v:?}"))))
        .transpose()
}

fn by_id<'a, 'i>(doc: &'a Document<'i>, url: &str) -> Option<Node<'a, 'i>> {
    let id = url.strip_prefix('#').unwrap_or(url);
    doc.descendants().find(|n| n.is_element() && n.attribute("id") == Some(id))
}

type Mat4 = [[f64; 4]; 4];

const IDENTITY: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn node_local_transform(node: Node) -> Result<Mat4, ColladaError> {
    let mut m = IDENTITY;
    for el in node.children().filter(|c| c.is_element()) {
        let v = match el.tag_name().name() {
            "matrix" | "translate" | "rotate" | "scale" => numbers(el)?,
            _ => continue,
        };
        let t: Mat4 = match (el.tag_name().name(), v.len()) {
            ("matrix", 16) => [
                [v[0], v[1], v[2], v[3]],
                [v[4], v[5], v[6], v[7]],
                [v[8], v[9], v[10], v[11]],
                [v[12], v[13], v[14], v[15]],
            ],
            ("translate", 3) => [
                [1.0, 0.0, 0.0, v[0]],
                [0.0, 1.0, 0.0, v[1]],
                [0.0, 0.0, 1.0, v[2]],
                [0.0, 0.0, 0.0, 1.0],
            ],
            ("scale", 3) => [
                [v[0], 0.0, 0.0, 0.0],
                [0.0, v[1], 0.0, 0.0],
                [0.0, 0.0, v[2], 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
            ("rotate", 4) => {
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n == 0.0 {
                    return Err(ColladaError::Malformed("zero rotation axis".into()));
                }
                let (x, y, z) = (v[0] / n, v[1] / n, v[2] / n);
                let (s, c) = v[3].to_radians().sin_cos();
                let t = 1.0 - c;
                [
                    [t * x * x + c, t * x * y - s * z, t * x * z + s * y, 0.0],
                    [t * x * y + s * z, t * y * y + c, t * y * z - s * x, 0.0],
                    [t * x * z - s * y, t * y * z + s * x, t * z * z + c, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                ]
            }
            (name, n) => {
                return Err(ColladaError::Malformed(format!("<{name}> with {n} values")));
            }
        };
        m = mat_mul(&m, &t);
    }
    Ok(m)
}

/// Accumulated transform of the first visual-scene node instancing `geometry_id`.
fn instance_transform(doc: &Document, geometry_id: &str) -> Result<Mat4, ColladaError> {
    let target = format!("#{geometry_id}");
    let Some(inst) = doc.descendants().find(|n| {
        n.is_element() && n.tag_name().name() == "instance_geometry" && n.attribute("url") == Some(target.as_str())
    }) else {
        return Ok(IDENTITY);
    };
    let chain: Vec<Node> = inst
        .ancestors()
        .filter(|a| a.is_element() && a.tag_name().name() == "node")
        .collect();
    let mut m = IDENTITY;
    for node in chain.iter().rev() {
        m = mat_mul(&m, &node_local_transform(*node)?);
    }
    Ok(m)
}

fn positions(doc: &Document, mesh: Node, vertices_url: &str) -> Result<Vec<[f64; 3]>, ColladaError> {
    let verts = by_id(doc, vertices_url)
        .ok_or_else(|| ColladaError::Malformed(format!("unresolved vertices {vertices_url}")))?;
    let src_url = children(verts, "input")
        .find(|i| i.attribute("semantic") == Some("POSITION"))
        .and_then(|i| i.attribute("source"))
        .ok_or_else(|| ColladaError::Malformed("<vertices> without POSITION input".into()))?;
    let source = children(mesh, "source")
        .find(|s| Some(s.attribute("id").unwrap_or("")) == src_url.strip_prefix('#'))
        .or_else(|| by_id(doc, src_url))
        .ok_or_else(|| ColladaError::Malformed(format!("unresolved source {src_url}")))?;
    let array = child(source, "float_array")
        .ok_or_else(|| ColladaError::Malformed(format!("source {src_url} has no <float_array>")))?;
    let data = numbers(array)?;
    let stride = source
        .descendants()
        .find(|n| n.is_element() && n.tag_name().name() == "accessor")
        .and_then(|a| a.attribute("stride"))
        .map(|s| s.parse::<usize>().map_err(|_| ColladaError::Malformed(format!("bad stride {s:?}"))))
        .transpose()?
        .unwrap_or(3);
    if stride < 3 || data.len() % stride != 0 {
        return Err(ColladaError::Malformed(format!(
            "float_array of {} values does not fit stride {stride}",
            data.len()
        )));
    }
    Ok(data.chunks(stride).map(|c| [c[0], c[1], c[2]]).collect())
}

fn primitive_triangles(prim: Node) -> Result<(String, Vec<[usize; 3]>), ColladaError> {
    let inputs: Vec<Node> = children(prim, "input").collect();
    let stride = inputs
        .iter()
        .map(|i| i.attribute("offset").and_then(|o| o.parse::<usize>().ok()).unwrap_or(0))
        .max()
        .unwrap_or(0)
        + 1;
    let vertex_input = inputs
        .iter()
        .find(|i| i.attribute("semantic") == Some("VERTEX"))
        .ok_or_else(|| ColladaError::Malformed("primitive without VERTEX input".into()))?;
    let offset = vertex_input
        .attribute("offset")
        .and_then(|o| o.parse::<usize>().ok())
        .unwrap_or(0);
    let url = vertex_input
        .attribute("source")
        .ok_or_else(|| ColladaError::Malformed("VERTEX input without source".into()))?
        .to_string();
    let mut p = Vec::new();
    for pn in children(prim, "p") {
        p.extend(indices(pn)?);
    }
    if p.len() % (3 * stride) != 0 {
        return Err(ColladaError::Malformed(format!(
            "<p> length {} is not a multiple of 3 x {stride}",
            p.len()
        )));
    }
    let tris: Vec<[usize; 3]> = p
        .chunks(3 * stride)
        .map(|c| [c[offset], c[stride + offset], c[2 * stride + offset]])
        .collect();
    if let Some(count) = prim.attribute("count") {
        let count: usize = count
            .parse()
            .map_err(|_| ColladaError::Malformed(format!("bad count {count:?}")))?;
        if count != tris.len() {
            return Err(ColladaError::Malformed(format!(
                "count={count} but <p> holds {} triangles",
                tris.len()
            )));
        }
    }
    Ok((url, tris))
}

pub fn parse_collada_str(text: &str) -> Result<ParsedMesh, ColladaError> {
    let doc = Document::parse(text)?;
    let root = doc.root_element();
    if root.tag_name().name() != "COLLADA" {
        return Err(ColladaError::Malformed(format!("root element is <{}>", root.tag_name().name())));
    }
    let mut warnings = Vec::new();
    let asset = child(root, "asset");
    let unit = match asset.and_then(|a| child(a, "unit")) {
        Some(u) => attr_f64(u, "meter")?.unwrap_or(1.0),
        None => {
            warnings.push(ColladaWarning::MissingUnit);
            1.0
        }
    };
    if !(unit.is_finite() && unit > 0.0) {
        return Err(ColladaError::Malformed(format!("unit scale {unit} must be positive")));
    }
    let up = asset
        .and_then(|a| child(a, "up_axis"))
        .and_then(|n| n.text())
        .map(str::trim)
        .unwrap_or("Y_UP");
    let y_up = match up {
        "Z_UP" => false,
        "Y_UP" => {
            warnings.push(ColladaWarning::ConvertedYUp);
            true
        }
        other => return Err(ColladaError::UnsupportedUpAxis(other.to_string())),
    };

    let geometries: Vec<Node> = doc
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "geometry")
        .collect();
    if geometries.len() != 1 {
        return Err(ColladaError::GeometryCount(geometries.len()));
    }
    let geometry = geometries[0];
    let mesh_node =
        child(geometry, "mesh").ok_or_else(|| ColladaError::Malformed("<geometry> without <mesh>".into()))?;

    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut loaded: Vec<(String, usize)> = Vec::new();
    for prim in mesh_node.children().filter(|c| c.is_element()) {
        let name = prim.tag_name().name();
        let (url, tris) = match name {
            "source" | "vertices" | "extra" => continue,
            "triangles" => primitive_triangles(prim)?,
            "polylist" => {
                let vcount = child(prim, "vcount").map(indices).transpose()?.unwrap_or_default();
                if vcount.iter().any(|&c| c != 3) {
                    return Err(ColladaError::UnsupportedPrimitive("polylist".into()));
                }
                primitive_triangles(prim)?
            }
            other => return Err(ColladaError::UnsupportedPrimitive(other.to_string())),
        };
        let base = match loaded.iter().find(|(u, _)| *u == url) {
            Some((_, base)) => *base,
            None => {
                let base = vertices.len();
                vertices.extend(positions(&doc, mesh_node, &url)?);
                loaded.push((url, base));
                base
            }
        };
        triangles.extend(tris.into_iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    let m = instance_transform(&doc, geometry.attribute("id").unwrap_or(""))?;
    for v in vertices.iter_mut() {
        let p = [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2] + m[0][3],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2] + m[1][3],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2] + m[2][3],
        ];
        let p = [p[0] * unit, p[1] * unit, p[2] * unit];
        *v = if y_up { [p[0], -p[2], p[1]] } else { p };
    }
    let mesh = Mesh { vertices, triangles };
    mesh.validate()?;
    Ok(ParsedMesh { mesh, warnings })
}
