//! Map-server style map files: a binary PGM raster plus a YAML sidecar.
//!
//! Pixel values: free = 254, occupied = 0, unknown = 205. Image rows run top
//! (highest y) to bottom.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::{CellState, OccupancyGrid};
use super::WorldgenError;
use crate::model::Pose;

pub const FREE_PIXEL: u8 = 254;
pub const OCCUPIED_PIXEL: u8 = 0;
pub const UNKNOWN_PIXEL: u8 = 205;
pub const OCCUPIED_THRESH: f64 = 0.65;
pub const FREE_THRESH: f64 = 0.196;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub image: String,
    pub resolution: f64,
    /// `[x, y, yaw]` of the lower-left pixel.
    pub origin: [f64; 3],
    pub negate: u8,
    pub occupied_thresh: f64,
    pub free_thresh: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorldgenError + '_ {
    move |source| WorldgenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_pgm(grid: &OccupancyGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width, grid.height).into_bytes();
    out.reserve(grid.width * grid.height);
    for row in (0..grid.height).rev() {
        for col in 0..grid.width {
            out.push(match grid.get(row, col) {
                CellState::Free => FREE_PIXEL,
                CellState::Occupied => OCCUPIED_PIXEL,
                CellState::Unknown => UNKNOWN_PIXEL,
            });
        }
    }
    out
}

/// Writes `<stem>.pgm` and `<stem>.yaml`; returns both paths.
pub fn write_map_pgm(grid: &OccupancyGrid, out_path: &Path) -> Result<(PathBuf, PathBuf), WorldgenError> {
    let pgm_path = out_path.with_extension("pgm");
    let yaml_path = out_path.with_extension("yaml");
    std::fs::write(&pgm_path, encode_pgm(grid)).map_err(io_err(&pgm_path))?;
    let meta = MapMetadata {
        image: pgm_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        resolution: grid.resolution,
        origin: [grid.origin.x, grid.origin.y, grid.origin.yaw],
        negate: 0,
        occupied_thresh: OCCUPIED_THRESH,
        free_thresh: FREE_THRESH,
    };
    let yaml = serde_yaml::to_string(&meta).expect("metadata serializes");
    std::fs::write(&yaml_path, yaml).map_err(io_err(&yaml_path))?;
    Ok((pgm_path, yaml_path))
}

fn pixel_state(v: u8, meta: &MapMetadata) -> CellState {
    match v {
        FREE_PIXEL => CellState::Free,
        OCCUPIED_PIXEL => CellState::Occupied,
        UNKNOWN_PIXEL => CellState::Unknown,
        _ => {
            let p = if meta.negate == 0 {
                (255.0 - v as f64) / 255.0
            } else {
                v as f64 / 255.0
            };
            if p > meta.occupied_thresh {
                CellState::Occupied
            } else if p < meta.free_thresh {
                CellState::Free
            } else {
                CellState::Unknown
            }
        }
    }
}

fn header_tokens(bytes: &[u8]) -> Result<(Vec<String>, usize), String> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((tokens, i + 1))
}

pub fn decode_pgm(bytes: &[u8], meta: &MapMetadata) -> Result<OccupancyGrid, String> {
    let (tok, data_start) = header_tokens(bytes)?;
    if tok[0] != "P5" {
        return Err(format!("expected P5 magic, found {:?}", tok[0]));
    }
    let width: usize = tok[1].parse().map_err(|_| format!("bad width {:?}", tok[1]))?;
    let height: usize = tok[2].parse().map_err(|_| format!("bad height {:?}", tok[2]))?;
    if tok[3] != "255" {
        return Err(format!("expected maxval 255, found {:?}", tok[3]));
    }
    let data = bytes.get(data_start..).unwrap_or_default();
    if data.len() != width * height {
        return Err(format!("raster has {} bytes, expected {}", data.len(), width * height));
    }
    let origin = Pose::planar(meta.origin[0], meta.origin[1], meta.origin[2]);
    let mut grid = OccupancyGrid::new(meta.resolution, origin, width, height, CellState::Unknown);
    for (img_row, chunk) in data.chunks(width.max(1)).enumerate().take(height) {
        let row = height - 1 - img_row;
        for (col, &v) in chunk.iter().enumerate() {
            grid.set(row, col, pixel_state(v, meta));
        }
    }
    Ok(grid)
}

/// Reads a map from its YAML sidecar (the image path is relative to it).
pub fn read_map_pgm(yaml_path: &Path) -> Result<OccupancyGrid, WorldgenError> {
    let text = std::fs::read_to_string(yaml_path).map_err(io_err(yaml_path))?;
    let meta: MapMetadata = serde_yaml::from_str(&text).map_err(|e| WorldgenError::MapFormat {
        path: yaml_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if !(meta.resolution > 0.0) {
        return Err(WorldgenError::MapFormat {
            path: yaml_path.to_path_buf(),
            message: format!("resolution {} must be positive", meta.resolution),
        });
    }
    let image = yaml_path.parent().unwrap_or(Path::new(".")).join(&meta.image);
    let bytes = std::fs::read(&image).map_err(io_err(&image))?;
    decode_pgm(&bytes, &meta).map_err(|message| WorldgenError::MapFormat { path: image, message })
}
