//! Report artifacts: trajectory overlay, separation chart and a JSON summary.
//! Output bytes depend only on the trace and map.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{durations, separation, AnalyticsError, DurationReport};
use crate::model::Point2;
use crate::sim::{EventKind, Trace};
use crate::worldgen::{CellState, OccupancyGrid};

/// Robot-worker separations below this many meters are flagged.
pub const PROXIMITY_THRESHOLD: f64 = 1.0;

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const PX_PER_M: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub a: String,
    pub b: String,
    pub b_role: String,
    pub min_distance: f64,
    pub min_time: f64,
    pub below_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub robot_id: String,
    pub dt: f64,
    pub end_time: f64,
    pub plans: usize,
    pub installs: usize,
    pub failed_plans: Vec<usize>,
    pub proximity_threshold: f64,
    /// Robot against each agent.
    pub separation: Vec<PairSummary>,
    pub min_robot_agent_separation: Option<f64>,
    /// Upper bound on how far a sampled minimum can exceed the true one:
    /// the largest observed closing speed times `dt / 2`.
    pub sampling_error_bound: f64,
    pub notice: Option<String>,
    pub durations: DurationReport,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

fn max_speed(trace: &Trace, id: &str) -> f64 {
    trace
        .ticks
        .windows(2)
        .filter_map(|w| {
            let (p, q) = (trace.pose_of(&w[0], id)?, trace.pose_of(&w[1], id)?);
            let dt = w[1].t - w[0].t;
            (dt > 0.0).then(|| (q.x - p.x).hypot(q.y - p.y) / dt)
        })
        .fold(0.0, f64::max)
}

pub fn summarize(trace: &Trace) -> Result<ReportSummary, AnalyticsError> {
    let robot = &trace.header.robot_id;
    let mut pairs = Vec::new();
    let v_robot = max_speed(trace, robot);
    let mut closing: f64 = 0.0;
    for a in &trace.header.agents {
        let s = separation(trace, robot, &a.id)?;
        closing = closing.max(v_robot + max_speed(trace, &a.id));
        pairs.push(PairSummary {
            a: robot.clone(),
            b: a.id.clone(),
            b_role: a.role.clone(),
            min_distance: s.min_distance,
            min_time: s.min_time,
            below_threshold: s.min_distance < PROXIMITY_THRESHOLD,
        });
    }
    let notice = pairs
        .is_empty()
        .then(|| "trace has no agents besides the robot; no separation series".to_string());
    Ok(ReportSummary {
        robot_id: robot.clone(),
        dt: trace.header.dt,
        end_time: trace.ticks.last().map_or(0.0, |t| t.t),
        plans: trace.header.plans.len(),
        installs: trace.install_count(),
        failed_plans: trace.failed_plans(),
        proximity_threshold: PROXIMITY_THRESHOLD,
        min_robot_agent_separation: pairs.iter().map(|p| p.min_distance).reduce(f64::min),
        separation: pairs,
        sampling_error_bound: closing * trace.header.dt / 2.0,
        notice,
        durations: durations(trace)?,
    })
}

struct Frame {
    lo: Point2,
    hi: Point2,
}

impl Frame {
    fn width(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * PX_PER_M
    }
    fn height(&self) -> f64 {
        (self.hi[1] - self.lo[1]) * PX_PER_M
    }
    fn x(&self, x: f64) -> f64 {
        (x - self.lo[0]) * PX_PER_M
    }
    fn y(&self, y: f64) -> f64 {
        (self.hi[1] - y) * PX_PER_M
    }
}

fn polyline(frame: &Frame, pts: impl Iterator<Item = Point2>) -> String {
    let mut s = String::new();
    for p in pts {
        let _ = write!(s, "{:.2},{:.2} ", frame.x(p[0]), frame.y(p[1]));
    }
    s.trim_end().to_string()
}

fn trajectory_svg(trace: &Trace, map: Option<&OccupancyGrid>) -> String {
    let ids = trace.participants();
    let frame = match map {
        Some(g) => Frame {
            lo: [g.origin.x, g.origin.y],
            hi: [
                g.origin.x + g.width as f64 * g.resolution,
                g.origin.y + g.height as f64 * g.resolution,
            ],
        },
        None => {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for tick in &trace.ticks {
                for id in &ids {
                    if let Some(p) = trace.pose_of(tick, id) {
                        lo = [lo[0].min(p.x), lo[1].min(p.y)];
                        hi = [hi[0].max(p.x), hi[1].max(p.y)];
                    }
                }
            }
            if !lo[0].is_finite() {
                lo = [0.0, 0.0];
                hi = [0.0, 0.0];
            }
            Frame {
                lo: [lo[0] - 1.0, lo[1] - 1.0],
                hi: [hi[0] + 1.0, hi[1] + 1.0],
            }
        }
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#,
        w = frame.width(),
        h = frame.height()
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    if let Some(g) = map {
        let _ = writeln!(s, r#"<g id="map" stroke="none">"#);
        let cell = g.resolution * PX_PER_M;
        for r in 0..g.height {
            let mut c = 0;
            while c < g.width {
                let state = g.get(r, c);
                let mut e = c + 1;
                while e < g.width && g.get(r, e) == state {
                    e += 1;
                }
                let fill = match state {
                    CellState::Free => None,
                    CellState::Occupied => Some("#404040"),
                    CellState::Unknown => Some("#b0b0b0"),
                };
                if let Some(fill) = fill {
                    let lo = g.cell_min(r, c);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                        frame.x(lo[0]),
                        frame.y(lo[1]) - cell,
                        (e - c) as f64 * cell,
                        cell
                    );
                }
                c = e;
            }
        }
        let _ = writeln!(s, "</g>");
    }
    for (i, id) in ids.iter().enumerate() {
        let pts = trace
            .ticks
            .iter()
            .filter_map(|t| trace.pose_of(t, id))
            .map(|p| [p.x, p.y]);
        let _ = writeln!(
            s,
            r#"<polyline id="traj-{id}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            polyline(&frame, pts)
        );
    }
    for e in &trace.events {
        if let EventKind::Install { element, pose } = &e.kind {
            let _ = writeln!(
                s,
                r##"<circle id="install-{element}" cx="{:.2}" cy="{:.2}" r="3" fill="#17becf"/>"##,
                frame.x(pose.x),
                frame.y(pose.y)
            );
        }
    }
    for (i, id) in ids.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="8" y="{}" font-family="sans-serif" font-size="12" fill="{}">{id}</text>"#,
            16 + 14 * i,
            PALETTE[i % PALETTE.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}

fn separation_svg(trace: &Trace) -> Result<Option<String>, AnalyticsError> {
    let robot = &trace.header.robot_id;
    let mut series = Vec::new();
    for a in &trace.header.agents {
        series.push(separation(trace, robot, &a.id)?);
    }
    if series.is_empty() {
        return Ok(None);
    }
    let (w, h, m) = (800.0, 400.0, 40.0);
    let t_max = trace.ticks.last().map_or(0.0, |t| t.t).max(1e-9);
    let d_max = series
        .iter()
        .flat_map(|s| s.samples.iter().map(|&(_, d)| d))
        .fold(PROXIMITY_THRESHOLD, f64::max)
        * 1.05;
    let px = |t: f64| m + (w - 2.0 * m) * t / t_max;
    let py = |d: f64| h - m - (h - 2.0 * m) * d / d_max;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="#000000"/>"##,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(
        s,
        r##"<line id="threshold" x1="{m}" x2="{r}" y1="{y:.2}" y2="{y:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
        r = w - m,
        y = py(PROXIMITY_THRESHOLD)
    );
    let _ = writeln!(
        s,
        r#"<text x="{m}" y="{}" font-family="sans-serif" font-size="12">time (s), 0 to {t_max:.1}; distance (m), 0 to {d_max:.2}</text>"#,
        h - 10.0
    );
    for (i, sr) in series.iter().enumerate() {
        let mut pts = String::new();
        for &(t, d) in &sr.samples {
            let _ = write!(pts, "{:.2},{:.2} ", px(t), py(d));
        }
        let color = PALETTE[(i + 1) % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<polyline id="sep-{}" fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            sr.pair.1,
            pts.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{} min {:.2} m at {:.1} s</text>"#,
            m + 8.0,
            m + 14.0 * (i as f64 + 1.0),
            sr.pair.1,
            sr.min_distance,
            sr.min_time
        );
    }
    s.push_str("</svg>\n");
    Ok(Some(s))
}

/// Writes `trajectories.svg`, `separation.svg` (only when the trace has
/// agents) and `summary.json` into `out_dir`. Returns the summary and the
/// written paths.
pub fn emit_report(
    trace: &Trace,
    map: Option<&OccupancyGrid>,
    out_dir: &Path,
) -> Result<(ReportSummary, Vec<PathBuf>), ReportError> {
    let summary = summarize(trace)?;
    let mut files = vec![("trajectories.svg", trajectory_svg(trace, map))];
    if let Some(sep) = separation_svg(trace)? {
        files.push(("separation.svg", sep));
    }
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    files.push(("summary.json", json));
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(io(&path))?;
        written.push(path);
    }
    Ok((summary, written))
}
