//! Open-loop scripted workers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{normalize_angle, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Heading while dwelling here.
    #[serde(default)]
    pub yaw: f64,
    /// Seconds spent at the waypoint after arriving.
    #[serde(default)]
    pub dwell: f64,
}

/// A worker walking through waypoints at constant speed. Looping scripts
/// return to the first waypoint and repeat; others stop at the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentScript {
    pub agent_id: String,
    pub role: String,
    pub waypoints: Vec<Waypoint>,
    pub speed: f64,
    #[serde(default, rename = "loop")]
    pub looping: bool,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed agents file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("agent {agent:?}: {reason}")]
    Invalid { agent: String, reason: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentsFile {
    #[serde(default)]
    agents: Vec<AgentScript>,
}

impl AgentScript {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |reason: &str| AgentError::Invalid {
            agent: self.agent_id.clone(),
            reason: reason.into(),
        };
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(bad("speed must be positive"));
        }
        if self.waypoints.is_empty() {
            return Err(bad("needs at least one waypoint"));
        }
        for w in &self.waypoints {
            if ![w.x, w.y, w.yaw, w.dwell].iter().all(|v| v.is_finite()) || w.dwell < 0.0 {
                return Err(bad("waypoints need finite coordinates and non-negative dwell"));
            }
        }
        Ok(())
    }

    /// Legs as `(from, to)` waypoint indices in travel order for one cycle.
    fn legs(&self) -> Vec<(usize, usize)> {
        let n = self.waypoints.len();
        let mut v: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if self.looping && n > 1 {
            v.push((n - 1, 0));
        }
        v
    }

    fn leg_length(&self, (a, b): (usize, usize)) -> f64 {
        let (p, q) = (&self.waypoints[a], &self.waypoints[b]);
        (q.x - p.x).hypot(q.y - p.y)
    }

    /// Duration of one full cycle (dwell at each waypoint, then walk on).
    pub fn cycle_duration(&self) -> f64 {
        self.legs()
            .iter()
            .map(|&l| self.waypoints[l.0].dwell + self.leg_length(l) / self.speed)
            .sum()
    }

    /// Pose at time `t` (seconds from the start of the run).
    pub fn pose_at(&self, t: f64) -> Pose {
        let legs = self.legs();
        let at = |i: usize| {
            let w = &self.waypoints[i];
            Pose::planar(w.x, w.y, w.yaw)
        };
        if legs.is_empty() {
            return at(0);
        }
        let cycle = self.cycle_duration();
        let mut tau = t.max(0.0);
        if self.looping {
            if cycle <= 0.0 {
                return at(0);
            }
            tau %= cycle;
        }
        for &(a, b) in &legs {
            let dwell = self.waypoints[a].dwell;
            if tau < dwell {
                return at(a);
            }
            tau -= dwell;
            let len = self.leg_length((a, b));
            let dur = len / self.speed;
            if tau < dur {
                let (p, q) = (&self.waypoints[a], &self.waypoints[b]);
                let s = tau / dur;
                return Pose::planar(
                    p.x + (q.x - p.x) * s,
                    p.y + (q.y - p.y) * s,
                    normalize_angle((q.y - p.y).atan2(q.x - p.x)),
                );
            }
            tau -= dur;
        }
        at(legs.last().expect("non-empty").1)
    }
}

pub fn parse_agents(text: &str, path: &Path) -> Result<Vec<AgentScript>, AgentError> {
    let file: AgentsFile = toml::from_str(text).map_err(|e| AgentError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut seen = std::collections::BTreeSet::new();
    for a in &file.agents {
        a.validate()?;
        if !seen.insert(a.agent_id.as_str()) {
            return Err(AgentError::Invalid {
                agent: a.agent_id.clone(),
                reason: "duplicate agent id".into(),
            });
        }
    }
    Ok(file.agents)
}

pub fn load_agents(path: &Path) -> Result<Vec<AgentScript>, AgentError> {
    let text = std::fs::read_to_string(path).map_err(|source| AgentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_agents(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walker(looping: bool) -> AgentScript {
        AgentScript {
            agent_id: "c1".into(),
            role: "carpenter 1".into(),
            waypoints: vec![
                Waypoint { x: 0.0, y: 0.0, yaw: 0.0, dwell: 2.0 },
                Waypoint { x: 4.0, y: 0.0, yaw: 1.0, dwell: 1.0 },
            ],
            speed: 2.0,
            looping,
        }
    }

    #[test]
    fn dwell_walk_and_stop() {
        let a = walker(false);
        assert_eq!(a.pose_at(1.0).x, 0.0);
        assert!((a.pose_at(3.0).x - 2.0).abs() < 1e-12);
        assert_eq!(a.pose_at(100.0), Pose::planar(4.0, 0.0, 1.0));
    }

    #[test]
    fn looping_repeats() {
        let a = walker(true);
        let c = a.cycle_duration();
        assert!((c - 7.0).abs() < 1e-12);
        for t in [0.5, 3.3, 5.1, 6.9] {
            let (p, q) = (a.pose_at(t), a.pose_at(t + c));
            assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9 && p.yaw == q.yaw);
        }
        assert!((a.pose_at(6.0).x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_scripts() {
        let mut a = walker(false);
        a.speed = 0.0;
        assert!(a.validate().is_err());
        a.speed = 1.0;
        a.waypoints.clear();
        assert!(a.validate().is_err());
    }
}
