//! Simulation trace: fixed-step state samples plus timestamped events,
//! serialized as JSON lines.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::clearance::CarryOrientation;
use crate::model::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInfo {
    pub id: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInfo {
    pub index: usize,
    pub task_id: String,
    pub element_id: String,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub robot_id: String,
    pub robot_max_speed: f64,
    pub dt: f64,
    pub agents: Vec<AgentInfo>,
    pub plans: Vec<PlanInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachedState {
    pub element: String,
    pub pick_point: [f64; 3],
    pub orientation: CarryOrientation,
    /// World pose of the carried element.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub t: f64,
    pub robot: Pose,
    pub arm: String,
    /// Effective speed limit at the robot position (m/s).
    pub speed_cap: f64,
    pub attached: Option<AttachedState>,
    pub installed: Vec<String>,
    pub agents: BTreeMap<String, Pose>,
    /// Agents within reach of the robot's upcoming path while it navigates.
    pub agents_in_path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ActionStart {
        action_name: String,
        skill_id: String,
    },
    ActionEnd {
        action_name: String,
        skill_id: String,
    },
    Attach {
        element: String,
        pick_point: [f64; 3],
        orientation: CarryOrientation,
    },
    Detach {
        element: String,
        installed: bool,
    },
    Reorient {
        element: String,
        from: CarryOrientation,
        to: CarryOrientation,
        x: f64,
        y: f64,
    },
    Install {
        element: String,
        pose: Pose,
    },
    /// Terminal for its plan.
    Failure {
        action_name: Option<String>,
        skill_id: Option<String>,
        cause: String,
        aborted: bool,
    },
}

/// Events sharing a timestamp are ordered by `seq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub seq: u64,
    pub plan: Option<usize>,
    pub action: Option<usize>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub ticks: Vec<Tick>,
    pub events: Vec<Event>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(TraceHeader),
    Tick(Tick),
    Event(Event),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no header record")]
    MissingHeader,
}

impl Trace {
    /// Ids of every pose-carrying participant: the robot, then the agents.
    pub fn participants(&self) -> Vec<String> {
        std::iter::once(self.header.robot_id.clone())
            .chain(self.header.agents.iter().map(|a| a.id.clone()))
            .collect()
    }

    /// Pose of a participant at a tick.
    pub fn pose_of(&self, tick: &Tick, id: &str) -> Option<Pose> {
        if id == self.header.robot_id {
            Some(tick.robot)
        } else {
            tick.agents.get(id).copied()
        }
    }

    pub fn install_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Install { .. }))
            .count()
    }

    pub fn failed_plans(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Failure { .. }))
            .filter_map(|e| e.plan)
            .collect();
        v.dedup();
        v
    }

    /// Header, then ticks and events merged by time (events first on ties).
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let line = |w: &mut W, r: &Record| -> std::io::Result<()> {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")
        };
        line(&mut w, &Record::Header(self.header.clone()))?;
        let mut e = 0;
        for tick in &self.ticks {
            while e < self.events.len() && self.events[e].t <= tick.t {
                line(&mut w, &Record::Event(self.events[e].clone()))?;
                e += 1;
            }
            line(&mut w, &Record::Tick(tick.clone()))?;
        }
        for ev in &self.events[e..] {
            line(&mut w, &Record::Event(ev.clone()))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_jsonl(&mut v).expect("writing to memory");
        v
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut header = None;
        let mut ticks = Vec::new();
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match rec {
                Record::Header(h) => header = Some(h),
                Record::Tick(t) => ticks.push(t),
                Record::Event(e) => events.push(e),
            }
        }
        Ok(Trace {
            header: header.ok_or(TraceError::MissingHeader)?,
            ticks,
            events,
        })
    }
}
