//! Post-hoc measurements over a simulation trace.
//!
//! Separation is the planar center-to-center distance between two
//! participants' poses, sampled at trace ticks without interpolation.

mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{EventKind, Trace};

pub use report::{emit_report, summarize, PairSummary, ReportError, ReportSummary, PROXIMITY_THRESHOLD};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("unknown participant {0:?}")]
    UnknownParticipant(String),
    #[error("malformed trace: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationSeries {
    pub pair: (String, String),
    /// `(t, distance)` per tick.
    pub samples: Vec<(f64, f64)>,
    pub min_distance: f64,
    pub min_time: f64,
}

/// Distance between `a` and `b` at every tick; the earliest tick attains the
/// minimum. An empty trace gives an infinite minimum.
pub fn separation(trace: &Trace, a: &str, b: &str) -> Result<SeparationSeries, AnalyticsError> {
    let known = trace.participants();
    for id in [a, b] {
        if !known.iter().any(|k| k == id) {
            return Err(AnalyticsError::UnknownParticipant(id.to_string()));
        }
    }
    let mut samples = Vec::with_capacity(trace.ticks.len());
    let (mut min_distance, mut min_time) = (f64::INFINITY, 0.0);
    for tick in &trace.ticks {
        let (Some(p), Some(q)) = (trace.pose_of(tick, a), trace.pose_of(tick, b)) else {
            continue;
        };
        let d = (p.x - q.x).hypot(p.y - q.y);
        if d < min_distance {
            min_distance = d;
            min_time = tick.t;
        }
        samples.push((tick.t, d));
    }
    Ok(SeparationSeries {
        pair: (a.to_string(), b.to_string()),
        samples,
        min_distance,
        min_time,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDuration {
    pub action_name: String,
    pub skill_id: String,
    pub start: f64,
    pub end: f64,
    /// `end - start`; includes the arm transitions and reorientations
    /// performed inside the action.
    pub duration: f64,
    pub reorientations: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDuration {
    pub index: usize,
    pub element_id: String,
    pub actions: Vec<ActionDuration>,
    /// Sum of the action durations.
    pub total: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationReport {
    pub plans: Vec<PlanDuration>,
    /// Sum of the plan totals.
    pub run_total: f64,
}

/// Action durations from start/end (or failure) event pairs.
pub fn durations(trace: &Trace) -> Result<DurationReport, AnalyticsError> {
    let mut plans: Vec<PlanDuration> = trace
        .header
        .plans
        .iter()
        .map(|p| PlanDuration {
            index: p.index,
            element_id: p.element_id.clone(),
            actions: Vec::new(),
            total: 0.0,
            failed: false,
        })
        .collect();
    let mut open: Option<(usize, ActionDuration)> = None;
    let bad = |m: String| AnalyticsError::Malformed(m);
    for e in &trace.events {
        let plan = e.plan;
        match &e.kind {
            EventKind::ActionStart { action_name, skill_id } => {
                if let Some((_, a)) = &open {
                    return Err(bad(format!("{} starts before {} ends", action_name, a.action_name)));
                }
                let pi = plan.ok_or_else(|| bad(format!("{action_name} start has no plan index")))?;
                open = Some((
                    pi,
                    ActionDuration {
                        action_name: action_name.clone(),
                        skill_id: skill_id.clone(),
                        start: e.t,
                        end: e.t,
                        duration: 0.0,
                        reorientations: 0,
                        failed: false,
                    },
                ));
            }
            EventKind::Reorient { .. } => {
                if let Some((_, a)) = open.as_mut() {
                    a.reorientations += 1;
                }
            }
            EventKind::ActionEnd { action_name, .. } | EventKind::Failure { action_name: Some(action_name), .. } => {
                let failed = matches!(e.kind, EventKind::Failure { .. });
                let (pi, mut a) = open
                    .take()
                    .ok_or_else(|| bad(format!("{action_name} ends without a start")))?;
                if a.action_name != *action_name || plan != Some(pi) {
                    return Err(bad(format!("{action_name} ends while {} is open", a.action_name)));
                }
                a.end = e.t;
                a.duration = e.t - a.start;
                a.failed = failed;
                let p = plans
                    .get_mut(pi)
                    .ok_or_else(|| bad(format!("plan index {pi} is not in the header")))?;
                p.failed |= failed;
                p.actions.push(a);
            }
            EventKind::Failure { action_name: None, .. } => {
                if let Some(p) = plan.and_then(|pi| plans.get_mut(pi)) {
                    p.failed = true;
                }
            }
            _ => {}
        }
    }
    if let Some((_, a)) = open {
        return Err(bad(format!("{} never ends", a.action_name)));
    }
    let mut run_total = 0.0;
    for p in &mut plans {
        p.total = p.actions.iter().map(|a| a.duration).sum();
        run_total += p.total;
    }
    Ok(DurationReport { plans, run_total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pose;
    use crate::sim::{AgentInfo, Tick, TraceHeader};
    use std::collections::BTreeMap;

    fn static_trace() -> Trace {
        let ticks = (0..5)
            .map(|k| Tick {
                t: k as f64 * 0.1,
                robot: Pose::planar(0.0, 0.0, 0.0),
                arm: "default".into(),
                speed_cap: 1.0,
                attached: None,
                installed: vec![],
                agents: BTreeMap::from([("w".to_string(), Pose::planar(3.0, 0.0, 0.0))]),
                agents_in_path: vec![],
            })
            .collect();
        Trace {
            header: TraceHeader {
                robot_id: "r".into(),
                robot_max_speed: 1.0,
                dt: 0.1,
                agents: vec![AgentInfo {
                    id: "w".into(),
                    role: "carpenter".into(),
                }],
                plans: vec![],
            },
            ticks,
            events: vec![],
        }
    }

    #[test]
    fn stationary_pair_is_constant() {
        let s = separation(&static_trace(), "r", "w").unwrap();
        assert_eq!(s.samples.len(), 5);
        assert!(s.samples.iter().all(|&(_, d)| d == 3.0));
        assert_eq!((s.min_distance, s.min_time), (3.0, 0.0));
        assert_eq!(
            separation(&static_trace(), "r", "nobody"),
            Err(AnalyticsError::UnknownParticipant("nobody".into()))
        );
    }

    #[test]
    fn no_plans_zero_durations() {
        let d = durations(&static_trace()).unwrap();
        assert!(d.plans.is_empty());
        assert_eq!(d.run_total, 0.0);
    }
}
