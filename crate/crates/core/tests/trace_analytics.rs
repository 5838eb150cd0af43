//! Trace serialization, carried-object kinematics and trace analytics.

use std::f64::consts::PI;

use bimbot::analytics::{durations, emit_report, separation, summarize, AnalyticsError};
use bimbot::model::Pose;
use bimbot::sim::{
    carried_pose, AgentInfo, AttachedState, CarryOrientation, Event, EventKind, PlanInfo, Tick, Trace, TraceHeader,
};
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;

fn iso(p: &Pose) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(p.x, p.y, p.z),
        UnitQuaternion::from_euler_angles(p.roll, p.pitch, p.yaw),
    )
}

fn pose() -> impl Strategy<Value = Pose> {
    (-50.0f64..50.0, -50.0f64..50.0, -2.0f64..2.0, -PI..PI, -1.5f64..1.5, -PI..PI)
        .prop_map(|(x, y, z, r, p, yw)| Pose::new(x, y, z, r, p, yw))
}

fn planar() -> impl Strategy<Value = Pose> {
    (-20.0f64..20.0, -20.0f64..20.0, -PI..PI).prop_map(|(x, y, yw)| Pose::planar(x, y, yw))
}

fn orientation() -> impl Strategy<Value = CarryOrientation> {
    prop_oneof![Just(CarryOrientation::Horizontal), Just(CarryOrientation::Sideways)]
}

fn tick(t: f64, robot: Pose, agents: &[(String, Pose)]) -> Tick {
    Tick {
        t,
        robot,
        arm: "default".into(),
        speed_cap: 0.3,
        attached: None,
        installed: vec![],
        agents: agents.iter().cloned().collect(),
        agents_in_path: vec![],
    }
}

fn header(agents: &[&str], plans: usize) -> TraceHeader {
    TraceHeader {
        robot_id: "robot".into(),
        robot_max_speed: 1.0,
        dt: 0.1,
        agents: agents
            .iter()
            .map(|a| AgentInfo {
                id: a.to_string(),
                role: "carpenter".into(),
            })
            .collect(),
        plans: (0..plans)
            .map(|i| PlanInfo {
                index: i,
                task_id: "T".into(),
                element_id: format!("e{i}"),
                actions: vec![],
            })
            .collect(),
    }
}

/// Three participants moving along random planar poses.
fn moving_trace() -> impl Strategy<Value = Trace> {
    proptest::collection::vec((planar(), planar(), planar()), 1..40).prop_map(|steps| Trace {
        header: header(&["a", "b"], 0),
        ticks: steps
            .into_iter()
            .enumerate()
            .map(|(k, (r, a, b))| tick(k as f64 * 0.1, r, &[("a".into(), a), ("b".into(), b)]))
            .collect(),
        events: vec![],
    })
}

/// Plans of consecutive actions with the given durations.
fn action_trace(plans: &[Vec<f64>]) -> Trace {
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut seq = 0;
    let mut ev = |t: f64, plan: usize, action: usize, kind: EventKind| {
        seq += 1;
        Event {
            t,
            seq,
            plan: Some(plan),
            action: Some(action),
            kind,
        }
    };
    for (pi, actions) in plans.iter().enumerate() {
        for (ai, d) in actions.iter().enumerate() {
            let name = format!("action {ai}");
            events.push(ev(t, pi, ai, EventKind::ActionStart { action_name: name.clone(), skill_id: "S".into() }));
            t += d;
            events.push(ev(t, pi, ai, EventKind::ActionEnd { action_name: name, skill_id: "S".into() }));
        }
    }
    Trace {
        header: header(&[], plans.len()),
        ticks: vec![tick(0.0, Pose::default(), &[])],
        events,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn carried_pose_matches_matrix_composition(
        robot in planar(), carry in pose(), o in orientation(),
        pick in (-1.0f64..1.0, -1.0f64..1.0, 0.0f64..2.5),
    ) {
        let pick = [pick.0, pick.1, pick.2];
        let got = iso(&carried_pose(&robot, &carry, o, pick));
        let want = iso(&robot)
            * iso(&carry)
            * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), o.yaw_offset())
            * Translation3::new(-pick[0], -pick[1], -pick[2]);
        prop_assert!((got.translation.vector - want.translation.vector).norm() < 1e-9);
        prop_assert!(got.rotation.angle_to(&want.rotation) < 1e-7);
        // the grasp point rides with the end effector
        let grasp = got * nalgebra::Point3::new(pick[0], pick[1], pick[2]);
        let effector = iso(&robot) * iso(&carry) * nalgebra::Point3::origin();
        prop_assert!((grasp - effector).norm() < 1e-9);
    }

    #[test]
    fn separation_is_symmetric_and_minimal(trace in moving_trace()) {
        let ab = separation(&trace, "a", "b").unwrap();
        let ba = separation(&trace, "b", "a").unwrap();
        prop_assert_eq!(ab.samples.len(), trace.ticks.len());
        let brute = trace.ticks.iter().map(|t| {
            let (p, q) = (t.agents["a"], t.agents["b"]);
            ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()
        }).fold(f64::INFINITY, f64::min);
        prop_assert!((ab.min_distance - brute).abs() < 1e-12);
        for (x, y) in ab.samples.iter().zip(&ba.samples) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-12 && x.1 >= 0.0);
        }
        let ra = separation(&trace, "robot", "a").unwrap();
        let rb = separation(&trace, "robot", "b").unwrap();
        for k in 0..ab.samples.len() {
            prop_assert!(ab.samples[k].1 <= ra.samples[k].1 + rb.samples[k].1 + 1e-9);
        }
    }

    #[test]
    fn durations_add_up(plans in proptest::collection::vec(proptest::collection::vec(0.0f64..500.0, 1..6), 0..12)) {
        let trace = action_trace(&plans);
        let d = durations(&trace).unwrap();
        prop_assert_eq!(d.plans.len(), plans.len());
        let mut run = 0.0;
        for (p, want) in d.plans.iter().zip(&plans) {
            let sum: f64 = p.actions.iter().map(|a| a.duration).sum();
            prop_assert!((p.total - sum).abs() < 1e-9);
            prop_assert!((p.total - want.iter().sum::<f64>()).abs() < 1e-6);
            for a in &p.actions {
                prop_assert!((a.duration - (a.end - a.start)).abs() < 1e-12);
            }
            run += p.total;
        }
        prop_assert!((d.run_total - run).abs() < 1e-9);
    }

    #[test]
    fn jsonl_round_trip_is_exact(
        trace in moving_trace(),
        held in proptest::option::of((planar(), orientation())),
        installed in proptest::collection::vec("[a-z_]{1,8}", 0..4),
    ) {
        let mut trace = trace;
        if let Some((p, o)) = held {
            trace.ticks[0].attached = Some(AttachedState {
                element: "frame_0".into(),
                pick_point: [0.0, 0.0, 1.2],
                orientation: o,
                pose: p,
            });
        }
        trace.ticks[0].installed = installed;
        trace.events.push(Event {
            t: 0.1,
            seq: 0,
            plan: Some(0),
            action: None,
            kind: EventKind::Reorient { element: "frame_0".into(), from: CarryOrientation::Horizontal, to: CarryOrientation::Sideways, x: 1.0 / 3.0, y: 2.0 / 7.0 },
        });
        let bytes = trace.to_jsonl();
        let back = Trace::read_jsonl(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &trace);
        prop_assert_eq!(back.to_jsonl(), bytes);
    }
}

#[test]
fn unknown_participant_is_an_error() {
    let trace = action_trace(&[]);
    assert_eq!(
        separation(&trace, "robot", "ghost").unwrap_err(),
        AnalyticsError::UnknownParticipant("ghost".into())
    );
}

#[test]
fn unmatched_action_start_is_malformed() {
    let mut trace = action_trace(&[vec![5.0]]);
    trace.events.pop();
    assert!(matches!(durations(&trace), Err(AnalyticsError::Malformed(_))));
}

#[test]
fn failure_closes_the_open_action() {
    let mut trace = action_trace(&[vec![5.0, 7.0]]);
    let last = trace.events.last_mut().unwrap();
    last.kind = EventKind::Failure {
        action_name: Some("action 1".into()),
        skill_id: Some("S".into()),
        cause: "no path".into(),
        aborted: false,
    };
    let d = durations(&trace).unwrap();
    assert!(d.plans[0].failed && d.plans[0].actions[1].failed);
    assert!((d.plans[0].total - 12.0).abs() < 1e-12);
}

#[test]
fn report_without_agents_has_a_notice_and_no_chart() {
    let trace = action_trace(&[vec![1.0]]);
    let dir = tempfile::tempdir().unwrap();
    let (summary, files) = emit_report(&trace, None, dir.path()).unwrap();
    assert!(summary.notice.is_some());
    assert!(summary.min_robot_agent_separation.is_none());
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["trajectories.svg", "summary.json"]);
}

#[test]
fn report_bytes_are_deterministic() {
    let agents = [("w".to_string(), Pose::planar(3.0, 0.0, 0.0))];
    let trace = Trace {
        header: header(&["w"], 0),
        ticks: (0..50).map(|k| tick(k as f64 * 0.1, Pose::planar(k as f64 * 0.05, 0.0, 0.0), &agents)).collect(),
        events: vec![],
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&trace, None, a.path()).unwrap();
    emit_report(&trace, None, b.path()).unwrap();
    for name in ["trajectories.svg", "separation.svg", "summary.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
    let s = summarize(&trace).unwrap();
    let w = &s.separation[0];
    assert!((w.min_distance - 0.55).abs() < 1e-9 && w.below_threshold);
    // robot 0.5 m/s, worker still: error bound is half a step
    assert!((s.sampling_error_bound - 0.025).abs() < 1e-9);
}
