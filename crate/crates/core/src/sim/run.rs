//! Plan execution.
//!
//! The executor builds a continuous-time timeline of phases (holds and
//! straight constant-speed moves) and discrete events; ticks are sampled
//! from that timeline at `k * dt`. Event times therefore do not depend on
//! `dt`, and a finer `dt` only adds samples.

use std::collections::BTreeMap;

use super::agents::AgentScript;
use super::clearance::{distance_field, orientation_fit_with, CarryOrientation, DistanceField};
use super::path::{plan_on, NavGrid};
use super::plan::{ActionKind, ActionPlan, BoundAction};
use super::trace::{AgentInfo, AttachedState, Event, EventKind, PlanInfo, Tick, Trace, TraceHeader};
use super::{SimError, SimParams};
use crate::fleet::RobotDescriptor;
use crate::model::{convex_contains, element_footprint, normalize_angle, Point2, Pose};
use crate::worldgen::{OccupancyGrid, SimWorld};

/// World pose of an object held at `pick` (object-local), given the robot
/// pose, the active arm pose's carry transform and the carry orientation.
pub fn carried_pose(robot: &Pose, carry: &Pose, orientation: CarryOrientation, pick: [f64; 3]) -> Pose {
    robot
        .compose(carry)
        .compose(&Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, orientation.yaw_offset()))
        .compose(&Pose::translation(-pick[0], -pick[1], -pick[2]))
}

#[derive(Debug, Clone)]
struct Held {
    element: String,
    pick: [f64; 3],
    orientation: CarryOrientation,
}

#[derive(Debug, Clone)]
struct Phase {
    t0: f64,
    t1: f64,
    from: Pose,
    to: Pose,
    arm: usize,
    held: Option<usize>,
    installed: usize,
    /// `(route, piece)`: moving from `routes[route][piece]` to the next vertex.
    route: Option<(usize, usize)>,
}

struct Exec<'a> {
    world: &'a SimWorld,
    robot: &'a RobotDescriptor,
    params: &'a SimParams,
    base_speed: f64,
    caps: Vec<(&'a [Point2], f64)>,
    inflation: f64,
    working: OccupancyGrid,
    nav: NavGrid,
    field: Option<DistanceField>,
    t: f64,
    pose: Pose,
    arms: Vec<String>,
    arm: usize,
    held_log: Vec<Held>,
    held: Option<usize>,
    installed: Vec<String>,
    phases: Vec<Phase>,
    routes: Vec<Vec<Point2>>,
    events: Vec<Event>,
}

type Step<'p> = (usize, usize, &'p BoundAction);

impl<'a> Exec<'a> {
    fn event(&mut self, plan: Option<usize>, action: Option<usize>, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(Event {
            t: self.t,
            seq,
            plan,
            action,
            kind,
        });
    }

    fn push_phase(&mut self, dur: f64, to: Pose, route: Option<(usize, usize)>) {
        let t1 = self.t + dur;
        self.phases.push(Phase {
            t0: self.t,
            t1,
            from: self.pose,
            to,
            arm: self.arm,
            held: self.held,
            installed: self.installed.len(),
            route,
        });
        self.t = t1;
        self.pose = to;
    }

    fn hold(&mut self, dur: f64) {
        if dur > 0.0 {
            self.push_phase(dur, self.pose, None);
        }
    }

    fn speed_at(&self, p: Point2) -> f64 {
        self.caps
            .iter()
            .filter(|(poly, _)| convex_contains(poly, p))
            .fold(self.base_speed, |s, &(_, c)| s.min(c))
    }

    fn arm_index(&mut self, name: &str) -> usize {
        match self.arms.iter().position(|a| a == name) {
            Some(i) => i,
            None => {
                self.arms.push(name.to_string());
                self.arms.len() - 1
            }
        }
    }

    /// Moves the arm to `name`, charging its transition duration.
    fn set_arm(&mut self, name: &str) -> Result<(), String> {
        if self.arms[self.arm] == name {
            return Ok(());
        }
        let pose = self
            .robot
            .pose_library
            .get(name)
            .ok_or_else(|| format!("robot {} has no arm pose {name:?}", self.robot.id))?;
        self.hold(pose.transition_duration);
        self.arm = self.arm_index(name);
        Ok(())
    }

    fn reorient(&mut self, step: Step, to: CarryOrientation) {
        let Some(h) = self.held else { return };
        let cur = self.held_log[h].clone();
        if cur.orientation == to {
            return;
        }
        self.event(
            Some(step.0),
            Some(step.1),
            EventKind::Reorient {
                element: cur.element.clone(),
                from: cur.orientation,
                to,
                x: self.pose.x,
                y: self.pose.y,
            },
        );
        self.hold(self.robot.reorient_duration);
        self.held_log.push(Held { orientation: to, ..cur });
        self.held = Some(self.held_log.len() - 1);
    }

    /// Drives the straight segment `a -> b`, split where it crosses a speed
    /// zone boundary so each piece has one speed.
    fn drive(&mut self, a: Point2, b: Point2, route: usize, piece: usize) {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        if len == 0.0 {
            return;
        }
        let heading = normalize_angle(dy.atan2(dx));
        self.pose = Pose::planar(a[0], a[1], heading);
        let mut cuts = vec![0.0, 1.0];
        for (poly, _) in &self.caps {
            for i in 0..poly.len() {
                if let Some(s) = segment_crossing(a, b, poly[i], poly[(i + 1) % poly.len()]) {
                    cuts.push(s);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let at = |s: f64| [a[0] + dx * s, a[1] + dy * s];
        for w in cuts.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let piece_len = len * (s1 - s0);
            if piece_len <= 0.0 {
                continue;
            }
            let mid = at((s0 + s1) / 2.0);
            let speed = self.speed_at(mid);
            let end = if s1 == 1.0 { b } else { at(s1) };
            self.push_phase(piece_len / speed, Pose::planar(end[0], end[1], heading), Some((route, piece)));
        }
    }

    fn navigate(&mut self, step: Step, plan: &ActionPlan) -> Result<(), String> {
        let action = step.2;
        let goal = action
            .pose_input("destination")
            .ok_or_else(|| format!("{} has no destination", action.action_name))?;
        let path = plan_on(&self.nav, &self.pose, &goal).map_err(|e| e.to_string())?;
        let fit = match self.held {
            Some(_) => {
                let last = action.pose_sequence.last().ok_or("empty pose sequence")?;
                let lateral = self
                    .robot
                    .pose_library
                    .get(last)
                    .map(|p| p.lateral_extent)
                    .ok_or_else(|| format!("robot {} has no arm pose {last:?}", self.robot.id))?;
                if self.field.is_none() {
                    self.field = Some(distance_field(&self.working));
                }
                let field = self.field.as_ref().expect("computed above");
                Some(
                    orientation_fit_with(&self.working, field, &path, lateral, plan.carried_extent)
                        .map_err(|e| e.to_string())?,
                )
            }
            None => None,
        };
        for p in &action.pose_sequence {
            self.set_arm(p)?;
        }
        let poly = path.polyline();
        self.routes.push(poly.clone());
        let route = self.routes.len() - 1;
        for i in 0..poly.len() - 1 {
            if let Some(fit) = &fit {
                let o = fit.segments[i].orientation;
                self.reorient(step, o);
            }
            self.drive(poly[i], poly[i + 1], route, i);
        }
        self.reorient(step, CarryOrientation::Horizontal);
        self.pose = goal;
        Ok(())
    }

    fn grasp(&mut self, step: Step) -> Result<(), String> {
        let action = step.2;
        if self.held.is_some() {
            return Err("gripper is already holding an object".into());
        }
        for p in &action.pose_sequence {
            self.set_arm(p)?;
        }
        let element = action.target_element_id.clone().ok_or("grasp has no target element")?;
        let pick = action.point_input().ok_or("grasp has no pick point")?;
        self.event(
            Some(step.0),
            Some(step.1),
            EventKind::Attach {
                element: element.clone(),
                pick_point: pick,
                orientation: CarryOrientation::Horizontal,
            },
        );
        self.held_log.push(Held {
            element,
            pick,
            orientation: CarryOrientation::Horizontal,
        });
        self.held = Some(self.held_log.len() - 1);
        Ok(())
    }

    fn release(&mut self, step: Step) -> Result<(), String> {
        let action = step.2;
        let h = self.held.ok_or("nothing to release")?;
        let element = self.held_log[h].element.clone();
        if action.target_element_id.as_deref() != Some(element.as_str()) {
            return Err(format!("holding {element}, not the release target"));
        }
        let target = action
            .bound_inputs
            .values()
            .find_map(|v| match v {
                super::plan::BoundValue::Pose { pose } => Some(*pose),
                _ => None,
            })
            .ok_or("release has no target pose")?;
        for p in &action.pose_sequence {
            self.set_arm(p)?;
        }
        self.event(
            Some(step.0),
            Some(step.1),
            EventKind::Detach {
                element: element.clone(),
                installed: true,
            },
        );
        self.held = None;
        self.event(
            Some(step.0),
            Some(step.1),
            EventKind::Install {
                element: element.clone(),
                pose: target,
            },
        );
        self.installed.push(element.clone());
        if let Some(s) = self.world.partition.scheduled_element(&element) {
            let mut placed = s.element.clone();
            placed.placement = Some(target);
            let poly = element_footprint(&placed, self.world.params.z_band);
            if poly.len() >= 3 && !self.working.rasterize_polygon(&poly).is_empty() {
                self.nav = NavGrid::new(&self.working, self.inflation);
                self.field = None;
            }
        }
        Ok(())
    }

    fn manipulate(&mut self, step: Step) -> Result<(), String> {
        for p in &step.2.pose_sequence {
            self.set_arm(p)?;
        }
        Ok(())
    }

    /// Runs one plan; false if it failed.
    fn run_plan(&mut self, pi: usize, plan: &ActionPlan) -> bool {
        for (ai, action) in plan.steps.iter().enumerate() {
            let names = (action.action_name.clone(), action.skill_id.clone());
            self.event(
                Some(pi),
                Some(ai),
                EventKind::ActionStart {
                    action_name: names.0.clone(),
                    skill_id: names.1.clone(),
                },
            );
            let step = (pi, ai, action);
            let result = match action.kind {
                ActionKind::Navigate => self.navigate(step, plan),
                ActionKind::Grasp => self.grasp(step),
                ActionKind::Release => self.release(step),
                ActionKind::Manipulate => self.manipulate(step),
            };
            if let Err(cause) = result {
                self.event(
                    Some(pi),
                    Some(ai),
                    EventKind::Failure {
                        action_name: Some(names.0),
                        skill_id: Some(names.1),
                        cause,
                        aborted: false,
                    },
                );
                self.drop_held(pi, ai);
                return false;
            }
            self.event(
                Some(pi),
                Some(ai),
                EventKind::ActionEnd {
                    action_name: names.0,
                    skill_id: names.1,
                },
            );
        }
        // a plan never ends holding its element
        if self.held.is_some() {
            self.event(
                Some(pi),
                None,
                EventKind::Failure {
                    action_name: None,
                    skill_id: None,
                    cause: "plan ended without releasing the carried element".into(),
                    aborted: false,
                },
            );
            self.drop_held(pi, plan.steps.len().saturating_sub(1));
            return false;
        }
        true
    }

    fn drop_held(&mut self, pi: usize, ai: usize) {
        if let Some(h) = self.held.take() {
            let element = self.held_log[h].element.clone();
            self.event(Some(pi), Some(ai), EventKind::Detach { element, installed: false });
        }
    }

    fn tick(&self, t: f64, phase: Option<&Phase>, agents: &[AgentScript]) -> Tick {
        let (robot, arm, held, installed, route) = match phase {
            Some(p) => {
                let s = if p.t1 > p.t0 {
                    ((t - p.t0) / (p.t1 - p.t0)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let pose = if p.from == p.to {
                    p.from
                } else {
                    Pose::planar(
                        p.from.x + (p.to.x - p.from.x) * s,
                        p.from.y + (p.to.y - p.from.y) * s,
                        p.to.yaw,
                    )
                };
                (pose, p.arm, p.held, p.installed, p.route)
            }
            None => (self.pose, self.arm, self.held, self.installed.len(), None),
        };
        let arm_name = &self.arms[arm];
        let attached = held.map(|h| {
            let rec = &self.held_log[h];
            let carry = self
                .robot
                .pose_library
                .get(arm_name)
                .and_then(|p| p.carried_object_transform)
                .unwrap_or_default();
            AttachedState {
                element: rec.element.clone(),
                pick_point: rec.pick,
                orientation: rec.orientation,
                pose: carried_pose(&robot, &carry, rec.orientation, rec.pick),
            }
        });
        let agent_poses: BTreeMap<String, Pose> = agents
            .iter()
            .map(|a| (a.agent_id.clone(), a.pose_at(t)))
            .collect();
        let agents_in_path = match route {
            Some((r, k)) => {
                let ahead = lookahead(&self.routes[r], k, [robot.x, robot.y], self.params.path_lookahead);
                let reach = self.robot.footprint_radius + self.params.in_path_margin;
                agent_poses
                    .iter()
                    .filter(|(_, p)| polyline_distance(&ahead, [p.x, p.y]) <= reach)
                    .map(|(id, _)| id.clone())
                    .collect()
            }
            None => Vec::new(),
        };
        Tick {
            t,
            robot,
            arm: arm_name.clone(),
            speed_cap: self.speed_at([robot.x, robot.y]),
            attached,
            installed: self.installed[..installed].to_vec(),
            agents: agent_poses,
            agents_in_path,
        }
    }
}

/// Parameter `s` in (0, 1) where segment `a-b` crosses segment `p-q`.
fn segment_crossing(a: Point2, b: Point2, p: Point2, q: Point2) -> Option<f64> {
    let r = [b[0] - a[0], b[1] - a[1]];
    let e = [q[0] - p[0], q[1] - p[1]];
    let denom = r[0] * e[1] - r[1] * e[0];
    if denom == 0.0 {
        return None;
    }
    let w = [p[0] - a[0], p[1] - a[1]];
    let s = (w[0] * e[1] - w[1] * e[0]) / denom;
    let u = (w[0] * r[1] - w[1] * r[0]) / denom;
    (s > 0.0 && s < 1.0 && (0.0..=1.0).contains(&u)).then_some(s)
}

/// The next `length` meters of `route` from `pos`, which lies on piece `k`.
fn lookahead(route: &[Point2], k: usize, pos: Point2, length: f64) -> Vec<Point2> {
    let mut out = vec![pos];
    let mut left = length;
    let mut cur = pos;
    for &next in &route[k + 1..] {
        let d = (next[0] - cur[0]).hypot(next[1] - cur[1]);
        if d >= left {
            let s = if d > 0.0 { left / d } else { 0.0 };
            out.push([cur[0] + (next[0] - cur[0]) * s, cur[1] + (next[1] - cur[1]) * s]);
            return out;
        }
        out.push(next);
        left -= d;
        cur = next;
    }
    out
}

fn polyline_distance(poly: &[Point2], p: Point2) -> f64 {
    let seg = |a: Point2, b: Point2| {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let l2 = dx * dx + dy * dy;
        let s = if l2 > 0.0 {
            (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (a[0] + dx * s - p[0]).hypot(a[1] + dy * s - p[1])
    };
    if poly.len() == 1 {
        return seg(poly[0], poly[0]);
    }
    poly.windows(2).map(|w| seg(w[0], w[1])).fold(f64::INFINITY, f64::min)
}

/// Executes `plans` in order with `agents` moving concurrently. The result
/// is a pure function of the arguments.
pub fn run(
    world: &SimWorld,
    robot: &RobotDescriptor,
    plans: &[ActionPlan],
    agents: &[AgentScript],
    params: &SimParams,
) -> Result<Trace, SimError> {
    params.validate()?;
    for a in agents {
        a.validate()?;
    }
    let start = params.robot_start(world)?;
    let base_speed = robot.max_speed.min(world.site.nav_speed_max);
    if base_speed < world.site.nav_speed_min {
        return Err(SimError::SpeedBelowMinimum {
            speed: base_speed,
            min: world.site.nav_speed_min,
        });
    }
    let mut working = world.grid.clone();
    for z in world.zones.iter().filter(|z| z.prohibited) {
        working.rasterize_polygon(&z.polygon);
    }
    let inflation = SimParams::inflation_radius(robot, working.resolution);
    let nav = NavGrid::new(&working, inflation);
    let caps = world.speed_zones().map(|(z, c)| (z.polygon.as_slice(), c)).collect();
    let initial_arm = if robot.pose_library.contains_key("default") {
        "default".to_string()
    } else {
        robot.pose_library.keys().next().cloned().unwrap_or_else(|| "default".into())
    };
    let mut ex = Exec {
        world,
        robot,
        params,
        base_speed,
        caps,
        inflation,
        working,
        nav,
        field: None,
        t: 0.0,
        pose: Pose::planar(start.x, start.y, start.yaw),
        arms: vec![initial_arm],
        arm: 0,
        held_log: Vec::new(),
        held: None,
        installed: Vec::new(),
        phases: Vec::new(),
        routes: Vec::new(),
        events: Vec::new(),
    };

    let mut aborted = false;
    for (pi, plan) in plans.iter().enumerate() {
        if aborted {
            ex.event(
                Some(pi),
                None,
                EventKind::Failure {
                    action_name: None,
                    skill_id: None,
                    cause: "not attempted after an earlier failure".into(),
                    aborted: true,
                },
            );
            continue;
        }
        if !ex.run_plan(pi, plan) && params.abort_on_failure {
            aborted = true;
        }
    }

    let end = if plans.is_empty() { params.idle_horizon } else { ex.t };
    let n = (end / params.dt - 1e-9).ceil().max(0.0) as usize;
    let mut ticks = Vec::with_capacity(n + 1);
    let mut ptr = 0;
    for k in 0..=n {
        let t = k as f64 * params.dt;
        while ptr < ex.phases.len() && t > ex.phases[ptr].t1 {
            ptr += 1;
        }
        ticks.push(ex.tick(t, ex.phases.get(ptr), agents));
    }

    let header = TraceHeader {
        robot_id: robot.id.clone(),
        robot_max_speed: robot.max_speed,
        dt: params.dt,
        agents: agents
            .iter()
            .map(|a| AgentInfo {
                id: a.agent_id.clone(),
                role: a.role.clone(),
            })
            .collect(),
        plans: plans
            .iter()
            .enumerate()
            .map(|(index, p)| PlanInfo {
                index,
                task_id: p.task_id.clone(),
                element_id: p.element_id.clone(),
                actions: p.steps.iter().map(|s| s.action_name.clone()).collect(),
            })
            .collect(),
    };
    Ok(Trace {
        header,
        ticks,
        events: ex.events,
    })
}
