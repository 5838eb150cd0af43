//! Shared fixtures, independent oracles and trace invariant checks for the
//! integration tests. Each test binary uses a different subset.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, SQRT_2};
use std::path::{Path, PathBuf};

use bimbot::fleet::RobotDescriptor;
use bimbot::model::Pose;
use bimbot::sim::{run, ActionPlan, EventKind, NavGrid, SimParams, Trace};
use bimbot::worldgen::{build_world, static_footprints, CellState, OccupancyGrid, SimWorld};
use bimbot_cli::{compile_all, load, Loaded, Overrides, RunConfig};
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use petgraph::graph::{NodeIndex, UnGraph};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("repo root")
}

pub fn scenario_path(name: &str) -> PathBuf {
    repo_root().join("scenarios").join(format!("{name}.toml"))
}

pub fn config(name: &str) -> RunConfig {
    RunConfig::resolve(&Overrides {
        scenario: Some(scenario_path(name)),
        ..Default::default()
    })
    .expect("scenario resolves")
}

/// World, robot, plans and trace of a run, without writing files.
pub struct Run {
    pub world: SimWorld,
    pub robot: RobotDescriptor,
    pub plans: Vec<ActionPlan>,
    pub trace: Trace,
}

pub fn run_config(cfg: &RunConfig) -> Run {
    let l = load(cfg).expect("inputs load");
    run_loaded(cfg, &l, &cfg.sim)
}

pub fn run_loaded(cfg: &RunConfig, l: &Loaded, sim: &SimParams) -> Run {
    let world = build_world(&l.project, &l.kb, cfg.world, false).expect("world builds");
    let (robot, plans) = compile_all(l, &world, sim).expect("plans compile");
    let trace = run(&world, &robot, &plans, &l.agents, sim).expect("simulation runs");
    Run {
        world,
        robot,
        plans,
        trace,
    }
}

// ---------------------------------------------------------------------------
// Shortest paths
// ---------------------------------------------------------------------------

/// Random occupancy grid of at most `max_side` cells per side.
pub fn random_grid(rng: &mut ChaCha8Rng, max_side: usize) -> OccupancyGrid {
    let w = rng.gen_range(1..=max_side);
    let h = rng.gen_range(1..=max_side);
    let density = rng.gen_range(0.0..=0.4);
    let mut g = OccupancyGrid::new(0.1, Pose::default(), w, h, CellState::Free);
    for r in 0..h {
        for c in 0..w {
            if rng.gen_bool(density) {
                g.set(r, c, CellState::Occupied);
            }
        }
    }
    g
}

/// Single-source shortest path costs (cells; 1 per axial step, sqrt 2 per
/// diagonal step) over the free cells, via petgraph's Dijkstra.
pub fn dijkstra_costs(grid: &OccupancyGrid, start: (usize, usize)) -> BTreeMap<(usize, usize), f64> {
    let free = |r: usize, c: usize| grid.get(r, c) == CellState::Free;
    let mut g = UnGraph::<(usize, usize), f64>::new_undirected();
    let mut node = BTreeMap::new();
    for r in 0..grid.height {
        for c in 0..grid.width {
            if free(r, c) {
                node.insert((r, c), g.add_node((r, c)));
            }
        }
    }
    for (&(r, c), &a) in &node {
        // each undirected edge once: east, north-east, north, north-west
        for (dr, dc, w) in [(0isize, 1isize, 1.0), (1, 1, SQRT_2), (1, 0, 1.0), (1, -1, SQRT_2)] {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 {
                continue;
            }
            if let Some(&b) = node.get(&(nr as usize, nc as usize)) {
                g.add_edge(a, b, w);
            }
        }
    }
    let Some(&s) = node.get(&start) else {
        return BTreeMap::new();
    };
    let dist: std::collections::HashMap<NodeIndex, f64> = petgraph::algo::dijkstra(&g, s, None, |e| *e.weight());
    dist.into_iter().map(|(n, d)| (g[n], d)).collect()
}

pub fn random_free_cell(rng: &mut ChaCha8Rng, grid: &OccupancyGrid) -> Option<(usize, usize)> {
    let free: Vec<_> = (0..grid.height)
        .flat_map(|r| (0..grid.width).map(move |c| (r, c)))
        .filter(|&(r, c)| grid.get(r, c) == CellState::Free)
        .collect();
    (!free.is_empty()).then(|| free[rng.gen_range(0..free.len())])
}

/// Compares A* against the Dijkstra oracle on one grid; `Err` describes the
/// first disagreement.
pub fn check_astar_against_oracle(grid: &OccupancyGrid, start: (usize, usize), goal: (usize, usize)) -> Result<(), String> {
    let nav = NavGrid::new(grid, 0.0);
    let oracle = dijkstra_costs(grid, start).get(&goal).copied();
    let found = bimbot::sim::plan_cells(&nav, start, goal);
    match (found, oracle) {
        (None, None) => Ok(()),
        (Some((cells, cost)), Some(best)) => {
            if cells.first() != Some(&start) || cells.last() != Some(&goal) {
                return Err("path does not join start and goal".into());
            }
            let mut walked = 0.0;
            for w in cells.windows(2) {
                let (dr, dc) = (w[0].0.abs_diff(w[1].0), w[0].1.abs_diff(w[1].1));
                if dr > 1 || dc > 1 || dr + dc == 0 {
                    return Err(format!("non-adjacent step {:?} -> {:?}", w[0], w[1]));
                }
                if grid.get(w[1].0, w[1].1) != CellState::Free {
                    return Err(format!("path enters blocked cell {:?}", w[1]));
                }
                walked += if dr + dc == 2 { SQRT_2 } else { 1.0 };
            }
            // distinct a + b sqrt 2 values on these grids differ by far more
            // than summation error
            if (walked - cost.value()).abs() > 1e-9 {
                return Err(format!("reported cost {} but path walks {walked}", cost.value()));
            }
            if (cost.value() - best).abs() > 1e-9 {
                return Err(format!("A* cost {} differs from Dijkstra {best}", cost.value()));
            }
            Ok(())
        }
        (a, b) => Err(format!("reachability differs: A* {:?}, Dijkstra {:?}", a.map(|x| x.1), b)),
    }
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

fn inside_convex(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Occupancy by `k x k` point sampling: a cell is occupied when any sample
/// lies inside a footprint.
pub fn supersampled_occupancy(grid: &OccupancyGrid, polys: &[Vec<[f64; 2]>], k: usize) -> Vec<bool> {
    let mut out = vec![false; grid.width * grid.height];
    let res = grid.resolution;
    for poly in polys {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in poly {
            lo = [lo[0].min(p[0]), lo[1].min(p[1])];
            hi = [hi[0].max(p[0]), hi[1].max(p[1])];
        }
        let c0 = (((lo[0] - grid.origin.x) / res).floor().max(0.0)) as usize;
        let r0 = (((lo[1] - grid.origin.y) / res).floor().max(0.0)) as usize;
        let c1 = ((((hi[0] - grid.origin.x) / res).ceil()).max(0.0) as usize).min(grid.width);
        let r1 = ((((hi[1] - grid.origin.y) / res).ceil()).max(0.0) as usize).min(grid.height);
        for r in r0..r1 {
            for c in c0..c1 {
                let x0 = grid.origin.x + c as f64 * res;
                let y0 = grid.origin.y + r as f64 * res;
                let hit = (0..k * k).any(|s| {
                    let (i, j) = (s % k, s / k);
                    let p = [x0 + (i as f64 + 0.5) * res / k as f64, y0 + (j as f64 + 0.5) * res / k as f64];
                    inside_convex(poly, p)
                });
                out[r * grid.width + c] |= hit;
            }
        }
    }
    out
}

/// `(mismatched cells, oracle-occupied cells)` between a world's static map
/// and the supersampled oracle over the same footprints.
pub fn raster_mismatch(world: &SimWorld, k: usize) -> (usize, usize) {
    let polys: Vec<Vec<[f64; 2]>> = static_footprints(&world.partition, world.params.z_band)
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    let oracle = supersampled_occupancy(&world.grid, &polys, k);
    let mut mismatch = 0;
    for (i, &o) in oracle.iter().enumerate() {
        if o != (world.grid.cells[i] == CellState::Occupied) {
            mismatch += 1;
        }
    }
    (mismatch, oracle.iter().filter(|o| **o).count())
}

// ---------------------------------------------------------------------------
// Carried pose
// ---------------------------------------------------------------------------

pub fn iso(p: &Pose) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(p.x, p.y, p.z),
        UnitQuaternion::from_euler_angles(p.roll, p.pitch, p.yaw),
    )
}

/// Robot base, then carry transform, then the orientation's yaw offset, then
/// back from the pick point to the object origin.
pub fn carried_oracle(robot: &Pose, carry: &Pose, yaw_offset: f64, pick: [f64; 3]) -> Isometry3<f64> {
    iso(robot)
        * iso(carry)
        * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_offset)
        * Translation3::new(-pick[0], -pick[1], -pick[2])
}

pub fn iso_close(a: &Isometry3<f64>, b: &Isometry3<f64>, tol: f64) -> bool {
    (a.translation.vector - b.translation.vector).norm() <= tol && a.rotation.angle_to(&b.rotation) <= tol
}

// ---------------------------------------------------------------------------
// Trace invariants
// ---------------------------------------------------------------------------

pub const INVARIANTS: [&str; 5] = [
    "attach rigidity",
    "no static collision",
    "install permanence",
    "speed compliance",
    "element conservation",
];

/// Violations per invariant name; an empty list means it holds.
pub fn check_invariants(r: &Run) -> BTreeMap<&'static str, Vec<String>> {
    let mut out: BTreeMap<&'static str, Vec<String>> = INVARIANTS.iter().map(|n| (*n, Vec::new())).collect();
    let trace = &r.trace;
    let mut push = |k: &'static str, m: String| {
        let v = out.get_mut(k).expect("known invariant");
        if v.len() < 5 {
            v.push(m);
        }
    };

    // attach rigidity
    for tick in &trace.ticks {
        if let Some(a) = &tick.attached {
            let carry = r
                .robot
                .pose_library
                .get(&tick.arm)
                .and_then(|p| p.carried_object_transform)
                .unwrap_or_default();
            let want = carried_oracle(&tick.robot, &carry, a.orientation.yaw_offset(), a.pick_point);
            if !iso_close(&want, &iso(&a.pose), 1e-6) {
                push("attach rigidity", format!("t={:.2}: {} is off its grasp", tick.t, a.element));
            }
        }
    }

    // no static collision: robot center at least the inscribed radius from
    // every occupied cell square of the static map
    let g = &r.world.grid;
    let reach = (r.robot.inscribed_radius / g.resolution).ceil() as isize + 1;
    for tick in &trace.ticks {
        let Some((row, col)) = g.cell_of(tick.robot.x, tick.robot.y) else {
            push("no static collision", format!("t={:.2}: robot leaves the map", tick.t));
            continue;
        };
        'cells: for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (rr, cc) = (row as isize + dr, col as isize + dc);
                if rr < 0 || cc < 0 || rr as usize >= g.height || cc as usize >= g.width {
                    continue;
                }
                if g.get(rr as usize, cc as usize) != CellState::Occupied {
                    continue;
                }
                let lo = g.cell_min(rr as usize, cc as usize);
                let dx = (lo[0] - tick.robot.x).max(tick.robot.x - lo[0] - g.resolution).max(0.0);
                let dy = (lo[1] - tick.robot.y).max(tick.robot.y - lo[1] - g.resolution).max(0.0);
                if dx.hypot(dy) < r.robot.inscribed_radius - 1e-9 {
                    push(
                        "no static collision",
                        format!("t={:.2}: robot at ({:.3}, {:.3}) overlaps occupied cell", tick.t, tick.robot.x, tick.robot.y),
                    );
                    break 'cells;
                }
            }
        }
    }

    // install permanence: installed lists only grow, and every install lands
    // on the element's target
    let mut prev: Vec<String> = Vec::new();
    for tick in &trace.ticks {
        if tick.installed.len() < prev.len() || tick.installed[..prev.len()] != prev[..] {
            push("install permanence", format!("t={:.2}: installed set shrank or reordered", tick.t));
        }
        prev = tick.installed.clone();
    }
    for e in &trace.events {
        if let EventKind::Install { element, pose } = &e.kind {
            match r.world.install_targets.get(element) {
                Some(t) if iso_close(&iso(t), &iso(pose), 1e-9) => {}
                _ => push("install permanence", format!("{element} installed away from its target")),
            }
        }
    }

    // speed compliance
    for w in trace.ticks.windows(2) {
        let dt = w[1].t - w[0].t;
        let d = (w[1].robot.x - w[0].robot.x).hypot(w[1].robot.y - w[0].robot.y);
        let cap = w[0].speed_cap.max(w[1].speed_cap).min(r.robot.max_speed);
        if d > cap * dt + 1e-9 {
            push(
                "speed compliance",
                format!("t={:.2}: robot moved {d:.4} m in {dt:.3} s (cap {cap})", w[0].t),
            );
        }
        if w[0].speed_cap > r.world.site.nav_speed_max + 1e-12 {
            push("speed compliance", format!("t={:.2}: cap above the site limit", w[0].t));
        }
    }

    // element conservation: each scheduled element is in storage, held,
    // dropped or installed, in that order, and in exactly one place
    let scheduled: BTreeSet<&str> = r.world.partition.scheduled.iter().map(|s| s.element.id.as_str()).collect();
    let mut dropped: BTreeSet<String> = BTreeSet::new();
    let mut ever_held: BTreeSet<String> = BTreeSet::new();
    let attached_ids: BTreeSet<&str> = trace
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Attach { element, .. } => Some(element.as_str()),
            _ => None,
        })
        .collect();
    let mut ev = trace.events.iter().peekable();
    for tick in &trace.ticks {
        while let Some(e) = ev.peek() {
            if e.t > tick.t {
                break;
            }
            if let EventKind::Detach { element, installed: false } = &e.kind {
                dropped.insert(element.clone());
            }
            ev.next();
        }
        let installed: BTreeSet<&str> = tick.installed.iter().map(String::as_str).collect();
        if installed.len() != tick.installed.len() {
            push("element conservation", format!("t={:.2}: element installed twice", tick.t));
        }
        for id in &installed {
            if !scheduled.contains(id) {
                push("element conservation", format!("t={:.2}: unknown element {id} installed", tick.t));
            }
            if dropped.contains(*id) {
                push("element conservation", format!("t={:.2}: dropped {id} is installed", tick.t));
            }
        }
        if let Some(a) = &tick.attached {
            if !scheduled.contains(a.element.as_str()) {
                push("element conservation", format!("t={:.2}: holding unknown {}", tick.t, a.element));
            }
            if installed.contains(a.element.as_str()) || dropped.contains(&a.element) {
                push("element conservation", format!("t={:.2}: {} held and placed at once", tick.t, a.element));
            }
            ever_held.insert(a.element.clone());
        }
        for id in &installed {
            if !ever_held.contains(*id) && !attached_ids.contains(*id) {
                push("element conservation", format!("t={:.2}: {id} installed without being picked", tick.t));
            }
        }
    }
    let final_installed = trace.ticks.last().map_or(0, |t| t.installed.len());
    if final_installed != trace.install_count() {
        push(
            "element conservation",
            format!("{} install events but {final_installed} installed at the end", trace.install_count()),
        );
    }
    out
}

/// Minimum robot separation to each agent.
pub fn min_separations(trace: &Trace) -> BTreeMap<String, f64> {
    trace
        .header
        .agents
        .iter()
        .map(|a| {
            let s = bimbot::analytics::separation(trace, &trace.header.robot_id, &a.id).expect("known agent");
            (a.id.clone(), s.min_distance)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random small scenarios
// ---------------------------------------------------------------------------

fn element(out: &mut String, id: &str, category: &str, size: [f64; 3], x: f64, y: f64, yaw: f64, extra: &str) {
    out.push_str(&format!(
        "[[elements]]\nid = \"{id}\"\nname = \"{id}\"\ncategory = \"{category}\"\ngeometry = {{ box = [{}, {}, {}] }}\nplacement = {{ x = {x}, y = {y}, yaw = {yaw} }}\n{extra}\n",
        size[0], size[1], size[2]
    ));
}

/// A one-room site with a west door, storage outside, one to three frames
/// inside, an optional obstacle and slow zone, and up to two walking
/// workers. Writes the project and agents into `dir`.
pub fn random_scenario(rng: &mut ChaCha8Rng, dir: &Path, index: usize) -> RunConfig {
    let w: f64 = rng.gen_range(6.0..10.0);
    let h: f64 = rng.gen_range(5.0..8.0);
    let door_w: f64 = rng.gen_range(1.0..2.0);
    let door_c: f64 = rng.gen_range(1.5..h - 1.5);
    let t = 0.2;
    let slow = rng.gen_bool(0.5);
    let speed_max: f64 = rng.gen_range(0.3..0.8);
    let mut s = format!(
        "schema_version = 1\nname = \"random_{index}\"\nsimulation_start_date = \"2022-05-10\"\n\n[site_params]\n\
         allowable_robot_footprint_radius_max = 0.6\nallowable_robot_weight_max = 150.0\n\
         nav_speed_min = 0.2\nnav_speed_max = {speed_max}\n"
    );
    if slow {
        s.push_str(&format!("zone_speed_caps = {{ slow_zone = {} }}\n", rng.gen_range(0.2..0.3)));
    }
    s.push('\n');
    let link = "linked_task_id = \"T-shell\"";
    element(&mut s, "wall_s", "building", [w, t, 2.5], w / 2.0, t / 2.0, 0.0, link);
    element(&mut s, "wall_n", "building", [w, t, 2.5], w / 2.0, h - t / 2.0, 0.0, link);
    element(&mut s, "wall_e", "building", [t, h - 2.0 * t, 2.5], w - t / 2.0, h / 2.0, 0.0, link);
    let lo_len = door_c - door_w / 2.0 - t;
    let hi_len = h - t - (door_c + door_w / 2.0);
    element(&mut s, "wall_w1", "building", [t, lo_len, 2.5], t / 2.0, t + lo_len / 2.0, 0.0, link);
    element(&mut s, "wall_w2", "building", [t, hi_len, 2.5], t / 2.0, h - t - hi_len / 2.0, 0.0, link);

    let n_frames = rng.gen_range(1..=3);
    let rows: Vec<f64> = (0..n_frames)
        .map(|i| 1.0 + (h - 2.0) * (i as f64 + 0.5) / n_frames as f64)
        .collect();
    let mut frame_ids = Vec::new();
    for (i, y) in rows.iter().enumerate() {
        let x = rng.gen_range(2.5..w - 1.5);
        let yaw = if rng.gen_bool(0.5) { 0.0 } else { PI };
        let id = format!("frame_{i}");
        element(
            &mut s,
            &id,
            "building",
            [1.2, 0.1, 2.4],
            x,
            *y,
            yaw,
            "local_points = { pick_point = [0.0, 0.0, 1.2] }\nlinked_task_id = \"T-framing\"",
        );
        frame_ids.push(id);
    }
    if rng.gen_bool(0.5) {
        element(
            &mut s,
            "crate",
            "site_object",
            [0.6, 0.6, 1.0],
            rng.gen_range(1.5..w - 1.0),
            rng.gen_range(1.0..h - 1.0),
            0.0,
            "",
        );
    }
    let sy: f64 = rng.gen_range(-1.0..h - 1.0);
    element(&mut s, "storage", "storage", [2.4, 1.0, 0.8], -4.0, sy, 0.0, "tags = [\"frame_material_storage\"]");
    element(
        &mut s,
        "pickup",
        "zone_marker",
        [0.6, 0.6, 0.02],
        -4.0,
        sy + 1.3,
        -PI / 2.0,
        "tags = [\"pickup_location\"]",
    );
    element(&mut s, "dock", "zone_marker", [0.6, 0.6, 0.02], -1.5, door_c, 0.0, "tags = [\"robot_start\"]");
    if slow {
        element(&mut s, "slow_zone", "zone_marker", [w, h, 0.02], w / 2.0, h / 2.0, 0.0, "");
    }
    let quoted = |v: &[String]| v.iter().map(|x| format!("\"{x}\"")).collect::<Vec<_>>().join(", ");
    s.push_str(
        "[[tasks]]\nid = \"T-shell\"\nname = \"shell\"\nstart_date = \"2022-04-01\"\nfinish_date = \"2022-04-29\"\n\
         element_ids = [\"wall_s\", \"wall_n\", \"wall_e\", \"wall_w1\", \"wall_w2\"]\n\n",
    );
    s.push_str(&format!(
        "[[tasks]]\nid = \"T-framing\"\nname = \"framing\"\nstart_date = \"2022-05-10\"\nfinish_date = \"2022-05-20\"\n\
         robotization = true\ntask_spec_id = \"I-W-F-#1\"\nelement_ids = [{}]\n",
        quoted(&frame_ids)
    ));
    let project = dir.join(format!("random_{index}.toml"));
    std::fs::write(&project, s).expect("write project");

    let n_agents = rng.gen_range(0..=2);
    let agents = (n_agents > 0).then(|| {
        let mut a = String::new();
        for i in 0..n_agents {
            a.push_str(&format!(
                "[[agents]]\nagent_id = \"worker_{i}\"\nrole = \"carpenter\"\nspeed = {}\nloop = true\n",
                rng.gen_range(0.3..0.6)
            ));
            for _ in 0..2 {
                a.push_str(&format!(
                    "[[agents.waypoints]]\nx = {}\ny = {}\nyaw = 0.0\ndwell = {}\n",
                    rng.gen_range(-6.0..w),
                    rng.gen_range(-1.0..h),
                    rng.gen_range(0.0..10.0)
                ));
            }
        }
        let path = dir.join(format!("random_{index}_agents.toml"));
        std::fs::write(&path, a).expect("write agents");
        path
    });
    RunConfig::resolve(&Overrides {
        project: Some(project),
        agents,
        ..Default::default()
    })
    .expect("random scenario resolves")
}

// ---------------------------------------------------------------------------
// Doorways of the two_bedroom fixture
// ---------------------------------------------------------------------------

/// `(name, x_min, x_max, y_min, y_max)` of each door opening.
pub const DOORS: [(&str, f64, f64, f64, f64); 2] = [
    ("west entrance", 14.0, 14.2, 14.55, 15.45),
    ("CMU door", 19.9, 20.1, 14.55, 15.45),
];

pub fn in_door(x: f64, y: f64) -> Option<&'static str> {
    DOORS
        .iter()
        .find(|d| x >= d.1 && x <= d.2 && y >= d.3 && y <= d.4)
        .map(|d| d.0)
}

/// Checks that `text` is a single well-formed XML document, using an XML
/// parser independent of the crate's own SDF checks.
pub fn xml_well_formed(text: &str) -> Result<String, String> {
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_str(text);
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut root: Option<String> = None;
    loop {
        match reader.read_event().map_err(|e| e.to_string())? {
            Event::Start(e) => {
                if stack.is_empty() {
                    if root.is_some() {
                        return Err("more than one root element".into());
                    }
                    root = Some(String::from_utf8_lossy(e.name().as_ref()).into_owned());
                }
                stack.push(e.name().as_ref().to_vec());
            }
            Event::End(e) => {
                if stack.pop().as_deref() != Some(e.name().as_ref()) {
                    return Err("mismatched end tag".into());
                }
            }
            Event::Empty(e) if stack.is_empty() => {
                if root.is_some() {
                    return Err("more than one root element".into());
                }
                root = Some(String::from_utf8_lossy(e.name().as_ref()).into_owned());
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err("unclosed elements at end of document".into());
    }
    root.ok_or_else(|| "no root element".into())
}

/// Every file under `dir`, relative path to bytes.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).expect("readable dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    if dir.is_dir() {
        walk(dir, dir, &mut out);
    }
    out
}
