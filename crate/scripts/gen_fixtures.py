#!/usr/bin/env python3
"""Regenerates the two_bedroom fixture family under fixtures/two_bedroom/.

Layout (meters, z up): a 15 m x 10 m shell at x 14..29, y 10..20 with a west
entrance at y = 15, a CMU wall at x = 20 splitting the living room (west)
from the bedroom wing (east), and eleven 1.2 m wood frames forming the two
sides of the bedroom-wing corridor. Frames are scheduled 2022-05-10..23; the
shell was finished in April.

Variants:
  unaugmented  no frame storage, no pickup marker, frames without pick points
  case1        storage outside the building, south-west of the entrance
  case2        storage inside the living room
  widened      case1 with 2 m doorways
  walled_off   case1 with the storage yard fenced in
"""

import math
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures" / "two_bedroom"

WALL_H = 2.7
WALL_T = 0.2
DOOR_Y = 15.0
FRAME = (1.2, 0.1, 2.4)
SOUTH_ROW_Y = 14.0
NORTH_ROW_Y = 16.0
SOUTH_X = [20.8, 22.1, 23.4, 24.7, 26.0, 27.2]
NORTH_X = [20.8, 22.1, 23.4, 24.7, 26.0]


def fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        r = repr(round(v, 6))
        return "0.0" if r == "-0.0" else r
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return '"' + v + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {fmt(x)}" for k, x in v.items()) + " }"
    raise TypeError(v)


def pose(x, y, z=0.0, yaw=0.0):
    p = {"x": float(x), "y": float(y)}
    if z:
        p["z"] = float(z)
    if yaw:
        p["yaw"] = float(yaw)
    return p


def element(eid, name, category, geometry, placement=None, tags=(), task=None, points=None):
    e = {"id": eid, "name": name, "category": category, "geometry": geometry}
    if placement is not None:
        e["placement"] = placement
    if tags:
        e["tags"] = list(tags)
    if points:
        e["local_points"] = points
    if task:
        e["linked_task_id"] = task
    return e


def box(sx, sy, sz):
    return {"box": [float(sx), float(sy), float(sz)]}


def shell(door_half):
    """Exterior walls, slab and the CMU wall, each door centered at y = 15."""
    els = []
    x0, x1, y0, y1 = 14.0, 29.0, 10.0, 20.0
    w = lambda eid, name, cx, cy, sx, sy: els.append(
        element(eid, name, "building", box(sx, sy, WALL_H), pose(cx, cy), task="T-shell")
    )
    w("wall_south", "exterior wall south", (x0 + x1) / 2, y0 + WALL_T / 2, x1 - x0, WALL_T)
    w("wall_north", "exterior wall north", (x0 + x1) / 2, y1 - WALL_T / 2, x1 - x0, WALL_T)
    w("wall_east", "exterior wall east", x1 - WALL_T / 2, (y0 + y1) / 2, WALL_T, y1 - y0 - 2 * WALL_T)
    lo, hi = DOOR_Y - door_half, DOOR_Y + door_half
    inner0, inner1 = y0 + WALL_T, y1 - WALL_T
    w("wall_west_s", "exterior wall west, south of entrance", x0 + WALL_T / 2, (inner0 + lo) / 2, WALL_T, lo - inner0)
    w("wall_west_n", "exterior wall west, north of entrance", x0 + WALL_T / 2, (hi + inner1) / 2, WALL_T, inner1 - hi)
    w("cmu_s", "CMU wall, south of door", 20.0, (inner0 + lo) / 2, WALL_T, lo - inner0)
    w("cmu_n", "CMU wall, north of door", 20.0, (hi + inner1) / 2, WALL_T, inner1 - hi)
    els.append(
        element("slab", "ground floor slab", "building", box(x1 - x0, y1 - y0, 0.1), pose((x0 + x1) / 2, 15.0, -0.1), task="T-shell")
    )
    return els


def frames(with_points):
    els = []
    rows = [(x, SOUTH_ROW_Y, 0.0) for x in SOUTH_X] + [(x, NORTH_ROW_Y, math.pi) for x in NORTH_X]
    for i, (x, y, yaw) in enumerate(rows):
        points = {"pick_point": [0.0, 0.0, 1.2]} if with_points else None
        els.append(
            element(
                f"frame_{i}",
                f"wood frame {i + 1}",
                "building",
                {"mesh": "meshes/frame_panel.dae"},
                pose(x, y, yaw=yaw),
                task="T-framing",
                points=points,
            )
        )
    return els


def site(storage_at, pickup_at, pickup_yaw):
    els = [
        element("site_office", "site office trailer", "site_object", box(3.0, 2.4, 2.6), pose(2.5, 17.0)),
        element("ladder", "step ladder", "site_object", box(0.5, 1.5, 2.0), pose(15.2, 11.5)),
        element(
            "robot_dock",
            "robot start",
            "zone_marker",
            box(0.6, 0.6, 0.02),
            pose(12.0, 16.5, yaw=-math.pi / 2),
            tags=["robot_start"],
        ),
        element("indoor_zone", "indoor slow zone", "zone_marker", box(15.0, 10.0, 0.02), pose(21.5, 15.0)),
    ]
    if storage_at is not None:
        els.append(
            element(
                "frame_storage",
                "wood frame material storage",
                "storage",
                box(2.4, 1.0, 0.8),
                pose(*storage_at),
                tags=["frame_material_storage"],
            )
        )
        els.append(
            element(
                "frame_pickup",
                "frame pickup location",
                "zone_marker",
                box(0.6, 0.6, 0.02),
                pose(pickup_at[0], pickup_at[1], yaw=pickup_yaw),
                tags=["pickup_location"],
            )
        )
    return els


def fence():
    """Closed fence around the outdoor storage yard."""
    x0, x1, y0, y1, t, h = 4.5, 9.5, 8.5, 12.6, 0.1, 1.5
    return [
        element("fence_s", "yard fence south", "site_object", box(x1 - x0, t, h), pose((x0 + x1) / 2, y0)),
        element("fence_n", "yard fence north", "site_object", box(x1 - x0, t, h), pose((x0 + x1) / 2, y1)),
        element("fence_w", "yard fence west", "site_object", box(t, y1 - y0, h), pose(x0, (y0 + y1) / 2)),
        element("fence_e", "yard fence east", "site_object", box(t, y1 - y0, h), pose(x1, (y0 + y1) / 2)),
    ]


TASKS = [
    {
        "id": "T-shell",
        "name": "Exterior and CMU walls",
        "start_date": "2022-04-01",
        "finish_date": "2022-04-29",
    },
    {
        "id": "T-framing",
        "name": "Interior wall framing",
        "start_date": "2022-05-10",
        "finish_date": "2022-05-23",
        "robotization": True,
        "task_spec_id": "I-W-F-#1",
        "element_ids": [f"frame_{i}" for i in range(len(SOUTH_X) + len(NORTH_X))],
    },
    {
        "id": "T-drywall",
        "name": "Drywall",
        "start_date": "2022-05-24",
        "finish_date": "2022-06-10",
    },
]

SITE_PARAMS = {
    "allowable_robot_footprint_radius_max": 0.6,
    "allowable_robot_weight_max": 150.0,
    "nav_speed_min": 0.2,
    "nav_speed_max": 0.3,
}


def manifest(title, elements):
    lines = [
        f"# {title}",
        "# Generated by scripts/gen_fixtures.py; edit the script, not this file.",
        "schema_version = 1",
        'name = "two_bedroom"',
        'simulation_start_date = "2022-05-10"',
        "",
        "[site_params]",
    ]
    for k, v in SITE_PARAMS.items():
        lines.append(f"{k} = {fmt(v)}")
    lines.append("zone_speed_caps = { indoor_zone = 0.2 }")
    for e in elements:
        lines.append("")
        lines.append("[[elements]]")
        for k, v in e.items():
            lines.append(f"{k} = {fmt(v)}")
    for t in TASKS:
        t = dict(t)
        linked = [e["id"] for e in elements if e.get("linked_task_id") == t["id"]]
        if linked:
            t["element_ids"] = linked
        lines.append("")
        lines.append("[[tasks]]")
        for k, v in t.items():
            lines.append(f"{k} = {fmt(v)}")
    return "\n".join(lines) + "\n"


def frame_dae():
    """Stud frame in centimeters: bottom and top plates plus four studs."""
    parts = [(-60, 60, -5, 5, 0, 4), (-60, 60, -5, 5, 236, 240)]
    for cx in (-58, -19.5, 19.5, 58):
        parts.append((cx - 2, cx + 2, -5, 5, 4, 236))
    verts, tris = [], []
    faces = [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7), (0, 1, 5), (0, 5, 4),
             (1, 2, 6), (1, 6, 5), (2, 3, 7), (2, 7, 6), (3, 0, 4), (3, 4, 7)]
    for (x0, x1, y0, y1, z0, z1) in parts:
        base = len(verts)
        verts += [(x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
                  (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)]
        tris += [(base + a, base + b, base + c) for a, b, c in faces]
    g = lambda v: ("%g" % v)
    pos = " ".join(g(c) for v in verts for c in v)
    idx = " ".join(str(i) for t in tris for i in t)
    return f"""<?xml version="1.0" encoding="utf-8"?>
<COLLADA xmlns="http://www.collada.org/2005/11/COLLADASchema" version="1.4.1">
  <asset>
    <contributor><authoring_tool>gen_fixtures.py</authoring_tool></contributor>
    <unit name="centimeter" meter="0.01"/>
    <up_axis>Z_UP</up_axis>
  </asset>
  <library_geometries>
    <geometry id="frame-mesh" name="frame_panel">
      <mesh>
        <source id="frame-pos">
          <float_array id="frame-pos-array" count="{len(verts) * 3}">{pos}</float_array>
          <technique_common>
            <accessor source="#frame-pos-array" count="{len(verts)}" stride="3">
              <param name="X" type="float"/><param name="Y" type="float"/><param name="Z" type="float"/>
            </accessor>
          </technique_common>
        </source>
        <vertices id="frame-vtx"><input semantic="POSITION" source="#frame-pos"/></vertices>
        <triangles count="{len(tris)}">
          <input semantic="VERTEX" source="#frame-vtx" offset="0"/>
          <p>{idx}</p>
        </triangles>
      </mesh>
    </geometry>
  </library_geometries>
  <library_visual_scenes>
    <visual_scene id="scene">
      <node id="frame"><instance_geometry url="#frame-mesh"/></node>
    </visual_scene>
  </library_visual_scenes>
  <scene><instance_visual_scene url="#scene"/></scene>
</COLLADA>
"""


def agents(path):
    scripts = [
        (
            "carpenter_1",
            "carpenter 1",
            0.5,
            [(15.6, 12.3, 0.0, 30.0), (18.6, 12.3, 0.0, 30.0)],
        ),
        (
            "carpenter_2",
            "carpenter 2",
            0.5,
            [(5.0, 12.0, 0.0, 20.0), (9.5, 12.0, 0.0, 20.0)],
        ),
        (
            "supervisor",
            "site supervisor",
            0.4,
            [(4.5, 14.0, 0.0, 60.0), (4.5, 19.0, 0.0, 60.0)],
        ),
    ]
    lines = [
        "# Worker scripts shared by the two_bedroom scenarios.",
        "# Generated by scripts/gen_fixtures.py.",
    ]
    for aid, role, speed, wps in scripts:
        lines += ["", "[[agents]]", f'agent_id = "{aid}"', f'role = "{role}"', f"speed = {speed}", "loop = true"]
        for x, y, yaw, dwell in wps:
            lines += ["[[agents.waypoints]]", f"x = {x}", f"y = {y}", f"yaw = {yaw}", f"dwell = {dwell}"]
    path.write_text("\n".join(lines) + "\n")


def main():
    (OUT / "meshes").mkdir(parents=True, exist_ok=True)
    (OUT / "meshes" / "frame_panel.dae").write_text(frame_dae())
    outdoor = ((7.0, 10.0, 0.0), (7.0, 11.3), math.pi / -2)
    indoor = ((16.5, 18.9, 0.0), (16.5, 17.6), math.pi / 2)
    variants = {
        "unaugmented": ("two_bedroom, as designed: no robot-specific modeling", 0.45, False, (None, None, 0.0), False),
        "case1": ("two_bedroom, case 1: frame storage outside the building", 0.45, True, outdoor, False),
        "case2": ("two_bedroom, case 2: frame storage in the living room", 0.45, True, indoor, False),
        "widened": ("two_bedroom, case 1 with 2 m doorways", 1.0, True, outdoor, False),
        "walled_off": ("two_bedroom, case 1 with the storage yard fenced in", 0.45, True, outdoor, True),
    }
    for name, (title, door_half, points, (storage, pickup, yaw), fenced) in variants.items():
        els = shell(door_half) + frames(points) + site(storage, pickup, yaw)
        if fenced:
            els += fence()
        (OUT / f"{name}.toml").write_text(manifest(title, els))
    agents(OUT / "agents.toml")


if __name__ == "__main__":
    main()
