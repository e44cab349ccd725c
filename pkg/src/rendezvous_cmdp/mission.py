"""Mission files: the full problem instance, its TOML form, and a synthetic benchmark family.

A mission file looks like::

    schema = 1
    name = "demo"
    delta = 0.1

    [vehicle]
    v_be = 9.8
    v_br = 14.0
    v_g = 4.5
    recharge_time = 300.0

    [battery]
    capacity = 240000.0
    bins = 101

    [energy]            # optional, defaults to the fitted UAV coefficients
    b0 = -88.77
    ...

    [disturbance]       # optional
    weight_mean = 2.3
    weight_std = 0.05
    wind_scale = 1.5
    wind_shape = 3.0

    [discretization]    # optional
    ugv_spacing = 50.0
    energy_samples = 10000
    seed = 0

    [uav]
    closed = true
    route = [
      [0.0, 0.0],
      ...
    ]

    [ugv]
    route = [0, 5, 9]

    [road]
    nodes = [
      [0, 0.0, 0.0],     # id, x, y
      ...
    ]
    edges = [
      [0, 1, 1000.0],    # id, id, length
      ...
    ]
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .energy import BatterySpec, PowerCoefficients, StochasticParams
from .fileio import atomic_write
from .roadnet import RoadNetwork

SCHEMA_VERSION = 1


class MissionError(ValueError):
    """Invalid mission: parse failure or violated invariant."""


@dataclass(frozen=True)
class VehicleParams:
    v_be: float = 9.8
    v_br: float = 14.0
    v_g: float = 4.5
    recharge_time: float = 300.0


@dataclass(frozen=True)
class Discretization:
    ugv_spacing: float = 50.0
    energy_samples: int = 10_000
    seed: int = 0


@dataclass
class MissionSpec:
    road_nodes: list
    road_edges: list
    uav_route: list
    ugv_route: list
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    battery: BatterySpec = field(default_factory=BatterySpec)
    coefficients: PowerCoefficients = field(default_factory=PowerCoefficients)
    disturbance: StochasticParams = field(default_factory=StochasticParams)
    discretization: Discretization = field(default_factory=Discretization)
    delta: float = 0.1
    closed: bool = False
    initial_soc_bin: int | None = None
    ugv_start: int | None = None
    name: str = "mission"

    def __post_init__(self):
        self.road_nodes = [(int(i), float(x), float(y)) for i, x, y in self.road_nodes]
        self.road_edges = [(int(a), int(b), float(w)) for a, b, w in self.road_edges]
        self.uav_route = [(float(x), float(y)) for x, y in self.uav_route]
        self.ugv_route = [int(n) for n in self.ugv_route]

    def __eq__(self, other):
        if not isinstance(other, MissionSpec):
            return NotImplemented
        return all(getattr(self, f.name) == getattr(other, f.name) for f in fields(self))

    @cached_property
    def network(self) -> RoadNetwork:
        return RoadNetwork(self.road_nodes, self.road_edges)

    @property
    def route_points(self) -> np.ndarray:
        """UAV waypoints in visiting order, with the start repeated when the loop is closed."""
        pts = list(self.uav_route)
        if self.closed:
            pts.append(pts[0])
        return np.array(pts, dtype=float).reshape(-1, 2)

    @property
    def start_bin(self) -> int:
        return self.battery.top if self.initial_soc_bin is None else int(self.initial_soc_bin)

    def with_(self, **changes) -> "MissionSpec":
        """Copy with some fields replaced (nested dataclasses replaced whole)."""
        return replace(self, **changes)

    def validate(self) -> "MissionSpec":
        v = self.vehicle
        if min(v.v_be, v.v_br, v.v_g) <= 0:
            raise MissionError("vehicle: all speeds must be positive")
        if not v.v_be < v.v_br:
            raise MissionError(
                f"vehicle: best-endurance speed v_be={v.v_be} must be below best-range speed v_br={v.v_br}")
        if v.recharge_time < 0:
            raise MissionError("vehicle: recharge_time must be >= 0")
        if not 0 < self.delta <= 1:
            raise MissionError(f"delta={self.delta} must lie in (0, 1]")
        if len(self.uav_route) < 2 and not (self.closed and len(self.uav_route) == 1):
            raise MissionError("uav: route needs at least two points")
        if not self.ugv_route:
            raise MissionError("ugv: route must name at least one road node")
        ids = {n[0] for n in self.road_nodes}
        missing = [n for n in self.ugv_route if n not in ids]
        if missing:
            raise MissionError(f"ugv: route nodes {missing} are not road nodes")
        if self.ugv_start is not None and self.ugv_start not in ids:
            raise MissionError(f"ugv: start node {self.ugv_start} is not a road node")
        if not all(math.isfinite(c) for p in self.uav_route for c in p):
            raise MissionError("uav: route coordinates must be finite")
        if self.initial_soc_bin is not None and not 0 <= self.initial_soc_bin <= self.battery.top:
            raise MissionError(f"battery: initial_soc_bin outside 0..{self.battery.top}")
        d = self.discretization
        if d.ugv_spacing <= 0 or d.energy_samples < 1:
            raise MissionError("discretization: ugv_spacing must be > 0 and energy_samples >= 1")
        try:
            net = self.network
        except (ValueError, KeyError) as exc:
            raise MissionError(f"road: {exc}") from None
        dist = net.distance_matrix
        idx = [net.index[n] for n in self.ugv_route]
        if self.ugv_start is not None:
            idx.append(net.index[self.ugv_start])
        if not np.isfinite(dist[np.ix_(idx, idx)]).all():
            raise MissionError("road: UGV task nodes are not in one connected component")
        return self

    # -- serialisation --------------------------------------------------

    def to_toml(self) -> str:
        out = [f"schema = {SCHEMA_VERSION}", f"name = {_str(self.name)}", f"delta = {_num(self.delta)}", ""]

        def section(title, obj):
            out.append(f"[{title}]")
            for f in fields(obj):
                out.append(f"{f.name} = {_num(getattr(obj, f.name))}")
            out.append("")

        section("vehicle", self.vehicle)
        out.append("[battery]")
        out.append(f"capacity = {_num(self.battery.capacity)}")
        out.append(f"bins = {int(self.battery.bins)}")
        if self.initial_soc_bin is not None:
            out.append(f"initial_soc_bin = {int(self.initial_soc_bin)}")
        out.append("")
        section("energy", self.coefficients)
        section("disturbance", self.disturbance)
        section("discretization", self.discretization)
        out.append("[uav]")
        out.append(f"closed = {'true' if self.closed else 'false'}")
        out.append("route = [")
        out += [f"  [{_num(x)}, {_num(y)}]," for x, y in self.uav_route]
        out += ["]", "", "[ugv]", f"route = [{', '.join(str(n) for n in self.ugv_route)}]"]
        if self.ugv_start is not None:
            out.append(f"start = {self.ugv_start}")
        out += ["", "[road]", "nodes = ["]
        out += [f"  [{i}, {_num(x)}, {_num(y)}]," for i, x, y in self.road_nodes]
        out += ["]", "edges = ["]
        out += [f"  [{a}, {b}, {_num(w)}]," for a, b, w in self.road_edges]
        out += ["]", ""]
        return "\n".join(out)

    def digest(self) -> str:
        """Content hash of the canonical TOML form."""
        return hashlib.sha256(self.to_toml().encode()).hexdigest()[:16]

    def write(self, path) -> None:
        atomic_write(path, self.to_toml())


def _num(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _take(table: dict, cls, where: str):
    table = dict(table or {})
    known = {f.name: f for f in fields(cls)}
    unknown = set(table) - set(known)
    if unknown:
        raise MissionError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, val in table.items():
        want = known[key].type
        if want in ("int", int) and not (isinstance(val, int) and not isinstance(val, bool)):
            raise MissionError(f"{where}.{key}: expected an integer, got {val!r}")
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise MissionError(f"{where}.{key}: expected a number, got {val!r}")
        kwargs[key] = float(val) if want in ("float", float) else val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise MissionError(f"{where}: {exc}") from None


def _rows(value, width: int, where: str):
    if not isinstance(value, list):
        raise MissionError(f"{where}: expected a list")
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != width:
            raise MissionError(f"{where}[{i}]: expected {width} values, got {row!r}")
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row):
            raise MissionError(f"{where}[{i}]: non-numeric entry in {row!r}")
    return value


def mission_from_dict(doc: dict) -> MissionSpec:
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise MissionError(f"schema: unsupported version {schema!r} (expected {SCHEMA_VERSION})")
    for key in ("uav", "ugv", "road"):
        if key not in doc:
            raise MissionError(f"missing [{key}] section")
    battery_tab = dict(doc.get("battery", {}))
    initial = battery_tab.pop("initial_soc_bin", None)
    uav, ugv, road = doc["uav"], doc["ugv"], doc["road"]
    if "route" not in uav:
        raise MissionError("uav: missing route")
    if "route" not in ugv:
        raise MissionError("ugv: missing route")
    if not isinstance(ugv["route"], list) or not all(isinstance(n, int) for n in ugv["route"]):
        raise MissionError("ugv.route: expected a list of road node ids")
    spec = MissionSpec(
        road_nodes=_rows(road.get("nodes", []), 3, "road.nodes"),
        road_edges=_rows(road.get("edges", []), 3, "road.edges"),
        uav_route=_rows(uav["route"], 2, "uav.route"),
        ugv_route=ugv["route"],
        vehicle=_take(doc.get("vehicle"), VehicleParams, "vehicle"),
        battery=_take(battery_tab, BatterySpec, "battery"),
        coefficients=_take(doc.get("energy"), PowerCoefficients, "energy"),
        disturbance=_take(doc.get("disturbance"), StochasticParams, "disturbance"),
        discretization=_take(doc.get("discretization"), Discretization, "discretization"),
        delta=float(doc.get("delta", 0.1)),
        closed=bool(uav.get("closed", False)),
        initial_soc_bin=initial,
        ugv_start=ugv.get("start"),
        name=str(doc.get("name", "mission")),
    )
    return spec.validate()


def parse_mission(path) -> MissionSpec:
    """Read and validate a mission file."""
    text = Path(path).read_text()
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise MissionError(f"{path}: {exc}") from None
    return mission_from_dict(doc)


# -- benchmark family ------------------------------------------------------

def grid_network(nx: int, ny: int, spacing: float, detour: float = 1.0):
    """Manhattan grid of road nodes; ``detour`` >= 1 stretches edge lengths to mimic curved roads."""
    nodes, edges = [], []
    for j in range(ny):
        for i in range(nx):
            nodes.append((j * nx + i, i * spacing, j * spacing))
    for j in range(ny):
        for i in range(nx):
            n = j * nx + i
            if i + 1 < nx:
                edges.append((n, n + 1, spacing * detour))
            if j + 1 < ny:
                edges.append((n, n + nx, spacing * detour))
    return nodes, edges


def nearest_neighbour_loop(points: np.ndarray) -> np.ndarray:
    """Cheap closed tour through ``points`` starting at index 0 (stand-in for an upstream TSP planner)."""
    left = list(range(1, len(points)))
    order = [0]
    while left:
        last = points[order[-1]]
        k = min(left, key=lambda i: (np.hypot(*(points[i] - last)), i))
        order.append(k)
        left.remove(k)
    return points[order]


def benchmark_mission(n_uav_nodes: int = 12, grid: int = 5, spacing: float = 1500.0,
                      bins: int = 101, ugv_spacing: float = 250.0, energy_samples: int = 10_000,
                      seed: int = 7, delta: float = 0.1, radius: float | None = None,
                      name: str | None = None) -> MissionSpec:
    """Deterministic synthetic ISR-style mission.

    A ``grid`` x ``grid`` road network, a UGV patrolling three road nodes and a
    closed UAV loop through ``n_uav_nodes`` task points scattered around the
    area.
    """
    rng = np.random.default_rng(seed)
    nodes, edges = grid_network(grid, grid, spacing)
    extent = (grid - 1) * spacing
    centre = np.array([extent / 2, extent / 2])
    r = radius if radius is not None else 0.75 * extent
    ang = np.sort(rng.uniform(0, 2 * np.pi, n_uav_nodes))
    rad = r * np.sqrt(rng.uniform(0.15, 1.0, n_uav_nodes))
    pts = centre + np.c_[rad * np.cos(ang), rad * np.sin(ang)]
    pts = np.round(nearest_neighbour_loop(pts), 1)
    last = grid * grid - 1
    ugv = [0, grid - 1 + (grid // 2) * grid, last - (grid - 1)]
    return MissionSpec(
        road_nodes=nodes, road_edges=edges,
        uav_route=[tuple(p) for p in pts], ugv_route=ugv,
        battery=BatterySpec(240_000.0, bins),
        discretization=Discretization(ugv_spacing, energy_samples, seed),
        delta=delta, closed=True,
        name=name or f"benchmark-{n_uav_nodes}",
    ).validate()
