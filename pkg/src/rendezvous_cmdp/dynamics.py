"""Deterministic vehicle kinematics shared by the model builder and the simulator.

The UGV lives on a finite set of waypoints: every road node plus points
spaced at most ``ugv_spacing`` meters apart along the edges of its patrol
loop.  After each UAV action the UGV's exact position is snapped to the
nearest waypoint on its current edge.
"""
from __future__ import annotations

import math

import numpy as np

from .rendezvous import RendezvousPlan, solve_rendezvous
from .roadnet import RoadNetwork, RoutePosition, euclidean


class MissionGeometry:
    """Legs, UGV patrol waypoints and cached rendezvous plans for one mission."""

    def __init__(self, mission):
        self.mission = mission
        self.net: RoadNetwork = mission.network
        self.points = mission.route_points
        self.n_legs = len(self.points) - 1
        self.leg_lengths = np.array([euclidean(self.points[k], self.points[k + 1])
                                     for k in range(self.n_legs)])
        v = mission.vehicle
        self.v_g = v.v_g
        self.recharge_time = v.recharge_time
        self.targets = [self.net.index[n] for n in mission.ugv_route]
        start = mission.ugv_start if mission.ugv_start is not None else mission.ugv_route[0]
        self.start_waypoint = self.net.index[start]
        if start == mission.ugv_route[0]:
            self.start_target = 1 % len(self.targets)
        else:
            self.start_target = 0
        d = self.net.distance_matrix
        n = len(self.targets)
        self.loop_length = float(sum(d[self.targets[i], self.targets[(i + 1) % n]] for i in range(n)))
        self._build_waypoints(mission.discretization.ugv_spacing)
        self._wp_dist = {}
        self._plans = {}
        self._advance = {}

    # -- waypoints ----------------------------------------------------------

    def _build_waypoints(self, spacing: float):
        net = self.net
        patrol = set()
        n = len(self.targets)
        for i in range(n):
            a, b = self.targets[i], self.targets[(i + 1) % n]
            cur = a
            while cur != b:
                nxt = net.next_hop(cur, b)
                patrol.add((min(cur, nxt), max(cur, nxt)))
                cur = nxt
        self.waypoints = [RoutePosition.at_node(i) for i in range(len(net))]
        self._edge_split = {}
        for u, v in sorted(patrol):
            length = net.edge_length(u, v)
            m = max(1, math.ceil(length / spacing - 1e-9))
            first = len(self.waypoints)
            for i in range(1, m):
                self.waypoints.append(RoutePosition(u, v, i * length / m))
            self._edge_split[(u, v)] = (m, first)

    @property
    def n_waypoints(self) -> int:
        return len(self.waypoints)

    def snap(self, pos: RoutePosition) -> int:
        """Waypoint index nearest to ``pos`` along its own edge."""
        if pos.on_node:
            return pos.u
        u, v, off = pos.u, pos.v, pos.offset
        length = self.net.edge_length(u, v)
        if u > v:
            u, v, off = v, u, length - off
        m, first = self._edge_split.get((u, v), (1, None))
        i = int(math.floor(off / length * m + 0.5)) if length > 0 else 0
        if i <= 0:
            return u
        if i >= m:
            return v
        return first + i - 1

    def waypoint_xy(self, wp: int) -> np.ndarray:
        return self.net.point(self.waypoints[wp])

    def ugv_distances(self, wp: int) -> np.ndarray:
        d = self._wp_dist.get(wp)
        if d is None:
            d = self._wp_dist[wp] = self.net.distances_from(self.waypoints[wp])
        return d

    # -- UGV patrol ---------------------------------------------------------

    def drive(self, pos: RoutePosition, target: int, duration: float):
        """Exact UGV motion along its patrol for ``duration`` seconds; returns (position, target)."""
        budget = self.v_g * duration
        n = len(self.targets)
        wrapped = False
        while True:
            dest = self.targets[target]
            pos, left = self.net.walk(pos, dest, budget)
            if not (pos.on_node and pos.u == dest):
                return pos, target
            target = (target + 1) % n
            budget = left
            if n == 1 or self.loop_length <= 0:
                return pos, target
            if not wrapped:
                # whole laps change nothing once the UGV is back on its loop
                budget = math.fmod(budget, self.loop_length)
                wrapped = True
            if budget <= 0:
                return pos, target

    def advance(self, wp: int, target: int, duration: float):
        """Snapped UGV state after patrolling for ``duration`` seconds."""
        key = (wp, target, round(duration, 9))
        out = self._advance.get(key)
        if out is None:
            pos, target2 = self.drive(self.waypoints[wp], target, duration)
            out = self._advance[key] = (self.snap(pos), target2)
        return out

    # -- UAV actions --------------------------------------------------------

    def rendezvous(self, k: int, wp: int, v_a: float) -> RendezvousPlan:
        key = (k, wp, v_a)
        plan = self._plans.get(key)
        if plan is None:
            plan = solve_rendezvous(self.points[k], self.waypoints[wp], self.points[k + 1], v_a, self.v_g,
                                    self.net, recharge_time=self.recharge_time,
                                    ugv_dist=self.ugv_distances(wp))
            self._plans[key] = plan
        return plan

    def after_rendezvous(self, plan: RendezvousPlan, target: int):
        """UGV state once the UAV reaches its next task node: parked at the meeting node, then patrolling."""
        return self.advance(plan.node_index, target, plan.second_leg_time)
