"""Where-to-meet solver: pick the road node minimising the two-step detour time."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .roadnet import NoPath, RoadNetwork, RoutePosition


@dataclass(frozen=True)
class RendezvousPlan:
    node: int               # road node id
    node_index: int
    delta: float            # s, until both vehicles are at the meeting node
    second_leg_time: float  # s, meeting node -> next UAV task node
    first_leg_distance: float
    second_leg_distance: float
    ugv_distance: float
    recharge_time: float = 0.0

    @property
    def total_time(self) -> float:
        return self.delta + self.recharge_time + self.second_leg_time


def rendezvous_objective(uav_pos, ugv_dist, next_uav_node, v_a: float, v_g: float, net: RoadNetwork):
    """Detour time for every road node; ``ugv_dist`` holds UGV road distances per node index."""
    xy = net.xy
    to_meet = np.hypot(xy[:, 0] - uav_pos[0], xy[:, 1] - uav_pos[1])
    to_next = np.hypot(xy[:, 0] - next_uav_node[0], xy[:, 1] - next_uav_node[1])
    delta = np.maximum(ugv_dist / v_g, to_meet / v_a)
    return delta + to_next / v_a, delta, to_meet, to_next


def solve_rendezvous(uav_pos, ugv_pos: RoutePosition, next_uav_node, v_a: float, v_g: float,
                     net: RoadNetwork, recharge_time: float = 0.0, ugv_dist=None) -> RendezvousPlan:
    """Scan every road node and return the fastest meeting point.

    Ties go to the lowest node id.  ``ugv_dist`` may carry precomputed road
    distances from ``ugv_pos`` to each node index.
    """
    if v_a <= 0 or v_g <= 0:
        raise ValueError("speeds must be positive")
    if len(net) == 0:
        raise ValueError("empty road network")
    if ugv_dist is None:
        ugv_dist = net.distances_from(ugv_pos)
    obj, delta, to_meet, to_next = rendezvous_objective(uav_pos, ugv_dist, next_uav_node, v_a, v_g, net)
    if not np.isfinite(obj).any():
        raise NoPath("UGV cannot reach any road node")
    i = int(np.argmin(obj))  # node indices follow sorted ids, so first minimum = lowest id
    return RendezvousPlan(
        node=net.ids[i], node_index=i, delta=float(delta[i]),
        second_leg_time=float(to_next[i] / v_a),
        first_leg_distance=float(to_meet[i]), second_leg_distance=float(to_next[i]),
        ugv_distance=float(ugv_dist[i]), recharge_time=float(recharge_time),
    )
