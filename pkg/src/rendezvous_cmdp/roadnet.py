"""Road network for the ground vehicle.

Nodes carry planar coordinates in meters, edges carry their own road length
(roads may curve, so lengths are taken as given and only checked against the
straight-line distance).
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

LENGTH_TOL = 1e-6


class NoPath(Exception):
    """Raised when two road nodes lie in different connected components."""


class UnknownNode(KeyError):
    """Raised for a node id that is not part of the network."""


def euclidean(p, q) -> float:
    """Straight-line distance between two planar points."""
    return math.hypot(float(p[0]) - float(q[0]), float(p[1]) - float(q[1]))


@dataclass(frozen=True)
class RoutePosition:
    """A point on the road network: ``offset`` meters from ``u`` along edge (u, v).

    ``u == v`` encodes a position exactly on node ``u``.  ``u`` and ``v`` are
    node indices (not ids) of the owning :class:`RoadNetwork`.
    """

    u: int
    v: int
    offset: float = 0.0

    @classmethod
    def at_node(cls, index: int) -> "RoutePosition":
        return cls(index, index, 0.0)

    @property
    def on_node(self) -> bool:
        return self.u == self.v


@dataclass
class RoadNetwork:
    """Undirected road graph with cached all-pairs shortest paths.

    Parameters
    ----------
    nodes : sequence of (id, x, y)
    edges : sequence of (id_a, id_b, length)
    """

    nodes: list
    edges: list
    ids: list = field(init=False)
    xy: np.ndarray = field(init=False)
    index: dict = field(init=False)
    adjacency: list = field(init=False)

    def __post_init__(self):
        self.nodes = [(int(i), float(x), float(y)) for i, x, y in self.nodes]
        self.ids = sorted(n[0] for n in self.nodes)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("road node ids must be unique")
        self.index = {nid: k for k, nid in enumerate(self.ids)}
        by_id = {n[0]: n for n in self.nodes}
        self.xy = np.array([[by_id[i][1], by_id[i][2]] for i in self.ids], dtype=float).reshape(-1, 2)

        self.adjacency = [dict() for _ in self.ids]
        clean = []
        for a, b, length in self.edges:
            ia, ib = self._idx(int(a)), self._idx(int(b))
            length = float(length)
            if length < 0 or not math.isfinite(length):
                raise ValueError(f"edge ({a}, {b}) has invalid length {length}")
            if ia == ib:
                raise ValueError(f"self-loop on road node {a}")
            straight = euclidean(self.xy[ia], self.xy[ib])
            if length < straight - LENGTH_TOL:
                log.warning("edge (%s, %s) length %.3f m is shorter than the straight line %.3f m",
                            a, b, length, straight)
            # parallel roads: keep the shorter one
            if ib in self.adjacency[ia] and self.adjacency[ia][ib] <= length:
                continue
            self.adjacency[ia][ib] = length
            self.adjacency[ib][ia] = length
            clean.append((int(a), int(b), length))
        self.edges = clean
        self._dist, self._pred = self._all_pairs()

    def _idx(self, node_id) -> int:
        try:
            return self.index[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def __len__(self):
        return len(self.ids)

    def position(self, node_id) -> np.ndarray:
        return self.xy[self._idx(node_id)]

    def edge_length(self, iu: int, iv: int) -> float:
        return self.adjacency[iu][iv]

    # -- shortest paths -------------------------------------------------

    def _single_source(self, src: int):
        n = len(self.ids)
        dist = np.full(n, np.inf)
        pred = np.full(n, -1, dtype=np.int64)
        dist[src] = 0.0
        done = np.zeros(n, dtype=bool)
        heap = [(0.0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for v, w in self.adjacency[u].items():
                nd = d + w
                if nd < dist[v] - 1e-12:
                    dist[v] = nd
                    pred[v] = u
                    heapq.heappush(heap, (nd, v))
                elif abs(nd - dist[v]) <= 1e-12 and not done[v] and u < pred[v]:
                    # equal-length alternatives: lowest-index predecessor wins
                    pred[v] = u
        return dist, pred

    def _all_pairs(self):
        n = len(self.ids)
        dist = np.empty((n, n))
        pred = np.empty((n, n), dtype=np.int64)
        for s in range(n):
            dist[s], pred[s] = self._single_source(s)
        return dist, pred

    @property
    def distance_matrix(self) -> np.ndarray:
        """All-pairs road distances indexed by node index (read-only view)."""
        view = self._dist.view()
        view.flags.writeable = False
        return view

    def next_hop(self, iu: int, it: int) -> int:
        """Node index following ``iu`` on the shortest path from ``iu`` to ``it``."""
        # the tree rooted at the target gives each node its step toward it
        return int(self._pred[it, iu])

    def path(self, a, b) -> list:
        """Shortest path between two node ids, as a list of ids."""
        ia, ib = self._idx(a), self._idx(b)
        if not np.isfinite(self._dist[ia, ib]):
            raise NoPath(f"no road between {a} and {b}")
        out = [ia]
        while out[-1] != ib:
            out.append(self.next_hop(out[-1], ib))
        return [self.ids[i] for i in out]

    # -- positions --------------------------------------------------------

    def point(self, pos: RoutePosition) -> np.ndarray:
        if pos.on_node:
            return self.xy[pos.u].copy()
        frac = pos.offset / self.adjacency[pos.u][pos.v] if self.adjacency[pos.u][pos.v] > 0 else 0.0
        return self.xy[pos.u] + frac * (self.xy[pos.v] - self.xy[pos.u])

    def distances_from(self, pos: RoutePosition) -> np.ndarray:
        """Road distance from a (possibly mid-edge) position to every node index.

        The vehicle may leave an edge through either endpoint.
        """
        if pos.on_node:
            return self._dist[pos.u].copy()
        length = self.adjacency[pos.u][pos.v]
        return np.minimum(pos.offset + self._dist[pos.u], (length - pos.offset) + self._dist[pos.v])

    def walk(self, pos: RoutePosition, target: int, budget: float):
        """Drive from ``pos`` toward node index ``target`` for at most ``budget`` meters.

        Returns ``(new_position, unused_budget)``; the unused budget is positive
        only when the target was reached.
        """
        if pos.on_node:
            start, lead = pos.u, 0.0
        else:
            length = self.adjacency[pos.u][pos.v]
            via_u = pos.offset + self._dist[pos.u, target]
            via_v = (length - pos.offset) + self._dist[pos.v, target]
            exit_node, lead = (pos.u, pos.offset) if via_u <= via_v else (pos.v, length - pos.offset)
            if not np.isfinite(min(via_u, via_v)):
                raise NoPath(f"node {self.ids[target]} unreachable")
            if budget < lead:
                off = pos.offset - budget if exit_node == pos.u else pos.offset + budget
                return RoutePosition(pos.u, pos.v, off), 0.0
            budget -= lead
            start = exit_node
        if not np.isfinite(self._dist[start, target]):
            raise NoPath(f"node {self.ids[target]} unreachable")
        cur = start
        while cur != target:
            nxt = self.next_hop(cur, target)
            step = self.adjacency[cur][nxt]
            if budget < step:
                return RoutePosition(cur, nxt, budget), 0.0
            budget -= step
            cur = nxt
        return RoutePosition.at_node(cur), budget


def shortest_path_length(net: RoadNetwork, a, b) -> float:
    """Road distance between node ids ``a`` and ``b``."""
    d = net._dist[net._idx(a), net._idx(b)]
    if not np.isfinite(d):
        raise NoPath(f"no road between {a} and {b}")
    return float(d)


def all_pairs_road_distance(net: RoadNetwork):
    """Distance table keyed by node id, plus a flag telling whether any pair is disconnected."""
    table = {a: {b: float(net._dist[i, j]) for j, b in enumerate(net.ids)} for i, a in enumerate(net.ids)}
    disconnected = bool(np.isinf(net._dist).any())
    return table, disconnected
