import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rendezvous_cmdp.roadnet import (NoPath, RoadNetwork, RoutePosition, UnknownNode, all_pairs_road_distance,
                                     euclidean, shortest_path_length)


@pytest.fixture
def triangle():
    # a=0 at origin; lengths match a 3-4-5 right triangle
    return RoadNetwork([(0, 0, 0), (1, 3, 0), (2, 3, 4)], [(0, 1, 3), (1, 2, 4), (0, 2, 5)])


def test_triangle_takes_direct_edge(triangle):
    assert shortest_path_length(triangle, 0, 2) == 5


def test_distance_to_self_is_zero(triangle):
    assert shortest_path_length(triangle, 1, 1) == 0


def test_disconnected_raises():
    net = RoadNetwork([(0, 0, 0), (1, 1, 0), (2, 10, 0), (3, 11, 0)], [(0, 1, 1), (2, 3, 1)])
    with pytest.raises(NoPath):
        shortest_path_length(net, 0, 3)
    table, disconnected = all_pairs_road_distance(net)
    assert disconnected and math.isinf(table[0][3])


def test_unknown_node(triangle):
    with pytest.raises(UnknownNode):
        shortest_path_length(triangle, 0, 99)


def test_path_graph_table():
    net = RoadNetwork([(0, 0, 0), (1, 2, 0), (2, 5, 0)], [(0, 1, 2), (1, 2, 3)])
    table, disconnected = all_pairs_road_distance(net)
    assert table[0][2] == 5 and not disconnected


def test_single_node_table():
    table, _ = all_pairs_road_distance(RoadNetwork([(7, 1.0, 2.0)], []))
    assert table == {7: {7: 0.0}}


def test_table_matches_pairwise(triangle):
    table, _ = all_pairs_road_distance(triangle)
    for a in range(3):
        for b in range(3):
            assert table[a][b] == shortest_path_length(triangle, a, b)


@pytest.mark.parametrize("p,q,d", [((0, 0), (3, 4), 5), ((2, 2), (2, 2), 0), ((1, 1), (4, 5), 5)])
def test_euclidean(p, q, d):
    assert euclidean(p, q) == d


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        RoadNetwork([(0, 0, 0), (0, 1, 1)], [])


def test_tie_break_prefers_lowest_predecessor():
    # two equal routes 0-1-3 and 0-2-3
    net = RoadNetwork([(0, 0, 0), (1, 1, 1), (2, 1, -1), (3, 2, 0)],
                      [(0, 1, 2), (1, 3, 2), (0, 2, 2), (2, 3, 2)])
    assert net.path(0, 3) == [0, 1, 3]


def test_mid_edge_distances_and_walk():
    net = RoadNetwork([(0, 0, 0), (1, 100, 0), (2, 100, 50)], [(0, 1, 100), (1, 2, 50)])
    pos = RoutePosition(0, 1, 30.0)
    d = net.distances_from(pos)
    assert np.allclose(d, [30, 70, 120])
    np.testing.assert_allclose(net.point(pos), [30, 0])
    part, left = net.walk(pos, 2, 100.0)
    assert left == 0 and net.point(part) == pytest.approx([100, 30])
    end, left = net.walk(pos, 2, 150.0)
    assert end.on_node and end.u == 2 and left == pytest.approx(30.0)
    mid, left = net.walk(pos, 2, 10.0)
    assert left == 0 and net.point(mid) == pytest.approx([40, 0])


def test_walk_can_reverse_mid_edge():
    net = RoadNetwork([(0, 0, 0), (1, 100, 0)], [(0, 1, 100)])
    end, left = net.walk(RoutePosition(0, 1, 30.0), 0, 50.0)
    assert end.on_node and end.u == 0 and left == pytest.approx(20.0)


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 9))
    xy = draw(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=n, max_size=n))
    nodes = [(i, x, y) for i, (x, y) in enumerate(xy)]
    edges = []
    for i in range(1, n):
        j = draw(st.integers(0, i - 1))
        stretch = draw(st.floats(1.0, 2.0))
        edges.append((i, j, euclidean(xy[i], xy[j]) * stretch))
    for _ in range(draw(st.integers(0, n))):
        a, b = draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1))
        if a != b:
            edges.append((a, b, euclidean(xy[a], xy[b]) * draw(st.floats(1.0, 2.0))))
    return RoadNetwork(nodes, edges)


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_metric_properties(net):
    D = net.distance_matrix
    n = len(net)
    assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)
    # triangle inequality on every triple
    assert np.all(D[:, None, :] <= D[:, :, None] + D[None, :, :] + 1e-9)
    for i in range(n):
        for j in range(n):
            assert D[i, j] >= euclidean(net.xy[i], net.xy[j]) - 1e-6
