import pytest
from hypothesis import given, settings, strategies as st

from rendezvous_cmdp.energy import PowerCoefficients
from rendezvous_cmdp.mission import MissionError, benchmark_mission, parse_mission

MINIMAL = """
schema = 1
[uav]
route = [[0.0, 0.0], [1400.0, 0.0]]
[ugv]
route = [0, 1]
[road]
nodes = [[0, 0.0, 0.0], [1, 1000.0, 0.0]]
edges = [[0, 1, 1000.0]]
"""


def write(tmp_path, text, name="m.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_benchmark_file_carries_default_parameters(tmp_path):
    p = tmp_path / "b.toml"
    benchmark_mission().write(p)
    m = parse_mission(p)
    v = m.vehicle
    assert (v.v_be, v.v_br, v.v_g, v.recharge_time) == (9.8, 14.0, 4.5, 300.0)
    assert m.battery.capacity == 240_000.0


def test_omitted_sections_get_defaults(tmp_path):
    m = parse_mission(write(tmp_path, MINIMAL))
    assert m.coefficients == PowerCoefficients()
    c = m.coefficients
    assert (c.b0, c.b1, c.b2, c.b3, c.b4, c.b5) == (-88.77, 3.53, -0.42, 0.043, 107.5, -2.74)
    assert m.disturbance.weight_mean == 2.3 and m.disturbance.wind_scale == 1.5
    assert m.discretization.energy_samples == 10_000 and m.battery.bins == 101


def test_speed_ordering_enforced(tmp_path):
    text = MINIMAL + "[vehicle]\nv_be = 15.0\nv_br = 14.0\n"
    with pytest.raises(MissionError, match="best-endurance.*best-range"):
        parse_mission(write(tmp_path, text))


def test_parse_error_has_line_context(tmp_path):
    with pytest.raises(MissionError, match="line"):
        parse_mission(write(tmp_path, MINIMAL + "delta = = 3\n"))


@pytest.mark.parametrize("text,msg", [
    ("delta = 1.5\n" + MINIMAL, "delta"),
    (MINIMAL + "[battery]\nbins = 2.5\n", "battery.bins"),
    (MINIMAL + "[energy]\nb7 = 1.0\n", "unknown keys"),
    (MINIMAL.replace("schema = 1", "schema = 9"), "schema"),
    (MINIMAL.replace("[road]", "[roads]"), "road"),
])
def test_validation_messages(tmp_path, text, msg):
    with pytest.raises(MissionError, match=msg):
        parse_mission(write(tmp_path, text))


def test_unknown_ugv_node(tmp_path):
    with pytest.raises(MissionError, match="not road nodes"):
        parse_mission(write(tmp_path, MINIMAL.replace("route = [0, 1]", "route = [0, 5]")))


def test_integer_coordinates_are_coerced(tmp_path):
    m = parse_mission(write(tmp_path, MINIMAL.replace("[1400.0, 0.0]", "[1400, 0]")))
    assert m.uav_route[1] == (1400.0, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 14), st.integers(0, 50), st.sampled_from([11, 51, 101]),
       st.floats(0.01, 1.0), st.booleans())
def test_round_trip(tmp_path_factory, n, seed, bins, delta, closed):
    m = benchmark_mission(n_uav_nodes=n, seed=seed, bins=bins, delta=delta).with_(closed=closed)
    p = tmp_path_factory.mktemp("rt") / "m.toml"
    m.write(p)
    back = parse_mission(p)
    assert back == m and back.digest() == m.digest()


def test_benchmark_is_deterministic():
    assert benchmark_mission().to_toml() == benchmark_mission().to_toml()
    assert benchmark_mission(seed=1).digest() != benchmark_mission().digest()
