"""Road network loading, traffic multipliers, and time-dependent routing."""

import random

import pytest

from amodsim.geo import GeoPoint
from amodsim.road import (
    NetworkLoadError,
    RoadNetwork,
    Route,
    TrafficState,
    eta_table,
    load_network,
    route_astar,
    travel_time_s,
)
from scenario_tools import (
    DYADIC_MULTIPLIERS,
    dijkstra_times,
    grid_network,
    random_dyadic_network,
)


def test_traffic_multiplier_piecewise():
    ts = TrafficState([(0.0, 1.0), (600.0, 1.5), (1200.0, 0.8)])
    assert ts.multiplier_at(-1.0) == 1.0
    assert ts.multiplier_at(0.0) == 1.0
    assert ts.multiplier_at(599.9) == 1.0
    assert ts.multiplier_at(600.0) == 1.5     # new value holds from its start
    assert ts.multiplier_at(1199.0) == 1.5
    assert ts.multiplier_at(1200.0) == 0.8
    assert ts.multiplier_at(1e9) == 0.8
    assert ts.max_multiplier() == 1.5
    assert ts.change_times() == [600.0, 1200.0]


def test_traffic_defaults_and_validation():
    empty = TrafficState([])
    assert empty.multiplier_at(12345.0) == 1.0
    assert empty.max_multiplier() == 1.0
    assert empty.change_times() == []
    # max never drops under the implicit pre-schedule value of 1.0
    assert TrafficState([(0.0, 0.5)]).max_multiplier() == 1.0
    with pytest.raises(ValueError):
        TrafficState([(0.0, 1.0), (0.0, 1.2)])
    with pytest.raises(ValueError):
        TrafficState([(0.0, 0.0)])
    with pytest.raises(ValueError):
        TrafficState([(0.0, 2.5)])


def test_traffic_walk_is_seeded_and_clamped():
    sched = [(0.0, 1.0), (3600.0, 1.8)]
    a = TrafficState.build(sched, walk_seed=9, walk_step_s=600.0,
                           walk_sigma=0.4, horizon_s=7200.0)
    b = TrafficState.build(sched, walk_seed=9, walk_step_s=600.0,
                           walk_sigma=0.4, horizon_s=7200.0)
    assert a.entries == b.entries
    assert len(a.entries) >= 13
    for t, m in a.entries:
        assert 0.0 < m <= 2.0
    c = TrafficState.build(sched, walk_seed=10, walk_step_s=600.0,
                           walk_sigma=0.4, horizon_s=7200.0)
    assert a.entries != c.entries
    plain = TrafficState.build(sched, walk_seed=None)
    assert plain.entries == TrafficState(sched).entries


def test_route_same_node_is_empty():
    net = grid_network(3, 3)
    r = route_astar(net, 4, 4, 0.0)
    assert r == Route((4,), (), (), 0.0, 0.0)


def test_route_across_grid():
    net = grid_network(3, 3)
    r = route_astar(net, 0, 8, 0.0)
    assert r is not None
    assert r.nodes[0] == 0 and r.nodes[-1] == 8
    assert len(r.nodes) == 5                # four 400 m hops
    assert r.total_time_s == 160.0          # 40 s per hop at 10 m/s
    assert r.total_length_m == 1600.0
    assert sum(r.hop_times_s) == r.total_time_s
    assert travel_time_s(net, 0, 8, 0.0) == 160.0


def test_route_respects_multiplier_at_query_time():
    net = grid_network(3, 3)
    ts = TrafficState([(100.0, 0.5)])
    assert travel_time_s(net, 0, 8, 99.0, ts) == 160.0
    assert travel_time_s(net, 0, 8, 100.0, ts) == 320.0


def test_route_unreachable_and_unknown():
    nodes = {0: GeoPoint(0.0, 0.0), 1: GeoPoint(0.0, 0.001)}
    net = RoadNetwork(nodes, [(0, 1, 200.0, 10.0)], speed_limit_mps=10.0)
    assert route_astar(net, 0, 1, 0.0) is not None
    assert route_astar(net, 1, 0, 0.0) is None
    assert travel_time_s(net, 1, 0, 0.0) is None
    with pytest.raises(KeyError):
        route_astar(net, 7, 0, 0.0)
    with pytest.raises(KeyError):
        route_astar(net, 0, 7, 0.0)


def test_route_tie_breaks_to_lower_node_id():
    # all nodes co-located: the heuristic is zero and both two-hop paths
    # cost exactly 2 s, so the expansion order decides the winner
    p = GeoPoint(0.0, 0.0)
    nodes = {0: p, 1: p, 2: p, 3: p}
    edges = [(0, 1, 10.0, 10.0), (0, 2, 10.0, 10.0),
             (1, 3, 10.0, 10.0), (2, 3, 10.0, 10.0)]
    net = RoadNetwork(nodes, edges, speed_limit_mps=10.0)
    r = route_astar(net, 0, 3, 0.0)
    assert r.nodes == (0, 1, 3)


def test_route_node_at_elapsed():
    net = grid_network(3, 3)
    r = route_astar(net, 0, 8, 0.0)
    assert r.node_at_elapsed(-5.0) == 0
    assert r.node_at_elapsed(0.0) == 0
    assert r.node_at_elapsed(39.9) == 0
    assert r.node_at_elapsed(40.0) == r.nodes[1]
    assert r.node_at_elapsed(159.9) == r.nodes[3]
    assert r.node_at_elapsed(160.0) == 8
    assert r.node_at_elapsed(1e6) == 8


def test_route_matches_dijkstra_exactly():
    rng = random.Random(1203)
    for trial in range(40):
        net = random_dyadic_network(rng, rng.randrange(2, 41),
                                    extra_edges=rng.randrange(0, 60))
        mult = rng.choice(DYADIC_MULTIPLIERS)
        traffic = TrafficState([(0.0, mult)])
        src = rng.randrange(len(net.nodes))
        oracle = dijkstra_times(net, src, mult)
        for dst in rng.sample(sorted(net.nodes), min(6, len(net.nodes))):
            r = route_astar(net, src, dst, 0.0, traffic)
            assert r is not None, f"trial {trial}: {src}->{dst} unreachable"
            assert r.total_time_s == oracle[dst], f"trial {trial}: {src}->{dst}"
            # the reported hops must be real edges joined end to end
            assert r.nodes[0] == src and r.nodes[-1] == dst
            for a, b, length in zip(r.nodes, r.nodes[1:], r.hop_lengths_m):
                assert any(v == b and el == length for v, el, _ in net.adj[a])


def test_eta_table_matches_point_queries():
    rng = random.Random(555)
    for trial in range(15):
        net = random_dyadic_network(rng, rng.randrange(2, 31),
                                    extra_edges=rng.randrange(0, 40))
        mult = rng.choice(DYADIC_MULTIPLIERS)
        traffic = TrafficState([(0.0, mult)])
        dst = rng.randrange(len(net.nodes))
        table = eta_table(net, dst, 0.0, traffic)
        for src in net.nodes:
            t = travel_time_s(net, src, dst, 0.0, traffic)
            if t is None:
                assert src not in table
            else:
                assert table[src] == t, f"trial {trial}: {src}->{dst}"


def test_eta_table_source_subset():
    net = grid_network(3, 3)
    full = eta_table(net, 4, 0.0)
    part = eta_table(net, 4, 0.0, sources={0, 8, 4})
    assert part == {0: full[0], 8: full[8], 4: 0.0}
    with pytest.raises(KeyError):
        eta_table(net, 99, 0.0)


def test_eta_table_skips_unreachable_sources():
    nodes = {0: GeoPoint(0.0, 0.0), 1: GeoPoint(0.0, 0.001), 2: GeoPoint(0.001, 0.0)}
    net = RoadNetwork(nodes, [(0, 1, 200.0, 10.0)], speed_limit_mps=10.0)
    assert eta_table(net, 1, 0.0) == {1: 0.0, 0: 20.0}
    assert eta_table(net, 1, 0.0, sources={0, 2}) == {0: 20.0}


def test_network_counts_components():
    assert grid_network(3, 3).scc_count == 1
    nodes = {i: GeoPoint(0.0, 0.001 * i) for i in range(4)}
    chain = [(i, i + 1, 200.0, 10.0) for i in range(3)]  # one-way: no way back
    assert RoadNetwork(nodes, chain, speed_limit_mps=10.0).scc_count == 4


def test_speeds_clamp_to_network_limit():
    nodes = {0: GeoPoint(0.0, 0.0), 1: GeoPoint(0.0, 0.001)}
    net = RoadNetwork(nodes, [(0, 1, 200.0, 100.0)], speed_limit_mps=10.0)
    assert travel_time_s(net, 0, 1, 0.0) == 20.0


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


def test_load_network_roundtrip(tmp_path):
    nodes = _write(tmp_path / "n.txt",
                   "# id lat lon\n\n0 0.0 0.0\n1 0.0 0.004\n2 0.004 0.0\n")
    edges = _write(tmp_path / "e.txt",
                   "# from to length speed\n0 1 500 10\n1 0 500 10\n0 2 500 25\n")
    net = load_network(nodes, edges, speed_limit_mps=12.0)
    assert sorted(net.nodes) == [0, 1, 2]
    assert travel_time_s(net, 0, 1, 0.0) == 50.0
    assert travel_time_s(net, 0, 2, 0.0) == pytest.approx(500.0 / 12.0)  # clamped
    assert net.scc_count == 2


@pytest.mark.parametrize("node_text,edge_text", [
    ("0 0.0\n", "0 0 100 10\n"),                              # short node line
    ("0 0.0 0.0\n0 1.0 1.0\n", ""),                           # duplicate id
    ("-1 0.0 0.0\n", ""),                                     # negative id
    ("0 abc 0.0\n", ""),                                      # bad float
    ("0 99.0 0.0\n", ""),                                     # latitude range
    ("0 0.0 0.0\n", "0 5 100 10\n"),                          # dangling edge
    ("0 0.0 0.0\n1 0.0 0.004\n", "0 1 100 10 9\n"),           # long edge line
    ("0 0.0 0.0\n1 0.0 0.004\n", "0 1 -5 10\n"),              # negative length
    ("0 0.0 0.0\n1 0.0 0.004\n", "0 1 100 0\n"),              # zero speed
    ("0 0.0 0.0\n1 0.0 0.004\n", "0 1 300 10\n"),             # shorter than crow
])
def test_load_network_rejects_bad_input(tmp_path, node_text, edge_text):
    nodes = _write(tmp_path / "n.txt", node_text)
    edges = _write(tmp_path / "e.txt", edge_text)
    with pytest.raises(NetworkLoadError):
        load_network(nodes, edges, speed_limit_mps=10.0)
