
import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdaas.core import (
    NetworkParseError,
    NetworkValidationError,
    ProviderConfig,
    Request,
    Segment,
    TimeWindow,
    load_network,
    save_network,
    shortest_path_table,
    validate_request,
)
from sdaas.harness import generate_scenario, random_geometric_network

from conftest import line_network, make_request


def test_euclidean_fill(tmp_path):
    (tmp_path / "nodes.csv").write_text("id,x,y,pads\n0,0,0,1\n1,3000,0,2\n")
    (tmp_path / "edges.csv").write_text("from,to\n0,1\n")
    net = load_network(tmp_path)
    assert net.edge_dist(0, 1) == 3000.0
    assert net.nodes[1].pads == 2


def test_sectioned_file_with_comments(tmp_path):
    p = tmp_path / "net.csv"
    p.write_text("# skyway\nid,x,y,pads\n0,0,0,1\n1,0,400,0\n\nfrom,to,dist\n"
                 "# explicit distance wins\n0,1,500\n")
    net = load_network(p)
    assert net.edge_dist(1, 0) == 500.0


def test_dangling_endpoint(tmp_path):
    (tmp_path / "nodes.csv").write_text("id,x,y,pads\n0,0,0,1\n1,3000,0,2\n")
    (tmp_path / "edges.csv").write_text("from,to,dist\n0,99,10\n")
    with pytest.raises(NetworkValidationError, match="unknown node"):
        load_network(tmp_path)


@pytest.mark.parametrize("nodes,edges,err", [
    ("0,0,0,1\n1,1,1,1\n2,5,5,1\n", "0,1,1\n", NetworkValidationError),  # disconnected
    ("0,0,0,1\n0,1,1,1\n", "0,1,1\n", NetworkValidationError),  # duplicate id
    ("0,0,0,1\n1,x,1,1\n", "0,1,1\n", NetworkParseError),
    ("0,0,0,1\n1,1,1\n", "0,1,1\n", NetworkParseError),
    ("0,0,0,1\n1,1,1,-1\n", "0,1,1\n", NetworkValidationError),
])
def test_malformed_networks(tmp_path, nodes, edges, err):
    (tmp_path / "nodes.csv").write_text("id,x,y,pads\n" + nodes)
    (tmp_path / "edges.csv").write_text("from,to,dist\n" + edges)
    with pytest.raises(err):
        load_network(tmp_path)


def test_segment_invariants():
    with pytest.raises(NetworkValidationError):
        Segment(1, 1, 5.0)
    with pytest.raises(NetworkValidationError):
        Segment(1, 2, 0.0)


@pytest.mark.parametrize("as_dir", [False, True])
def test_save_load_roundtrip(tmp_path, as_dir):
    net = generate_scenario(n_nodes=30, n_requests=1, seed=3).network
    target = tmp_path / ("d" if as_dir else "net.csv")
    if as_dir:
        target.mkdir()
    save_network(net, target)
    assert load_network(target) == net


def test_generated_129_nodes_connected():
    net = generate_scenario(seed=0).network
    assert len(net) == 129
    g = nx.Graph([(s.u, s.v) for s in net.segments])
    assert g.number_of_nodes() == 129 and nx.is_connected(g)


def test_shortest_path_identity_and_line():
    net = line_network([100.0, 200.0])
    assert shortest_path_table(net, 0)[0] == 0
    assert shortest_path_table(net, 2)[0] == 300.0
    assert net.shortest_path(0, 2) == [0, 1, 2]


def _brute_force_distances(net, target):
    g = nx.Graph()
    g.add_weighted_edges_from((s.u, s.v, s.dist) for s in net.segments)
    out = {target: 0.0}
    for u in net.nodes:
        if u == target:
            continue
        out[u] = min(sum(g[a][b]["weight"] for a, b in zip(p, p[1:]))
                     for p in nx.all_simple_paths(g, u, target))
    return out


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_shortest_path_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    net = random_geometric_network(12, rng, side=3000.0, radius=1300.0)
    for target in (0, 5):
        table = shortest_path_table(net, target)
        brute = _brute_force_distances(net, target)
        assert table.keys() == brute.keys()
        for u in table:
            assert table[u] == pytest.approx(brute[u], rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_triangle_property(seed):
    rng = np.random.default_rng(seed)
    net = random_geometric_network(20, rng, side=4000.0, radius=1500.0)
    target = int(rng.integers(20))
    table = shortest_path_table(net, target)
    for s in net.segments:
        assert abs(table[s.u] - table[s.v]) <= s.dist + 1e-9


def test_validate_request():
    net = line_network([100.0, 200.0])
    cfg = ProviderConfig(fleet_size=30, source=0)
    assert validate_request(make_request(dest=2, packages=(1.0,) * 3), net, cfg) == []
    six = validate_request(make_request(dest=2, packages=(1.0,) * 6), net, cfg)
    assert any(v.startswith("swarm size") for v in six)
    heavy = validate_request(make_request(dest=2, packages=(1.5,)), net, cfg)
    assert any(v.startswith("package weight") for v in heavy)
    assert any(v.startswith("destination") for v in
               validate_request(make_request(dest=0), net, cfg))
    assert any(v.startswith("destination") for v in
               validate_request(make_request(dest=7), net, cfg))
    late = make_request(dest=2, st=28800.0, et=32400.0)
    assert any(v.startswith("window") for v in validate_request(late, net, cfg))


def test_type_invariants():
    with pytest.raises(ValueError):
        TimeWindow(10.0, 10.0)
    with pytest.raises(ValueError):
        Request(0, 1, (), TimeWindow(0, 1))
    with pytest.raises(ValueError):
        ProviderConfig(fleet_size=3, source=0, max_swarm_size=5)
    assert TimeWindow(0, 3600).width == 3600
