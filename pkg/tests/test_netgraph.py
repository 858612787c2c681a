from collections import deque

import numpy as np
import pytest
from scipy import stats

from qnc_lab.netgraph import (DeploymentError, Edge, NetworkGraph,
                              draw_edge_pairs, generate_network,
                              read_edge_list, shortest_routes, write_edge_list)


def bfs_hops(g, gateway):
    """Independent reversed-BFS distance oracle."""
    rev = {v: [] for v in range(1, g.n + 1)}
    for e in g.edges:
        rev[e.head].append(e.tail)
    dist = {gateway: 0}
    dq = deque([gateway])
    while dq:
        v = dq.popleft()
        for u in rev[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                dq.append(u)
    return dist


def test_two_node_single_edge_split():
    hits = 0
    draws = 4000
    for seed in range(draws):
        pair = draw_edge_pairs(2, 1, seed)[0]
        assert tuple(pair) in ((1, 2), (2, 1))
        hits += pair[0] == 1
    # 3-sigma binomial band around 1/2
    assert abs(hits / draws - 0.5) < 3 * 0.5 / np.sqrt(draws)


def test_fixed_pair_frequency():
    # pooled raw draws stand in for many deployments
    total = 4_000_000
    count = 0
    rng = np.random.default_rng(5)
    for _ in range(4):
        pairs = draw_edge_pairs(100, total // 4, rng)
        count += int(np.sum((pairs[:, 0] == 7) & (pairs[:, 1] == 42)))
    p = 1.0 / 9900.0
    se = np.sqrt(p * (1 - p) / total)
    assert abs(count / total - p) < 3 * se


def test_edge_pair_chi_square_uniform():
    n = 30
    cells = n * (n - 1)
    draws = max(100_000, 12 * cells)
    pairs = draw_edge_pairs(n, draws, 11)
    idx = (pairs[:, 0] - 1) * n + (pairs[:, 1] - 1)
    counts = np.bincount(idx, minlength=n * n).reshape(n, n)
    assert np.all(np.diag(counts) == 0)
    observed = counts[~np.eye(n, dtype=bool)]
    _, pval = stats.chisquare(observed)
    assert pval >= 0.01


def test_mean_in_degree_identity():
    for num_edges in (400, 800):
        g = generate_network(100, num_edges, seed=3)
        in_total = sum(len(g.in_edges(v)) for v in range(1, 101))
        out_total = sum(len(g.out_edges(v)) for v in range(1, 101))
        assert in_total == num_edges
        assert out_total == num_edges
        assert in_total / g.n == num_edges / 100


def test_in_out_edges_small_graph():
    e1 = Edge(id=1, tail=1, head=2)
    g = NetworkGraph(n=3, edges=(e1,), gateway=2)
    assert g.in_edges(2) == (e1,)
    assert g.out_edges(1) == (e1,)
    assert g.in_edges(1) == ()
    assert g.in_edges(3) == ()


def test_no_self_loops():
    with pytest.raises(ValueError):
        Edge(id=1, tail=4, head=4)
    pairs = draw_edge_pairs(10, 20000, 0)
    assert np.all(pairs[:, 0] != pairs[:, 1])


def test_line_graph_routes():
    edges = (Edge(id=1, tail=1, head=2), Edge(id=2, tail=2, head=3))
    g = NetworkGraph(n=3, edges=edges, gateway=3)
    table = shortest_routes(g)
    assert table[3].hops == 0 and table[3].edges == ()
    assert table[2].hops == 1
    assert table[1].hops == 2
    assert [e.id for e in table[1].edges] == [1, 2]


def test_direct_edge_beats_detour():
    edges = (
        Edge(id=1, tail=1, head=5),            # direct to gateway
        Edge(id=2, tail=1, head=2),
        Edge(id=3, tail=2, head=3),
        Edge(id=4, tail=3, head=4),
        Edge(id=5, tail=4, head=5),
    )
    g = NetworkGraph(n=5, edges=edges, gateway=5)
    table = shortest_routes(g)
    assert table[1].hops == 1
    assert [e.id for e in table[1].edges] == [1]


def test_routes_match_bfs_oracle():
    for seed in range(8):
        g = generate_network(20, 60, seed=seed)
        oracle = bfs_hops(g, g.gateway)
        for v in range(1, 21):
            assert g.hops(v) == oracle[v]
            # hop consistency along the selected route
            route = g.route_table[v]
            if route.edges:
                assert g.hops(route.edges[0].head) == g.hops(v) - 1


def test_tie_break_by_edge_id():
    edges = (
        Edge(id=1, tail=1, head=2),
        Edge(id=2, tail=1, head=3),
        Edge(id=3, tail=2, head=4),
        Edge(id=4, tail=3, head=4),
    )
    g = NetworkGraph(n=4, edges=edges, gateway=4)
    table = shortest_routes(g)
    assert [e.id for e in table[1].edges] == [1, 3]


def test_unreachable_node_signals():
    edges = (Edge(id=1, tail=1, head=2),)
    g = NetworkGraph(n=3, edges=edges, gateway=2)
    with pytest.raises(DeploymentError):
        shortest_routes(g)


def test_generation_deterministic():
    a = generate_network(50, 200, seed=9)
    b = generate_network(50, 200, seed=9)
    assert a.gateway == b.gateway
    assert a.edges == b.edges
    assert a.route_table == b.route_table


def test_retry_budget_exhaustion():
    with pytest.raises(DeploymentError):
        generate_network(50, 1, seed=0)


def test_all_nodes_reach_gateway():
    g = generate_network(60, 200, seed=21)
    for v in range(1, 61):
        assert g.hops(v) < 61


def test_edge_list_round_trip(tmp_path):
    g = generate_network(25, 80, capacity=2, seed=4)
    path = tmp_path / "net.txt"
    write_edge_list(g, path)
    first = path.read_text().splitlines()[0]
    assert first == f"25 80 {g.gateway}"
    g2 = read_edge_list(path)
    assert g2.edges == g.edges
    assert g2.gateway == g.gateway
    assert g2.route_table == g.route_table
