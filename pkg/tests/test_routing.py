import math

import numpy as np
import pytest

from dpeflow.network import Network
from dpeflow.predictors import fifo_fix
from dpeflow.pwl import NotMonotoneError, PiecewiseLinearFn, identity_fn
from dpeflow.routing import ConvergenceError, LabelSet, compute_labels


def path_arrival_oracle(network, sink, exit_fns, node, t):
    """Earliest arrival by brute-force enumeration of simple paths."""
    best = math.inf

    def dfs(v, time, visited):
        nonlocal best
        if v == sink:
            best = min(best, time)
            return
        for e in network.out_edges[v]:
            if e.head in visited:
                continue
            dfs(e.head, exit_fns[e.id](time), visited | {e.head})

    dfs(node, t, frozenset([node]))
    return best


def shift(c):
    return PiecewiseLinearFn((0.0,), (c,), 1.0, 1.0)


def random_exit_fn(rng, t_range=(0.0, 20.0)):
    """Random valid exit-time function: t + tau + q(t)/cap with q >= 0."""
    tau = float(rng.uniform(0.5, 3.0))
    cap = float(rng.uniform(0.5, 2.0))
    n = int(rng.integers(1, 5))
    ts = np.sort(rng.uniform(*t_range, n))
    ts = np.unique(np.round(ts, 3))
    qs = rng.uniform(0.0, 5.0, len(ts))
    pts, _ = fifo_fix(list(zip(ts.tolist(), qs.tolist())), cap)
    values = tuple(t + tau + q / cap for t, q in pts)
    return PiecewiseLinearFn(tuple(t for t, _ in pts), values, 1.0, 1.0)


def random_instance(rng, n_nodes):
    nodes = [f"n{i}" for i in range(n_nodes)]
    edges = []
    for i in range(n_nodes - 1):  # a spine keeps the sink reachable
        edges.append((nodes[i], nodes[i + 1], 1.0, 1.0))
    extra = int(rng.integers(2, 2 * n_nodes))
    for _ in range(extra):
        a, b = rng.integers(0, n_nodes, 2)
        if a == b:
            continue
        edges.append((nodes[a], nodes[b], 1.0, 1.0))
    net = Network(nodes, edges)
    exit_fns = {e.id: random_exit_fn(rng) for e in net.edges}
    return net, exit_fns, nodes[-1]


# --------------------------------------------------------------------- labels


def test_line_graph_chains_exit_times():
    net = Network(["s", "a", "t"], [("s", "a", 1.0, 1.0), ("a", "t", 1.0, 1.0)])
    ls = compute_labels(net, "t", {0: shift(1.0), 1: shift(2.5)})
    assert ls.earliest_arrival("a", 4.0) == pytest.approx(6.5)
    assert ls.earliest_arrival("s", 0.0) == pytest.approx(3.5)
    assert ls.earliest_arrival("t", 7.0) == 7.0  # sink label is the identity


def test_min_envelope_switches_routes():
    # fast route builds a queue (slope 3 after t=2), slow route is flat +5
    net = Network(["s", "t"], [("s", "t", 1.0, 1.0), ("s", "t", 1.0, 1.0)])
    fast = PiecewiseLinearFn((2.0,), (3.0,), 1.0, 3.0)
    slow = shift(5.0)
    ls = compute_labels(net, "t", {0: fast, 1: slow})
    label = ls.labels["s"]
    assert label(0.0) == pytest.approx(1.0)
    assert label(3.0) == pytest.approx(6.0)
    assert label(4.0) == pytest.approx(9.0)   # crossing point
    assert label(5.0) == pytest.approx(10.0)  # slow route takes over
    assert label(10.0) == pytest.approx(15.0)


def test_unreachable_node_has_no_label():
    net = Network(["s", "t", "u"], [("s", "t", 1.0, 1.0), ("t", "u", 1.0, 1.0)])
    ls = compute_labels(net, "t", {0: shift(1.0), 1: shift(1.0)})
    assert "u" not in ls.labels
    assert ls.earliest_arrival("u", 0.0) == math.inf
    assert ls.active_edges("u", 0.0) == []


def test_cycle_through_sink_keeps_identity():
    net = Network(["s", "t"], [("s", "t", 1.0, 1.0), ("t", "s", 1.0, 1.0)])
    ls = compute_labels(net, "t", {0: shift(2.0), 1: shift(2.0)})
    assert ls.labels["t"].times == identity_fn().times
    assert ls.earliest_arrival("s", 1.0) == pytest.approx(3.0)


@pytest.mark.parametrize("seed", range(4))
def test_shift_network_labels_are_exact(seed):
    # uncongested case: labels must equal t + scalar shortest path to the
    # sink bit for bit, with no breakpoints invented by the envelope
    rng = np.random.default_rng(seed)
    net, _, sink = random_instance(rng, int(rng.integers(5, 12)))
    exit_fns = {e.id: shift(round(float(rng.uniform(0.5, 4.0)), 3))
                for e in net.edges}
    ls = compute_labels(net, sink, exit_fns)
    dist = {v: math.inf for v in net.nodes}
    dist[sink] = 0.0
    for _ in net.nodes:
        for e in net.edges:
            tau = exit_fns[e.id](0.0)
            if dist[e.head] + tau < dist[e.tail]:
                dist[e.tail] = dist[e.head] + tau
    for v in net.nodes:
        if math.isinf(dist[v]):
            assert math.isinf(ls.earliest_arrival(v, 3.0))
            continue
        fn = ls.labels[v]
        assert fn.slope_before_first == 1.0 and fn.slope_after_last == 1.0
        assert all(abs(t) < 1e6 for t in fn.times)
        for t in (0.0, 6.0, 13.7):
            assert ls.earliest_arrival(v, t) == t + dist[v]


@pytest.mark.parametrize("seed", range(6))
def test_labels_match_path_enumeration(seed):
    rng = np.random.default_rng(seed)
    net, exit_fns, sink = random_instance(rng, int(rng.integers(4, 9)))
    ls = compute_labels(net, sink, exit_fns)
    samples = rng.uniform(-2.0, 25.0, 100)
    for v in net.nodes:
        for t in samples:
            want = path_arrival_oracle(net, sink, exit_fns, v, float(t))
            got = ls.earliest_arrival(v, float(t))
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(want, abs=1e-7)


# --------------------------------------------------------------- active edges


def test_parallel_ties_are_both_active():
    net = Network(["s", "t"], [("s", "t", 1.0, 1.0), ("s", "t", 1.0, 1.0)])
    ls = compute_labels(net, "t", {0: shift(2.0), 1: shift(2.0)})
    assert [e.id for e in ls.active_edges("s", 0.0)] == [0, 1]


def test_slower_edge_is_inactive():
    net = Network(["s", "t"], [("s", "t", 1.0, 1.0), ("s", "t", 1.0, 1.0)])
    ls = compute_labels(net, "t", {0: shift(2.0), 1: shift(2.0 + 1e-6)})
    assert [e.id for e in ls.active_edges("s", 0.0)] == [0]
    # a looser tolerance admits it again
    assert len(ls.active_edges("s", 0.0, tol=1e-3)) == 2


def test_active_set_changes_with_time():
    net = Network(["s", "t"], [("s", "t", 1.0, 1.0), ("s", "t", 1.0, 1.0)])
    fast = PiecewiseLinearFn((2.0,), (3.0,), 1.0, 3.0)
    ls = compute_labels(net, "t", {0: fast, 1: shift(5.0)})
    assert [e.id for e in ls.active_edges("s", 0.0)] == [0]
    assert [e.id for e in ls.active_edges("s", 4.0)] == [0, 1]  # crossing
    assert [e.id for e in ls.active_edges("s", 6.0)] == [1]


# -------------------------------------------------------------------- failure


def test_time_rewinding_exit_fn_aborts():
    net = Network(["a", "b", "t"],
                  [("a", "b", 1.0, 1.0), ("b", "a", 1.0, 1.0),
                   ("b", "t", 1.0, 1.0)])
    rewind = PiecewiseLinearFn((0.0,), (-1.0,), 1.0, 1.0)
    with pytest.raises(ConvergenceError, match="rewinding"):
        compute_labels(net, "t", {0: rewind, 1: rewind, 2: shift(1.0)})


def test_decreasing_exit_fn_rejected():
    net = Network(["s", "t"], [("s", "t", 1.0, 1.0)])
    bad = PiecewiseLinearFn((0.0, 1.0), (5.0, 3.0), 1.0, 1.0)
    with pytest.raises(NotMonotoneError):
        compute_labels(net, "t", {0: bad})


def test_unknown_sink_rejected():
    net = Network(["s", "t"], [("s", "t", 1.0, 1.0)])
    compute_labels(net, "t", {0: shift(1.0)})  # known sink is fine
    with pytest.raises(ValueError, match="unknown sink"):
        compute_labels(net, "x", {0: shift(1.0)})
