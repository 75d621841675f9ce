"""Earliest-arrival labels under predicted exit times.

Given one predicted exit-time function per edge, the label of a node maps a
departure time to the earliest predicted arrival at the sink.  Labels satisfy
the recursion l_v = min over out-edges e = (v, w) of l_w composed with the
exit time of e, with the sink fixed at the identity.

Labels are computed by backward label correcting over the function space:
whenever a node's label improves, its in-neighbors are recomputed.  Predicted
exit times always exceed the departure time by at least the transit time, so
optimal arrivals are attained by simple paths and every label stabilizes
after at most one pass per node; a node popped more often than that signals a
malformed exit-time function and aborts.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .network import Network
from .pwl import (
    PiecewiseLinearFn,
    compose_monotone,
    identity_fn,
    pointwise_min,
    prune,
)

# labels closer than this are treated as unchanged during correction
CHANGE_TOL = 1e-11


class ConvergenceError(Exception):
    """Raised when labels keep improving past the simple-path bound."""


@dataclass(frozen=True)
class LabelSet:
    """Earliest-arrival labels toward one sink, plus the exit times used."""

    network: Network
    sink: str
    labels: dict[str, PiecewiseLinearFn]
    exit_fns: dict[int, PiecewiseLinearFn]
    active_tolerance: float = 1e-9

    def earliest_arrival(self, node: str, t: float) -> float:
        """Predicted arrival at the sink leaving ``node`` at ``t``.

        Returns infinity when the sink is not reachable from ``node``.
        """
        label = self.labels.get(node)
        return label(t) if label is not None else math.inf

    def active_edges(self, node: str, t: float, tol: float | None = None):
        """Out-edges whose predicted arrival matches the node label at ``t``."""
        label = self.labels.get(node)
        if label is None:
            return []
        if tol is None:
            tol = self.active_tolerance
        best = label(t)
        active = []
        for e in self.network.out_edges[node]:
            head = self.labels.get(e.head)
            if head is None:
                continue
            if head(self.exit_fns[e.id](t)) <= best + tol:
                active.append(e)
        return active


def compute_labels(network: Network, sink: str,
                   exit_fns: dict[int, PiecewiseLinearFn],
                   active_tolerance: float = 1e-9) -> LabelSet:
    """Backward label correction from ``sink`` under the given exit times."""
    if sink not in network.out_edges:
        raise ValueError(f"unknown sink: {sink!r}")
    labels: dict[str, PiecewiseLinearFn] = {sink: identity_fn()}
    pending = deque([sink])
    queued = {sink}
    pops = {v: 0 for v in network.nodes}
    pop_cap = len(network.nodes) + 2

    while pending:
        w = pending.popleft()
        queued.discard(w)
        pops[w] += 1
        if pops[w] > pop_cap:
            raise ConvergenceError(
                f"label of {w!r} keeps improving; "
                "an exit-time function must be rewinding time")
        for e in network.in_edges[w]:
            v = e.tail
            if v == sink:
                continue
            new = _best_label(network, v, labels, exit_fns)
            old = labels.get(v)
            if old is None or _labels_differ(old, new, CHANGE_TOL):
                labels[v] = new
                if v not in queued:
                    pending.append(v)
                    queued.add(v)

    return LabelSet(network, sink, labels, dict(exit_fns), active_tolerance)


def _best_label(network, v, labels, exit_fns):
    candidates = []
    for e in network.out_edges[v]:
        head = labels.get(e.head)
        if head is None:
            continue
        candidates.append(prune(compose_monotone(head, exit_fns[e.id]), 0.0))
    return prune(pointwise_min(candidates), 0.0)


def _labels_differ(a: PiecewiseLinearFn, b: PiecewiseLinearFn,
                   tol: float) -> bool:
    # PL functions agreeing on both kink sets and boundary slopes agree
    # everywhere, so this comparison is exact up to the tolerance.
    if abs(a.slope_before_first - b.slope_before_first) > tol:
        return True
    if abs(a.slope_after_last - b.slope_after_last) > tol:
        return True
    for t in a.times:
        if abs(a(t) - b(t)) > tol:
            return True
    for t in b.times:
        if abs(a(t) - b(t)) > tol:
            return True
    return False
