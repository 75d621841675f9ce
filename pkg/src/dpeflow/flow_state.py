"""Evolving multi-commodity flow state on a network.

Each edge is a point queue behind a server of fixed capacity: flow entering
at time t leaves the edge at t + transit_time + waiting.  The server drains
the queue at capacity whenever it is non-empty; otherwise the outflow equals
the inflow capped at capacity.  Commodities share each edge under FIFO, so an
exit interval carries the commodity mix of the matching entry interval.

Inflow rates are assigned piecewise-constant and append-only; queues are the
induced piecewise-linear trajectories.  Outflows are derived eagerly while
advancing, by walking entry intervals and mapping them through the edge's
exit-time function via a running cursor (flat stretches of the exit-time map
carry no entering mass, so the earlier entries simply keep discharging).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

from .network import Network
from .pwl import PiecewiseLinearFn, RightConstantFn

_T_EPS = 1e-12   # time comparison slack for breakpoint bookkeeping
_Q_EPS = 1e-12   # queue positivity threshold


@dataclass(frozen=True)
class OutflowEvent:
    """A change of some edge's outflow composition, or a queue depletion."""

    time: float
    edge: int
    kind: str                    # "outflow_change" | "queue_depleted"
    commodity: int | None = None
    detail: str = ""


class _EdgeState:
    __slots__ = (
        "edge", "in_times", "in_rates", "assigned_until",
        "out_times", "out_rates", "agg_times", "agg_rates",
        "q_times", "q_values", "q_slope_last", "exit_cursor", "preload",
    )

    def __init__(self, edge, n_commodities: int, preload: float):
        self.edge = edge
        self.in_times = [[0.0] for _ in range(n_commodities)]
        self.in_rates = [[0.0] for _ in range(n_commodities)]
        self.assigned_until = [0.0] * n_commodities
        self.out_times = [[0.0] for _ in range(n_commodities)]
        self.out_rates = [[0.0] for _ in range(n_commodities)]
        self.agg_times = [0.0]
        self.agg_rates = [0.0]
        self.q_times = [0.0]
        self.q_values = [float(preload)]
        self.q_slope_last = None
        self.exit_cursor = edge.transit_time + preload / edge.capacity
        self.preload = float(preload)


class FlowOverTime:
    """Append-only record of all edge in/outflow rates and queues.

    ``assign_inflow`` declares a commodity's edge inflow on [a, b); rates left
    unassigned fall back to zero once the assignment window expires.
    ``advance`` extends queues and outflows up to a new built horizon.
    Initial queues (``initial_queues``) are treated as unattributed preloaded
    mass: it occupies the queue and the aggregate outflow, but belongs to no
    commodity.
    """

    def __init__(self, network: Network, n_commodities: int,
                 initial_queues: dict[int, float] | None = None):
        self.network = network
        self.n_commodities = n_commodities
        self.built_until = 0.0
        initial_queues = initial_queues or {}
        self._edges = [
            _EdgeState(e, n_commodities, initial_queues.get(e.id, 0.0))
            for e in network.edges
        ]
        self._pending_events: list[OutflowEvent] = []
        for es in self._edges:
            if es.preload > 0.0:
                # preloaded mass discharges first, at capacity
                tau, cap = es.edge.transit_time, es.edge.capacity
                self._agg_append(es, tau, cap)
                self._agg_append(es, es.exit_cursor, 0.0)

    # ------------------------------------------------------------ assignment

    def assign_inflow(self, commodity: int, edge: int, rate: float,
                      start: float, end: float):
        """Set the commodity's inflow rate on [start, end).

        ``start`` must not precede the built horizon or any earlier
        assignment on this edge; re-assigning at exactly the last assignment
        time overwrites it.
        """
        if not (rate >= 0.0) or not math.isfinite(rate):
            raise ValueError(f"inflow rate must be finite and >= 0, got {rate}")
        if end <= start:
            raise ValueError(f"empty assignment interval [{start}, {end})")
        if start < self.built_until - 1e-9:
            raise ValueError(
                f"assignment at {start} before built horizon {self.built_until}")
        es = self._edges[edge]
        times, rates = es.in_times[commodity], es.in_rates[commodity]
        if start < times[-1] - _T_EPS:
            raise ValueError(
                f"assignment at {start} before existing breakpoint {times[-1]}")
        until = es.assigned_until[commodity]
        if start > until + _T_EPS and rates[-1] != 0.0 and times[-1] <= until + _T_EPS:
            self._rc_append(times, rates, until, 0.0)
        self._rc_append(times, rates, start, rate)
        es.assigned_until[commodity] = max(until, end)

    @staticmethod
    def _rc_append(times, rates, t, value):
        if abs(t - times[-1]) <= _T_EPS:
            if value != rates[-1]:
                if len(rates) >= 2 and rates[-2] == value:
                    times.pop()
                    rates.pop()
                else:
                    rates[-1] = value
            return
        if value != rates[-1]:
            times.append(t)
            rates.append(value)

    # --------------------------------------------------------------- advance

    def advance(self, until: float) -> list[OutflowEvent]:
        """Extend all queues and outflows to the new built horizon.

        Returns the outflow-change and queue-depletion events discovered along
        the way (their times may lie beyond ``until``: outflows are knowable
        up to each edge's exit time of the built horizon).
        """
        if until < self.built_until - _T_EPS:
            raise ValueError(f"cannot advance backwards to {until}")
        events, self._pending_events = self._pending_events, []
        if until <= self.built_until + _T_EPS:
            self.built_until = max(self.built_until, until)
            return events
        t0, t1 = self.built_until, until
        for es in self._edges:
            self._advance_edge(es, t0, t1, events)
        self.built_until = until
        return events

    def _advance_edge(self, es, t0, t1, events):
        tau = es.edge.transit_time
        cap = es.edge.capacity
        n = self.n_commodities

        for i in range(n):
            until = es.assigned_until[i]
            if until < t1 - _T_EPS and es.in_rates[i][-1] != 0.0 \
                    and es.in_times[i][-1] <= until + _T_EPS:
                self._rc_append(es.in_times[i], es.in_rates[i], until, 0.0)

        marks = {t0, t1}
        for i in range(n):
            ts = es.in_times[i]
            j = bisect_right(ts, t0)
            while j < len(ts) and ts[j] < t1 - _T_EPS:
                marks.add(ts[j])
                j += 1

        q0 = self._queue_value(es, t0)
        for p, p2 in _pairwise(sorted(marks)):
            rates = [es.in_rates[i][max(bisect_right(es.in_times[i], p) - 1, 0)]
                     for i in range(n)]
            r = sum(rates)
            while p < p2 - _T_EPS:
                if q0 > _Q_EPS:
                    slope = r - cap
                    pe = p2
                    depleted = False
                    if slope < -_Q_EPS:
                        t_zero = p + q0 / -slope
                        if t_zero <= p2 - _T_EPS:
                            pe, depleted = t_zero, True
                        elif t_zero <= p2 + _T_EPS:
                            pe, depleted = p2, True
                    q1 = 0.0 if depleted else q0 + slope * (pe - p)
                    self._q_append(es, pe, q1, slope)
                    if r > _Q_EPS:
                        exit_end = pe + tau + q1 / cap
                        self._emit(es, [cap * ri / r for ri in rates], cap, exit_end, events)
                    if depleted:
                        events.append(OutflowEvent(
                            time=pe, edge=es.edge.id, kind="queue_depleted"))
                    q0 = q1
                    p = pe
                else:
                    q0 = 0.0
                    if r > cap + _Q_EPS:
                        slope = r - cap
                        q1 = slope * (p2 - p)
                        self._q_append(es, p2, q1, slope)
                        exit_end = p2 + tau + q1 / cap
                        self._emit(es, [cap * ri / r for ri in rates], cap, exit_end, events)
                        q0 = q1
                    else:
                        self._q_append(es, p2, 0.0, 0.0)
                        self._emit(es, rates, min(r, cap), p2 + tau, events)
                    p = p2

    def _emit(self, es, comm_rates, agg_rate, exit_end, events):
        start = es.exit_cursor
        if exit_end <= start + _T_EPS:
            return
        for i, rate in enumerate(comm_rates):
            times, rates = es.out_times[i], es.out_rates[i]
            before = rates[-1]
            self._rc_append(times, rates, start, rate)
            if rate != before:
                events.append(OutflowEvent(
                    time=start, edge=es.edge.id, kind="outflow_change",
                    commodity=i, detail=f"{before:g}->{rate:g}"))
        self._agg_append(es, start, agg_rate, events)
        es.exit_cursor = exit_end

    def _agg_append(self, es, t, rate, events=None):
        before = es.agg_rates[-1]
        self._rc_append(es.agg_times, es.agg_rates, t, rate)
        if rate != before:
            sink = self._pending_events if events is None else events
            sink.append(OutflowEvent(
                time=t, edge=es.edge.id, kind="outflow_change",
                detail=f"{before:g}->{rate:g}"))

    def _q_append(self, es, t, v, slope):
        v = max(v, 0.0)
        if t <= es.q_times[-1] + _T_EPS:
            return
        if es.q_slope_last is not None and abs(es.q_slope_last - slope) <= 1e-12 \
                and len(es.q_times) >= 2:
            es.q_times[-1] = t
            es.q_values[-1] = v
        else:
            es.q_times.append(t)
            es.q_values.append(v)
        es.q_slope_last = slope

    def _queue_value(self, es, t):
        qt, qv = es.q_times, es.q_values
        i = bisect_right(qt, t) - 1
        if i < 0:
            return qv[0]
        if i + 1 >= len(qt):
            return qv[-1]
        w = (t - qt[i]) / (qt[i + 1] - qt[i])
        return qv[i] * (1.0 - w) + qv[i + 1] * w

    # ----------------------------------------------------------------- access

    def queue_at(self, edge: int, t: float) -> float:
        return self._queue_value(self._edges[edge], t)

    def exit_time(self, edge: int, t: float) -> float:
        e = self._edges[edge].edge
        return t + e.transit_time + self.queue_at(edge, t) / e.capacity

    def inflow_rate_at(self, commodity: int, edge: int, t: float) -> float:
        es = self._edges[edge]
        ts = es.in_times[commodity]
        return es.in_rates[commodity][max(bisect_right(ts, t) - 1, 0)]

    def outflow_rate_at(self, commodity: int, edge: int, t: float) -> float:
        es = self._edges[edge]
        ts = es.out_times[commodity]
        return es.out_rates[commodity][max(bisect_right(ts, t) - 1, 0)]

    def inflow_fn(self, commodity: int, edge: int) -> RightConstantFn:
        es = self._edges[edge]
        return RightConstantFn(tuple(es.in_times[commodity]),
                               tuple(es.in_rates[commodity]))

    def outflow_fn(self, commodity: int, edge: int) -> RightConstantFn:
        es = self._edges[edge]
        return RightConstantFn(tuple(es.out_times[commodity]),
                               tuple(es.out_rates[commodity]))

    def aggregate_outflow_fn(self, edge: int) -> RightConstantFn:
        es = self._edges[edge]
        return RightConstantFn(tuple(es.agg_times), tuple(es.agg_rates))

    def queue_fn(self, edge: int) -> PiecewiseLinearFn:
        es = self._edges[edge]
        times, values = es.q_times, es.q_values
        if times[-1] < self.built_until - _T_EPS:
            times = times + [self.built_until]
            values = values + [values[-1]]
        return PiecewiseLinearFn(tuple(times), tuple(values), 0.0, 0.0)

    def inflow_pieces(self, commodity: int, edge: int):
        """Constant-rate pieces (t0, t1, rate) covering [0, built_until)."""
        es = self._edges[edge]
        ts, rs = es.in_times[commodity], es.in_rates[commodity]
        out = []
        for j, rate in enumerate(rs):
            end = ts[j + 1] if j + 1 < len(ts) else self.built_until
            end = min(end, self.built_until)
            if end > ts[j]:
                out.append((ts[j], end, rate))
        return out

    def next_outflow_event(self, after: float) -> OutflowEvent | None:
        """Earliest aggregated outflow rate change strictly after ``after``
        among all edges, as far as outflows have been built."""
        best = None
        for es in self._edges:
            j = bisect_right(es.agg_times, after + _T_EPS)
            if j < len(es.agg_times):
                t = es.agg_times[j]
                if best is None or t < best.time:
                    before, now = es.agg_rates[j - 1], es.agg_rates[j]
                    best = OutflowEvent(time=t, edge=es.edge.id,
                                        kind="outflow_change",
                                        detail=f"{before:g}->{now:g}")
        return best

    def next_rate_change(self, after: float) -> float | None:
        """Earliest known outflow breakpoint strictly after ``after`` on any
        edge, aggregate or per commodity.  Commodity shares can shift while
        the aggregate stays flat, so both kinds of lists are scanned."""
        best = None
        for es in self._edges:
            for times in es.out_times + [es.agg_times]:
                j = bisect_right(times, after + _T_EPS)
                if j < len(times) and (best is None or times[j] < best):
                    best = times[j]
        return best

    # ------------------------------------------------------------------ audit

    def audit_flow(self, tol: float = 1e-6):
        """Self-check of the queueing invariants from first principles.

        Recomputes, per edge, the queue from cumulative in/outflows (rather
        than from the incremental dynamics), checks non-negativity, the
        capacity bound, and the per-commodity FIFO identity
        cumulative_in(t) == cumulative_out(exit_time(t)).  Returns the worst
        relative deviation per invariant; raises AssertionError on breach.
        """
        worst = {"queue_identity": 0.0, "queue_nonneg": 0.0,
                 "capacity": 0.0, "fifo": 0.0}
        for es in self._edges:
            e = es.edge
            cum_in = [self.inflow_fn(i, e.id).cumulative() for i in range(self.n_commodities)]
            cum_out = [self.outflow_fn(i, e.id).cumulative() for i in range(self.n_commodities)]
            scale = max(1.0, max(es.q_values, default=0.0))
            for t, q in zip(es.q_times, es.q_values):
                if t > self.built_until:
                    continue
                worst["queue_nonneg"] = max(worst["queue_nonneg"], -q)
                total_in = sum(F(t) for F in cum_in)
                shifted = t + e.transit_time
                total_out = sum(F(shifted) for F in cum_out)
                drained = min(max(shifted - e.transit_time, 0.0) * e.capacity, es.preload)
                dev = abs(q - (es.preload + total_in - total_out - drained))
                worst["queue_identity"] = max(worst["queue_identity"], dev / scale)
                exit_t = t + e.transit_time + q / e.capacity
                for i in range(self.n_commodities):
                    dev = abs(cum_in[i](t) - cum_out[i](exit_t))
                    worst["fifo"] = max(worst["fifo"], dev / max(1.0, cum_in[i](t)))
            for rate in es.agg_rates:
                worst["capacity"] = max(worst["capacity"], rate - e.capacity)
        for name, dev in worst.items():
            if dev > tol:
                raise AssertionError(f"flow invariant {name} violated by {dev}")
        return worst


def _pairwise(seq):
    return zip(seq, seq[1:])
