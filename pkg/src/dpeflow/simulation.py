"""Flow rollout under predictive routing.

Time is cut into rounds of length ``prediction_step``.  At the start of a
round every commodity may refresh its queue forecasts and the earliest
arrival labels derived from them; the resulting active edges stay fixed for
the round.  Within a round the flow evolves exactly: sub-phases advance from
one known rate change to the next, and on each sub-phase the node inflow of
every commodity is split equally over its active out-edges.

Sub-phase boundaries never overrun the shortest transit time, so every rate
change that could affect a decision is already materialized when it is
needed; no discretization error enters below the round level.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

from .flow_state import FlowOverTime
from .network import Commodity, Network, Scenario, block_inflow
from .predictors import (
    PredictorModeError,
    QueueHistory,
    build_predictor,
    exit_time_fn,
)
from .pwl import integrate, linear_combination
from .routing import LabelSet, compute_labels

_RATE_EPS = 1e-12


class StrandedFlowError(Exception):
    """Raised when flow sits at a node with no active edge to leave by."""


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    edge: int | None = None
    commodity: int | None = None
    detail: str = ""


@dataclass
class RoundRecord:
    """Active-edge queries of one round, kept for post-hoc equilibrium audits."""

    index: int
    time: float
    active_queries: dict[tuple[int, str], tuple[int, ...]] = field(
        default_factory=dict)


@dataclass
class RunResult:
    scenario: Scenario
    state: FlowOverTime
    rounds: list[RoundRecord]
    events: list[SimEvent]


@dataclass(frozen=True)
class CommodityMetrics:
    commodity: int
    predictor: str
    total_tt: float
    avg_tt: float
    inflow_mass: float
    outflow_mass: float


@dataclass(frozen=True)
class MetricsReport:
    horizon: float
    rows: tuple[CommodityMetrics, ...]

    @property
    def total_tt(self) -> float:
        return sum(r.total_tt for r in self.rows)

    @property
    def avg_tt(self) -> float:
        mass = sum(r.inflow_mass for r in self.rows)
        return self.total_tt / mass if mass > 0 else 0.0


def run(scenario: Scenario, *, realized_state: FlowOverTime | None = None,
        record_rounds: bool = True) -> RunResult:
    """Roll the scenario forward to its horizon and return the full record.

    ``realized_state`` feeds the perfect predictor for post-hoc best-response
    runs; without it, a scenario using the perfect predictor is refused.
    """
    net = scenario.network
    comms = scenario.commodities
    for c in comms:
        if c.predictor_spec.get("kind") == "perfect" and realized_state is None:
            raise PredictorModeError(
                f"commodity {c.id} uses the perfect predictor, which needs a "
                "realized flow; run another predictor first")
    predictors = [build_predictor(c.predictor_spec, scenario.predictor_params,
                                  base_dir=scenario.base_dir,
                                  final_state=realized_state)
                  for c in comms]

    state = FlowOverTime(net, len(comms))
    events: list[SimEvent] = []
    rounds: list[RoundRecord] = []
    prev_active: dict[tuple[int, str], tuple[int, ...]] = {}

    eps = scenario.prediction_step
    horizon = scenario.horizon
    tau_min = net.min_transit_time
    profile_marks = sorted({t for c in comms for t in c.inflow.times})

    n_rounds = int(math.ceil(horizon / eps - 1e-9))
    for k in range(n_rounds):
        round_start = k * eps
        round_end = min((k + 1) * eps, horizon)
        record = RoundRecord(k, round_start)
        history = QueueHistory(state, round_start)
        label_cache: dict[int, LabelSet] = {}
        exit_cache: dict[str, dict] = {}

        def labels_for(i: int) -> LabelSet:
            ls = label_cache.get(i)
            if ls is None:
                spec_key = json.dumps(comms[i].predictor_spec, sort_keys=True)
                exit_fns = exit_cache.get(spec_key)
                if exit_fns is None:
                    pred = predictors[i]
                    exit_fns = {
                        e.id: exit_time_fn(pred.predict(history, e.id),
                                           e.transit_time, e.capacity)
                        for e in net.edges}
                    exit_cache[spec_key] = exit_fns
                ls = compute_labels(net, comms[i].sink, exit_fns,
                                    scenario.active_tolerance)
                label_cache[i] = ls
            return ls

        t = round_start
        while t < round_end - 1e-12:
            b = min(round_end, t + tau_min)
            nxt = state.next_rate_change(t)
            if nxt is not None:
                b = min(b, nxt)
            j = bisect_right(profile_marks, t + 1e-12)
            if j < len(profile_marks):
                b = min(b, profile_marks[j])

            for i, c in enumerate(comms):
                for v, rate in _node_inflows(state, net, c, i, t).items():
                    if v == c.sink or rate <= _RATE_EPS:
                        continue
                    key = (i, v)
                    if key in record.active_queries:
                        active_ids = record.active_queries[key]
                    else:
                        active = labels_for(i).active_edges(v, round_start)
                        active_ids = tuple(e.id for e in active)
                        record.active_queries[key] = active_ids
                        old = prev_active.get(key)
                        if old is not None and old != active_ids:
                            events.append(SimEvent(
                                round_start, "route_change", None, i,
                                f"{v}: {list(old)}->{list(active_ids)}"))
                    if not active_ids:
                        raise StrandedFlowError(
                            f"commodity {c.id} has inflow {rate:g} at {v!r} "
                            f"at time {t:g} but no active edge")
                    share = rate / len(active_ids)
                    for eid in active_ids:
                        state.assign_inflow(i, eid, share, t, b)

            for ev in state.advance(b):
                events.append(SimEvent(ev.time, ev.kind, ev.edge,
                                       ev.commodity, ev.detail))
            t = b

        prev_active.update(record.active_queries)
        if record_rounds:
            rounds.append(record)

    if state.built_until < horizon - 1e-12:
        for ev in state.advance(horizon):
            events.append(SimEvent(ev.time, ev.kind, ev.edge,
                                   ev.commodity, ev.detail))
    events.sort(key=lambda e: (e.time, e.kind, e.edge if e.edge is not None
                               else -1, e.commodity if e.commodity is not None
                               else -1))
    return RunResult(scenario, state, rounds, events)


def _node_inflows(state, net, commodity, i, t):
    """Per-node inflow rates of one commodity at time ``t``."""
    rates: dict[str, float] = {}
    u = commodity.inflow(t)
    if u > _RATE_EPS:
        rates[commodity.source] = u
    for e in net.edges:
        r = state.outflow_rate_at(i, e.id, t)
        if r > _RATE_EPS:
            rates[e.head] = rates.get(e.head, 0.0) + r
    return rates


# -------------------------------------------------------------------- metrics


def compute_metrics(result: RunResult) -> MetricsReport:
    """Total and average travel time per commodity.

    Travel time spent in the network is the area between the cumulative
    network inflow and the cumulative sink arrivals up to the horizon; mass
    still in transit at the horizon is charged for its time so far.
    """
    scenario = result.scenario
    net = scenario.network
    horizon = scenario.horizon
    rows = []
    for i, c in enumerate(scenario.commodities):
        arrived = [result.state.outflow_fn(i, e.id).cumulative()
                   for e in net.in_edges[c.sink]]
        entered = c.inflow.cumulative()
        in_transit = linear_combination([entered] + arrived,
                                        [1.0] + [-1.0] * len(arrived))
        total = integrate(in_transit, 0.0, horizon)
        mass_in = entered(horizon)
        mass_out = sum(f(horizon) for f in arrived)
        rows.append(CommodityMetrics(
            commodity=c.id,
            predictor=c.predictor_spec.get("kind", "?"),
            total_tt=total,
            avg_tt=total / mass_in if mass_in > 0 else 0.0,
            inflow_mass=mass_in,
            outflow_mass=mass_out,
        ))
    return MetricsReport(horizon, tuple(rows))


# --------------------------------------------------------------------- audits


def audit_dpe(result: RunResult, *, max_rounds: int | None = None) -> int:
    """Re-derive every recorded routing decision from the finished flow.

    Predictors only read queues up to the prediction time, so rebuilding the
    forecast from the final state must reproduce the live decision exactly.
    Returns the number of verified queries; raises on any mismatch.
    """
    scenario = result.scenario
    net = scenario.network
    comms = scenario.commodities
    predictors = [build_predictor(c.predictor_spec, scenario.predictor_params,
                                  base_dir=scenario.base_dir,
                                  final_state=result.state)
                  for c in comms]
    checked = 0
    for record in result.rounds[:max_rounds]:
        history = QueueHistory(result.state, record.time)
        by_commodity: dict[int, LabelSet] = {}
        for (i, v), live_ids in sorted(record.active_queries.items()):
            ls = by_commodity.get(i)
            if ls is None:
                exit_fns = {
                    e.id: exit_time_fn(predictors[i].predict(history, e.id),
                                       e.transit_time, e.capacity)
                    for e in net.edges}
                ls = compute_labels(net, comms[i].sink, exit_fns,
                                    scenario.active_tolerance)
                by_commodity[i] = ls
            replay_ids = tuple(e.id for e in ls.active_edges(v, record.time))
            if replay_ids != live_ids:
                raise AssertionError(
                    f"round {record.index} commodity {i} node {v!r}: live "
                    f"active set {live_ids} vs replayed {replay_ids}")
            checked += 1
    return checked


def audit_ide(result: RunResult, tol: float = 1e-9) -> int:
    """Check rounds against instantaneous shortest paths.

    Under the constant predictor every decision must match a static shortest
    path on edge costs transit_time + queue(now)/capacity.  Compares the
    recorded active sets against a scalar Bellman-Ford run per round.
    Returns the number of verified queries.
    """
    scenario = result.scenario
    for c in scenario.commodities:
        if c.predictor_spec.get("kind") != "constant":
            raise ValueError("instantaneous audit requires the constant "
                             f"predictor; commodity {c.id} uses "
                             f"{c.predictor_spec.get('kind')!r}")
    net = scenario.network
    state = result.state
    checked = 0
    for record in result.rounds:
        costs = {e.id: e.transit_time + state.queue_at(e.id, record.time)
                 / e.capacity for e in net.edges}
        dist_cache: dict[str, dict[str, float]] = {}
        for (i, v), live_ids in sorted(record.active_queries.items()):
            sink = scenario.commodities[i].sink
            dist = dist_cache.get(sink)
            if dist is None:
                dist = _scalar_distances(net, sink, costs)
                dist_cache[sink] = dist
            want = tuple(
                e.id for e in net.out_edges[v]
                if e.head in dist and costs[e.id] + dist[e.head]
                <= dist[v] + scenario.active_tolerance)
            if want != live_ids:
                raise AssertionError(
                    f"round {record.index} commodity {i} node {v!r}: active "
                    f"set {live_ids} vs instantaneous shortest {want}")
            for eid in live_ids:
                e = net.edges[eid]
                gap = costs[eid] + dist[e.head] - dist[v]
                if abs(gap) > tol + scenario.active_tolerance:
                    raise AssertionError(
                        f"round {record.index} edge {eid}: active edge is "
                        f"{gap:g} above the shortest path")
            checked += 1
    return checked


def _scalar_distances(net: Network, sink: str, costs: dict[int, float]):
    dist = {sink: 0.0}
    for _ in range(len(net.nodes) - 1):
        changed = False
        for e in net.edges:
            d = dist.get(e.head)
            if d is None:
                continue
            nd = costs[e.id] + d
            if nd < dist.get(e.tail, math.inf) - 1e-15:
                dist[e.tail] = nd
                changed = True
        if not changed:
            break
    return dist


# ------------------------------------------------------------ counterexample


def counterexample_scenario(epsilon: float = 0.25,
                            horizon: float = 50.0) -> Scenario:
    """Two parallel routes whose discontinuous forecasts never settle.

    The short route is predicted by a threshold rule that jumps as soon as
    its queue reaches 1.  All inflow then piles onto whichever route looks
    cheaper, pushing the short queue back and forth across the threshold
    forever; the routing decision flips every round from time 1 on.
    """
    net = Network(["s", "t"], [("s", "t", 1.0, 1.0), ("s", "t", 2.0, 2.0)])
    commodity = Commodity(
        id=0, source="s", sink="t",
        inflow=block_inflow(2.0, horizon),
        predictor_spec={"kind": "threshold", "threshold": 1.0,
                        "high_value": 2.0})
    return Scenario(network=net, commodities=(commodity,),
                    prediction_step=epsilon, horizon=horizon)


def run_counterexample_demo(epsilon: float = 0.25, horizon: float = 50.0):
    """Run the oscillation example and summarize how unstable it is."""
    scenario = counterexample_scenario(epsilon, horizon)
    result = run(scenario)
    flips = sum(1 for e in result.events
                if e.kind == "route_change" and e.detail.startswith("s:"))
    trace = [(r.time, result.state.queue_at(0, r.time)) for r in result.rounds]
    return {
        "result": result,
        "flips": flips,
        "rounds": len(result.rounds),
        "short_queue_at_1": result.state.queue_at(0, 1.0),
        "queue_trace": trace,
    }


# ---------------------------------------------------------------------- sweep


def sweep_variant(scenario: Scenario, total_inflow: float,
                  predictor_kind: str) -> Scenario:
    """The same scenario with inflow rescaled and one predictor for all."""
    comms = []
    for c in scenario.commodities:
        support_end = c.inflow.times[-1]
        comms.append(Commodity(
            id=c.id, source=c.source, sink=c.sink,
            inflow=block_inflow(total_inflow / len(scenario.commodities),
                                support_end),
            predictor_spec={"kind": predictor_kind}))
    return Scenario(network=scenario.network, commodities=tuple(comms),
                    prediction_step=scenario.prediction_step,
                    horizon=scenario.horizon,
                    predictor_params=scenario.predictor_params,
                    active_tolerance=scenario.active_tolerance,
                    seed=scenario.seed, base_dir=scenario.base_dir)


def _sweep_task(args):
    scenario, total, kind = args
    report = compute_metrics(run(sweep_variant(scenario, total, kind),
                                 record_rounds=False))
    return total, kind, report.avg_tt


def run_sweep(scenario: Scenario, totals, predictor_kinds, jobs: int = 1):
    """Average travel time over an inflow grid, one curve per predictor.

    Returns rows (total_inflow, predictor, avg_tt) in grid-major order.
    """
    tasks = [(scenario, total, kind)
             for total in totals for kind in predictor_kinds]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_task, tasks))
    return [_sweep_task(t) for t in tasks]
