"""Algebra over piecewise-defined scalar functions of time.

Two representations cover everything the flow model needs: continuous
piecewise-linear functions (queues, cumulative flows, arrival labels) and
right-continuous step functions (flow rates).  Piecewise-linear functions are
total on the real line, extrapolating by their boundary slopes; step functions
have an explicit domain start and extend their last value forever.

Instances are immutable and safe to share between threads; every operation
returns a new object.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

EPS = 1e-9
"""Global comparison tolerance: breakpoint dedup, crossing detection."""

_COLLINEAR_TOL = 1e-12


class DomainError(ValueError):
    """A function was evaluated or integrated before its domain start."""


class NotMonotoneError(ValueError):
    """An operation required a non-decreasing function."""


def _check_breakpoints(times, values):
    if len(times) == 0:
        raise ValueError("at least one breakpoint is required")
    if len(times) != len(values):
        raise ValueError("times and values must have equal length")
    for a, b in zip(times, times[1:]):
        if not b > a:
            raise ValueError(f"breakpoint times must be strictly increasing, got {a} then {b}")
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite breakpoint value {v!r}")


@dataclass(frozen=True)
class RightConstantFn:
    """Right-continuous step function.

    The value at t is the value of the last breakpoint <= t; after the final
    breakpoint the last value extends forever.  Evaluation before
    ``domain_start`` raises :class:`DomainError`.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]
    domain_start: float | None = None

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        _check_breakpoints(times, values)
        start = self.domain_start
        start = times[0] if start is None else float(start)
        if start > times[0]:
            raise ValueError("domain_start must not lie after the first breakpoint")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "domain_start", start)

    def __call__(self, t: float) -> float:
        if t < self.domain_start - EPS:
            raise DomainError(f"evaluation at {t} before domain start {self.domain_start}")
        i = bisect_right(self.times, t) - 1
        return self.values[max(i, 0)]

    def integral(self, a: float, b: float) -> float:
        """Exact integral over [a, b]."""
        if b < a:
            raise ValueError("integration bounds must satisfy a <= b")
        if a < self.domain_start - EPS:
            raise DomainError(f"integration from {a} before domain start {self.domain_start}")
        total = 0.0
        lo = a
        i = max(bisect_right(self.times, a) - 1, 0)
        while lo < b:
            hi = self.times[i + 1] if i + 1 < len(self.times) else math.inf
            hi = min(hi, b)
            if hi > lo:
                total += self.values[i] * (hi - lo)
            lo = hi
            i += 1
        return total

    def cumulative(self, origin: float | None = None) -> "PiecewiseLinearFn":
        """The running integral from ``origin`` (default: domain start) as a
        continuous piecewise-linear function."""
        origin = self.domain_start if origin is None else float(origin)
        if origin < self.domain_start - EPS:
            raise DomainError(f"cumulative origin {origin} before domain start")
        times = [origin]
        values = [0.0]
        for t, rate_prev in self._pieces_after(origin):
            if t > times[-1] + 0.0:
                values.append(values[-1] + rate_prev * (t - times[-1]))
                times.append(t)
        return PiecewiseLinearFn(
            tuple(times), tuple(values),
            slope_before_first=0.0,
            slope_after_last=self.values[-1],
        )

    def _pieces_after(self, origin):
        # yields (next_time, rate_on_preceding_span) for spans after origin
        i = max(bisect_right(self.times, origin) - 1, 0)
        for j in range(i + 1, len(self.times)):
            yield self.times[j], self.values[j - 1]


@dataclass(frozen=True)
class PiecewiseLinearFn:
    """Continuous piecewise-linear function, total on the real line.

    Between breakpoints the value is interpolated; before the first and after
    the last breakpoint it extrapolates with the stated slopes.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]
    slope_before_first: float = 0.0
    slope_after_last: float = 0.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        _check_breakpoints(times, values)
        for s in (self.slope_before_first, self.slope_after_last):
            if not math.isfinite(s):
                raise ValueError(f"non-finite extrapolation slope {s!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "slope_before_first", float(self.slope_before_first))
        object.__setattr__(self, "slope_after_last", float(self.slope_after_last))

    def __call__(self, t: float) -> float:
        times, values = self.times, self.values
        if t <= times[0]:
            return values[0] + self.slope_before_first * (t - times[0])
        if t >= times[-1]:
            return values[-1] + self.slope_after_last * (t - times[-1])
        i = bisect_right(times, t) - 1
        span = times[i + 1] - times[i]
        w = (t - times[i]) / span
        return values[i] * (1.0 - w) + values[i + 1] * w

    def slope_at(self, t: float) -> float:
        """Slope of the piece containing t (right-slope at breakpoints)."""
        times = self.times
        if t < times[0]:
            return self.slope_before_first
        if t >= times[-1]:
            return self.slope_after_last
        i = bisect_right(times, t) - 1
        return (self.values[i + 1] - self.values[i]) / (times[i + 1] - times[i])

    def left_slope(self, t: float) -> float:
        """Slope of the piece ending at t (left-derivative)."""
        times = self.times
        if t <= times[0]:
            return self.slope_before_first
        if t > times[-1]:
            return self.slope_after_last
        i = bisect_right(times, t - 0.0) - 1
        if t == times[i]:
            i -= 1
        if i < 0:
            return self.slope_before_first
        if i + 1 >= len(times):
            return self.slope_after_last
        return (self.values[i + 1] - self.values[i]) / (times[i + 1] - times[i])

    def integral(self, a: float, b: float) -> float:
        """Exact integral over [a, b] (trapezoid on each affine piece)."""
        if b < a:
            raise ValueError("integration bounds must satisfy a <= b")
        cuts = [a] + [t for t in self.times if a < t < b] + [b]
        total = 0.0
        for lo, hi in zip(cuts, cuts[1:]):
            total += 0.5 * (self(lo) + self(hi)) * (hi - lo)
        return total

    def is_nondecreasing(self, tol: float = EPS) -> bool:
        if self.slope_before_first < -tol or self.slope_after_last < -tol:
            return False
        for (t0, v0), (t1, v1) in zip(zip(self.times, self.values),
                                      zip(self.times[1:], self.values[1:])):
            if v1 - v0 < -tol * max(1.0, abs(v0), t1 - t0):
                return False
        return True


def identity_fn(anchor: float = 0.0) -> PiecewiseLinearFn:
    """The function t -> t."""
    return PiecewiseLinearFn((anchor,), (anchor,), 1.0, 1.0)


def constant_fn(value: float, anchor: float = 0.0) -> PiecewiseLinearFn:
    return PiecewiseLinearFn((anchor,), (value,), 0.0, 0.0)


def integrate(f: RightConstantFn | PiecewiseLinearFn, a: float, b: float) -> float:
    """Exact integral of f over [a, b]."""
    return f.integral(a, b)


def linear_combination(
    fns: list[PiecewiseLinearFn], coeffs: list[float]
) -> PiecewiseLinearFn:
    """Exact pointwise sum(c * f) of piecewise-linear functions."""
    if not fns or len(fns) != len(coeffs):
        raise ValueError("need matching non-empty function and coefficient lists")
    grid = _merged_times([f.times for f in fns])
    values = tuple(sum(c * f(t) for f, c in zip(fns, coeffs)) for t in grid)
    before = sum(c * f.slope_before_first for f, c in zip(fns, coeffs))
    after = sum(c * f.slope_after_last for f, c in zip(fns, coeffs))
    return prune(PiecewiseLinearFn(tuple(grid), values, before, after))


def rc_combine(
    fns: list[RightConstantFn], coeffs: list[float]
) -> RightConstantFn:
    """Pointwise sum(c * f) of step functions; domain starts at the latest
    input domain start."""
    if not fns or len(fns) != len(coeffs):
        raise ValueError("need matching non-empty function and coefficient lists")
    start = max(f.domain_start for f in fns)
    grid = [t for t in _merged_times([f.times for f in fns]) if t >= start]
    if not grid or grid[0] > start:
        grid.insert(0, start)
    times, values = [], []
    for t in grid:
        v = sum(c * f(t) for f, c in zip(fns, coeffs))
        if values and v == values[-1]:
            continue
        times.append(t)
        values.append(v)
    return RightConstantFn(tuple(times), tuple(values), domain_start=start)


def _merged_times(time_lists) -> list[float]:
    merged = sorted(set(t for ts in time_lists for t in ts))
    out = []
    for t in merged:
        if not out or t - out[-1] > EPS:
            out.append(t)
    return out


def compose_monotone(
    outer: PiecewiseLinearFn, inner: PiecewiseLinearFn
) -> PiecewiseLinearFn:
    """Exact composition outer(inner(t)) for non-decreasing inner.

    Breakpoints of the result are the inner breakpoints plus the preimages of
    the outer breakpoints under inner.  Raises :class:`NotMonotoneError` when
    inner decreases anywhere.
    """
    if not inner.is_nondecreasing():
        raise NotMonotoneError("compose_monotone requires a non-decreasing inner function")

    cands = set(inner.times)
    for y in outer.times:
        cands.update(_preimages(inner, y))
    grid = []
    for t in sorted(cands):
        if not grid or t - grid[-1] > EPS:
            grid.append(t)

    values = [outer(inner(t)) for t in grid]
    # beyond the grid both factors sit on their boundary pieces (every outer
    # kink preimage is a grid candidate), so the chain rule is exact; a flat
    # inner tail zeroes the product whatever outer does
    slope_before = outer.slope_before_first * inner.slope_before_first
    slope_after = outer.slope_after_last * inner.slope_after_last
    fn = PiecewiseLinearFn(tuple(grid), tuple(values), slope_before, slope_after)
    return prune(fn)


def _preimages(inner: PiecewiseLinearFn, y: float) -> list[float]:
    """Times t with inner(t) == y, one per strictly-increasing affine piece."""
    out = []
    times, values = inner.times, inner.values
    s = inner.slope_before_first
    if s > EPS and y <= values[0]:
        out.append(times[0] - (values[0] - y) / s)
    for i in range(len(times) - 1):
        v0, v1 = values[i], values[i + 1]
        if v0 - EPS <= y <= v1 + EPS and v1 > v0:
            w = (y - v0) / (v1 - v0)
            w = min(max(w, 0.0), 1.0)
            out.append(times[i] + w * (times[i + 1] - times[i]))
    s = inner.slope_after_last
    if s > EPS and y >= values[-1]:
        out.append(times[-1] + (y - values[-1]) / s)
    return out


def _argmin_line(anchors, slopes, order):
    best = 0
    for j in range(1, len(anchors)):
        if (anchors[j], slopes[j], order[j]) < (anchors[best], slopes[best], order[best]):
            best = j
    return best


def _envelope_forward(anchors, slopes, order, x0, x_end):
    """Vertices of the lower envelope of lines value_i(x) = anchors[i] +
    slopes[i]*(x - x0) on [x0, x_end); x_end may be +inf.

    Returns (vertices, final_slope); vertices start at x0.
    """
    cur = _argmin_line(anchors, slopes, order)
    verts = [(x0, anchors[cur])]
    x = x0
    while True:
        best_t = None
        best_j = None
        v_cur = anchors[cur] + slopes[cur] * (x - x0)
        # slopes closer than this are parallel for our purposes: a crossing
        # they produce sits at value_gap / slope_gap, far outside any horizon
        par = 1e-12 * max(1.0, abs(slopes[cur]))
        for j in range(len(anchors)):
            if j == cur or slopes[j] >= slopes[cur] - par:
                continue
            v_j = anchors[j] + slopes[j] * (x - x0)
            t = x + max(v_j - v_cur, 0.0) / (slopes[cur] - slopes[j])
            if t >= x_end - EPS:
                continue
            if (best_t is None or t < best_t - 1e-15
                    or (abs(t - best_t) <= 1e-15
                        and (slopes[j], order[j]) < (slopes[best_j], order[best_j]))):
                best_t, best_j = t, j
        if best_t is None:
            return verts, slopes[cur]
        if best_t > x + EPS:
            verts.append((best_t, anchors[cur] + slopes[cur] * (best_t - x0)))
        cur = best_j
        x = max(best_t, x)


def pointwise_min(fns: list[PiecewiseLinearFn]) -> PiecewiseLinearFn:
    """Exact lower envelope of piecewise-linear functions.

    New breakpoints appear at segment crossings; ties between coincident
    segments keep the earlier-listed function's segment.
    """
    if not fns:
        raise ValueError("pointwise_min of an empty list (encode unreachable explicitly)")
    if len(fns) == 1:
        return fns[0]
    grid = _merged_times([f.times for f in fns])
    order = list(range(len(fns)))
    pts: list[tuple[float, float]] = []

    # left tail: mirror the axis and walk forward from the first grid point
    g0 = grid[0]
    anchors = [f(g0) for f in fns]
    mirrored, mslope = _envelope_forward(
        anchors, [-f.slope_before_first for f in fns], order, -g0, math.inf)
    slope_before = -mslope
    for x, v in reversed(mirrored[1:]):
        pts.append((-x, v))

    for a, b in zip(grid, grid[1:]):
        anchors = [f(a) for f in fns]
        slopes = [(f(b) - f(a)) / (b - a) for f in fns]
        verts, _ = _envelope_forward(anchors, slopes, order, a, b)
        pts.extend(verts)

    g1 = grid[-1]
    anchors = [f(g1) for f in fns]
    verts, slope_after = _envelope_forward(
        anchors, [f.slope_after_last for f in fns], order, g1, math.inf)
    pts.extend(verts)

    times, values = _clean_points(pts)
    fn = PiecewiseLinearFn(times, values, slope_before, slope_after)
    return _drop_redundant_ends(prune(fn))


def _clean_points(pts):
    times, values = [], []
    for t, v in pts:
        if times and t - times[-1] <= EPS:
            continue
        times.append(t)
        values.append(v)
    return tuple(times), tuple(values)


def _drop_redundant_ends(f: PiecewiseLinearFn) -> PiecewiseLinearFn:
    """Drop boundary breakpoints that merely restate the extrapolation slope."""
    times, values = list(f.times), list(f.values)
    while len(times) >= 2:
        s = (values[1] - values[0]) / (times[1] - times[0])
        if abs(s - f.slope_before_first) <= _COLLINEAR_TOL * max(1.0, abs(s)):
            times.pop(0)
            values.pop(0)
        else:
            break
    while len(times) >= 2:
        s = (values[-1] - values[-2]) / (times[-1] - times[-2])
        if abs(s - f.slope_after_last) <= _COLLINEAR_TOL * max(1.0, abs(s)):
            times.pop()
            values.pop()
        else:
            break
    if len(times) == len(f.times):
        return f
    return PiecewiseLinearFn(tuple(times), tuple(values),
                             f.slope_before_first, f.slope_after_last)


def prune(f: PiecewiseLinearFn, tol: float = 0.0) -> PiecewiseLinearFn:
    """Remove breakpoints while deviating at most ``tol`` in uniform norm.

    With ``tol == 0`` only (numerically) collinear interior breakpoints are
    removed; first and last breakpoints always survive.
    """
    if tol < 0:
        raise ValueError("prune tolerance must be non-negative")
    pts = list(zip(f.times, f.values))
    if tol > 0 and len(pts) > 2:
        pts = _greedy_corridor(pts, tol)
    pts = _drop_collinear(pts)
    if len(pts) == len(f.times):
        return f
    times, values = zip(*pts)
    return PiecewiseLinearFn(times, values, f.slope_before_first, f.slope_after_last)


def _drop_collinear(pts):
    out = [pts[0]]
    for i in range(1, len(pts) - 1):
        t0, v0 = out[-1]
        t1, v1 = pts[i]
        t2, v2 = pts[i + 1]
        interp = v0 + (v2 - v0) * (t1 - t0) / (t2 - t0)
        if abs(v1 - interp) <= _COLLINEAR_TOL * max(1.0, abs(v1)):
            continue
        out.append(pts[i])
    if len(pts) > 1:
        out.append(pts[-1])
    return out


def _greedy_corridor(pts, tol):
    """Imai-Iri style greedy simplification keeping a subset of the input
    vertices; every dropped vertex stays within tol of the kept chord."""
    keep = [0]
    a = 0
    lo, hi = -math.inf, math.inf
    j = 1
    last_ok = 1
    while j < len(pts):
        ta, va = pts[a]
        tj, vj = pts[j]
        s = (vj - va) / (tj - ta)
        if lo - 1e-15 <= s <= hi + 1e-15:
            lo = max(lo, (vj - tol - va) / (tj - ta))
            hi = min(hi, (vj + tol - va) / (tj - ta))
            last_ok = j
            j += 1
        else:
            keep.append(last_ok)
            a = last_ok
            lo, hi = -math.inf, math.inf
            j = a + 1
            last_ok = j
    if keep[-1] != len(pts) - 1:
        keep.append(len(pts) - 1)
    return [pts[i] for i in keep]


def restrict_from(f: PiecewiseLinearFn, start: float) -> PiecewiseLinearFn:
    """The same function re-anchored so its first breakpoint is at ``start``;
    values before start are forgotten (flat extrapolation backwards)."""
    times = [start] + [t for t in f.times if t > start + EPS]
    values = [f(start)] + [f(t) for t in f.times if t > start + EPS]
    after = f.slope_after_last if times[-1] >= f.times[-1] else f.slope_at(times[-1])
    return PiecewiseLinearFn(tuple(times), tuple(values), 0.0, after)
