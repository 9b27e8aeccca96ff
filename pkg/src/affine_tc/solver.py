"""Pathwise solvers for the multiparameter time-change system.

Given driver paths ``X^1..X^m`` (state-indexed, values in R^{m+n}) and ``Y``
(time-indexed), the branching block solves

    Z^j_t = z_j + sum_i X^{i,j}(C^i_t) + Y^j_t,    C^j_t = int_0^t Z^j_s ds,

for ``j <= m``.  The OU coordinates ``m+1..m+n`` are read off the same
formula and then corrected for the mean-reversion matrix ``beta`` (row
convention: ``Z^beta = Z + C^beta beta``).

Two solvers are provided: an event-driven exact solver for piecewise-constant
drivers (Lamperti flows between events) and the Euler scheme of span sigma.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .levy import DeterministicSpec, DriverPath, LevySpec, check_hypothesis_H, function_path, sample_path
from .streams import DRIVER, StreamKey


class ModelError(ValueError):
    """Model fails validation or hypothesis H."""


class InadmissibleStart(ValueError):
    """Lamperti flow started where the speed is negative."""


class BudgetExceeded(RuntimeError):
    """Event cascade exceeded the iteration budget; ``partial`` holds the trajectory so far."""

    def __init__(self, message: str, partial: "Trajectory"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True, eq=False)
class AffineModel:
    m: int
    n: int
    x_specs: tuple
    y_spec: LevySpec
    beta: np.ndarray = None
    z0: np.ndarray = None
    cap: float = 1e6

    def __post_init__(self):
        m, n = int(self.m), int(self.n)
        d = m + n
        if m < 0 or n < 0 or d == 0:
            raise ModelError(f"need m, n >= 0 with m + n > 0, got m={m}, n={n}")
        x_specs = tuple(self.x_specs)
        if len(x_specs) != m:
            raise ModelError(f"need {m} branching driver specs, got {len(x_specs)}")
        for i, s in enumerate(x_specs):
            if s.dim != d:
                raise ModelError(f"driver X^{i + 1} has dimension {s.dim}, expected {d}")
        if self.y_spec.dim != d:
            raise ModelError(f"immigration driver has dimension {self.y_spec.dim}, expected {d}")
        beta = np.zeros((n, n)) if self.beta is None else np.asarray(self.beta, dtype=float).reshape(n, n)
        z0 = np.zeros(d) if self.z0 is None else np.asarray(self.z0, dtype=float).reshape(-1)
        if z0.shape != (d,):
            raise ModelError(f"z0 must have length {d}")
        if np.any(z0[:m] < 0):
            raise ModelError("branching coordinates of z0 must be >= 0")
        if not self.cap > 0:
            raise ModelError("cap must be positive")
        for a in (beta, z0):
            a.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "x_specs", x_specs)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "cap", float(self.cap))

    @property
    def dim(self) -> int:
        return self.m + self.n

    def require_admissible(self):
        bad = check_hypothesis_H(self)
        if bad:
            raise ModelError("hypothesis H fails: " + "; ".join(bad))


@dataclass(frozen=True, eq=False)
class Drivers:
    """Driver paths of one realisation: ``x[i]`` is X^{i+1}, ``y`` is Y."""

    x: tuple
    y: DriverPath

    def with_x(self, i: int, path: DriverPath) -> "Drivers":
        x = list(self.x)
        x[i] = path
        return Drivers(tuple(x), self.y)


def sample_drivers(model: AffineModel, key: StreamKey, mesh: float, t_max: float,
                   state_horizon: float = 1.0) -> Drivers:
    """Sample all drivers of ``model``; driver ``i`` draws from ``key.child(i)``."""
    xs = []
    for i, spec in enumerate(model.x_specs):
        if isinstance(spec, DeterministicSpec):
            xs.append(function_path(spec, spec.dim, state_horizon, mesh))
        else:
            xs.append(sample_path(spec, state_horizon, mesh, key.child(i)))
    y = model.y_spec
    if isinstance(y, DeterministicSpec):
        yp = function_path(y, y.dim, t_max, mesh)
    else:
        yp = sample_path(y, t_max, mesh, key.child(model.m))
    return Drivers(tuple(xs), yp)


def path_key(seed: int, index: int) -> StreamKey:
    """Stream family of driver realisation ``index`` under ``seed``."""
    return StreamKey(int(seed), (DRIVER, int(index)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solved ``(Z, C)`` on a time grid.

    ``C`` has ``m + n`` columns; the OU columns hold ``C^beta``.  ``Z`` is the
    right-continuous state at each grid time (for the exact solver ``Z[k]`` is
    also the slope of ``C`` on ``[grid[k], grid[k+1])``).
    """

    m: int
    n: int
    grid: np.ndarray
    Z: np.ndarray
    C: np.ndarray
    exploded: bool = False
    tau_estimate: float = math.inf
    composed: np.ndarray = None
    clamp_events: np.ndarray = None
    drivers: Drivers = field(default=None, repr=False)
    z0: np.ndarray = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        d = self.m + self.n
        head = ["t"] + [f"Z{j + 1}" for j in range(d)] + [f"C{j + 1}" for j in range(self.m)] + ["exploded"]
        buf.write(",".join(head) + "\n")
        flag = "1" if self.exploded else "0"
        for k in range(self.grid.size):
            row = [self.grid[k], *self.Z[k], *self.C[k, :self.m]]
            buf.write(",".join(f"{v:.17g}" for v in row) + "," + flag + "\n")
        return buf.getvalue()

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(Z, C)`` at time ``t`` (C linear between grid points, Z right-continuous)."""
        if t < 0 or t > self.grid[-1]:
            raise ValueError(f"time {t} outside the trajectory")
        k = int(np.searchsorted(self.grid, t, side="right") - 1)
        C = np.array([np.interp(t, self.grid, self.C[:, j]) for j in range(self.C.shape[1])])
        return self.Z[k], C


def check_trajectory(traj: Trajectory, rtol: float = 1e-9) -> list[str]:
    """Violations of the trajectory invariants (empty if none)."""
    out = []
    m = traj.m
    C, Z, g = traj.C[:, :m], traj.Z, traj.grid
    if C.size == 0:
        return out
    scale = max(1.0, float(np.max(np.abs(C))))
    if np.any(C[0] != 0):
        out.append("C(0) != 0")
    if np.any(np.diff(C, axis=0) < -rtol * scale):
        out.append("C not nondecreasing")
    if np.any(Z[:, :m] < 0):
        out.append("negative branching coordinate")
    dt = np.diff(g)[:, None]
    dC = np.diff(C, axis=0)
    lo = np.minimum(Z[:-1, :m], Z[1:, :m]) * dt
    hi = np.maximum(Z[:-1, :m], Z[1:, :m]) * dt
    slack = rtol * scale
    if np.any(dC < lo - slack) or np.any(dC > hi + slack):
        out.append("C increment outside [min Z, max Z] * dt")
    return out


# ----------------------------------------------------------------------------
# Lamperti flows


@dataclass(frozen=True)
class LampertiResult:
    """Piecewise-linear solution of ``c' = f(c)``.

    ``times``/``c`` are the knots (breakpoint crossings and the end point);
    ``h[k]`` is the slope on ``[times[k], times[k+1])``.  ``status`` is one of
    ``"time"``, ``"absorbed"``, ``"cap"``.
    """

    times: np.ndarray
    c: np.ndarray
    h: np.ndarray
    absorbed: bool
    T: float
    status: str
    path: DriverPath

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.times, self.c)


def _flow(path: DriverPath, col: int, c0: float, level: float, duration: float,
          cap: float = math.inf, stop_cols=()):
    """Advance ``c' = X(c) + level`` from ``c0`` for ``duration``.

    Stops early on absorption (speed <= 0), on reaching ``cap`` or on
    reaching a breakpoint where any of ``stop_cols`` changes (the flow ends
    exactly on it).  Extends ``path`` on demand.  Returns
    ``(times, cs, status, path)`` with knots relative to the start time.
    """
    if c0 >= path.horizon:
        path = path.extended(2.0 * c0)
    times = [np.zeros(1)]
    cs = [np.array([c0])]
    t, c = 0.0, float(c0)
    k = int(path.index(c))
    batch = 64
    stop_cols = list(stop_cols)
    while True:
        bp = path.breakpoints
        vals = path.values[:, col]
        hi = min(k + 1 + batch, bp.size)
        ends = bp[k + 1:hi]
        open_end = False
        if ends.size == 0:
            if math.isinf(path.horizon):
                ends = np.array([math.inf])
                open_end = True
            else:
                path = path.extended(2.0 * max(path.horizon, float(bp[-1]), 1e-300))
                continue
        speeds = vals[k:k + ends.size] + level
        starts = np.concatenate([[c], ends[:-1]])
        seg_end = np.minimum(ends, cap)
        lengths = seg_end - starts
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(speeds > 0, lengths / np.where(speeds > 0, speeds, 1.0), math.inf)
        cum = t + np.cumsum(dt)
        if stop_cols and not open_end:
            block = path.values[k:k + ends.size + 1][:, stop_cols]
            stops = np.any(block[1:] != block[:-1], axis=1)
        else:
            stops = np.zeros(ends.size, dtype=bool)
        q_abs = np.flatnonzero(speeds <= 0)
        q_tgt = np.flatnonzero((ends >= cap) | stops)
        q_time = np.flatnonzero(cum >= duration)
        q = min(a[0] if a.size else ends.size for a in (q_abs, q_tgt, q_time))
        if q < ends.size:
            prev_t = cum[q - 1] if q > 0 else t
            times.append(cum[:q])
            cs.append(ends[:q])
            if speeds[q] <= 0:
                status, t_end, c_end = "absorbed", prev_t, starts[q]
            elif cum[q] <= duration and ends[q] >= cap:
                status, t_end, c_end = "cap", cum[q], cap
            elif cum[q] <= duration and stops[q]:
                status, t_end, c_end = "stop", cum[q], ends[q]
            else:
                status, t_end = "time", duration
                c_end = min(starts[q] + speeds[q] * (duration - prev_t), seg_end[q])
            if t_end > prev_t or status == "time":
                times.append(np.array([t_end]))
                cs.append(np.array([c_end]))
            return np.concatenate(times), np.concatenate(cs), status, path
        if open_end:
            raise AssertionError("unreachable: open segment always terminates")
        times.append(cum)
        cs.append(ends)
        t, c = float(cum[-1]), float(ends[-1])
        k += ends.size
        batch *= 2


def lamperti_1d(f: DriverPath, x: float, t_max: float, *, level: float = 0.0, col: int = 0,
                cap: float = math.inf) -> LampertiResult:
    """Solve ``c' = f(c)``, ``c(0) = x`` on ``[0, t_max]`` by inverting ``i(y) = int_x^y 1/f``.

    ``f`` must have no negative jumps; down-steps of a piecewise-constant
    path are read as discretised continuous motion.  The flow is absorbed at
    the first point where ``f <= 0``; if ``f(x) = 0`` then ``c`` stays at
    ``x``.
    """
    fx = float(f(x)[col]) + level
    if fx < 0:
        raise InadmissibleStart(f"f(x) = {fx} < 0 at the initial point x = {x}")
    times, cs, status, path = _flow(f, col, float(x), level, float(t_max), cap)
    if status == "absorbed" and times[-1] < t_max:
        times = np.append(times, t_max)
        cs = np.append(cs, cs[-1])
    steps = np.diff(times)
    slopes = np.diff(cs) / np.where(steps > 0, steps, 1.0)
    tail = max(float(path(cs[-1])[col]) + level, 0.0) if status == "time" else 0.0
    h = np.append(slopes, tail)
    absorbed = status == "absorbed"
    T = float(cs[-1]) if absorbed else math.inf
    return LampertiResult(times, cs, h, absorbed, T, status, path)


# ----------------------------------------------------------------------------
# exact solver


def _evaluate(model: AffineModel, drivers: Drivers, grid: np.ndarray, C: np.ndarray):
    """Composed driver values and the raw (unclamped) state formula at grid points."""
    m, d = model.m, model.dim
    composed = np.zeros((grid.size, m, d))
    for i in range(m):
        composed[:, i, :] = drivers.x[i](C[:, i])
    raw = model.z0[None, :] + composed.sum(axis=1) + drivers.y(grid)
    return composed, raw


def _ensure(model: AffineModel, drivers: Drivers, c_need, t_need: float) -> Drivers:
    x = list(drivers.x)
    for i in range(model.m):
        if c_need[i] > x[i].horizon:
            x[i] = x[i].extended(max(2.0 * x[i].horizon, 1.25 * float(c_need[i])))
    y = drivers.y
    if t_need > y.horizon:
        y = y.extended(max(2.0 * y.horizon, t_need))
    return Drivers(tuple(x), y)


def exact_piecewise_solve(model: AffineModel, drivers: Drivers, t_max: float, *,
                          grid=None, max_events: int = 5_000_000) -> Trajectory:
    """Exact solution for piecewise-constant drivers.

    Between events (immigration breakpoints, cross-term breakpoint crossings,
    the cap, ``t_max``) the off-diagonal inputs are frozen and each branching
    coordinate follows a Lamperti flow on its own diagonal driver.  Events are
    processed in time order; simultaneous crossings resolve in index order.

    The output grid is the union of all flow knots, plus ``grid`` if given.
    """
    model.require_admissible()
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    m = model.m
    drivers = _ensure(model, drivers, np.zeros(m), t_max)
    xs = list(drivers.x)
    y = drivers.y

    t = 0.0
    C = np.zeros(m)
    seg_t = [np.zeros(1)]
    seg_C = [np.zeros((1, m))]
    exploded, tau = False, math.inf
    events = 0

    def partial():
        g = np.concatenate(seg_t)
        return _finish(model, Drivers(tuple(xs), y), g, np.concatenate(seg_C), False, math.inf, grid=None)

    # immigration breakpoints where a branching coordinate changes
    def y_events(path: DriverPath) -> np.ndarray:
        v = path.values[:, :m]
        changed = np.any(v[1:] != v[:-1], axis=1) if m else np.zeros(path.breakpoints.size - 1, bool)
        return path.breakpoints[1:][changed]

    ybp = y_events(y) if m else np.zeros(0)
    # OU coordinates only need knots at immigration breakpoints
    ybp_all = y.breakpoints[1:]

    while t < t_max:
        events += 1
        if events > max_events:
            raise BudgetExceeded(f"more than {max_events} events before t={t_max}", partial())
        nxt = ybp[np.searchsorted(ybp, t + y.tol, side="right"):]
        t_win = min(float(nxt[0]) if nxt.size else math.inf, t_max)
        if m == 0:
            ou_knots = ybp_all[(ybp_all > t) & (ybp_all < t_max)]
            seg_t.append(np.append(ou_knots, t_max))
            seg_C.append(np.zeros((ou_knots.size + 1, 0)))
            t = t_max
            break
        for i in range(m):
            if C[i] >= xs[i].horizon:
                xs[i] = xs[i].extended(2.0 * C[i])
        # frozen levels: everything except the diagonal driver
        comp = np.stack([xs[i](C[i])[:m] for i in range(m)])
        base = model.z0[:m] + comp.sum(axis=0) + y(t)[:m]
        levels = base - np.diag(comp)
        flows = []
        t_stop = t_win - t
        hit = None
        for i in range(m):
            others = [j for j in range(m) if j != i]
            ft, fc, status, xs[i] = _flow(xs[i], i, float(C[i]), float(levels[i]), t_stop,
                                          model.cap, others)
            flows.append((ft, fc))
            if status in ("stop", "cap") and ft[-1] < t_stop:
                t_stop = float(ft[-1])
                hit = (i, status)
            elif status in ("stop", "cap") and hit is None and ft[-1] <= t_stop:
                t_stop = float(ft[-1])
                hit = (i, status)
        # earlier coordinates may have run past the final stop time; clip all flows
        knots = [ft[ft <= t_stop] for ft, _ in flows]
        tk = np.unique(np.concatenate(knots + [np.array([t_stop])]))
        Cw = np.empty((tk.size, m))
        for i, (ft, fc) in enumerate(flows):
            Cw[:, i] = np.interp(tk, ft, fc)
        if hit is not None:
            i, status = hit
            ft, fc = flows[i]
            Cw[-1, i] = fc[-1]
            if status == "cap":
                exploded, tau = True, t + t_stop
        seg_t.append(t + tk[1:])
        seg_C.append(Cw[1:])
        C = Cw[-1].copy()
        t = t + t_stop if t_stop < t_win - t else t_win
        if hit is None:
            seg_t[-1][-1] = t
        if exploded:
            break

    g = np.concatenate(seg_t)
    Cg = np.concatenate(seg_C)
    # simultaneous events computed separately can land a few ulps apart; merge
    # knots closer than 1e-12 (relative), keeping the later one
    tiny = np.diff(g) <= 1e-12 * np.maximum(1.0, g[1:])
    keep = np.ones(g.size, dtype=bool)
    keep[:-1] &= ~tiny
    keep[0] = True
    if tiny.size and tiny[0]:
        keep[1] = False
    g, Cg = g[keep], Cg[keep]
    return _finish(model, Drivers(tuple(xs), y), g, Cg, exploded, tau, grid)


def _finish(model, drivers, g, Cb, exploded, tau, grid):
    m, n = model.m, model.n
    if grid is not None:
        extra = np.asarray(grid, dtype=float)
        extra = extra[(extra >= 0) & (extra <= g[-1])]
        gg = np.union1d(g, extra)
        Cb = np.stack([np.interp(gg, g, Cb[:, i]) for i in range(m)], axis=1) if m else np.zeros((gg.size, 0))
        g = gg
    drivers = _ensure(model, drivers, Cb.max(axis=0) if m else np.zeros(0), float(g[-1]))
    composed, raw = _evaluate(model, drivers, g, Cb)
    Z = raw.copy()
    Z[:, :m] = np.maximum(raw[:, :m], 0.0)
    traj = Trajectory(m, n, g, Z, np.concatenate([Cb, np.zeros((g.size, n))], axis=1), exploded, tau,
                      composed, np.zeros(m + n, dtype=np.int64), drivers, model.z0)
    if n:
        traj = ou_extend(traj, model.beta, model.z0[m:])
    if grid is not None:
        idx = np.searchsorted(traj.grid, np.asarray(grid, dtype=float))
        # keep the final (possibly cap-hit) row
        idx = np.union1d(idx[idx < traj.grid.size], [traj.grid.size - 1])
        traj = replace(traj, grid=traj.grid[idx], Z=traj.Z[idx], C=traj.C[idx], composed=traj.composed[idx])
    return traj


# ----------------------------------------------------------------------------
# Euler scheme


def euler_solve(model: AffineModel, drivers: Drivers, span: float, t_max: float) -> Trajectory:
    """Euler scheme of span ``span``.

    ``Z_k = [z + sum_i X^i(C^i_k) + Y(t_k)]^+`` on branching coordinates (no
    clamp on OU coordinates, which add ``C^beta beta``), then
    ``C_{k+1} = C_k + Z_k * span``.  Stops at ``t_max`` or when some branching
    ``C`` reaches the cap, in which case the last row is the cap-hit time.
    """
    if not span > 0:
        raise ValueError("span must be positive")
    model.require_admissible()
    m, n, d = model.m, model.n, model.dim
    K = int(round(t_max / span))
    if abs(K * span - t_max) > 1e-9 * max(span, t_max):
        K = int(math.ceil(t_max / span))
    drivers = _ensure(model, drivers, np.zeros(m), K * span)
    xs, y = list(drivers.x), drivers.y
    beta, z = model.beta, model.z0
    grid = np.arange(K + 1) * span
    Zs = np.zeros((K + 2, d))
    Cs = np.zeros((K + 2, d))
    comp = np.zeros((K + 2, m, d))
    clamps = np.zeros(d, dtype=np.int64)
    C = np.zeros(d)
    exploded, tau = False, math.inf
    rows = K + 1
    times = list(grid)
    yv = y(grid)
    for k in range(K + 1):
        for i in range(m):
            c = float(C[i])
            if c > xs[i].horizon:
                xs[i] = xs[i].extended(max(2.0 * xs[i].horizon, 1.25 * c))
            comp[k, i] = xs[i](c)
        raw = z + comp[k].sum(axis=0) + yv[k]
        if n:
            raw[m:] += C[m:] @ beta
        Zk = raw
        neg = raw[:m] < 0
        clamps[:m] += neg
        Zk[:m] = np.where(neg, 0.0, raw[:m])
        Zs[k], Cs[k] = Zk, C
        if k == K:
            break
        nxt = C + Zk * span
        if m and np.any(nxt[:m] >= model.cap):
            with np.errstate(divide="ignore"):
                dtj = np.where(Zk[:m] > 0, (model.cap - C[:m]) / np.where(Zk[:m] > 0, Zk[:m], 1.0), math.inf)
            dt_hit = float(np.min(dtj))
            tau = grid[k] + dt_hit
            exploded = True
            Cs[k + 1] = C + Zk * dt_hit
            Zs[k + 1] = Zk
            comp[k + 1] = comp[k]
            times = list(grid[:k + 1]) + [tau]
            rows = k + 2
            break
        C = nxt
    traj = Trajectory(m, n, np.asarray(times[:rows]), Zs[:rows], Cs[:rows], exploded, tau,
                      comp[:rows], clamps, Drivers(tuple(xs), y), z)
    return traj


# ----------------------------------------------------------------------------
# OU extension


def _phi_blocks(dt: float, beta: np.ndarray):
    """``exp(dt beta)`` and ``int_0^dt exp(s beta) ds``."""
    n = beta.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = beta * dt
    aug[:n, n:] = np.eye(n) * dt
    e = expm(aug)
    return e[:n, :n], e[:n, n:]


def ou_extend(base: Trajectory, beta, z_ou) -> Trajectory:
    """Apply mean reversion ``beta`` to the OU coordinates of a ``beta = 0`` solution.

    Row convention: ``Z^beta_t = z e^{t beta} + int_0^t dZ_s e^{(t-s) beta}``
    with the integral a left-point Stieltjes sum over grid increments, and
    ``C^beta`` the exact integral of ``Z^beta`` between grid points.
    """
    m, n = base.m, base.n
    beta = np.asarray(beta, dtype=float)
    z_ou = np.asarray(z_ou, dtype=float).reshape(-1)
    if beta.shape != (n, n) or z_ou.shape != (n,):
        raise ValueError(f"beta must be {n}x{n} and z_ou of length {n}")
    if not beta.any():
        return base
    g = base.grid
    Zb = base.Z[:, m:]
    Zn = np.empty_like(Zb)
    Cn = np.zeros_like(Zb)
    Zn[0] = z_ou
    cache = {}
    for k in range(1, g.size):
        dt = float(g[k] - g[k - 1])
        if dt not in cache:
            cache[dt] = _phi_blocks(dt, beta)
        E, I = cache[dt]
        Cn[k] = Cn[k - 1] + Zn[k - 1] @ I
        Zn[k] = Zn[k - 1] @ E + (Zb[k] - Zb[k - 1])
    Z = base.Z.copy()
    Z[:, m:] = Zn
    C = base.C.copy()
    C[:, m:] = Cn
    return replace(base, Z=Z, C=C)


# ----------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class InequalityReport:
    worst: float
    where: tuple
    passed: bool
    tol: float


def _integrands(traj: Trajectory, drivers: Drivers):
    """Lower/upper envelopes of the driving formula at cell midpoints."""
    m = traj.m
    g = traj.grid
    mid_t = 0.5 * (g[:-1] + g[1:])
    Cmid = 0.5 * (traj.C[:-1, :m] + traj.C[1:, :m])
    z = traj.z0[:m] if traj.z0 is not None else np.zeros(m)
    lo = np.tile(z, (mid_t.size, 1)) + drivers.y(mid_t)[:, :m]
    hi = lo.copy()
    for i in range(m):
        right = drivers.x[i](Cmid[:, i])[:, :m]
        left = drivers.x[i].left(Cmid[:, i])[:, :m]
        lo += np.minimum(left, right)
        hi += np.maximum(left, right)
    return lo, hi


def _worst_secant(A: np.ndarray, g: np.ndarray, atol: float, iters: int = 60) -> tuple[float, int, int]:
    """``max_{r<t} (A_t - A_r - atol) / (g_t - g_r)`` and a maximising pair.

    Bisection on the ratio ``lam``: some pair beats ``lam`` iff
    ``A - lam g`` rises by more than ``atol`` over its running minimum.
    """
    def beats(lam):
        B = A - lam * g
        low = np.minimum.accumulate(B[:-1])
        rise = B[1:] - low
        k = int(np.argmax(rise))
        return rise[k] > atol, k + 1, low[k]

    cell = np.diff(A) / np.diff(g)
    hi = float(np.max(cell))
    k = int(np.argmax(cell))
    if hi <= 0 or not beats(0.0)[0]:
        # the best pair cannot exceed the best single cell
        return min(hi, 0.0), k, k + 1
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if beats(mid)[0]:
            lo = mid
        else:
            hi = mid
    _, t, floor = beats(lo)
    B = A - lo * g
    r = int(np.flatnonzero(B[:t] == floor)[0])
    return lo, r, t


def check_differential_inequality(traj: Trajectory, drivers: Drivers, tol: float = 1e-8) -> InequalityReport:
    """Worst violation of ``int lower <= C_t - C_r <= int upper`` over grid pairs.

    Integrals use the midpoint rule on grid cells (exact when the integrand is
    constant on cells, as for exact-solver grids).  A violation over ``[r, t]``
    is the excess minus a rounding allowance of ``64 eps max(1, max |C|)``,
    divided by ``(t - r) * scale`` with ``scale = max(1, max |Z|)``.
    """
    m = traj.m
    g = traj.grid
    if m == 0 or g.size < 2:
        return InequalityReport(0.0, (), True, tol)
    drivers = _ensure_cover(traj, drivers)
    lo, hi = _integrands(traj, drivers)
    dt = np.diff(g)
    dC = np.diff(traj.C[:, :m], axis=0)
    scale = max(1.0, float(np.max(np.abs(traj.Z[:, :m]))))
    atol = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(traj.C[:, :m]))))
    worst, where = -math.inf, ()
    for j in range(m):
        # cumulative excess above the upper integral / below the lower one
        up = np.concatenate([[0.0], np.cumsum(dC[:, j] - hi[:, j] * dt)])
        dn = np.concatenate([[0.0], np.cumsum(lo[:, j] * dt - dC[:, j])])
        for arr in (up, dn):
            v, r, t = _worst_secant(arr / scale, g, atol / scale)
            if v > worst:
                worst, where = v, (j + 1, float(g[r]), float(g[t]))
    return InequalityReport(worst, where, worst <= tol, tol)


def _ensure_cover(traj: Trajectory, drivers: Drivers) -> Drivers:
    x = list(drivers.x)
    for i in range(traj.m):
        need = float(traj.C[:, i].max())
        if need > x[i].horizon:
            x[i] = x[i].extended(max(2 * x[i].horizon, 1.25 * need))
    y = drivers.y
    if traj.grid[-1] > y.horizon:
        y = y.extended(float(traj.grid[-1]))
    return Drivers(tuple(x), y)


@dataclass(frozen=True)
class SuspectInterval:
    t0: float
    t1: float
    coords: tuple


def spontaneous_generation_scan(traj: Trajectory, drivers: Drivers) -> list[SuspectInterval]:
    """Grid cells where a set ``J`` of zero coordinates grows with frozen inputs.

    ``J`` is the set of branching coordinates with ``Z = 0`` at the start of the
    cell.  Inputs from outside ``J`` are frozen when ``Y^J`` has no breakpoint
    in the cell and, for ``i`` not in ``J``, ``X^{i,J}`` has no breakpoint in
    the range swept by ``C^i``.
    """
    m = traj.m
    g, Z, C = traj.grid, traj.Z, traj.C
    out = []
    if m == 0:
        return out
    drivers = _ensure_cover(traj, drivers)
    ybp = drivers.y.breakpoints
    for k in range(g.size - 1):
        J = [j for j in range(m) if Z[k, j] == 0]
        if not J:
            continue
        grows = [j for j in J if C[k + 1, j] > C[k, j]]
        if not grows:
            continue
        frozen = True
        yb = ybp[(ybp > g[k]) & (ybp < g[k + 1])]
        if yb.size and np.any(drivers.y(yb)[:, J] != drivers.y(g[k])[None, J]):
            frozen = False
        for i in range(m):
            if i in J or not frozen:
                continue
            a, b = C[k, i], C[k + 1, i]
            if b > a and np.any(drivers.x[i](b)[J] != drivers.x[i](a)[J]):
                frozen = False
        if frozen:
            out.append(SuspectInterval(float(g[k]), float(g[k + 1]), tuple(j + 1 for j in grows)))
    return out


def thin(traj: Trajectory, times) -> Trajectory:
    """Rows of ``traj`` at grid points matching ``times`` (within 1e-9 relative), plus the last row."""
    times = np.asarray(times, dtype=float)
    g = traj.grid
    tol = 1e-9 * max(1.0, float(g[-1]))
    idx = np.clip(np.searchsorted(g, times - tol), 0, g.size - 1)
    idx = idx[np.abs(g[idx] - times) <= tol]
    idx = np.union1d(idx, [g.size - 1])
    comp = traj.composed[idx] if traj.composed is not None else None
    return replace(traj, grid=g[idx], Z=traj.Z[idx], C=traj.C[idx], composed=comp)


# ----------------------------------------------------------------------------
# Euler convergence study


def sup_distance(a: Trajectory, b: Trajectory, t_max: float) -> float:
    """``sup_[0, t_max] |C_a - C_b|`` over the branching clocks (both piecewise linear)."""
    g = np.union1d(a.grid, b.grid)
    g = g[g <= t_max]
    return max((float(np.max(np.abs(np.interp(g, a.grid, a.C[:, j]) - np.interp(g, b.grid, b.C[:, j]))))
                for j in range(a.m)), default=0.0)


@dataclass(frozen=True)
class ConvergenceStudy:
    spans: tuple
    errors: tuple
    driver_seed: int

    @property
    def monotone(self) -> bool:
        e = self.errors
        return all(y < x for x, y in zip(e, e[1:]))

    @property
    def slope(self) -> float:
        """Least-squares slope of log error against log span."""
        return float(np.polyfit(np.log(self.spans), np.log(self.errors), 1)[0])


def euler_convergence(model: AffineModel, drivers: Drivers, spans, t_max: float,
                      driver_seed: int = -1) -> ConvergenceStudy:
    """Sup-distance of Euler solutions to the exact solution for each span."""
    exact = exact_piecewise_solve(model, drivers, t_max)
    errs = tuple(sup_distance(exact, euler_solve(model, exact.drivers, float(s), t_max), t_max) for s in spans)
    return ConvergenceStudy(tuple(float(s) for s in spans), errs, driver_seed)


def convergence_csv(studies) -> str:
    """One row per (driver seed, span): ``driver_seed,span,sup_error``."""
    buf = io.StringIO()
    buf.write("driver_seed,span,sup_error\n")
    for st in studies:
        for s, e in zip(st.spans, st.errors):
            buf.write(f"{st.driver_seed},{s:.17g},{e:.17g}\n")
    return buf.getvalue()
