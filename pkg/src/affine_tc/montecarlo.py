"""Seeded Monte Carlo ensembles checked against the Riccati oracle.

The default engine runs the Euler scheme on a block of paths at once.  Each
path's drivers are materialised lazily: when a clock ``C^i`` moves from mesh
cell ``a`` to cell ``b`` the driver gains the sum of the cell increments in
between, drawn in one go (Gaussian, gamma and stable sums over whole cells;
compound-Poisson arrivals over the exact state interval).  This has the same
law as evaluating a fully sampled :class:`~affine_tc.levy.DriverPath`.

Streams are keyed by ``(seed, ENSEMBLE, block, driver)``.  Blocks have a fixed
size, so results do not depend on how many worker threads process them.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .levy import (SNAP, CompoundPoisson, DeterministicSpec, DomainError, GammaSubordinator,
                   LevySpec, StableSpectrallyPositive, stable_standard)
from .riccati import build_exponents, laplace_oracle
from .solver import AffineModel, exact_piecewise_solve, path_key, sample_drivers
from .streams import ENSEMBLE, StreamKey

BLOCK = 10_000
VALID_EXPLODED = 1e-3


class LazyDriver:
    """Increments of one driver spec for a block of paths, drawn as clocks advance."""

    def __init__(self, spec, size: int, mesh: float, rng: np.random.Generator):
        self.spec, self.mesh, self.rng = spec, mesh, rng
        d = spec.dim
        self.cell = np.zeros(size, dtype=np.int64)
        self.pos = np.zeros(size)
        self.motion = np.zeros((size, d))
        self.jumps = np.zeros((size, d))
        self.deterministic = isinstance(spec, DeterministicSpec)
        self.drift = np.zeros(d) if self.deterministic else spec.drift
        self.active = self.deterministic or not spec.is_zero

    def value(self, s: np.ndarray) -> np.ndarray:
        """Driver values at the nondecreasing per-path arguments ``s``."""
        if self.deterministic:
            cells = np.floor(s / self.mesh + SNAP)
            return self.spec(cells * self.mesh)
        cells = np.floor(s / self.mesh + SNAP).astype(np.int64)
        n = cells.size
        if self.active:
            spec, rng, mesh = self.spec, self.rng, self.mesh
            dcell = np.maximum(cells - self.cell, 0)
            span = dcell * mesh
            if spec.gaussian_cov.any():
                self.motion += (rng.standard_normal((n, spec.dim)) @ spec.cov_factor.T) * np.sqrt(span)[:, None]
            ds = np.maximum(s - self.pos, 0.0)
            for comp in spec.jumps:
                if isinstance(comp, GammaSubordinator):
                    pos = dcell > 0
                    draw = np.zeros(n)
                    draw[pos] = rng.gamma(comp.shape * span[pos], 1.0 / comp.rate)
                    self.motion[:, comp.coord] += draw
                elif isinstance(comp, StableSpectrallyPositive):
                    self.motion[:, comp.coord] += (comp.scale * span) ** (1 / comp.alpha) * stable_standard(
                        rng, comp.alpha, n)
                elif comp.rate > 0:
                    counts = rng.poisson(comp.rate * ds)
                    self.jumps += comp.law.sample_sums(rng, counts)
            self.cell = np.maximum(cells, self.cell)
            self.pos = np.maximum(s, self.pos)
        return self.drift[None, :] * (cells * self.mesh)[:, None] + self.motion + self.jumps


@dataclass(frozen=True)
class BlockResult:
    snapshots: np.ndarray      # (B, n_times, d) states at the requested step indices
    integrals: np.ndarray      # (B, n_times) trapezoid integral of the integrand, or empty
    exploded: np.ndarray       # (B,) bool


def euler_block(model: AffineModel, steps: np.ndarray, size: int, key: StreamKey, span: float,
                mesh: float, integrand=None) -> BlockResult:
    """Vectorised Euler scheme for ``size`` paths; snapshots at step indices ``steps``."""
    m, n, d = model.m, model.n, model.dim
    K = int(steps.max())
    xs = [LazyDriver(s, size, mesh, key.generator(i)) for i, s in enumerate(model.x_specs)]
    y = LazyDriver(model.y_spec, size, mesh, key.generator(m))
    beta, z = model.beta, model.z0
    C = np.zeros((size, d))
    Z = np.zeros((size, d))
    live = np.ones(size, dtype=bool)
    snaps = np.zeros((size, steps.size, d))
    ints = np.zeros((size, steps.size if integrand is not None else 0), dtype=complex)
    acc = np.zeros(size, dtype=complex)
    prev_g = None
    want = {int(s): j for j, s in enumerate(steps)}
    for k in range(K + 1):
        raw = np.tile(z, (size, 1)) + y.value(np.full(size, k * span))
        for i, drv in enumerate(xs):
            raw += drv.value(C[:, i])
        if n:
            raw[:, m:] += C[:, m:] @ beta
        raw[:, :m] = np.maximum(raw[:, :m], 0.0)
        # stopped paths keep their cap-hit state
        Z = np.where(live[:, None], raw, Z)
        if integrand is not None:
            g = integrand(Z)
            if prev_g is not None:
                acc = acc + 0.5 * span * (prev_g + g)
            prev_g = g
        if k in want:
            snaps[:, want[k]] = Z
            if integrand is not None:
                ints[:, want[k]] = acc
        if k == K:
            break
        C = np.where(live[:, None], C + Z * span, C)
        if m:
            hit = live & np.any(C[:, :m] >= model.cap, axis=1)
            live &= ~hit
    return BlockResult(snaps, ints, ~live)


def _blocks(n_paths: int, block: int) -> list[tuple[int, int]]:
    return [(b, min(block, n_paths - b * block)) for b in range((n_paths + block - 1) // block)]


def run_blocks(fn, n_paths: int, block: int = BLOCK, workers: int = 1) -> list:
    """Apply ``fn(block_index, size)`` to every block, results in block order."""
    parts = _blocks(n_paths, block)
    if workers <= 1:
        return [fn(b, s) for b, s in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: fn(*p), parts))


def _mean(values: np.ndarray) -> complex:
    """Compensated mean, exact when all values coincide."""
    ref = values[0]
    dev = values - ref
    n = values.size
    return complex(ref.real + math.fsum(dev.real) / n, ref.imag + math.fsum(dev.imag) / n)


def _std_error(values: np.ndarray) -> float:
    n = values.size
    if n < 2:
        return math.inf
    dev = values - values[0]
    sr = float(np.std(dev.real, ddof=1))
    si = float(np.std(dev.imag, ddof=1))
    return max(sr, si) / math.sqrt(n)


def z_score(mean: complex, oracle: complex | None, se: float) -> float | None:
    if oracle is None:
        return None
    gap = abs(mean - oracle)
    if se == 0:
        return 0.0 if gap == 0 else math.inf
    return gap / se


@dataclass(frozen=True)
class McEstimate:
    n_paths: int
    target_time: float
    u: tuple
    mean: complex
    std_error: float
    oracle: complex | None
    z_score: float | None
    exploded_fraction: float
    conditional: bool = False

    @property
    def valid(self) -> bool:
        return self.exploded_fraction < VALID_EXPLODED

    def to_dict(self) -> dict:
        def c(x):
            return None if x is None else {"re": x.real, "im": x.imag}
        out = asdict(self)
        out["u"] = [c(complex(v)) for v in self.u]
        out["mean"] = c(self.mean)
        out["oracle"] = c(self.oracle)
        out["valid"] = self.valid
        return out


def check_mc_domain(model: AffineModel, u) -> np.ndarray:
    """``u`` as a complex vector; branching coordinates need ``Re u <= 0``."""
    u = np.asarray(u, dtype=complex).reshape(-1)
    if u.shape != (model.dim,):
        raise ValueError(f"u must have length {model.dim}")
    for j in range(model.m):
        if u[j].real > 0:
            raise DomainError(f"u coordinate {j + 1} has Re u = {u[j].real} > 0; branching coordinates "
                              "need Re u <= 0", "branching", j)
    return u


def ensemble_states(model: AffineModel, t: float, n_paths: int, seed: int, *, solver: str = "euler",
                    span: float = 1e-3, mesh: float = 1e-3, workers: int = 1, block: int = BLOCK):
    """``Z_t`` and explosion flags of ``n_paths`` independent paths."""
    model.require_admissible()
    if solver == "euler":
        K = int(round(t / span))
        if abs(K * span - t) > 1e-9 * max(t, span):
            raise ValueError(f"t = {t} is not a multiple of the span {span}")
        steps = np.array([K])

        def fn(b, size):
            key = StreamKey(int(seed), (ENSEMBLE, b))
            return euler_block(model, steps, size, key, span, mesh)

        res = run_blocks(fn, n_paths, block, workers)
        Z = np.concatenate([r.snapshots[:, 0] for r in res])
        exploded = np.concatenate([r.exploded for r in res])
        return Z, exploded
    if solver == "exact":
        def one(p):
            dr = sample_drivers(model, path_key(seed, p), mesh, t)
            tr = exact_piecewise_solve(model, dr, t)
            Zt, _ = tr.at(min(t, tr.grid[-1]))
            return Zt, tr.exploded

        def fn(b, size):
            out = [one(b * block + q) for q in range(size)]
            return np.array([o[0] for o in out]), np.array([o[1] for o in out])

        res = run_blocks(fn, n_paths, block, workers)
        return np.concatenate([r[0] for r in res]), np.concatenate([r[1] for r in res])
    raise ValueError(f"unknown solver {solver!r}; expected 'euler' or 'exact'")


def estimate_laplace(model: AffineModel, u, t: float, n_paths: int, seed: int, *, solver: str = "euler",
                     span: float = 1e-3, mesh: float = 1e-3, conditional: bool = False,
                     workers: int = 1, block: int = BLOCK, oracle_tol: float = 1e-10) -> McEstimate:
    """Estimate ``E_z exp(u . Z_t)`` and compare it with the Riccati oracle.

    Exploded paths are evaluated at their cap-stopped state unless
    ``conditional`` is set, in which case they are dropped from the mean.
    """
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    u = check_mc_domain(model, u)
    try:
        oracle = laplace_oracle(build_exponents(model), u, model.z0, t, oracle_tol)
    except ValueError:
        oracle = None
    Z, exploded = ensemble_states(model, t, n_paths, seed, solver=solver, span=span, mesh=mesh,
                                  workers=workers, block=block)
    vals = np.exp(Z @ u)
    if conditional:
        vals = vals[~exploded]
    if vals.size == 0:
        mean, se = complex(math.nan, math.nan), math.inf
    else:
        mean, se = _mean(vals), _std_error(vals)
    return McEstimate(n_paths, float(t), tuple(complex(x) for x in u), mean, se, oracle,
                      z_score(mean, oracle, se), float(exploded.mean()), conditional)


@dataclass(frozen=True)
class MartingaleReport:
    times: tuple
    means: tuple
    std_errors: tuple
    target: complex
    z_scores: tuple
    passed: bool


def martingale_check(model: AffineModel, u, t_grid, n_paths: int, seed: int, *, span: float = 1e-3,
                     mesh: float = 1e-3, gate: float = 4.0, workers: int = 1,
                     block: int = BLOCK) -> MartingaleReport:
    """``E[M_t]`` for ``M_t = e^{u.Z_t} - int_0^t e^{u.Z_s}(F(u) + R(u).Z_s) ds`` versus ``e^{u.z}``.

    The time integral is the trapezoid rule on the Euler grid.
    """
    if model.n:
        raise ValueError("martingale_check needs a model without OU coordinates")
    u = check_mc_domain(model, u)
    model.require_admissible()
    sys = build_exponents(model)
    Fu, Ru = sys.F(u), sys.R(u)
    t_grid = [float(t) for t in t_grid]
    steps = np.array([int(round(t / span)) for t in t_grid])
    if np.any(np.abs(steps * span - np.array(t_grid)) > 1e-9):
        raise ValueError("grid times must be multiples of the span")

    def g(Z):
        e = np.exp(Z @ u)
        return e * (Fu + Z @ Ru)

    def fn(b, size):
        key = StreamKey(int(seed), (ENSEMBLE, b))
        res = euler_block(model, np.maximum(steps, 0), size, key, span, mesh, integrand=g)
        return res

    parts = run_blocks(fn, n_paths, block, workers)
    target = complex(np.exp(model.z0 @ u))
    means, ses, zs = [], [], []
    for j in range(steps.size):
        Zt = np.concatenate([p.snapshots[:, j] for p in parts])
        integ = np.concatenate([p.integrals[:, j] for p in parts])
        M = np.exp(Zt @ u) - integ
        mu, se = _mean(M), _std_error(M)
        means.append(mu)
        ses.append(se)
        zs.append(z_score(mu, target, se))
    return MartingaleReport(tuple(t_grid), tuple(means), tuple(ses), target, tuple(zs),
                            all(z <= gate for z in zs))


def timed(fn, *args, **kwargs):
    """``(result, wall_seconds)``."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
