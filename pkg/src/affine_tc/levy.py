"""Lévy driver specifications, piecewise-constant driver paths and exponents.

A :class:`LevySpec` is a drift, a Gaussian covariance and a list of jump
components.  Paths are sampled on a mesh of cells ``[k*mesh, (k+1)*mesh)``:
drift, Gaussian, gamma and stable motion is attached to the cells, while
compound-Poisson jumps keep their exact arrival times and are inserted as
extra breakpoints.  The resulting :class:`DriverPath` is right-continuous and
piecewise constant.

Randomness for cell chunk ``c`` of a path comes from the stream
``key.generator(c)``, so a path over ``[0, H]`` is a deterministic function of
``(spec, mesh, key)`` no matter how many times it was extended to reach ``H``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .streams import StreamKey

CHUNK_CELLS = 1024
# Points within SNAP*mesh of a breakpoint are read as lying on it.
SNAP = 1e-9


class DomainError(ValueError):
    """Argument outside the exponential-moment domain of a component."""

    def __init__(self, message: str, component: str = "", coordinate: int | None = None):
        super().__init__(message)
        self.component = component
        self.coordinate = coordinate


class SpecError(ValueError):
    """Invalid Lévy specification."""


# ----------------------------------------------------------------------------
# jump laws


@dataclass(frozen=True)
class PointMass:
    vector: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "vector", tuple(float(v) for v in self.vector))

    @property
    def dim(self) -> int:
        return len(self.vector)

    def transform(self, u: np.ndarray) -> complex:
        return complex(np.exp(np.dot(u, np.asarray(self.vector))))

    def check_domain(self, u, margin=0.0):
        pass

    def min_jump(self, coord: int) -> float:
        return self.vector[coord]

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return np.tile(np.asarray(self.vector), (k, 1))

    def sample_sums(self, rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
        return counts[:, None] * np.asarray(self.vector)[None, :]

    def to_dict(self) -> dict:
        return {"law": "point_mass", "vector": list(self.vector)}


@dataclass(frozen=True)
class ExponentialJump:
    """Exponential jumps of the given mean along one coordinate."""

    mean: float
    coord: int
    dim: int

    def __post_init__(self):
        if not self.mean > 0:
            raise SpecError(f"exponential jump mean must be positive, got {self.mean}")
        if not 0 <= self.coord < self.dim:
            raise SpecError(f"exponential jump coordinate {self.coord} outside dimension {self.dim}")

    def check_domain(self, u, margin=0.0):
        if u[self.coord].real >= 1.0 / self.mean - margin:
            raise DomainError(
                f"exponential jump (mean {self.mean}) needs Re u[{self.coord}] < {1.0 / self.mean - margin}",
                "exponential_jump", self.coord)

    def transform(self, u: np.ndarray) -> complex:
        return complex(1.0 / (1.0 - self.mean * u[self.coord]))

    def min_jump(self, coord: int) -> float:
        return 0.0

    def sample(self, rng, k):
        out = np.zeros((k, self.dim))
        out[:, self.coord] = rng.exponential(self.mean, size=k)
        return out

    def sample_sums(self, rng, counts):
        out = np.zeros((counts.size, self.dim))
        pos = counts > 0
        sums = np.zeros(counts.size)
        sums[pos] = rng.gamma(counts[pos], self.mean)
        out[:, self.coord] = sums
        return out

    def to_dict(self) -> dict:
        return {"law": "exponential", "mean": self.mean, "coord": self.coord}


@dataclass(frozen=True)
class DiscreteJump:
    support: tuple[tuple[float, ...], ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        sup = tuple(tuple(float(x) for x in v) for v in self.support)
        probs = tuple(float(p) for p in self.probs)
        if len(sup) != len(probs) or not sup:
            raise SpecError("discrete jump law needs one probability per support vector")
        if len({len(v) for v in sup}) != 1:
            raise SpecError("discrete jump support vectors must share a dimension")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise SpecError(f"discrete jump probabilities must be >= 0 and sum to 1, got {probs}")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return len(self.support[0])

    def check_domain(self, u, margin=0.0):
        pass

    def transform(self, u):
        sup = np.asarray(self.support)
        return complex(np.dot(np.asarray(self.probs), np.exp(sup @ u)))

    def min_jump(self, coord: int) -> float:
        return min(v[coord] for v, p in zip(self.support, self.probs) if p > 0)

    def sample(self, rng, k):
        idx = rng.choice(len(self.probs), size=k, p=np.asarray(self.probs))
        return np.asarray(self.support)[idx]

    def sample_sums(self, rng, counts):
        tallies = rng.multinomial(counts, np.asarray(self.probs))
        return tallies @ np.asarray(self.support)

    def to_dict(self) -> dict:
        return {"law": "discrete", "support": [list(v) for v in self.support], "probs": list(self.probs)}


JumpLaw = Union[PointMass, ExponentialJump, DiscreteJump]


# ----------------------------------------------------------------------------
# jump components


@dataclass(frozen=True)
class CompoundPoisson:
    rate: float
    law: JumpLaw

    def __post_init__(self):
        if not self.rate >= 0:
            raise SpecError(f"compound Poisson rate must be >= 0, got {self.rate}")

    def exponent(self, u, margin=0.0) -> complex:
        if self.rate == 0:
            return 0j
        self.law.check_domain(u, margin)
        return self.rate * (self.law.transform(u) - 1.0)

    def to_dict(self) -> dict:
        return {"kind": "compound_poisson", "rate": self.rate, **self.law.to_dict()}


@dataclass(frozen=True)
class GammaSubordinator:
    """Gamma process on one coordinate: increments Gamma(shape*dt, 1/rate)."""

    shape: float
    rate: float
    coord: int

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise SpecError(f"gamma subordinator needs shape > 0 and rate > 0, got {self.shape}, {self.rate}")

    def exponent(self, u, margin=0.0) -> complex:
        if u[self.coord].real >= self.rate - margin:
            raise DomainError(
                f"gamma subordinator (rate {self.rate}) needs Re u[{self.coord}] < {self.rate - margin}",
                "gamma_subordinator", self.coord)
        return complex(-self.shape * np.log(1.0 - u[self.coord] / self.rate))

    def to_dict(self) -> dict:
        return {"kind": "gamma_subordinator", "shape": self.shape, "rate": self.rate, "coord": self.coord}


@dataclass(frozen=True)
class StableSpectrallyPositive:
    """Spectrally positive alpha-stable motion, E exp(-l X_t) = exp(t*scale*l**alpha).

    Sampling is experimental.
    """

    alpha: float
    scale: float
    coord: int

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise SpecError(f"stable index must lie in (1, 2), got {self.alpha}")
        if not self.scale > 0:
            raise SpecError(f"stable scale must be positive, got {self.scale}")

    def exponent(self, u, margin=0.0) -> complex:
        if u[self.coord].real > 0:
            raise DomainError(
                f"stable component needs Re u[{self.coord}] <= 0", "stable_spectrally_positive", self.coord)
        return complex(self.scale * (-complex(u[self.coord])) ** self.alpha)

    def to_dict(self) -> dict:
        return {"kind": "stable_spectrally_positive", "alpha": self.alpha, "scale": self.scale, "coord": self.coord}


JumpComponent = Union[CompoundPoisson, GammaSubordinator, StableSpectrallyPositive]


def stable_standard(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Totally skewed stable variates S with E exp(-l S) = exp(l**alpha).

    Chambers-Mallows-Stuck with beta = 1, rescaled from the S(1, 1, 0)
    parametrisation.
    """
    v = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
    w = rng.exponential(1.0, size=size)
    t = np.tan(np.pi * alpha / 2)
    b = np.arctan(t) / alpha
    s = (1 + t * t) ** (1 / (2 * alpha))
    x = (s * np.sin(alpha * (v + b)) / np.cos(v) ** (1 / alpha)
         * (np.cos(v - alpha * (v + b)) / w) ** ((1 - alpha) / alpha))
    gamma = abs(np.cos(np.pi * alpha / 2)) ** (1 / alpha)
    return gamma * x


# ----------------------------------------------------------------------------
# specification


@dataclass(frozen=True, eq=False)
class LevySpec:
    dim: int
    drift: np.ndarray = None
    gaussian_cov: np.ndarray = None
    jumps: tuple = ()

    def __post_init__(self):
        d = int(self.dim)
        if d <= 0:
            raise SpecError("dimension must be positive")
        drift = np.zeros(d) if self.drift is None else np.asarray(self.drift, dtype=float).reshape(-1)
        cov = np.zeros((d, d)) if self.gaussian_cov is None else np.asarray(self.gaussian_cov, dtype=float)
        if drift.shape != (d,):
            raise SpecError(f"drift must have length {d}, got shape {drift.shape}")
        if cov.shape != (d, d):
            raise SpecError(f"gaussian_cov must be {d}x{d}, got shape {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-14, rtol=0):
            raise SpecError("gaussian_cov must be symmetric")
        jitter = 1e-12 * max(1.0, float(np.trace(cov)))
        try:
            np.linalg.cholesky(cov + jitter * np.eye(d))
        except np.linalg.LinAlgError:
            raise SpecError("gaussian_cov is not positive semidefinite") from None
        jumps = tuple(self.jumps)
        for comp in jumps:
            if isinstance(comp, CompoundPoisson):
                if comp.law.dim != d:
                    raise SpecError(f"jump law dimension {comp.law.dim} does not match spec dimension {d}")
            elif isinstance(comp, (GammaSubordinator, StableSpectrallyPositive)):
                if not 0 <= comp.coord < d:
                    raise SpecError(f"component coordinate {comp.coord} outside dimension {d}")
            else:
                raise SpecError(f"unknown jump component {comp!r}")
        drift.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "gaussian_cov", cov)
        object.__setattr__(self, "jumps", jumps)
        w, v = np.linalg.eigh(cov)
        factor = v * np.sqrt(np.clip(w, 0.0, None))
        factor.setflags(write=False)
        object.__setattr__(self, "_factor", factor)

    @classmethod
    def zero(cls, dim: int) -> "LevySpec":
        return cls(dim)

    @property
    def is_zero(self) -> bool:
        return (not self.drift.any() and not self.gaussian_cov.any()
                and all(isinstance(c, CompoundPoisson) and c.rate == 0 for c in self.jumps))

    @property
    def cov_factor(self) -> np.ndarray:
        return self._factor

    def is_subordinator_coord(self, j: int) -> bool:
        """No Gaussian part, nonnegative drift and nonnegative jumps on coordinate ``j``."""
        if self.gaussian_cov[j, j] != 0 or self.drift[j] < 0:
            return False
        for comp in self.jumps:
            if isinstance(comp, CompoundPoisson):
                if comp.rate > 0 and comp.law.min_jump(j) < 0:
                    return False
            elif isinstance(comp, StableSpectrallyPositive) and comp.coord == j:
                return False
        return True

    def has_no_negative_jumps(self, j: int) -> bool:
        for comp in self.jumps:
            if isinstance(comp, CompoundPoisson) and comp.rate > 0 and comp.law.min_jump(j) < 0:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "drift": self.drift.tolist(),
            "gaussian_cov": self.gaussian_cov.tolist(),
            "jumps": [c.to_dict() for c in self.jumps],
        }

    @classmethod
    def from_dict(cls, dim: int, data: dict) -> "LevySpec":
        jumps = tuple(component_from_dict(dim, c) for c in data.get("jumps", []) or [])
        return cls(dim, data.get("drift"), data.get("gaussian_cov"), jumps)

    def __eq__(self, other):
        return isinstance(other, LevySpec) and self.dim == other.dim and self.to_dict() == other.to_dict()

    __hash__ = None


def component_from_dict(dim: int, data: dict) -> JumpComponent:
    kind = data.get("kind")
    if kind == "compound_poisson":
        law = data.get("law")
        if law == "point_mass":
            jl = PointMass(data["vector"])
        elif law == "exponential":
            jl = ExponentialJump(float(data["mean"]), int(data["coord"]), dim)
        elif law == "discrete":
            jl = DiscreteJump(data["support"], data["probs"])
        else:
            raise SpecError(f"unknown jump law {law!r}")
        return CompoundPoisson(float(data["rate"]), jl)
    if kind == "gamma_subordinator":
        return GammaSubordinator(float(data["shape"]), float(data["rate"]), int(data["coord"]))
    if kind == "stable_spectrally_positive":
        return StableSpectrallyPositive(float(data["alpha"]), float(data["scale"]), int(data["coord"]))
    raise SpecError(f"unknown jump component kind {kind!r}")


def laplace_exponent(spec: LevySpec, u, margin: float = 0.0) -> complex:
    """log E exp(u . X_1) in closed form.

    Raises :class:`DomainError` naming the offending component when ``u`` lies
    outside its exponential-moment domain.
    """
    u = np.asarray(u, dtype=complex).reshape(-1)
    if u.shape != (spec.dim,):
        raise ValueError(f"u must have length {spec.dim}")
    total = complex(np.dot(spec.drift, u)) + complex(u @ spec.gaussian_cov @ u) / 2
    for comp in spec.jumps:
        total += comp.exponent(u, margin)
    return total


# ----------------------------------------------------------------------------
# paths


def _snap(mesh: float) -> float:
    return SNAP * mesh if np.isfinite(mesh) and mesh > 0 else 1e-12


def cell_index(s, mesh: float):
    """Index of the mesh cell containing ``s`` (with breakpoint snapping)."""
    return np.floor(np.asarray(s, dtype=float) / mesh + SNAP).astype(np.int64)


@dataclass(frozen=True, eq=False)
class DriverPath:
    """Right-continuous piecewise-constant path on ``[0, horizon]``.

    ``values[k]`` holds on ``[breakpoints[k], breakpoints[k+1])``.  The
    ``jumps`` mask marks breakpoints created by compound-Poisson arrivals; all
    other breakpoints are mesh-cell steps.  ``source`` and ``state`` let a
    sampled path grow without touching its prefix.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    horizon: float = np.inf
    mesh: float = np.inf
    jumps: np.ndarray = None
    source: object = field(default=None, repr=False)
    state: object = field(default=None, repr=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if bp.ndim != 1 or bp.size == 0 or bp[0] != 0.0:
            raise ValueError("breakpoints must be a non-empty 1-d array starting at 0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if vals.shape[0] != bp.size:
            raise ValueError("one value vector per breakpoint required")
        jumps = np.zeros(bp.size, dtype=bool) if self.jumps is None else np.asarray(self.jumps, dtype=bool)
        for a in (bp, vals, jumps):
            a.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "_tol", _snap(self.mesh))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_steps(cls, breakpoints, values, horizon=np.inf, jumps=None) -> "DriverPath":
        """Hand-built path; constant after the last breakpoint up to ``horizon``."""
        return cls(breakpoints, values, horizon, jumps=jumps)

    @property
    def tol(self) -> float:
        return self._tol

    def _check(self, s) -> np.ndarray:
        if isinstance(s, float):
            bad = s < -self._tol or s > self.horizon + self._tol
        else:
            s = np.asarray(s, dtype=float)
            bad = s.size and (np.min(s) < -self._tol or np.max(s) > self.horizon + self._tol)
        if bad:
            raise ValueError(f"evaluation outside [0, {self.horizon}]; extend the path first")
        return s

    def index(self, s) -> np.ndarray:
        """Index of the largest breakpoint <= s."""
        s = self._check(s)
        return np.searchsorted(self.breakpoints, s + self._tol, side="right") - 1

    def left_index(self, s) -> np.ndarray:
        """Index of the largest breakpoint < s (0 at s = 0)."""
        s = self._check(s)
        return np.maximum(np.searchsorted(self.breakpoints, s - self._tol, side="left") - 1, 0)

    def __call__(self, s) -> np.ndarray:
        return self.values[self.index(s)]

    def left(self, s) -> np.ndarray:
        return self.values[self.left_index(s)]

    def extended(self, new_horizon: float) -> "DriverPath":
        """This path on a longer horizon (identical on the old one)."""
        if new_horizon <= self.horizon:
            return self
        if self.source is None:
            raise ValueError("this path has no source to extend from")
        return self.source.extend(self, float(new_horizon))

    def refine(self, points) -> "DriverPath":
        """Same function with extra redundant breakpoints inserted."""
        pts = np.asarray(points, dtype=float)
        pts = pts[(pts > 0) & (pts < self.horizon)]
        near = np.abs(self.breakpoints[np.clip(np.searchsorted(self.breakpoints, pts), 0, self.breakpoints.size - 1)] - pts)
        pts = np.unique(pts[near > self.tol])
        pts = np.setdiff1d(pts, self.breakpoints)
        bp = np.concatenate([self.breakpoints, pts])
        vals = np.concatenate([self.values, self(pts).reshape(len(pts), -1)])
        jumps = np.concatenate([self.jumps, np.zeros(len(pts), dtype=bool)])
        order = np.argsort(bp, kind="stable")
        return DriverPath(bp[order], vals[order], self.horizon, self.mesh, jumps[order])

    def to_csv(self) -> str:
        """Two columns: breakpoint, space-separated value vector."""
        buf = io.StringIO()
        buf.write("breakpoint,value\n")
        for t, v in zip(self.breakpoints, self.values):
            buf.write(f"{t:.17g},{' '.join(f'{x:.17g}' for x in v)}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, horizon=np.inf) -> "DriverPath":
        bp, vals = [], []
        for line in text.strip().splitlines()[1:]:
            t, v = line.split(",")
            bp.append(float(t))
            vals.append([float(x) for x in v.split()])
        return cls(np.array(bp), np.array(vals), horizon)


# ----------------------------------------------------------------------------
# sources: how a path grows


@dataclass(frozen=True, eq=False)
class LevySource:
    spec: LevySpec
    key: StreamKey
    mesh: float

    def chunk(self, c: int):
        """Cell increments and compound-Poisson arrivals of cell chunk ``c``."""
        spec, mesh, n, d = self.spec, self.mesh, CHUNK_CELLS, self.spec.dim
        rng = self.key.generator(c)
        incr = np.zeros((n, d))
        if spec.gaussian_cov.any():
            incr += (rng.standard_normal((n, d)) @ spec.cov_factor.T) * math.sqrt(mesh)
        t0, span = c * n * mesh, n * mesh
        times, sizes = [np.zeros(0)], [np.zeros((0, d))]
        for comp in spec.jumps:
            if isinstance(comp, GammaSubordinator):
                incr[:, comp.coord] += rng.gamma(comp.shape * mesh, 1.0 / comp.rate, size=n)
            elif isinstance(comp, StableSpectrallyPositive):
                incr[:, comp.coord] += (comp.scale * mesh) ** (1 / comp.alpha) * stable_standard(rng, comp.alpha, n)
            elif comp.rate > 0:
                k = int(rng.poisson(comp.rate * span))
                times.append(t0 + span * rng.uniform(size=k))
                sizes.append(comp.law.sample(rng, k).reshape(k, d))
        jt, js = np.concatenate(times), np.concatenate(sizes)
        order = np.argsort(jt, kind="stable")
        return incr, jt[order], js[order]

    def extend(self, path: DriverPath | None, new_horizon: float) -> DriverPath:
        mesh, d = self.mesh, self.spec.dim
        drift = self.spec.drift
        # materialise strictly past the horizon so the cell starting there exists
        need = int(math.floor(new_horizon / (CHUNK_CELLS * mesh))) + 1
        if path is None:
            c0, g_end, j_end = 0, np.zeros(d), np.zeros(d)
            bps, vals, flags = [], [], []
        else:
            c0, g_end, j_end = path.state
            bps, vals, flags = [path.breakpoints], [path.values], [path.jumps]
        for c in range(c0, need):
            incr, jt, js = self.chunk(c)
            cells = np.arange(c * CHUNK_CELLS, (c + 1) * CHUNK_CELLS)
            # value on cell k is the sum of increments of cells before k
            g = g_end + np.cumsum(incr, axis=0) - incr
            g_end = g[-1] + incr[-1]
            jcell = np.clip(np.floor(jt / mesh).astype(np.int64), cells[0], cells[-1])
            t_all = np.concatenate([cells * mesh, jt])
            cell_all = np.concatenate([cells, jcell])
            steps = np.concatenate([np.zeros((cells.size, d)), js])
            is_jump = np.concatenate([np.zeros(cells.size, dtype=bool), np.ones(jt.size, dtype=bool)])
            order = np.argsort(t_all, kind="stable")
            t_all, cell_all, steps, is_jump = t_all[order], cell_all[order], steps[order], is_jump[order]
            jump_cum = j_end + np.cumsum(steps, axis=0)
            j_end = jump_cum[-1]
            v = g[cell_all - cells[0]] + drift[None, :] * (cell_all * mesh)[:, None] + jump_cum
            bps.append(t_all)
            vals.append(v)
            flags.append(is_jump)
        return DriverPath(np.concatenate(bps), np.concatenate(vals), new_horizon, mesh,
                          np.concatenate(flags), self, (max(need, c0), g_end, j_end))


@dataclass(frozen=True, eq=False)
class FunctionSource:
    """Deterministic path taking the value ``func(k * mesh)`` on cell ``k``."""

    func: Callable[[np.ndarray], np.ndarray]
    dim: int
    mesh: float

    def extend(self, path: DriverPath | None, new_horizon: float) -> DriverPath:
        n_cells = int(math.floor(new_horizon / self.mesh)) + 2
        bp = np.arange(n_cells) * self.mesh
        vals = np.asarray(self.func(bp), dtype=float).reshape(n_cells, self.dim)
        return DriverPath(bp, vals, new_horizon, self.mesh, None, self)


@dataclass(frozen=True, eq=False)
class DeterministicSpec:
    """Deterministic driver ``X_j(s) = sum_k coeffs[j][k] * s**k`` held constant on mesh cells.

    Not a Lévy process; used for explosion studies where the oracle is an ODE.
    """

    dim: int
    coeffs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        coeffs = tuple(tuple(float(a) for a in row) for row in self.coeffs)
        if len(coeffs) != self.dim:
            raise SpecError(f"need one coefficient row per coordinate ({self.dim})")
        if any(row and row[0] != 0.0 for row in coeffs):
            raise SpecError("deterministic drivers must start at 0 (constant coefficient 0)")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "gaussian_cov", np.zeros((self.dim, self.dim)))

    def __call__(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([np.polynomial.polynomial.polyval(s, row) if row else np.zeros_like(s)
                         for row in self.coeffs], axis=-1)

    def is_subordinator_coord(self, j: int) -> bool:
        # nonnegative coefficients is a sufficient condition for monotonicity on [0, inf)
        return all(a >= 0 for a in self.coeffs[j])

    def has_no_negative_jumps(self, j: int) -> bool:
        return True

    @property
    def is_zero(self) -> bool:
        return not any(any(row) for row in self.coeffs)

    def to_dict(self) -> dict:
        return {"polynomial": [list(row) for row in self.coeffs]}


def sample_path(spec: LevySpec, horizon: float, mesh: float, rng_stream: StreamKey) -> DriverPath:
    """Piecewise-constant path of ``spec`` on ``[0, horizon]``."""
    if not horizon > 0 or not mesh > 0:
        raise ValueError("horizon and mesh must be positive")
    return LevySource(spec, rng_stream, float(mesh)).extend(None, float(horizon))


def extend_path(path: DriverPath, spec: LevySpec, new_horizon: float, rng_stream: StreamKey) -> DriverPath:
    """Extend a sampled path to ``new_horizon``; the prefix is left bit-identical."""
    src = path.source
    if not isinstance(src, LevySource) or src.key != rng_stream or src.spec != spec:
        raise ValueError("path was not sampled from this spec and stream; cannot extend reproducibly")
    return path.extended(new_horizon)


def function_path(func, dim: int, horizon: float, mesh: float) -> DriverPath:
    """Deterministic piecewise-constant path sampling ``func`` at cell starts."""
    return FunctionSource(func, dim, float(mesh)).extend(None, float(horizon))

# ----------------------------------------------------------------------------
# hypothesis H


def check_hypothesis_H(model) -> list[str]:
    """Violations of the admissibility conditions on ``model``'s drivers (empty if none)."""
    m, n = model.m, model.n
    out = []
    for j in range(m):
        if not model.y_spec.is_subordinator_coord(j):
            out.append(f"immigration coordinate {j + 1} is not a subordinator")
    for i, spec in enumerate(model.x_specs):
        for j in range(m):
            if j == i:
                if not spec.has_no_negative_jumps(j):
                    out.append(f"X^{i + 1},{i + 1} has negative jumps")
            elif not spec.is_subordinator_coord(j):
                out.append(f"X^{i + 1},{j + 1} off-diagonal not a subordinator")
        for k in range(m, m + n):
            if spec.gaussian_cov[i, k] != 0:
                out.append(f"Gaussian cross-dependence coordinate {i + 1} vs OU block (coordinate {k + 1}) in X^{i + 1}")
    return out
