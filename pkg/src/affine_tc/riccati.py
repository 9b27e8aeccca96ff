"""Generalized Riccati equations and the analytic Laplace transform.

For a model with driver exponents ``F`` (immigration) and ``R_i`` (branching
drivers), plus the linear OU rows ``R_{m+i}(u) = sum_j beta_ij u_{m+j}``, the
transform of the process is

    E_z exp(u . Z_t) = exp(z . psi(t, u) + phi(t, u)),
    psi' = R(psi), psi(0) = u,    phi' = F(psi), phi(0) = 0.

The ODE is integrated with classical RK4 on a deterministic step sequence:
each step is halved until the full step and two half steps agree to the
tolerance, and the accepted value is Richardson-extrapolated.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .levy import (CompoundPoisson, DeterministicSpec, DomainError, ExponentialJump,
                   GammaSubordinator, LevySpec, StableSpectrallyPositive)

BLOWUP = 1e12
# below this the transform is too small to compare against
ORACLE_FLOOR = 1e-12


@dataclass(frozen=True)
class DomainBound:
    """``Re u[coord] < bound`` (or ``<=`` when ``strict`` is False), imposed by ``component``."""

    coord: int
    bound: float
    strict: bool
    component: str


def domain_bounds(spec) -> list[DomainBound]:
    out = []
    for comp in spec.jumps:
        if isinstance(comp, GammaSubordinator):
            out.append(DomainBound(comp.coord, comp.rate, True, "gamma_subordinator"))
        elif isinstance(comp, StableSpectrallyPositive):
            out.append(DomainBound(comp.coord, 0.0, False, "stable_spectrally_positive"))
        elif isinstance(comp, CompoundPoisson) and isinstance(comp.law, ExponentialJump) and comp.rate > 0:
            out.append(DomainBound(comp.law.coord, 1.0 / comp.law.mean, True, "exponential_jump"))
    return out


@dataclass(frozen=True, eq=False)
class ExponentSystem:
    m: int
    n: int
    F: Callable[[np.ndarray], complex]
    R: Callable[[np.ndarray], np.ndarray]
    domain: tuple[DomainBound, ...] = ()

    @property
    def dim(self) -> int:
        return self.m + self.n

    def check_domain(self, u) -> None:
        u = np.asarray(u, dtype=complex)
        for b in self.domain:
            x = u[b.coord].real
            if (x >= b.bound) if b.strict else (x > b.bound):
                op = "<" if b.strict else "<="
                raise DomainError(f"u[{b.coord + 1}] = {u[b.coord]} outside domain: {b.component} needs "
                                  f"Re u[{b.coord + 1}] {op} {b.bound}", b.component, b.coord)


def _compiled(spec: LevySpec):
    """``laplace_exponent(spec, .)`` with the constant parts prepared once."""
    d = np.asarray(spec.drift, dtype=complex)
    S = np.asarray(spec.gaussian_cov, dtype=complex)
    S = S if S.any() else None
    jumps = tuple(spec.jumps)
    dim = spec.dim

    def f(u):
        u = np.asarray(u, dtype=complex).reshape(-1)
        if u.shape != (dim,):
            raise ValueError(f"u must have length {dim}")
        total = d @ u
        if S is not None:
            total += (u @ S @ u) / 2
        for comp in jumps:
            total += comp.exponent(u)
        return complex(total)

    return f


def build_exponents(model) -> ExponentSystem:
    """Exponents ``F`` and ``R`` of an :class:`~affine_tc.solver.AffineModel`."""
    model.require_admissible()
    m, n = model.m, model.n
    specs = list(model.x_specs) + [model.y_spec]
    if any(isinstance(s, DeterministicSpec) for s in specs):
        raise ValueError("deterministic drivers have no Lévy exponent; no Riccati oracle for this model")
    x_specs, y_spec = tuple(model.x_specs), model.y_spec
    beta = np.array(model.beta, dtype=float)

    F = _compiled(y_spec)
    rows = [_compiled(s) for s in x_specs]

    def R(u):
        u = np.asarray(u, dtype=complex)
        out = np.empty(m + n, dtype=complex)
        for i, row in enumerate(rows):
            out[i] = row(u)
        out[m:] = beta @ u[m:]
        return out

    bounds = []
    for s in specs:
        bounds.extend(domain_bounds(s))
    # keep the tightest bound per coordinate
    tight = {}
    for b in bounds:
        cur = tight.get(b.coord)
        if cur is None or b.bound < cur.bound or (b.bound == cur.bound and b.strict):
            tight[b.coord] = b
    return ExponentSystem(m, n, F, R, tuple(tight[k] for k in sorted(tight)))


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    u0: np.ndarray
    grid: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    max_step: float
    rejected: int
    escape_time: float = math.inf
    escape_reason: str = ""

    @property
    def escaped(self) -> bool:
        return math.isfinite(self.escape_time)

    def to_csv(self) -> str:
        d = self.psi.shape[1]
        buf = io.StringIO()
        head = (["t"] + [f"Re psi_{j + 1}" for j in range(d)] + [f"Im psi_{j + 1}" for j in range(d)]
                + ["Re phi", "Im phi"])
        buf.write(",".join(head) + "\n")
        for k in range(self.grid.size):
            row = [self.grid[k], *self.psi[k].real, *self.psi[k].imag, self.phi[k].real, self.phi[k].imag]
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def invariance_violations(self, m: int) -> list[int]:
        """Grid indices where Re psi leaves R_-^m although Re u0 was in it."""
        if np.any(self.u0[:m].real > 0):
            return []
        bad = np.any(self.psi[:, :m].real > 0, axis=1)
        return np.flatnonzero(bad).tolist()


class _Escape(Exception):
    pass


def _rhs(sys: ExponentSystem, y: np.ndarray) -> np.ndarray:
    psi = y[:-1]
    # NaN fails the comparison too
    if psi.size and not np.abs(psi).max() <= BLOWUP:
        raise _Escape("psi blew up")
    try:
        sys.check_domain(psi)
        out = np.empty_like(y)
        out[:-1] = sys.R(psi)
        out[-1] = sys.F(psi)
    except DomainError as e:
        raise _Escape(f"psi left the exponent domain ({e.component})") from None
    return out


def _rk4(sys, y, h):
    k1 = _rhs(sys, y)
    k2 = _rhs(sys, y + 0.5 * h * k1)
    k3 = _rhs(sys, y + 0.5 * h * k2)
    k4 = _rhs(sys, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def solve_riccati(sys: ExponentSystem, u0, t_max: float, tol: float = 1e-10,
                  max_step: float | None = None) -> RiccatiSolution:
    """Integrate ``psi' = R(psi)``, ``phi' = F(psi)`` from ``(u0, 0)`` to ``t_max``.

    Blow-up (``|psi|`` beyond 1e12, leaving the exponent domain, or step
    underflow) ends the integration early and is reported through
    ``escape_time``; it is not an error.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    u0 = np.asarray(u0, dtype=complex).reshape(-1)
    if u0.shape != (sys.dim,):
        raise ValueError(f"u0 must have length {sys.dim}")
    sys.check_domain(u0)
    h_max = max_step if max_step is not None else (t_max / 16 if t_max > 0 else 1.0)
    h_min = 1e-14 * max(t_max, 1.0)
    y = np.concatenate([u0, [0j]])
    ts, ys = [0.0], [y]
    t, h = 0.0, h_max
    rejected, largest = 0, 0.0
    escape, reason = math.inf, ""
    while t < t_max:
        h = min(h, t_max - t)
        try:
            while True:
                full = _rk4(sys, y, h)
                half = _rk4(sys, _rk4(sys, y, h / 2), h / 2)
                err = float(np.max(np.abs(full - half)))
                if err < tol * max(1.0, float(np.max(np.abs(half)))):
                    break
                rejected += 1
                h /= 2
                if h < h_min:
                    raise _Escape("step underflow")
        except _Escape as e:
            escape, reason = t, str(e)
            break
        y = half + (half - full) / 15.0
        # last step lands exactly on t_max
        t = t_max if t_max - (t + h) < h_min else t + h
        largest = max(largest, h)
        ts.append(t)
        ys.append(y)
        h = min(2 * h, h_max)
    arr = np.array(ys)
    return RiccatiSolution(u0, np.array(ts), arr[:, :-1], arr[:, -1], largest, rejected, escape, reason)


def analytic_laplace(sol: RiccatiSolution, z) -> np.ndarray:
    """``exp(z . psi(t) + phi(t))`` along the solution grid."""
    z = np.asarray(z, dtype=float).reshape(-1)
    return np.exp(sol.psi @ z + sol.phi)


def laplace_oracle(sys: ExponentSystem, u0, z, t: float, tol: float = 1e-10) -> complex | None:
    """``E_z exp(u0 . Z_t)`` from the Riccati flow.

    None if the flow escapes before ``t`` or ``|E_z exp(u0 . Z_s)|`` drops
    below ``ORACLE_FLOOR`` for some ``s <= t``.
    """
    sol = solve_riccati(sys, u0, t, tol)
    if sol.escaped:
        return None
    values = analytic_laplace(sol, z)
    if np.min(np.abs(values)) < ORACLE_FLOOR:
        return None
    return complex(values[-1])


@dataclass(frozen=True)
class SemiflowReport:
    psi_residual: float
    phi_residual: float
    passed: bool
    tol: float


def check_semiflow(sys: ExponentSystem, u0, s: float, t: float, tol: float = 1e-7,
                   ode_tol: float = 1e-11) -> SemiflowReport:
    """Compare ``(psi, phi)(t + s, u)`` with the composed flow through ``psi(t, u)``."""
    whole = solve_riccati(sys, u0, t + s, ode_tol)
    first = solve_riccati(sys, u0, t, ode_tol)
    second = solve_riccati(sys, first.psi[-1], s, ode_tol)
    if whole.escaped or first.escaped or second.escaped:
        return SemiflowReport(math.inf, math.inf, False, tol)
    dpsi = float(np.max(np.abs(whole.psi[-1] - second.psi[-1]), initial=0.0))
    dphi = abs(complex(whole.phi[-1] - (first.phi[-1] + second.phi[-1])))
    return SemiflowReport(dpsi, dphi, max(dpsi, dphi) < tol, tol)
