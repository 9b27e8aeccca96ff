"""Multitype Galton-Watson processes as time-changed random walks.

Individuals of type ``i`` are read off a random walk ``X^i`` whose step is
the offspring vector of one individual minus ``e_i``.  With ``k`` ancestors
the recursion

    C_0 = 0,  Z_0 = k,  Z_{n+1} = k + sum_i X^i(C^i_n),  C_{n+1} = C_n + Z_{n+1}

produces a Galton-Watson process; it is the span-1 Euler scheme on the walks
held constant on ``[n, n+1)``, with ``Z_{n+1}`` equal to the Euler state at
step ``n`` (generation ``n``).

Under a scaling ``a_l`` (time), ``b_l`` (space) the rescaled process
``(a_l / b_l) Z_{a_l t}`` approaches a continuous-state branching process whose
drivers are Brownian motions with drift, derived here by moment matching.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .levy import LevySpec
from .riccati import build_exponents, laplace_oracle
from .solver import AffineModel
from .streams import GW, StreamKey

POP_LIMIT = 2 ** 53


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring vector law of one parent type.

    ``kind`` is ``geometric`` (single child type ``coord``, P(k) = p (1-p)^k),
    ``poisson`` (independent Poisson counts with means ``base + slope / l``),
    ``constant`` (fixed ``counts``) or ``discrete`` (``support`` vectors with
    ``probs``).
    """

    kind: str
    m: int
    p: float = 0.5
    coord: int = 0
    base: tuple = ()
    slope: tuple = ()
    counts: tuple = ()
    support: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.kind == "geometric":
            if not 0 < self.p <= 1:
                raise ValueError(f"geometric parameter must lie in (0, 1], got {self.p}")
        elif self.kind == "poisson":
            base = tuple(float(x) for x in self.base)
            slope = tuple(float(x) for x in (self.slope or (0.0,) * self.m))
            if len(base) != self.m or len(slope) != self.m:
                raise ValueError("poisson law needs base and slope of length m")
            object.__setattr__(self, "base", base)
            object.__setattr__(self, "slope", slope)
        elif self.kind == "constant":
            counts = tuple(int(x) for x in self.counts)
            if len(counts) != self.m or min(counts) < 0:
                raise ValueError("constant law needs m nonnegative counts")
            object.__setattr__(self, "counts", counts)
        elif self.kind == "discrete":
            sup = tuple(tuple(int(x) for x in v) for v in self.support)
            probs = tuple(float(x) for x in self.probs)
            if any(len(v) != self.m or min(v) < 0 for v in sup) or len(sup) != len(probs):
                raise ValueError("discrete law needs nonnegative count vectors of length m, one per probability")
            if abs(math.fsum(probs) - 1) > 1e-12 or min(probs) < 0:
                raise ValueError("discrete probabilities must be >= 0 and sum to 1")
            object.__setattr__(self, "support", sup)
            object.__setattr__(self, "probs", probs)
        else:
            raise ValueError(f"unknown offspring law {self.kind!r}")

    def means(self, l: float) -> np.ndarray:
        if self.kind == "geometric":
            out = np.zeros(self.m)
            out[self.coord] = (1 - self.p) / self.p
            return out
        if self.kind == "poisson":
            return np.array(self.base) + np.array(self.slope) / l
        if self.kind == "constant":
            return np.array(self.counts, dtype=float)
        return np.array(self.probs) @ np.array(self.support, dtype=float)

    def covariance(self, l: float) -> np.ndarray:
        if self.kind == "geometric":
            out = np.zeros((self.m, self.m))
            out[self.coord, self.coord] = (1 - self.p) / self.p ** 2
            return out
        if self.kind == "poisson":
            return np.diag(self.means(l))
        if self.kind == "constant":
            return np.zeros((self.m, self.m))
        sup = np.array(self.support, dtype=float)
        mu = self.means(l)
        dev = sup - mu
        return (dev * np.array(self.probs)[:, None]).T @ dev

    def generating_function(self, s: np.ndarray, l: float) -> float:
        """``E prod_j s_j^{xi_j}`` for one offspring vector ``xi``, ``s`` in ``[0, 1]^m``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "geometric":
            return self.p / (1 - (1 - self.p) * s[self.coord])
        if self.kind == "poisson":
            return math.exp(float(self.means(l) @ (s - 1)))
        if self.kind == "constant":
            return float(np.prod(s ** np.array(self.counts)))
        sup = np.array(self.support, dtype=float)
        return float(np.array(self.probs) @ np.prod(s[None, :] ** sup, axis=1))

    def sample_sums(self, rng: np.random.Generator, n: np.ndarray, l: float) -> np.ndarray:
        """Total offspring of ``n`` individuals, per run: shape ``(len(n), m)``."""
        n = np.asarray(n, dtype=np.int64)
        out = np.zeros((n.size, self.m), dtype=np.int64)
        pos = n > 0
        if self.kind == "geometric":
            if self.p == 1:
                return out
            out[pos, self.coord] = rng.negative_binomial(n[pos], self.p)
        elif self.kind == "poisson":
            mu = self.means(l)
            for j in range(self.m):
                if mu[j] > 0:
                    out[:, j] = rng.poisson(mu[j] * n)
        elif self.kind == "constant":
            out[:] = n[:, None] * np.array(self.counts, dtype=np.int64)[None, :]
        else:
            tallies = rng.multinomial(n, np.array(self.probs))
            out[:] = tallies @ np.array(self.support, dtype=np.int64)
        return out

    def sample(self, rng: np.random.Generator, k: int, l: float) -> np.ndarray:
        """``k`` individual offspring vectors, shape ``(k, m)``."""
        return self.sample_sums(rng, np.ones(k, dtype=np.int64), l)


@dataclass(frozen=True)
class Scaling:
    """``coef * l**power``."""

    coef: float
    power: float

    def __call__(self, l: float) -> float:
        return self.coef * float(l) ** self.power


@dataclass(frozen=True)
class GwSpec:
    m: int
    laws: tuple                 # one OffspringLaw per parent type
    a: Scaling                  # time scale a_l
    b: tuple                    # space scale b_l per type
    k: tuple                    # initial population k_l per type (rounded)
    immigration: tuple = ()     # Poisson immigrant rates per type and generation, times c_l
    c: Scaling = Scaling(1.0, 0.0)

    def __post_init__(self):
        if len(self.laws) != self.m or len(self.b) != self.m or len(self.k) != self.m:
            raise ValueError("need one law, space scale and initial population per type")
        for law in self.laws:
            if law.m != self.m:
                raise ValueError("offspring law dimension does not match the number of types")
        imm = tuple(float(r) for r in self.immigration)
        if imm and (len(imm) != self.m or min(imm) < 0):
            raise ValueError("immigration needs one nonnegative rate per type")
        object.__setattr__(self, "immigration", imm)

    def immigrant_means(self, l: float) -> np.ndarray:
        """Mean immigrants per generation, per type."""
        if not self.immigration:
            return np.zeros(self.m)
        return np.array(self.immigration) * self.c(l)

    def k_l(self, l: float) -> np.ndarray:
        return np.array([int(round(s(l))) for s in self.k], dtype=np.int64)

    def b_l(self, l: float) -> np.ndarray:
        return np.array([s(l) for s in self.b])

    def check_ladder(self, ladder) -> list[str]:
        """Problems with the ladder: it must increase, with ``a_l`` and ``b_l / a_l`` increasing."""
        out = []
        ls = list(ladder)
        if any(b <= a for a, b in zip(ls, ls[1:])):
            out.append("ladder not increasing")
        a = [self.a(l) for l in ls]
        if any(y <= x for x, y in zip(a, a[1:])):
            out.append("a_l not increasing along the ladder")
        for j in range(self.m):
            r = [self.b[j](l) / self.a(l) for l in ls]
            if any(y <= x for x, y in zip(r, r[1:])):
                out.append(f"b_l/a_l not increasing for type {j + 1}")
        return out

    def limit_model(self, ref: float = 1e12) -> AffineModel:
        """Moment-matched Brownian-with-drift limit, evaluated at a large reference index.

        ``X^{i,j}`` gets drift ``a mu_ij`` (with ``mu`` the mean of the step)
        and ``X^{i,i}`` gets variance ``a^2 / b_i * Var``.  Off-diagonal
        fluctuations vanish in the limit and are dropped, so the limit
        drivers off the diagonal are pure drifts.  The initial state is
        ``k a / b``.  Immigration becomes the drift ``c a / b`` times the
        rates; its fluctuations (variance ``c a / b^2``) are dropped.
        """
        m = self.m
        a = self.a(ref)
        b = self.b_l(ref)
        specs = []
        for i, law in enumerate(self.laws):
            mu = law.means(ref)
            mu[i] -= 1.0
            cov = np.zeros((m, m))
            cov[i, i] = law.covariance(ref)[i, i] * a * a / b[i]
            specs.append(LevySpec(m, drift=a * mu, gaussian_cov=cov))
        z0 = self.k_l(ref) * a / b
        y = LevySpec(m, drift=self.immigrant_means(ref) * a / b)
        return AffineModel(m, 0, tuple(specs), y, z0=z0)


@dataclass(frozen=True)
class GwTrajectory:
    """Generations ``0..G``: ``Z[n]`` is generation ``n`` (= ``Z_{n+1}`` of the recursion)."""

    k: np.ndarray
    Z: np.ndarray
    C: np.ndarray
    overflow: bool

    @property
    def recursion_Z(self) -> np.ndarray:
        """The recursion's ``Z_0, Z_1, ...`` (``Z_0 = Z_1 = k``)."""
        return np.vstack([self.k[None, :], self.Z])

    @property
    def recursion_C(self) -> np.ndarray:
        """The recursion's ``C_0 = 0, C_1, ...``."""
        return np.vstack([np.zeros((1, self.k.size), dtype=np.int64), self.C])


class _LazyWalk:
    """Random walk of offspring vectors, materialised in counter-keyed chunks."""

    CHUNK = 4096

    def __init__(self, law: OffspringLaw, i: int, l: float, key: StreamKey):
        self.law, self.i, self.l, self.key = law, i, l, key
        self.cum = np.zeros((1, law.m), dtype=np.int64)

    def __call__(self, c: int) -> np.ndarray:
        while self.cum.shape[0] <= c:
            chunk = (self.cum.shape[0] - 1) // self.CHUNK
            steps = self.law.sample(self.key.generator(chunk), self.CHUNK, self.l)
            steps[:, self.i] -= 1
            self.cum = np.vstack([self.cum, self.cum[-1] + np.cumsum(steps, axis=0)])
        return self.cum[c]


def gw_simulate(spec: GwSpec, l: float, horizon_generations: int, seed: int,
                pop_limit: int = 10 ** 7) -> GwTrajectory:
    """One Galton-Watson run from the recursion, walks extended on demand."""
    m = spec.m
    k = spec.k_l(l)
    walks = [_LazyWalk(spec.laws[i], i, l, StreamKey(int(seed), (GW, 1, i))) for i in range(m)]
    # cumulative immigrants, the span-1 counterpart of Y
    arrivals = StreamKey(int(seed), (GW, 1, m)).generator().poisson(
        spec.immigrant_means(l), size=(horizon_generations, m))
    Y = np.vstack([np.zeros((1, m), dtype=np.int64), np.cumsum(arrivals, axis=0)])
    Z = np.zeros((horizon_generations + 1, m), dtype=np.int64)
    C = np.zeros((horizon_generations + 1, m), dtype=np.int64)
    Z[0] = k
    C[0] = k
    overflow = False
    for n in range(horizon_generations):
        if np.any(C[n] > pop_limit):
            overflow = True
            Z[n + 1:], C[n + 1:] = Z[n], C[n]
            break
        Z[n + 1] = k + sum(walks[i](int(C[n, i])) for i in range(m)) + Y[n + 1]
        C[n + 1] = C[n] + Z[n + 1]
    return GwTrajectory(k, Z, C, overflow)


def gw_ensemble(spec: GwSpec, l: float, generation: int, n_runs: int, seed: int,
                block: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Generation sizes of ``n_runs`` independent runs, shape ``(n_runs, m)``, plus overflow flags.

    Offspring totals of a whole generation are drawn at once (negative
    binomial, Poisson or multinomial sums), which has the law of the
    walk-based recursion.
    """
    m = spec.m
    k = spec.k_l(l)
    out, flags = [], []
    for b in range((n_runs + block - 1) // block):
        size = min(block, n_runs - b * block)
        rngs = [StreamKey(int(seed), (GW, 2, int(l), b)).generator(i) for i in range(m + 1)]
        Z = np.tile(k, (size, 1))
        over = np.zeros(size, dtype=bool)
        imm = spec.immigrant_means(l)
        for _ in range(generation):
            nxt = np.zeros_like(Z)
            for i in range(m):
                nxt += spec.laws[i].sample_sums(rngs[i], Z[:, i], l)
            if imm.any():
                nxt += rngs[m].poisson(imm, size=(size, m))
            over |= np.any(nxt > POP_LIMIT, axis=1)
            Z = np.minimum(nxt, POP_LIMIT)
        out.append(Z)
        flags.append(over)
    return np.concatenate(out), np.concatenate(flags)


@dataclass(frozen=True)
class GwRow:
    l: float
    a: float
    b: tuple
    n_runs: int
    estimate: float
    std_error: float
    oracle: float
    gap: float
    discrete: float             # exact expectation for the Galton-Watson process at this rung


@dataclass(frozen=True)
class GwTable:
    rows: tuple
    u: tuple
    t: float

    @property
    def gaps(self) -> list[float]:
        return [abs(r.gap) for r in self.rows]

    @property
    def shrinking(self) -> bool:
        g = self.gaps
        return all(y < x for x, y in zip(g, g[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        m = len(self.u)
        buf.write("l,a_l," + ",".join(f"b_l{j + 1}" for j in range(m))
                  + ",n_runs,estimate,std_error,oracle,gap,discrete_exact\n")
        for r in self.rows:
            vals = [r.l, r.a, *r.b]
            buf.write(",".join(f"{v:.17g}" for v in vals) + f",{r.n_runs},"
                      + ",".join(f"{v:.17g}" for v in (r.estimate, r.std_error, r.oracle, r.gap, r.discrete))
                      + "\n")
        return buf.getvalue()


def gw_scaling_experiment(spec: GwSpec, ladder, u, t: float, n_runs: int, seed: int) -> GwTable:
    """Empirical ``E exp(u . (a_l / b_l) Z_{a_l t})`` along the ladder versus the limit's Riccati oracle.

    ``Z_{a_l t}`` follows the recursion's indexing, i.e. generation
    ``a_l t - 1``.
    """
    bad = spec.check_ladder(ladder)
    if bad:
        raise ValueError("; ".join(bad))
    u = np.asarray(u, dtype=float).reshape(-1)
    limit = spec.limit_model()
    oracle = laplace_oracle(build_exponents(limit), u, limit.z0, t)
    if oracle is None:
        raise ValueError("Riccati flow of the limit model escapes before t")
    rows = []
    for l in ladder:
        a = spec.a(l)
        b = spec.b_l(l)
        steps = a * t
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"a_l t = {steps} is not an integer at l = {l}")
        gen = max(int(round(steps)) - 1, 0)
        Z, _ = gw_ensemble(spec, l, gen, n_runs, seed)
        vals = np.exp((Z * (a / b)) @ u)
        ref = vals[0]
        mean = float(ref + math.fsum(vals - ref) / vals.size)
        se = float(np.std(vals - ref, ddof=1) / math.sqrt(vals.size))
        exact = discrete_laplace(spec, l, gen, u * a / b)
        rows.append(GwRow(float(l), a, tuple(b), n_runs, mean, se, oracle.real, mean - oracle.real, exact))
    return GwTable(tuple(rows), tuple(u), float(t))


def discrete_laplace(spec: GwSpec, l: float, generation: int, w) -> float:
    """Exact ``E exp(w . Z_generation)`` of the unscaled process at rung ``l``, for ``w <= 0``.

    Iterates the offspring generating functions: with ``F = (f_1, .., f_m)``,
    ``E s^{Z_n} = prod_i (F^n(s))_i^{k_i}``.  Immigrants arriving with ``r``
    generations to go contribute ``exp(lam . (F^r(s) - 1))``.
    """
    s = np.exp(np.asarray(w, dtype=float).reshape(-1))
    lam = spec.immigrant_means(l)
    log_imm = 0.0
    for _ in range(generation):
        log_imm += float(lam @ (s - 1))
        s = np.array([law.generating_function(s, l) for law in spec.laws])
    return float(np.prod(s ** spec.k_l(l)) * math.exp(log_imm))


def geometric_generating_iterate(s: float, n: int) -> float:
    """``f_n(s)`` for critical geometric(1/2) offspring: ``(n - (n-1)s) / ((n+1) - n s)``."""
    return (n - (n - 1) * s) / ((n + 1) - n * s)
