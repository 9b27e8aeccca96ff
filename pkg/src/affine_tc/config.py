"""YAML run configurations, presets and model builders.

A config has four sections besides ``schema_version`` and ``seed``:
``model``, ``solver``, ``experiment`` and ``gw``.  A top-level ``preset``
names a shipped config that the file overrides key by key.  Every accepted
key is listed in :data:`KEYS`; unknown keys and bad values are reported with
the line they sit on.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .gw import GwSpec, OffspringLaw, Scaling
from .levy import DeterministicSpec, DomainError, LevySpec, SpecError
from .riccati import build_exponents
from .solver import AffineModel, ModelError

SCHEMA_VERSION = 1

# dotted key -> help text; ``*`` stands for a list index
KEYS = {
    "schema_version": "config format version (must be 1)",
    "preset": "name of a shipped preset this file overrides",
    "seed": "master seed of all random streams",
    "model.m": "number of branching coordinates",
    "model.n": "number of OU coordinates",
    "model.z0": "initial state, length m+n (branching part >= 0)",
    "model.beta": "n x n mean-reversion matrix, row convention (list of rows)",
    "model.cap": "explosion cap on each branching clock C^j",
    "model.x": "list of m branching driver specs (dimension m+n)",
    "model.y": "immigration driver spec (dimension m+n)",
    "driver.drift": "drift vector",
    "driver.gaussian_cov": "Gaussian covariance matrix (symmetric PSD)",
    "driver.jumps": "list of jump components",
    "driver.polynomial": "deterministic driver: per-coordinate coefficients of s**0, s**1, ...",
    "jump.kind": "compound_poisson | gamma_subordinator | stable_spectrally_positive",
    "jump.rate": "compound Poisson rate, or gamma rate",
    "jump.law": "compound Poisson jump law: point_mass | exponential | discrete",
    "jump.vector": "point_mass jump vector",
    "jump.mean": "exponential jump mean",
    "jump.coord": "coordinate (0-based) of exponential, gamma or stable components",
    "jump.support": "discrete jump support vectors",
    "jump.probs": "discrete jump probabilities",
    "jump.shape": "gamma shape per unit time",
    "jump.alpha": "stable index in (1, 2)",
    "jump.scale": "stable scale",
    "solver.choice": "exact | euler",
    "solver.span": "Euler span sigma",
    "solver.mesh": "driver mesh (cell width of sampled paths)",
    "solver.t_max": "time horizon",
    "solver.report_step": "simulate: write trajectory rows only at multiples of this step (plus the last row)",
    "experiment.u": "transform argument, length m+n; numbers or complex strings like '-1+0.5j'",
    "experiment.t": "target time of the transform",
    "experiment.n_paths": "Monte Carlo paths",
    "experiment.gate": "z-score gate of verify",
    "experiment.tol": "Riccati step tolerance",
    "experiment.workers": "worker threads",
    "experiment.conditional": "drop exploded paths from the mean",
    "experiment.spans": "Euler spans of euler-study",
    "experiment.driver_seeds": "seeds of the driver sets of euler-study",
    "experiment.ladder": "GW scaling indices l",
    "experiment.n_runs": "GW runs per ladder index",
    "gw.m": "number of GW types",
    "gw.laws": "offspring law per parent type: kind geometric|poisson|constant|discrete",
    "gw.laws.p": "geometric success probability",
    "gw.laws.base": "poisson means at l = infinity",
    "gw.laws.slope": "poisson mean correction; means = base + slope / l",
    "gw.laws.counts": "constant offspring counts",
    "gw.laws.support": "discrete offspring count vectors",
    "gw.laws.probs": "discrete offspring probabilities",
    "gw.a": "time scale a_l = coef * l**power, given as [coef, power]",
    "gw.b": "space scale per type, list of [coef, power]",
    "gw.k": "initial population per type, list of [coef, power] (rounded)",
    "gw.immigration": "optional Poisson immigration: rate (per type) and scale [coef, power]",
    "gw.immigration.rate": "immigrant rates per type; per-generation means are rate * c_l",
    "gw.immigration.scale": "c_l = coef * l**power, given as [coef, power]",
}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 1,
    "model": {"m": 1, "n": 0, "cap": 1e6},
    "solver": {"choice": "euler", "span": 1e-3, "mesh": 1e-3, "t_max": 1.0},
    "experiment": {"t": 1.0, "n_paths": 100_000, "gate": 4.0, "tol": 1e-10, "workers": 1,
                   "conditional": False, "spans": [2.0 ** -p for p in range(3, 11)],
                   "driver_seeds": [0, 1, 2], "ladder": [8, 16, 32, 64], "n_runs": 20_000},
}

_SECTIONS = {"schema_version", "preset", "seed", "model", "solver", "experiment", "gw"}
_DRIVER_KEYS = {"drift", "gaussian_cov", "jumps", "polynomial"}
_JUMP_KEYS = {"kind", "rate", "law", "vector", "mean", "coord", "support", "probs", "shape", "alpha", "scale"}
_LAW_KEYS = {"kind", "p", "coord", "base", "slope", "counts", "support", "probs"}


class ConfigError(ValueError):
    """Invalid configuration, with source location when known."""


def _to_python(node, path, lines):
    """Plain Python value of a YAML node, recording the line of every key path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            out[key] = _to_python(v, path + (key,), lines)
            lines[path + (key,)] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def _fmt(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset_names() -> list[str]:
    root = resources.files("affine_tc") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    path = resources.files("affine_tc") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return path.read_text()


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated configuration: plain nested dicts with defaults filled in."""

    data: dict
    source: str = "<config>"

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def model(self) -> dict:
        return self.data["model"]

    @property
    def solver(self) -> dict:
        return self.data["solver"]

    @property
    def experiment(self) -> dict:
        return self.data["experiment"]

    @property
    def gw(self) -> dict | None:
        return self.data.get("gw")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def model_hash(self) -> str:
        body = {"model": self.data.get("model"), "gw": self.data.get("gw")}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "RunConfig":
        data = copy.deepcopy(self.data)
        for dotted, value in kw.items():
            if value is None:
                continue
            parts = dotted.split(".")
            cur = data
            for p in parts[:-1]:
                cur = cur.setdefault(p, {})
            cur[parts[-1]] = value
        return RunConfig(data, self.source)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.data == other.data


def load_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate a YAML config (resolving ``preset``)."""
    lines: dict = {}
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{source}: {e}") from None
    raw = _to_python(node, (), lines) if node is not None else {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")

    def err(path, msg):
        line = None
        p = tuple(path)
        while p and p not in lines:
            p = p[:-1]
        line = lines.get(p)
        where = f"{source}:{line}" if line else source
        return ConfigError(f"{where}: {_fmt(path)}: {msg}")

    for k in raw:
        if k not in _SECTIONS:
            raise err((k,), f"unknown key; expected one of {sorted(_SECTIONS)}")
    base = copy.deepcopy(DEFAULTS)
    if "preset" in raw:
        name = raw["preset"]
        try:
            pre = load_config(preset_text(str(name)), f"preset:{name}").data
        except ConfigError as e:
            raise err(("preset",), str(e)) from None
        base = _merge(base, pre)
        # a model given in full replaces the preset's model
    data = _merge(base, raw)
    if raw.get("model") and "preset" in raw and {"m", "n"} & set(raw["model"]):
        data["model"] = _merge(DEFAULTS["model"], raw["model"])
    if data.get("schema_version") != SCHEMA_VERSION:
        raise err(("schema_version",), f"unsupported schema version {data.get('schema_version')!r}; expected {SCHEMA_VERSION}")
    cfg = RunConfig(data, source)
    _validate(cfg, err)
    return cfg


def load_config_file(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read(), path)


def _check_keys(d, allowed, path, err):
    if not isinstance(d, dict):
        raise err(path, "expected a mapping")
    for k in d:
        if k not in allowed:
            raise err(path + (k,), f"unknown key; expected one of {sorted(allowed)}")


def _validate(cfg: RunConfig, err) -> None:
    d = cfg.data
    _check_keys(d["model"], {"m", "n", "z0", "beta", "cap", "x", "y"}, ("model",), err)
    _check_keys(d["solver"], {"choice", "span", "mesh", "t_max", "report_step"}, ("solver",), err)
    _check_keys(d["experiment"], {k.split(".")[1] for k in KEYS if k.startswith("experiment.")},
                ("experiment",), err)
    if d["solver"]["choice"] not in ("exact", "euler"):
        raise err(("solver", "choice"), "must be 'exact' or 'euler'")
    for key in ("span", "mesh", "t_max"):
        v = d["solver"][key]
        if not isinstance(v, (int, float)) or not v > 0:
            raise err(("solver", key), f"must be a positive number, got {v!r}")
    rs = d["solver"].get("report_step")
    if rs is not None and (not isinstance(rs, (int, float)) or not rs > 0):
        raise err(("solver", "report_step"), f"must be a positive number, got {rs!r}")
    if not isinstance(d["seed"], int) or d["seed"] < 0:
        raise err(("seed",), "must be a non-negative integer")
    if "x" in d["model"] or "y" in d["model"]:
        try:
            model = build_model(cfg)
        except (ModelError, SpecError, ValueError, TypeError, KeyError) as e:
            raise err(("model",) + _locate(e), str(e)) from None
        if "u" in d["experiment"]:
            try:
                u = parse_u(d["experiment"]["u"], model.dim)
            except ValueError as e:
                raise err(("experiment", "u"), str(e)) from None
            for j in range(model.m):
                if u[j].real > 0:
                    raise err(("experiment", "u", j),
                              f"coordinate {j + 1} has Re u = {u[j].real} > 0; branching coordinates need Re u <= 0")
            if not any(isinstance(s, DeterministicSpec) for s in (*model.x_specs, model.y_spec)):
                try:
                    build_exponents(model).check_domain(u)
                except DomainError as e:
                    raise err(("experiment", "u", e.coordinate), str(e)) from None
    if d.get("gw") is not None:
        try:
            build_gw(cfg)
        except (ValueError, TypeError, KeyError) as e:
            raise err(("gw",) + _locate(e), str(e)) from None


def _locate(e) -> tuple:
    return getattr(e, "config_path", ())


def _tag(e, path):
    e.config_path = path
    return e


def parse_u(raw, dim: int) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != dim:
        raise ValueError(f"u must be a list of length {dim}")
    out = []
    for v in raw:
        try:
            out.append(complex(str(v).replace(" ", "")) if isinstance(v, str) else complex(v))
        except ValueError:
            raise ValueError(f"cannot read {v!r} as a complex number") from None
    return np.array(out, dtype=complex)


def _driver(block, dim: int, path):
    if block is None:
        return LevySpec(dim)
    if not isinstance(block, dict):
        raise _tag(TypeError("driver spec must be a mapping"), path)
    for k in block:
        if k not in _DRIVER_KEYS:
            raise _tag(ValueError(f"unknown driver key {k!r}; expected one of {sorted(_DRIVER_KEYS)}"), path + (k,))
    if "polynomial" in block:
        try:
            return DeterministicSpec(dim, block["polynomial"])
        except SpecError as e:
            raise _tag(e, path + ("polynomial",))
    for i, j in enumerate(block.get("jumps", []) or []):
        if not isinstance(j, dict):
            raise _tag(TypeError("jump component must be a mapping"), path + ("jumps", i))
        for k in j:
            if k not in _JUMP_KEYS:
                raise _tag(ValueError(f"unknown jump key {k!r}"), path + ("jumps", i, k))
    try:
        return LevySpec.from_dict(dim, block)
    except (SpecError, KeyError, TypeError, ValueError) as e:
        raise _tag(SpecError(str(e)), path) from None


def build_model(cfg: RunConfig) -> AffineModel:
    md = cfg.model
    m, n = int(md["m"]), int(md["n"])
    d = m + n
    xs = md.get("x") or []
    if len(xs) != m:
        raise _tag(ModelError(f"need {m} driver specs under x, got {len(xs)}"), ("x",))
    x_specs = tuple(_driver(b, d, ("x", i)) for i, b in enumerate(xs))
    y = _driver(md.get("y"), d, ("y",))
    beta = md.get("beta") or np.zeros((n, n))
    z0 = md.get("z0", [0.0] * d)
    try:
        return AffineModel(m, n, x_specs, y, np.asarray(beta, dtype=float).reshape(n, n), z0, float(md["cap"]))
    except ModelError as e:
        raise _tag(e, ()) from None


def build_gw(cfg: RunConfig) -> GwSpec:
    g = cfg.gw
    if g is None:
        raise ValueError("config has no gw section")
    _check_keys(g, {"m", "laws", "a", "b", "k", "immigration"}, (), lambda p, msg: _tag(ValueError(msg), p))
    m = int(g["m"])
    laws = []
    for i, law in enumerate(g["laws"]):
        for k in law:
            if k not in _LAW_KEYS:
                raise _tag(ValueError(f"unknown offspring-law key {k!r}"), ("laws", i, k))
        kw = {k: v for k, v in law.items() if k != "kind"}
        for key in ("base", "slope", "counts", "probs"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "support" in kw:
            kw["support"] = tuple(tuple(v) for v in kw["support"])
        if law["kind"] == "geometric":
            kw.setdefault("coord", i)
        laws.append(OffspringLaw(law["kind"], m, **kw))
    imm = g.get("immigration") or {}
    for k in imm:
        if k not in ("rate", "scale"):
            raise _tag(ValueError(f"unknown immigration key {k!r}"), ("immigration", k))
    return GwSpec(m, tuple(laws), Scaling(*g["a"]), tuple(Scaling(*s) for s in g["b"]),
                  tuple(Scaling(*s) for s in g["k"]), tuple(imm.get("rate", ())),
                  Scaling(*imm.get("scale", (1.0, 0.0))))


def help_keys() -> str:
    width = max(len(k) for k in KEYS)
    return "\n".join(f"  {k.ljust(width)}  {v}" for k, v in KEYS.items())
