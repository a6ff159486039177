"""Versioned JSON experiment configuration with line-anchored validation.

A config file looks like::

    {
      "schema": "fslab/1",
      "seed": 7,
      "verify-fs": {"n": 1, "lambdas": [0.1, 0.03, 0.01]}
    }

Each subcommand reads its own block; missing keys take defaults.  Every
value is checked, and every domain object built, before any computation.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from fslab.errors import ConfigError, FslabError
from fslab.spectral import Potential
from fslab.walks import StepKernel, TiltPotential
from fslab.wulff import DirectionalEnergy

SCHEMA = "fslab/1"
SUBCOMMANDS = ("spectrum", "fs-sim", "walks", "verify-fs", "wulff", "dcvp", "mcvp", "stack",
               "saw", "constants")
DEFAULT_SEED = 20240917
_TOP_KEYS = {"schema", "seed", "workers", *SUBCOMMANDS}


class _Locator:
    """Map a key path to the line where it appears in the source text."""

    def __init__(self, text: str | None):
        self.lines = text.splitlines() if text else []

    def line(self, path: tuple) -> int | None:
        start = 0
        found = None
        for key in path:
            pat = re.compile(r'"%s"\s*:' % re.escape(str(key)))
            for i in range(start, len(self.lines)):
                if pat.search(self.lines[i]):
                    found = i + 1
                    start = i
                    break
            else:
                return found
        return found


class Block:
    """Typed access to one parameter block; unknown keys are rejected."""

    def __init__(self, data: dict, path: tuple, loc: _Locator, source: str | None):
        if not isinstance(data, dict):
            raise ConfigError(f"block {'.'.join(path)} must be an object", loc.line(path), source)
        self.data = data
        self.path = path
        self.loc = loc
        self.source = source
        self.used: dict = {}

    def error(self, key, message) -> ConfigError:
        where = ".".join(str(p) for p in self.path + (key,))
        return ConfigError(f"{where}: {message}", self.loc.line(self.path + (key,)), self.source)

    def get(self, key, kind, default=None, check=None, required=False):
        if key not in self.data:
            if required:
                raise self.error(key, "is required")
            self.used[key] = default
            return default
        raw = self.data[key]
        try:
            value = kind(raw)
        except (TypeError, ValueError) as exc:
            raise self.error(key, f"invalid value {raw!r} ({exc})") from None
        if check is not None:
            msg = check(value)
            if msg:
                raise self.error(key, msg)
        self.used[key] = value
        return value

    def sub(self, key) -> "Block":
        return Block(self.data.get(key, {}), self.path + (key,), self.loc, self.source)

    def finish(self) -> dict:
        extra = set(self.data) - set(self.used)
        if extra:
            raise self.error(sorted(extra)[0], "unknown key")
        return dict(self.used)


# value converters ----------------------------------------------------------


def _int(x):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or x != int(x):
        raise ValueError("expected an integer")
    return int(x)


def _float(x):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ValueError("expected a finite number")
    return float(x)


def _bool(x):
    if not isinstance(x, bool):
        raise ValueError("expected true or false")
    return x


def _str(x):
    if not isinstance(x, str):
        raise ValueError("expected a string")
    return x


def _list_of(conv):
    def inner(x):
        if isinstance(x, (int, float)) and not isinstance(x, bool):
            x = [x]
        if not isinstance(x, list) or not x:
            raise ValueError("expected a non-empty list")
        return [conv(v) for v in x]
    return inner


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be non-negative"


def _at_least(m):
    return lambda v: None if v >= m else f"must be >= {m}"


def _one_of(*opts):
    return lambda v: None if v in opts else f"must be one of {', '.join(map(str, opts))}"


def _all(check):
    def inner(vs):
        for v in vs:
            msg = check(v)
            if msg:
                return msg
        return None
    return inner


# domain-object readers -------------------------------------------------------


def _domain(block: Block, key: str, build):
    try:
        return build()
    except (FslabError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise block.error(key, str(exc)) from None


def read_kernel(parent: Block, key: str = "kernel") -> tuple:
    raw = parent.data.get(key, "simple")
    if isinstance(raw, str):
        spec = parent.get(key, _str, "simple", _one_of("simple", "lazy"))
        kernel = StepKernel.simple() if spec == "simple" else StepKernel.lazy(0.5)
        return kernel, spec
    b = parent.sub(key)
    steps = b.get("steps", lambda d: {str(k): _float(v) for k, v in dict(d).items()}, required=True)
    resolved = b.finish()
    parent.used[key] = resolved
    kernel = _domain(parent, key, lambda: StepKernel.from_mapping({int(k): v for k, v in steps.items()}))
    return kernel, resolved


def read_tilt(parent: Block, key: str = "tilt", lam_required: bool = False) -> tuple:
    b = parent.sub(key)
    form = b.get("form", _str, "power", _one_of("power", "tabulated"))
    if form == "power":
        lam = b.get("lam", _float, None if lam_required else 0.01, _non_negative)
        alpha = b.get("alpha", _float, 1.0, _positive)
        resolved = b.finish()
        tilt = None if lam is None else _domain(b, "lam", lambda: TiltPotential.power_law(lam, alpha))
    else:
        heights = b.get("heights", _list_of(_float), required=True)
        values = b.get("values", _list_of(_float), required=True)
        eps = b.get("eps", _float, 1e-6, _positive)
        resolved = b.finish()
        tilt = _domain(b, "values", lambda: TiltPotential.tabulated(heights, values, eps))
    parent.used[key] = resolved
    return tilt, resolved


def read_potential(parent: Block, key: str = "potential") -> tuple:
    b = parent.sub(key)
    form = b.get("form", _str, "power", _one_of("power", "tabulated", "box"))
    sigma2 = b.get("sigma2", _float, 1.0, _positive)
    if form == "power":
        c = b.get("c", _float, 1.0, _positive)
        alpha = b.get("alpha", _float, 1.0, _positive)
        build = lambda: Potential.power(c, alpha, math.sqrt(sigma2))  # noqa: E731
    elif form == "tabulated":
        radii = b.get("radii", _list_of(_float), required=True)
        values = b.get("values", _list_of(_float), required=True)
        build = lambda: Potential.tabulated(radii, values, math.sqrt(sigma2))  # noqa: E731
    else:
        build = lambda: Potential.box(math.sqrt(sigma2))  # noqa: E731
    resolved = b.finish()
    parent.used[key] = resolved
    return _domain(b, "form", build), resolved


def read_energy(parent: Block, key: str = "energy") -> tuple:
    b = parent.sub(key)
    form = b.get("form", _str, "isotropic", _one_of("isotropic", "fourier", "l1", "tabulated"))
    if form == "isotropic":
        rho = b.get("rho", _float, 1.0, _positive)
        build = lambda: DirectionalEnergy.isotropic(rho)  # noqa: E731
    elif form == "fourier":
        base = b.get("base", _float, 1.0, _positive)
        coeffs = b.get("coeffs", _list_of(_float), required=True)
        build = lambda: DirectionalEnergy.fourier(coeffs, base)  # noqa: E731
    elif form == "l1":
        build = DirectionalEnergy.l1
    else:
        angles = b.get("angles", _list_of(_float), required=True)
        values = b.get("values", _list_of(_float), required=True)
        build = lambda: DirectionalEnergy.tabulated(angles, values)  # noqa: E731
    resolved = b.finish()
    parent.used[key] = resolved
    return _domain(b, "form", build), resolved


# per-subcommand schemas ------------------------------------------------------


def _spectral_grid(b: Block, R=20.0, h=2e-3):
    R = b.get("R", _float, R, _positive)
    h = b.get("h", _float, h, _positive)
    if abs(R / h - round(R / h)) > 1e-9 * R / h:
        raise b.error("h", "R/h must be an integer")
    return R, h


def _schema_spectrum(b: Block) -> dict:
    obj = {}
    obj["potential"], _ = read_potential(b)
    _spectral_grid(b, 30.0, 1e-3)
    b.get("k", _int, 5, _at_least(1))
    b.get("stride", _int, 10, _at_least(1))
    return obj


def _schema_fs_sim(b: Block) -> dict:
    obj = {}
    obj["potential"], _ = read_potential(b)
    _spectral_grid(b, 30.0, 1e-3)
    n = b.get("n", _int, 1, _at_least(1))
    b.get("x0", _list_of(_float), [1.0 + i for i in reversed(range(n))], _all(_positive))
    b.get("dt", _float, 1e-4, _positive)
    b.get("steps", _int, 10**6, _at_least(1))
    b.get("record_every", _int, 10, _at_least(1))
    b.get("chains", _int, 1, _at_least(1))
    b.get("trajectory_stride", _int, 100, _at_least(1))
    sg = b.sub("semigroup")
    sg_used = {
        "t": sg.get("t", _float, 1.0, _positive),
        "paths": sg.get("paths", _int, 0, _non_negative),
        "dt": sg.get("dt", _float, 1e-3, _positive),
    }
    sg.finish()
    b.used["semigroup"] = sg_used
    x0 = b.used["x0"]
    if len(x0) != n:
        raise b.error("x0", f"needs {n} entries")
    if any(x0[i] <= x0[i + 1] for i in range(n - 1)):
        raise b.error("x0", "must be strictly decreasing")
    if x0[0] >= b.used["R"]:
        raise b.error("x0", "must lie inside (0, R)")
    return obj


def _schema_walks(b: Block) -> dict:
    obj = {}
    n = b.get("n", _int, 1, _at_least(1))
    N = b.get("N", _int, 50, _at_least(1))
    u = b.get("u", _list_of(_int), [0] * n)
    v = b.get("v", _list_of(_int), [0] * n)
    M = b.get("M", _int, None, _at_least(0))
    kernel, _ = read_kernel(b)
    tilt, _ = read_tilt(b)
    mode = b.get("mode", _str, "exact", _one_of("exact", "mcmc"))
    t = b.get("t", _int, 0)
    b.get("sweeps", _int, 10**5, _at_least(1))
    b.get("thin", _int, 1, _at_least(1))
    b.get("burn_in", _int, 1000, _non_negative)
    b.get("chains", _int, 1, _at_least(1))
    b.get("budget", _int, 10**9, _at_least(1))
    from fslab.walks import EnsembleSpec

    obj["spec"] = _domain(b, "u", lambda: EnsembleSpec(n, N, tuple(u), tuple(v), kernel, tilt, M))
    if not -N <= t <= N or (mode == "mcmc" and not -N < t < N):
        raise b.error("t", "record time must lie inside the window")
    return obj


def _schema_verify_fs(b: Block) -> dict:
    obj = {}
    n = b.get("n", _int, 1, _check_paths)
    b.get("lambdas", _list_of(_float), [0.1, 0.03, 0.01], _all(_positive))
    obj["kernel"], _ = read_kernel(b)
    b.get("alpha", _float, 1.0, _positive)
    b.get("N_factor", _float, 10.0, _at_least(1.0))
    b.get("boundary_C", _float, 1.0, _non_negative)
    b.get("probe_boundary", _bool, True)
    _spectral_grid(b, 20.0, 2e-3)
    b.get("sweeps", _int, 10**6, _at_least(1))
    b.get("thin", _int, 1, _at_least(1))
    b.get("burn_in", _int, 10**4, _non_negative)
    b.get("chains", _int, 1, _at_least(1))
    b.get("exact_budget", _int, 10**8, _at_least(1))
    b.get("max_updates", _int, 10**11, _at_least(1))
    lams = b.used["lambdas"]
    if len(set(lams)) != len(lams):
        raise b.error("lambdas", "values must be distinct")
    return obj


def _check_paths(n):
    return None if 1 <= n <= 8 else "must be between 1 and 8"


def _schema_wulff(b: Block) -> dict:
    obj = {}
    obj["energy"], _ = read_energy(b)
    b.get("K", _int, 720, lambda K: None if K >= 8 and K % 4 == 0 else "must be a multiple of 4, >= 8")
    b.get("normalization", _str, "unit-radius", _one_of("raw", "unit-volume", "unit-radius"))
    return obj


def _schema_dcvp(b: Block) -> dict:
    obj = {}
    obj["energy"], _ = read_energy(b)
    b.get("nu", _list_of(_float), [3.0], _all(_non_negative))
    b.get("grid_points", _int, 100_000, _at_least(16))
    return obj


def _schema_mcvp(b: Block) -> dict:
    obj = {}
    obj["energy"], _ = read_energy(b)
    b.get("D", _float, 1.0, _positive)
    lo = b.get("a_min", _float, 0.0, _non_negative)
    b.get("a_max", _float, 30.0, lambda v: None if v > lo else "must exceed a_min")
    b.get("a_steps", _int, 61, _at_least(2))
    b.get("starts", _int, 32, _at_least(1))
    b.get("refine_tol", _float, 1e-4, _positive)
    return obj


def _schema_stack(b: Block) -> dict:
    obj = {}
    obj["energy"], _ = read_energy(b)
    b.get("beta", _float, 1.0, _positive)
    b.get("N", _float, 1e6, _at_least(1.0))
    b.get("cbar", _float, 1.0, _positive)
    return obj


def _schema_saw(b: Block) -> dict:
    from fslab.saw import LOG_MU_C

    b.get("beta", _float, 1.5, lambda v: None if v > LOG_MU_C else f"must exceed log mu_c = {LOG_MU_C:.4f}")
    b.get("lambdas", _list_of(_float), [0.0, 0.5, 1.0], _all(_non_negative))
    b.get("N", _int, 2, _at_least(1))
    b.get("x", _int, 0, _non_negative)
    b.get("y", _int, 0, _non_negative)
    b.get("max_length", _int, 12, _non_negative)
    b.get("eps", _float, 0.5, lambda v: None if 0 < v <= 1 else "must lie in (0, 1]")
    b.get("budget", _int, 10**7, _at_least(1))
    return {}


def _schema_constants(b: Block) -> dict:
    from fslab.wulff import BETA_C

    obj = {}
    b.get("beta", _list_of(_float), [0.5, 1.0, 2.0, 5.0],
          _all(lambda v: None if v > BETA_C else f"must exceed beta_c = {BETA_C:.6f}"))
    b.get("m_star", _float, 1.0, _positive)
    obj["energy"], _ = read_energy(b)
    return obj


SCHEMAS = {
    "spectrum": _schema_spectrum,
    "fs-sim": _schema_fs_sim,
    "walks": _schema_walks,
    "verify-fs": _schema_verify_fs,
    "wulff": _schema_wulff,
    "dcvp": _schema_dcvp,
    "mcvp": _schema_mcvp,
    "stack": _schema_stack,
    "saw": _schema_saw,
    "constants": _schema_constants,
}


@dataclass
class ExperimentConfig:
    """A validated parameter block plus the domain objects built from it."""

    subcommand: str
    params: dict
    objects: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    workers: int | None = None
    source: str | None = None

    def canonical(self) -> str:
        return json.dumps({"schema": SCHEMA, "subcommand": self.subcommand, "seed": self.seed,
                           "params": self.params}, sort_keys=True, separators=(",", ":"))


def parse_config(text: str | None, subcommand: str, overrides: dict | None = None,
                 source: str | None = None) -> ExperimentConfig:
    """Parse and validate; raises ``ConfigError`` with a line number where possible."""
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    doc = {}
    if text is not None:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc.msg}", exc.lineno, source) from None
        if not isinstance(doc, dict):
            raise ConfigError("top level must be an object", 1, source)
    loc = _Locator(text)
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"unsupported schema {schema!r} (expected {SCHEMA!r})", loc.line(("schema",)), source)
    for key in doc:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown top-level key {key!r}", loc.line((key,)), source)
    top = Block(doc, (), loc, source)
    seed = top.get("seed", _int, DEFAULT_SEED, _non_negative)
    workers = top.get("workers", _int, None, _at_least(1))
    data = dict(doc.get(subcommand, {}))
    if overrides:
        data.update(overrides)
    block = Block(data, (subcommand,), loc, source)
    objects = SCHEMAS[subcommand](block)
    params = block.finish()
    return ExperimentConfig(subcommand, params, objects, seed, workers, source)


def load_config(path: str | Path | None, subcommand: str, overrides: dict | None = None) -> ExperimentConfig:
    if path is None:
        return parse_config(None, subcommand, overrides)
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    return parse_config(text, subcommand, overrides, str(p))
