"""Single and ordered random walks under generalised area tilts.

Exact partition functions and marginals come from transfer operators on the
truncated height range {0..M}; sampling is a single-site heat-bath chain
that runs in the compiled core.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Iterator, Sequence

import numpy as np

from fslab import _backend
from fslab.errors import (
    DomainError,
    FeasibilityError,
    NoAdmissiblePathError,
    SizeError,
    UnsolvableScaleError,
)

DEFAULT_BUDGET = 10**9


# ---------------------------------------------------------------------------
# step kernel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepKernel:
    """Finite-support zero-mean step distribution ``p_z`` on the integers.

    ``steps`` is a sequence of ``(offset, weight)`` pairs.  The kernel must
    be irreducible: the offsets generate the integers (their gcd is 1).
    """

    steps: tuple

    def __post_init__(self):
        items = sorted((int(z), float(p)) for z, p in self.steps)
        object.__setattr__(self, "steps", tuple(items))
        offsets = [z for z, _ in items]
        if not items:
            raise DomainError("empty step kernel")
        if len(set(offsets)) != len(offsets):
            raise DomainError("duplicate offsets in step kernel")
        if any(p <= 0.0 for _, p in items):
            raise DomainError("step weights must be strictly positive")
        if abs(sum(p for _, p in items) - 1.0) > 1e-12:
            raise DomainError("step weights must sum to 1")
        if abs(sum(z * p for z, p in items)) > 1e-12:
            raise DomainError("step kernel must have zero mean")
        if reduce(math.gcd, (abs(z) for z in offsets), 0) != 1:
            raise DomainError("step kernel is not irreducible (offsets do not generate Z)")
        if self.variance <= 0.0:
            raise DomainError("step kernel must have positive variance")

    @classmethod
    def simple(cls) -> "StepKernel":
        """The nearest-neighbour walk, +-1 with probability 1/2 each."""
        return cls(((-1, 0.5), (1, 0.5)))

    @classmethod
    def lazy(cls, hold: float = 0.5) -> "StepKernel":
        return cls(((-1, (1 - hold) / 2), (0, hold), (1, (1 - hold) / 2)))

    @classmethod
    def from_mapping(cls, mapping) -> "StepKernel":
        return cls(tuple((int(z), float(p)) for z, p in dict(mapping).items()))

    @property
    def offsets(self) -> np.ndarray:
        return np.array([z for z, _ in self.steps], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p for _, p in self.steps])

    @property
    def variance(self) -> float:
        return float(sum(z * z * p for z, p in self.steps))

    @property
    def lo(self) -> int:
        return self.steps[0][0]

    @property
    def hi(self) -> int:
        return self.steps[-1][0]

    @property
    def period(self) -> int:
        """gcd of pairwise offset differences (2 for the +-1 walk)."""
        zs = [z for z, _ in self.steps]
        return reduce(math.gcd, (abs(z - zs[0]) for z in zs[1:]), 0) or 1

    def table(self) -> np.ndarray:
        """Dense probabilities for offsets ``lo..hi`` (zeros for gaps)."""
        tab = np.zeros(self.hi - self.lo + 1)
        for z, p in self.steps:
            tab[z - self.lo] = p
        return tab

    def prob(self, z: int) -> float:
        for off, p in self.steps:
            if off == z:
                return p
        return 0.0


# ---------------------------------------------------------------------------
# tilt potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TiltPotential:
    """Self-potential ``V`` on heights, power law ``lam * x**alpha`` or tabulated.

    Tabulated potentials are linearly interpolated and undefined past the
    last tabulated height.  ``eps`` sets the divergence check: the table must
    reach ``x**2 V(x) >= 1/eps`` at its last point, i.e. extend far beyond
    the scale ``H``.
    """

    form: str = "power"
    lam: float = 0.0
    alpha: float = 1.0
    heights: tuple = ()
    values: tuple = ()
    eps: float = 1e-6

    def __post_init__(self):
        if self.form == "power":
            if not (self.lam >= 0.0 and math.isfinite(self.lam)):
                raise DomainError("power-law amplitude must be finite and >= 0")
            if not self.alpha > 0.0:
                raise DomainError("power-law exponent must be positive")
        elif self.form == "tabulated":
            x = np.asarray(self.heights, dtype=float)
            y = np.asarray(self.values, dtype=float)
            object.__setattr__(self, "heights", tuple(x.tolist()))
            object.__setattr__(self, "values", tuple(y.tolist()))
            if x.ndim != 1 or x.shape != y.shape or len(x) < 2:
                raise DomainError("tabulated potential needs matching 1-d grids")
            if x[0] != 0.0 or y[0] != 0.0:
                raise DomainError("tabulated potential must start at V(0) = 0")
            if np.any(np.diff(x) <= 0):
                raise DomainError("tabulated heights must be strictly increasing")
            if np.any(np.diff(y) < 0):
                raise DomainError("tabulated potential must be nondecreasing")
            if x[-1] ** 2 * y[-1] < 1.0 / self.eps:
                raise DomainError("tabulated potential does not grow enough over its range")
        else:
            raise DomainError(f"unknown tilt form {self.form!r}")

    @classmethod
    def power_law(cls, lam: float, alpha: float = 1.0) -> "TiltPotential":
        return cls(form="power", lam=float(lam), alpha=float(alpha))

    @classmethod
    def tabulated(cls, heights, values, eps: float = 1e-6) -> "TiltPotential":
        return cls(form="tabulated", heights=tuple(heights), values=tuple(values), eps=eps)

    @classmethod
    def from_function(cls, fn, x_max: float, points: int = 200001, eps: float = 1e-6):
        x = np.linspace(0.0, x_max, points)
        return cls.tabulated(x, fn(x), eps=eps)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("potential evaluated at a negative height")
        if self.form == "power":
            out = self.lam * x**self.alpha
        else:
            if np.any(x > self.heights[-1]):
                raise DomainError("height beyond the tabulated range")
            out = np.interp(x, *self._table)
        return out if out.ndim else float(out)

    @cached_property
    def _table(self) -> tuple:
        return np.asarray(self.heights), np.asarray(self.values)

    @cached_property
    def h_lambda(self) -> float:
        return compute_h_lambda(self)

    def boltzmann(self, M: int) -> np.ndarray:
        """``exp(-V(x))`` for x = 0..M."""
        return np.exp(-np.asarray(self(np.arange(M + 1, dtype=float)), dtype=float))


def compute_h_lambda(tilt: TiltPotential) -> float:
    """Scale ``H`` solving ``H**2 * V(H) = 1``."""
    if tilt.form == "power":
        if tilt.lam <= 0.0:
            raise UnsolvableScaleError("zero tilt has no finite scale")
        return tilt.lam ** (-1.0 / (2.0 + tilt.alpha))

    def g(h):
        return h * h * tilt(h) - 1.0

    lo, hi = 0.0, tilt.heights[-1]
    if g(hi) < 0.0:
        raise UnsolvableScaleError("H^2 V(H) never reaches 1 on the tabulated range")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    root = min((lo, hi), key=lambda h: abs(g(h)))
    if abs(g(root)) > 1e-10:
        raise UnsolvableScaleError(f"scale equation residual {abs(g(root)):.3e} too large")
    return root


def rescaled_potential(tilt: TiltPotential, r):
    """``H**2 * V(r * H)``, which tends to the limit shape ``q(r)``."""
    H = tilt.h_lambda
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("r must be non-negative")
    if tilt.form == "power":
        # factor the powers so tiny r does not pass through a subnormal r * H
        return (H ** (2.0 + tilt.alpha) * tilt.lam) * r ** tilt.alpha
    return H * H * tilt(r * H)


# ---------------------------------------------------------------------------
# ensembles and paths
# ---------------------------------------------------------------------------


def default_cutoff(tilt: TiltPotential) -> int:
    return int(math.ceil(8.0 * tilt.h_lambda))


@dataclass(frozen=True)
class EnsembleSpec:
    """``n`` ordered walks on times ``-N..N`` from ``u`` to ``v`` (index 0 = top)."""

    n: int
    N: int
    u: tuple
    v: tuple
    kernel: StepKernel = field(default_factory=StepKernel.simple)
    tilt: TiltPotential = field(default_factory=TiltPotential)
    M: int | None = None

    def __post_init__(self):
        u = tuple(int(x) for x in self.u)
        v = tuple(int(x) for x in self.v)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        if self.n < 1:
            raise DomainError("need at least one path")
        if self.N < 1:
            raise DomainError("half-window N must be >= 1")
        if len(u) != self.n or len(v) != self.n:
            raise DomainError("boundary tuples must have one entry per path")
        for name, b in (("u", u), ("v", v)):
            if b[-1] < 0:
                raise DomainError(f"boundary {name} must be non-negative")
            if any(b[i] < b[i + 1] for i in range(self.n - 1)):
                raise DomainError(f"boundary {name} must be ordered top-down")
        M = self.M
        if M is None:
            M = max(default_cutoff(self.tilt), *u, *v)
            object.__setattr__(self, "M", M)
        if max(*u, *v) > M:
            raise DomainError("boundary heights exceed the cutoff M")

    @property
    def times(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def boltzmann(self) -> np.ndarray:
        return self.tilt.boltzmann(self.M)

    def with_(self, **changes) -> "EnsembleSpec":
        params = dict(n=self.n, N=self.N, u=self.u, v=self.v, kernel=self.kernel,
                      tilt=self.tilt, M=self.M)
        params.update(changes)
        return EnsembleSpec(**params)


@dataclass
class OrderedPaths:
    """Integer heights of shape (n, 2N+1); row 0 is the top path."""

    heights: np.ndarray

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.int64)
        if self.heights.ndim == 1:
            self.heights = self.heights[None, :]

    @property
    def n(self) -> int:
        return self.heights.shape[0]

    @property
    def N(self) -> int:
        return (self.heights.shape[1] - 1) // 2

    def validate(self, spec: EnsembleSpec) -> None:
        X = self.heights
        if X.shape != (spec.n, 2 * spec.N + 1):
            raise DomainError("path array has the wrong shape for this ensemble")
        if tuple(X[:, 0]) != spec.u or tuple(X[:, -1]) != spec.v:
            raise DomainError("endpoints do not match the boundary conditions")
        allowed = set(spec.kernel.offsets.tolist())
        if not set(np.unique(np.diff(X, axis=1)).tolist()) <= allowed:
            raise DomainError("a step lies outside the kernel support")
        if np.any(X[-1] < 0) or np.any(X > spec.M):
            raise DomainError("heights leave [0, M]")
        if np.any(np.diff(X, axis=0) > 0):
            raise DomainError("paths are not ordered")


# ---------------------------------------------------------------------------
# single-path transfer operator
# ---------------------------------------------------------------------------


def transfer_matrix(spec: EnsembleSpec) -> np.ndarray:
    """``T[x, y] = p_{y-x} exp(-V(y))`` on {0..M}."""
    M = spec.M
    w = spec.boltzmann()
    T = np.zeros((M + 1, M + 1))
    for z, p in spec.kernel.steps:
        x = np.arange(max(0, -z), min(M, M - z) + 1)
        T[x, x + z] = p * w[x + z]
    return T


def _check_single(spec: EnsembleSpec) -> None:
    if spec.n != 1:
        raise DomainError("this operation needs a single-path ensemble")


def log_transfer_partition(spec: EnsembleSpec) -> float:
    """``log Z`` for one path; ``-inf`` when no admissible path exists."""
    _check_single(spec)
    T = transfer_matrix(spec)
    g = np.zeros(spec.M + 1)
    g[spec.v[0]] = 1.0
    log_scale = 0.0
    for _ in range(2 * spec.N):
        g = T @ g
        s = g.max()
        if s == 0.0:
            return -math.inf
        g /= s
        log_scale += math.log(s)
    head = g[spec.u[0]] * spec.boltzmann()[spec.u[0]]
    if head == 0.0:
        return -math.inf
    return math.log(head) + log_scale


def transfer_partition(spec: EnsembleSpec) -> float:
    """Partition function of one tilted path; may underflow to 0.0."""
    return math.exp(log_transfer_partition(spec))


def _forward_backward(spec: EnsembleSpec, t: int):
    T = transfer_matrix(spec)
    w = spec.boltzmann()
    a = np.zeros(spec.M + 1)
    a[spec.u[0]] = w[spec.u[0]]
    for _ in range(t + spec.N):
        a = T.T @ a
        s = a.max()
        if s == 0.0:
            raise NoAdmissiblePathError("no admissible path")
        a /= s
    b = np.zeros(spec.M + 1)
    b[spec.v[0]] = 1.0
    for _ in range(spec.N - t):
        b = T @ b
        s = b.max()
        if s == 0.0:
            raise NoAdmissiblePathError("no admissible path")
        b /= s
    return a, b


def marginal_height(spec: EnsembleSpec, t: int) -> np.ndarray:
    """Exact law of ``X(t)`` over {0..M} under the tilted single-path measure."""
    _check_single(spec)
    if not -spec.N <= t <= spec.N:
        raise DomainError("time outside [-N, N]")
    a, b = _forward_backward(spec, t)
    p = a * b
    total = p.sum()
    if total == 0.0:
        raise NoAdmissiblePathError("no admissible path")
    return p / total


# ---------------------------------------------------------------------------
# ordered n-tuples
# ---------------------------------------------------------------------------


def _shift_axis(f: np.ndarray, kernel: StepKernel, axis: int, reverse: bool) -> np.ndarray:
    """Apply the step kernel along one axis (mass at x moves to x+z)."""
    g = np.moveaxis(f, axis, 0)
    out = np.zeros_like(g)
    L = g.shape[0]
    for z, p in kernel.steps:
        if reverse:
            z = -z
        if abs(z) >= L:
            continue
        if z >= 0:
            out[z:] += p * g[: L - z]
        else:
            out[: L + z] += p * g[-z:]
    return np.moveaxis(out, 0, axis)


def _ordered_mask(n: int, M: int) -> np.ndarray:
    grids = np.indices((M + 1,) * n)
    mask = np.ones((M + 1,) * n, dtype=bool)
    for i in range(n - 1):
        mask &= grids[i] >= grids[i + 1]
    return mask


def _state_weights(spec: EnsembleSpec) -> np.ndarray:
    w = spec.boltzmann()
    W = np.ones((spec.M + 1,) * spec.n)
    for axis in range(spec.n):
        shape = [1] * spec.n
        shape[axis] = spec.M + 1
        W = W * w.reshape(shape)
    return W * _ordered_mask(spec.n, spec.M)


def _check_budget(spec: EnsembleSpec, budget: int) -> None:
    if spec.n > 3:
        raise SizeError("exact ordered computations support n <= 3")
    cost = (spec.M + 1) ** spec.n * (2 * spec.N + 1)
    if cost > budget:
        raise SizeError(f"(M+1)^n (2N+1) = {cost} exceeds the budget {budget}")


def _propagate(spec, f, W, steps, reverse):
    log_scale = 0.0
    for _ in range(steps):
        if reverse:
            f = f * W
        for axis in range(spec.n):
            f = _shift_axis(f, spec.kernel, axis, reverse)
        if not reverse:
            f = f * W
        s = f.max()
        if s == 0.0:
            return f, -math.inf
        f = f / s
        log_scale += math.log(s)
    return f, log_scale


def log_ordered_partition(spec: EnsembleSpec, budget: int = DEFAULT_BUDGET) -> float:
    _check_budget(spec, budget)
    W = _state_weights(spec)
    f = np.zeros_like(W)
    f[spec.u] = W[spec.u]
    if f[spec.u] == 0.0:
        return -math.inf
    f, log_scale = _propagate(spec, f, W, 2 * spec.N, reverse=False)
    if f[spec.v] == 0.0 or log_scale == -math.inf:
        return -math.inf
    return math.log(f[spec.v]) + log_scale


def ordered_exact_partition(spec: EnsembleSpec, budget: int = DEFAULT_BUDGET) -> float:
    """Partition function of ``n <= 3`` ordered tilted walks by dynamic programming."""
    return math.exp(log_ordered_partition(spec, budget))


def ordered_marginal(spec: EnsembleSpec, t: int = 0, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Joint law of ``(X_1(t), ..., X_n(t))`` as an (M+1)^n array."""
    _check_budget(spec, budget)
    if not -spec.N <= t <= spec.N:
        raise DomainError("time outside [-N, N]")
    W = _state_weights(spec)
    f = np.zeros_like(W)
    f[spec.u] = W[spec.u]
    f, fs = _propagate(spec, f, W, t + spec.N, reverse=False)
    b = np.zeros_like(W)
    b[spec.v] = 1.0
    b, bs = _propagate(spec, b, W, spec.N - t, reverse=True)
    p = f * b
    total = p.sum()
    if total == 0.0 or fs == -math.inf or bs == -math.inf:
        raise NoAdmissiblePathError("no admissible configuration")
    return p / total


def path_marginals(joint: np.ndarray) -> np.ndarray:
    """Per-path marginals (n, M+1) of a joint (M+1)^n law."""
    n = joint.ndim
    return np.array([joint.sum(axis=tuple(a for a in range(n) if a != i)) for i in range(n)])


# ---------------------------------------------------------------------------
# heat-bath sampler
# ---------------------------------------------------------------------------


def _highest_path(spec: EnsembleSpec, start: int, end: int, upper: np.ndarray) -> np.ndarray:
    """Pointwise-greedy highest admissible path below ``upper``, or None."""
    T = 2 * spec.N + 1
    w = spec.boltzmann()
    offsets = spec.kernel.offsets
    heights = np.arange(spec.M + 1)
    allowed = (heights[None, :] <= upper[:, None]) & (w[None, :] > 0.0)
    co = np.zeros((T, spec.M + 1), dtype=bool)
    if not allowed[-1, end]:
        return None
    co[-1, end] = True
    for i in range(T - 2, -1, -1):
        reach = np.zeros(spec.M + 1, dtype=bool)
        for z in offsets:
            lo, hi = max(0, -z), min(spec.M, spec.M - z)
            reach[lo: hi + 1] |= co[i + 1, lo + z: hi + z + 1]
        co[i] = reach & allowed[i]
    if not co[0, start]:
        return None
    path = np.empty(T, dtype=np.int64)
    path[0] = start
    for i in range(1, T):
        cands = [path[i - 1] + z for z in offsets if 0 <= path[i - 1] + z <= spec.M]
        cands = [y for y in cands if co[i, y]]
        path[i] = max(cands)
    return path


def greedy_configuration(spec: EnsembleSpec) -> OrderedPaths:
    """A valid ordered configuration built top-down, highest paths first."""
    upper = np.full(2 * spec.N + 1, spec.M, dtype=np.int64)
    rows = []
    for l in range(spec.n):
        path = _highest_path(spec, spec.u[l], spec.v[l], upper)
        if path is None:
            raise FeasibilityError(f"greedy construction found no admissible path {l + 1}")
        rows.append(path)
        upper = path
    return OrderedPaths(np.array(rows))


def _sampler_args(spec: EnsembleSpec):
    return spec.kernel.lo, np.ascontiguousarray(spec.kernel.table()), np.ascontiguousarray(spec.boltzmann())


def mcmc_sample(spec: EnsembleSpec, seed: int, sweeps: int, thin: int = 1,
                burn_in: int = 0, backend: str | None = None) -> Iterator[OrderedPaths]:
    """Stream ordered configurations from the heat-bath chain.

    One sweep updates every interior (path, time) site once from its exact
    conditional law.  A configuration is yielded after every ``thin`` sweeps.
    """
    if thin < 1 or sweeps < 0:
        raise DomainError("need thin >= 1 and sweeps >= 0")
    core = _backend.get_core(backend)
    state = np.ascontiguousarray(greedy_configuration(spec).heights)
    lo, ptab, boltz = _sampler_args(spec)
    gen = np.random.Generator(np.random.PCG64(seed))
    empty2 = np.zeros((0, 0), dtype=np.int64)
    empty1 = np.zeros(0, dtype=np.int64)
    if burn_in:
        core.heat_bath_sweeps(state, lo, ptab, boltz, spec.M, burn_in, 1, 0, empty2, empty1, gen)
    for _ in range(sweeps // thin):
        core.heat_bath_sweeps(state, lo, ptab, boltz, spec.M, thin, thin, 0, empty2, empty1, gen)
        yield OrderedPaths(state.copy())


@dataclass
class ChainHistogram:
    """Time-slice histograms collected from a heat-bath run."""

    counts: np.ndarray  # (n, M+1)
    joint: np.ndarray | None  # (M+1,)*n or None
    samples: int

    def marginals(self) -> np.ndarray:
        return self.counts / self.samples


def mcmc_histograms(spec: EnsembleSpec, seed: int, sweeps: int, t: int = 0, thin: int = 1,
                    burn_in: int = 0, joint: bool = False,
                    backend: str | None = None) -> ChainHistogram:
    """Run the chain and histogram the heights at time ``t`` every ``thin`` sweeps."""
    if not -spec.N < t < spec.N:
        raise DomainError("record time must be interior")
    core = _backend.get_core(backend)
    state = np.ascontiguousarray(greedy_configuration(spec).heights)
    lo, ptab, boltz = _sampler_args(spec)
    gen = np.random.Generator(np.random.PCG64(seed))
    col = t + spec.N
    empty2 = np.zeros((0, 0), dtype=np.int64)
    empty1 = np.zeros(0, dtype=np.int64)
    if burn_in:
        core.heat_bath_sweeps(state, lo, ptab, boltz, spec.M, burn_in, 1, col, empty2, empty1, gen)
    hist = np.zeros((spec.n, spec.M + 1), dtype=np.int64)
    jhist = np.zeros((spec.M + 1) ** spec.n if joint else 0, dtype=np.int64)
    core.heat_bath_sweeps(state, lo, ptab, boltz, spec.M, sweeps, thin, col, hist, jhist, gen)
    jarr = None
    if joint:
        # flat index is sum_l x_l (M+1)^l, i.e. Fortran order over (x_1, ..., x_n)
        jarr = jhist.reshape((spec.M + 1,) * spec.n, order="F")
    return ChainHistogram(hist, jarr, sweeps // thin)


# ---------------------------------------------------------------------------
# rescaling
# ---------------------------------------------------------------------------


class RescaledPaths:
    """``R(t) = X(H^2 t) / H`` with linear interpolation between lattice times."""

    def __init__(self, path: OrderedPaths, H: float):
        self.heights = np.asarray(path.heights, dtype=float)
        self.H = float(H)
        self.N = path.N
        self.lattice_times = np.arange(-self.N, self.N + 1)

    @property
    def t_range(self) -> tuple:
        return (-self.N / self.H**2, self.N / self.H**2)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.t_range
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise DomainError("time outside the rescaled window")
        s = t * self.H**2
        out = np.stack([np.interp(s, self.lattice_times, row) for row in self.heights]) / self.H
        return out if t.ndim else out[:, 0] if out.ndim > 1 else out


def rescale_path(path: OrderedPaths, tilt: TiltPotential) -> RescaledPaths:
    return RescaledPaths(path, tilt.h_lambda)
