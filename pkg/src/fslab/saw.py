"""Exact enumeration of positive self-avoiding bridges under length and area tilts.

A bridge runs from ``(-N, x)`` to ``(N, y)`` with nearest-neighbour steps,
distinct vertices, ``y >= 0`` throughout and every horizontal coordinate in
``[-N, N]``.  Its area is the line integral of ``y dx`` (sum of ``y * dx``
over horizontal steps) and its weight is ``exp(-beta |gamma| - lam A)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from fslab import _backend
from fslab.errors import DomainError, SizeError, SupercriticalityError

MU_C = 2.63815853  # square-lattice SAW connectivity constant (numerical estimate)
LOG_MU_C = math.log(MU_C)
DEFAULT_ORDER = (0, 1, 2, 3)  # right, up, left, down
_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class TiltedSawEnsemble:
    beta: float
    lam: float
    N: int
    x: int
    y: int
    max_length: int
    budget: int = 10**7

    def __post_init__(self):
        if self.beta <= LOG_MU_C:
            raise SupercriticalityError(f"beta = {self.beta} must exceed log mu_c = {LOG_MU_C:.4f}")
        if self.lam < 0:
            raise DomainError("area tilt must be non-negative")
        if self.N < 1 or self.x < 0 or self.y < 0 or self.max_length < 0:
            raise DomainError("need N >= 1 and non-negative heights and length cap")

    def with_(self, **changes) -> "TiltedSawEnsemble":
        params = dict(beta=self.beta, lam=self.lam, N=self.N, x=self.x, y=self.y,
                      max_length=self.max_length, budget=self.budget)
        params.update(changes)
        return TiltedSawEnsemble(**params)


@dataclass(frozen=True)
class SawBridge:
    vertices: tuple

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    @property
    def area(self) -> int:
        v = self.vertices
        return sum(v[i + 1][1] * (v[i + 1][0] - v[i][0]) for i in range(len(v) - 1))

    def validate(self, N: int) -> None:
        v = self.vertices
        if len(set(v)) != len(v):
            raise DomainError("vertices repeat")
        if any(abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1 for a, b in zip(v, v[1:])):
            raise DomainError("steps must be nearest-neighbour")
        if any(p[1] < 0 or not -N <= p[0] <= N for p in v):
            raise DomainError("vertex leaves the strip or the upper half-plane")


@dataclass(frozen=True)
class BridgeCounts:
    """Multiset of (length, area) with multiplicities."""

    lengths: np.ndarray
    areas: np.ndarray
    counts: np.ndarray
    nodes: int

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict:
        return {(int(l), int(a)): int(c) for l, a, c in zip(self.lengths, self.areas, self.counts)}


def enumerate_bridges(ens: TiltedSawEnsemble, order=DEFAULT_ORDER,
                      backend: str | None = None) -> BridgeCounts:
    """Depth-first count of all bridges up to ``max_length``, by (length, area)."""
    order = np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != [0, 1, 2, 3]:
        raise DomainError("order must be a permutation of the four directions")
    core = _backend.get_core(backend)
    status, grid, amax, nodes = core.saw_count(ens.N, ens.x, ens.y, ens.max_length, order,
                                               ens.budget)
    L, A = np.nonzero(grid)
    counts = grid[L, A]
    if status == core.STATUS_BUDGET:
        raise SizeError(f"DFS budget of {ens.budget} nodes exhausted; "
                        f"{int(counts.sum())} bridges counted so far")
    return BridgeCounts(L.astype(np.int64), (A - amax).astype(np.int64), counts, int(nodes))


def iter_bridges(ens: TiltedSawEnsemble, order=DEFAULT_ORDER) -> Iterator[SawBridge]:
    """Yield every bridge explicitly (pure Python; for path-level observables)."""
    N, y_end, cap = ens.N, ens.y, ens.max_length
    start = (-N, ens.x)
    path = [start]
    seen = {start}
    steps = [_STEPS[d] for d in order]

    def extend():
        px, py = path[-1]
        for dx, dy in steps:
            q = (px + dx, py + dy)
            if q[1] < 0 or not -N <= q[0] <= N or q in seen:
                continue
            left = cap - len(path)
            if (N - q[0]) + abs(q[1] - y_end) > left:
                continue
            if q == (N, y_end):
                yield SawBridge(tuple(path) + (q,))
                continue
            path.append(q)
            seen.add(q)
            yield from extend()
            seen.discard(q)
            path.pop()

    if start == (N, y_end):
        yield SawBridge((start,))
        return
    yield from extend()


def tail_bound(beta: float, cap: int) -> float:
    """``sum_{k > cap} mu_c^k e^{-beta k}``, a bound on the weight beyond the cap."""
    r = MU_C * math.exp(-beta)
    if r >= 1.0:
        raise SupercriticalityError("length penalty too weak for a convergent tail")
    return r ** (cap + 1) / (1.0 - r)


@dataclass(frozen=True)
class TiltedMeasure:
    Z: float
    lengths: np.ndarray
    areas: np.ndarray
    counts: np.ndarray
    bridge_probability: np.ndarray  # probability of one bridge in each class
    tail_bound: float

    @property
    def class_probability(self) -> np.ndarray:
        return self.counts * self.bridge_probability

    @property
    def relative_tail_bound(self) -> float:
        return self.tail_bound / self.Z

    def expect(self, f) -> float:
        return float(np.dot(self.class_probability, f))


def _log_weights(ens: TiltedSawEnsemble, lengths, areas) -> np.ndarray:
    return -ens.beta * np.asarray(lengths, dtype=float) - ens.lam * np.asarray(areas, dtype=float)


def tilted_measure(ens: TiltedSawEnsemble, counts: BridgeCounts | None = None) -> TiltedMeasure:
    counts = enumerate_bridges(ens) if counts is None else counts
    if counts.total == 0:
        raise DomainError("no bridge within the length cap")
    logw = _log_weights(ens, counts.lengths, counts.areas)
    top = logw.max()
    rel = np.exp(logw - top)
    norm = float(np.dot(counts.counts, rel))
    Z = math.exp(top) * norm
    return TiltedMeasure(Z, counts.lengths, counts.areas, counts.counts, rel / norm,
                         tail_bound(ens.beta, ens.max_length))


@dataclass(frozen=True)
class SawObservables:
    mean_area: float
    mean_length: float
    mean_max_height: float
    height_profile: np.ndarray  # expected column maximum, columns -N..N

    @property
    def height_at_zero(self) -> float:
        return float(self.height_profile[len(self.height_profile) // 2])


def _path_table(ens: TiltedSawEnsemble):
    bridges = list(iter_bridges(ens))
    if not bridges:
        raise DomainError("no bridge within the length cap")
    L = np.array([b.length for b in bridges])
    A = np.array([b.area for b in bridges])
    logw = _log_weights(ens, L, A)
    p = np.exp(logw - logw.max())
    return bridges, L, A, p / p.sum()


def observables(ens: TiltedSawEnsemble) -> SawObservables:
    """Exact moments under the tilted measure, by explicit path enumeration."""
    bridges, L, A, p = _path_table(ens)
    cols = 2 * ens.N + 1
    prof = np.zeros((len(bridges), cols))
    peak = np.zeros(len(bridges))
    for i, b in enumerate(bridges):
        for vx, vy in b.vertices:
            prof[i, vx + ens.N] = max(prof[i, vx + ens.N], vy)
        peak[i] = prof[i].max()
    return SawObservables(float(p @ A), float(p @ L), float(p @ peak), p @ prof)


def break_points(vertices, eps: float = 0.5) -> list:
    """Interior indices ``i`` with the prefix in ``v_i - Y`` and suffix in ``v_i + Y``.

    ``Y = {z : z_1 >= eps |z|}`` is the forward cone around the first axis.
    """
    if not 0 < eps <= 1:
        raise DomainError("cone aperture must lie in (0, 1]")
    v = np.asarray(vertices, dtype=float)
    out = []
    for i in range(1, len(v) - 1):
        back = v[i] - v[:i]
        fwd = v[i + 1:] - v[i]
        if np.all(back[:, 0] >= eps * np.hypot(back[:, 0], back[:, 1]) - 1e-12) and \
                np.all(fwd[:, 0] >= eps * np.hypot(fwd[:, 0], fwd[:, 1]) - 1e-12):
            out.append(i)
    return out


def irreducible_blocks(vertices, eps: float = 0.5) -> list:
    """(horizontal span T, vertical displacement Y) of the pieces between break points."""
    cuts = [0] + break_points(vertices, eps) + [len(vertices) - 1]
    return [(vertices[b][0] - vertices[a][0], vertices[b][1] - vertices[a][1])
            for a, b in zip(cuts, cuts[1:])]


@dataclass(frozen=True)
class ConeStatistics:
    mean_span: float  # E[T] per block
    mean_square_rise: float  # E[Y^2] per block
    mean_blocks: float

    @property
    def chi_hat(self) -> float:
        return self.mean_square_rise / self.mean_span


def cone_decomposition(ens: TiltedSawEnsemble, eps: float = 0.5) -> ConeStatistics:
    """Block statistics pooled over the tilted ensemble; ``chi_hat = E[Y^2] / E[T]``."""
    bridges, _, _, p = _path_table(ens)
    span = sq = blocks = 0.0
    for prob, b in zip(p, bridges):
        parts = irreducible_blocks(b.vertices, eps)
        span += prob * sum(t for t, _ in parts)
        sq += prob * sum(y * y for _, y in parts)
        blocks += prob * len(parts)
    return ConeStatistics(span / blocks, sq / blocks, blocks)
