"""Wulff shapes, plaquettes and the area-constrained variational problems.

All shapes live in the square ``[-1, 1]^2`` after rescaling by the
directional energy along the lattice axis, ``phi(e)``.  The key scalar is
``w``, the area of the unit-radius Wulff shape; the surface energy of the
optimal shape of area ``b`` is

    phi(b) = 2 phi(e) sqrt(b w)                      for b <= w,
    phi(b) = phi(e) (8 - 2 sqrt((4 - w)(4 - b)))     for w < b <= 4,

the second branch being the Wulff plaquette (corners of radius ``r_b``
joined by flat segments along the walls).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize, minimize_scalar

from fslab.errors import (
    BranchError,
    ConvexityError,
    DegeneratePlaquetteError,
    DomainError,
    FslabError,
    NonSmoothError,
    SubcriticalError,
)

BETA_C = 0.5 * math.log(1.0 + math.sqrt(2.0))
SQUARE_TOL = 1e-12


# ---------------------------------------------------------------------------
# directional energies and polygons
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirectionalEnergy:
    """Positive surface tension as a function of the normal angle."""

    evaluator: Callable
    symmetric: bool = True
    name: str = "custom"

    def __post_init__(self):
        theta = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
        vals = np.asarray(self.evaluator(theta), dtype=float)
        if vals.shape != theta.shape or not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise DomainError("directional energy must be finite and strictly positive")
        if self.symmetric:
            for other in (self.evaluator(theta + np.pi / 2), self.evaluator(-theta)):
                if np.max(np.abs(np.asarray(other) - vals) / vals) > 1e-9:
                    raise DomainError("energy flagged lattice-symmetric but is not")

    def __call__(self, theta):
        out = np.asarray(self.evaluator(np.asarray(theta, dtype=float)), dtype=float)
        return out if out.ndim else float(out)

    @property
    def phi_e(self) -> float:
        """Energy along the lattice axis."""
        return float(self(0.0))

    def support(self, x) -> np.ndarray:
        """Homogeneous extension ``|x| phi(x/|x|)`` for points of shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        return np.hypot(x[..., 0], x[..., 1]) * self(np.arctan2(x[..., 1], x[..., 0]))

    @classmethod
    def isotropic(cls, rho: float = 1.0) -> "DirectionalEnergy":
        return cls(lambda t: np.full(np.shape(t), float(rho)), True, f"isotropic({rho})")

    @classmethod
    def fourier(cls, coeffs, base: float = 1.0) -> "DirectionalEnergy":
        """``base + sum_m c_m cos(4 m theta)``, lattice-symmetric by construction."""
        coeffs = tuple(float(c) for c in coeffs)

        def ev(t):
            t = np.asarray(t, dtype=float)
            return base + sum(c * np.cos(4 * (m + 1) * t) for m, c in enumerate(coeffs))

        return cls(ev, True, f"fourier({base}; {coeffs})")

    @classmethod
    def cosine(cls, amplitude: float, base: float = 1.0) -> "DirectionalEnergy":
        return cls.fourier((amplitude,), base)

    @classmethod
    def l1(cls) -> "DirectionalEnergy":
        """``|n_1| + |n_2|``, whose Wulff shape is the square itself."""
        return cls(lambda t: np.abs(np.cos(t)) + np.abs(np.sin(t)), True, "l1")

    @classmethod
    def tabulated(cls, angles, values, symmetric: bool = True) -> "DirectionalEnergy":
        """Periodic cubic spline through ``(angle, value)`` samples on ``[0, 2 pi)``."""
        a = np.asarray(angles, dtype=float)
        v = np.asarray(values, dtype=float)
        spline = CubicSpline(np.append(a, a[0] + 2 * np.pi), np.append(v, v[0]), bc_type="periodic")

        def ev(t):
            return spline(np.mod(np.asarray(t, dtype=float) - a[0], 2 * np.pi) + a[0])

        return cls(ev, symmetric, "tabulated")


@dataclass(frozen=True, eq=False)
class WulffPolygon:
    """Circumscribed polygon ``{x : x . n_k <= phi(n_k)}`` over K directions.

    ``normalization`` records the scaling: ``raw`` (as built), ``unit-volume``
    (area 1) or ``unit-radius`` (divided by ``phi(e)``).
    """

    vertices: np.ndarray
    edge_lengths: np.ndarray
    normals: np.ndarray
    tensions: np.ndarray
    normalization: str = "raw"

    @property
    def K(self) -> int:
        return len(self.normals)

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return float(0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def energy(self) -> float:
        """Surface energy ``sum of edge length * phi(edge normal)``."""
        return float(np.dot(self.edge_lengths, self.tensions))

    def support(self, normals) -> np.ndarray:
        return np.max(np.asarray(normals) @ self.vertices.T, axis=-1)

    def scaled(self, s: float, normalization: str) -> "WulffPolygon":
        return WulffPolygon(self.vertices * s, self.edge_lengths * s, self.normals,
                            self.tensions, normalization)

    def normalized(self, normalization: str, phi_e: float) -> "WulffPolygon":
        """Rescale a raw polygon to the requested normalisation."""
        if self.normalization != "raw":
            raise DomainError("normalise from the raw polygon")
        if normalization == "raw":
            return self
        if normalization == "unit-volume":
            return self.scaled(1.0 / math.sqrt(self.area), normalization)
        if normalization == "unit-radius":
            return self.scaled(1.0 / phi_e, normalization)
        raise DomainError(f"unknown normalisation {normalization!r}")


def build_wulff(energy: DirectionalEnergy, K: int = 720, normalization: str = "raw",
                tol: float = 1e-6) -> WulffPolygon:
    """Intersect the half-planes ``x . n_k <= phi(n_k)`` for K equispaced normals.

    Consecutive supporting lines are intersected directly; when ``phi`` is
    the support function of a convex body every line is active and the
    resulting polygon has support function ``phi`` at each ``n_k``.  A
    relative defect above ``tol`` means ``phi`` has no convex extension.
    """
    if K < 8 or K % 4:
        raise DomainError("K must be a multiple of 4 and at least 8")
    theta = 2 * np.pi * np.arange(K) / K
    n = np.column_stack([np.cos(theta), np.sin(theta)])
    p = np.asarray(energy(theta), dtype=float)
    A = np.stack([n, np.roll(n, -1, axis=0)], axis=1)
    rhs = np.column_stack([p, np.roll(p, -1)])
    verts = np.linalg.solve(A, rhs[..., None])[..., 0]  # vertex k joins edges k and k+1
    tangents = np.column_stack([-n[:, 1], n[:, 0]])
    lengths = np.einsum("ij,ij->i", verts - np.roll(verts, 1, axis=0), tangents)
    poly = WulffPolygon(verts, lengths, n, p)
    defect = np.max(np.abs(poly.support(n) - p) / p)
    if defect > tol or np.any(lengths < -tol * p.max()):
        raise ConvexityError(f"support-function defect {defect:.3e}: energy is not convex")
    poly = WulffPolygon(verts, np.maximum(lengths, 0.0), n, p)
    return poly.normalized(normalization, energy.phi_e)


@lru_cache(maxsize=256)
def _w_cached(energy: DirectionalEnergy, K: int, extrapolate: bool) -> float:
    w_K = build_wulff(energy, K).area / energy.phi_e**2
    if not extrapolate or K % 8:
        return w_K
    # circumscribed-polygon error is c/K^2 + O(K^-4)
    w_half = build_wulff(energy, K // 2).area / energy.phi_e**2
    return (4.0 * w_K - w_half) / 3.0


def shape_area(energy: DirectionalEnergy, K: int = 720, extrapolate: bool = True) -> float:
    """``w``: area of the unit-radius Wulff shape, in ``[2, 4]``.

    With ``extrapolate`` the K and K/2 polygons are Richardson-combined,
    removing the leading ``1/K^2`` circumscription error.
    """
    w = _w_cached(energy, K, extrapolate)
    if abs(w - 4.0) < 1e-9:
        w = 4.0
    if not 2.0 - 1e-6 <= w <= 4.0 + 1e-9:
        raise DomainError(f"unit-radius shape area {w} outside [2, 4]")
    return min(w, 4.0)


# ---------------------------------------------------------------------------
# area-constrained energy and plaquettes
# ---------------------------------------------------------------------------


def _phi_of_area(b, phi_e: float, w: float):
    b = np.asarray(b, dtype=float)
    small = 2.0 * phi_e * np.sqrt(np.clip(b, 0.0, None) * w)
    large = phi_e * (8.0 - 2.0 * np.sqrt((4.0 - w) * np.clip(4.0 - b, 0.0, None)))
    return np.where(b <= w, small, large)


def energy_of_area(energy: DirectionalEnergy, b, w: float | None = None):
    """Minimal surface energy of a shape of area ``b`` inside ``[-1, 1]^2``."""
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr <= 0) or np.any(b_arr > 4):
        raise DomainError("area must lie in (0, 4]")
    w = shape_area(energy) if w is None else w
    out = _phi_of_area(b_arr, energy.phi_e, w)
    return out if out.ndim else float(out)


def energy_derivative(energy: DirectionalEnergy, b, w: float | None = None):
    """``d phi / d b = phi(e) / r_b`` with ``r_b`` the corner radius."""
    w = shape_area(energy) if w is None else w
    return energy.phi_e / corner_radius(b, w)


def corner_radius(b, w: float):
    """``r_b``: radius of the Wulff arcs in the optimal shape of area ``b``."""
    b = np.asarray(b, dtype=float)
    out = np.where(b <= w, np.sqrt(np.clip(b, 0, None) / w),
                   np.sqrt(np.clip(4.0 - b, 0, None) / max(4.0 - w, 1e-300)))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PlaquetteGeometry:
    corner_radius: float
    area: float
    energy: float
    flat_length: float
    vertices: np.ndarray = field(repr=False, default=None)


def plaquette(energy: DirectionalEnergy, b: float, K: int = 720) -> PlaquetteGeometry:
    """Optimal shape of area ``b > w``: four scaled Wulff corners plus flat walls."""
    w = shape_area(energy, K)
    if w >= 4.0 - SQUARE_TOL:
        raise DegeneratePlaquetteError("the Wulff shape is the square; plaquettes are undefined")
    if not w < b <= 4.0:
        raise BranchError(f"area {b} is not on the plaquette branch ({w}, 4]")
    r = math.sqrt((4.0 - b) / (4.0 - w))
    phi_e = energy.phi_e
    unit = build_wulff(energy, K, "unit-radius").vertices
    pieces = []
    for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        quad = unit[(unit[:, 0] * sx >= -1e-12) & (unit[:, 1] * sy >= -1e-12)]
        ang = np.arctan2(quad[:, 1], quad[:, 0]) % (2 * np.pi)
        quad = quad[np.argsort(ang)]
        pieces.append(r * quad + (1.0 - r) * np.array([sx, sy]))
    verts = np.vstack(pieces)
    return PlaquetteGeometry(
        corner_radius=r,
        area=4.0 - (4.0 - w) * r * r,
        energy=phi_e * (8.0 - 2.0 * (4.0 - w) * r),
        flat_length=2.0 * (1.0 - r),
        vertices=verts,
    )


# ---------------------------------------------------------------------------
# dual constrained problem: max_a  nu a - phi(a)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DcvpSolution:
    nu: float
    optimizers: tuple
    value: float
    nu_beta: float
    rho_beta: float
    a_beta: float
    degenerate: bool = False
    grid_nu_beta: float = float("nan")
    grid_argmax: float = float("nan")

    @property
    def a_star(self) -> float:
        return max(self.optimizers)


def solve_dcvp(energy: DirectionalEnergy, nu: float, grid_points: int = 100_000,
               w: float | None = None, tie_tol: float = 1e-10) -> DcvpSolution:
    """Closed-form maximiser of ``nu a - phi(a)`` over ``a in [0, 4]``.

    The critical slope ``nu_beta`` is where a droplet first ties with the
    empty configuration.  A grid search over ``grid_points`` areas (refined
    around its best point) is carried alongside as a numerical check.
    """
    if nu < 0:
        raise DomainError("slope must be non-negative")
    w = shape_area(energy) if w is None else w
    phi_e = energy.phi_e
    degenerate = w >= 4.0 - SQUARE_TOL
    if degenerate:
        nu_beta, rho_beta, a_beta = 2.0 * phi_e, 0.0, 4.0
    else:
        sw = math.sqrt(w)
        nu_beta = phi_e * (2.0 + sw) / 2.0
        rho_beta = 2.0 / (2.0 + sw)
        a_beta = 4.0 - (4.0 - w) * rho_beta**2

    if abs(nu - nu_beta) <= tie_tol:
        opts = (0.0, a_beta)
    elif nu < nu_beta:
        opts = (0.0,)
    elif degenerate:
        opts = (4.0,)
    else:
        opts = (4.0 - (4.0 - w) * (phi_e / nu) ** 2,)
    a_top = max(opts)
    value = max(0.0, nu * a_top - float(_phi_of_area(a_top, phi_e, w)))

    x = np.linspace(0.0, 4.0, grid_points)
    phi_x = _phi_of_area(x, phi_e, w)
    ratio = phi_x[1:] / x[1:]
    i = int(np.argmin(ratio)) + 1
    lo, hi = x[max(i - 1, 1)], x[min(i + 1, grid_points - 1)]
    ref = minimize_scalar(lambda a: float(_phi_of_area(a, phi_e, w)) / a, bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    grid_nu_beta = min(float(ref.fun), float(ratio.min()))
    g = nu * x - phi_x
    j = int(np.argmax(g))
    grid_argmax = float(x[j])
    if 0 < j < grid_points - 1:
        ref = minimize_scalar(lambda a: float(_phi_of_area(a, phi_e, w)) - nu * a,
                              bounds=(x[j - 1], x[j + 1]), method="bounded",
                              options={"xatol": 1e-12})
        grid_argmax = float(ref.x)
    return DcvpSolution(nu, opts, value, nu_beta, rho_beta, a_beta, degenerate,
                        grid_nu_beta, grid_argmax)


# ---------------------------------------------------------------------------
# multi-layer problem with a Gaussian excess-area penalty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McvpSolution:
    a: float
    D: float
    areas: tuple  # nonzero layer areas, ascending
    shapes: tuple  # "wulff-shape" or "plaquette" per layer
    objective: float
    w: float

    @property
    def layers(self) -> int:
        return len(self.areas)


def mcvp_objective(areas, a: float, D: float, phi_e: float, w: float):
    """``sum phi(a_i) + (a - sum a_i)^2 / (16 D)``; rows of ``areas`` are candidates."""
    areas = np.asarray(areas, dtype=float)
    return _phi_of_area(areas, phi_e, w).sum(axis=-1) + (a - areas.sum(axis=-1)) ** 2 / (16.0 * D)


def _cubic_roots(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Real roots of ``s^3 + p s + q = 0`` (NaN where absent), shape (m, 3)."""
    m = len(p)
    comp = np.zeros((m, 3, 3))
    comp[:, 0, 1] = -p
    comp[:, 0, 2] = -q
    comp[:, 1, 0] = 1.0
    comp[:, 2, 1] = 1.0
    roots = np.linalg.eigvals(comp)
    real = np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))
    return np.where(real, roots.real, np.nan)


def _best_coordinate(c: np.ndarray, D: float, phi_e: float, w: float) -> np.ndarray:
    """Global minimiser over ``x in [0, 4]`` of ``phi(x) + (c - x)^2 / (16 D)``.

    Stationary points solve a depressed cubic on each branch: in
    ``s = sqrt(x)`` below ``w`` and ``s = sqrt(4 - x)`` above.
    """
    m = len(c)
    k = 8.0 * D * phi_e
    cand = [np.zeros(m), np.full(m, 4.0), np.full(m, w)]
    s_low = _cubic_roots(-c, np.full(m, k * math.sqrt(w)))
    x_low = s_low**2
    x_low[~((s_low > 0) & (x_low <= w))] = np.nan
    cand += list(x_low.T)
    if w < 4.0:
        s_high = _cubic_roots(c - 4.0, np.full(m, -k * math.sqrt(4.0 - w)))
        x_high = 4.0 - s_high**2
        x_high[~((s_high > 0) & (x_high >= w))] = np.nan
        cand += list(x_high.T)
    X = np.column_stack(cand)
    vals = _phi_of_area(np.nan_to_num(X), phi_e, w) + (c[:, None] - X) ** 2 / (16.0 * D)
    vals = np.where(np.isnan(X), np.inf, vals)
    return X[np.arange(m), np.argmin(vals, axis=1)]


def _descend(starts: np.ndarray, a: float, D: float, phi_e: float, w: float,
             sweeps: int = 200, tol: float = 1e-13) -> np.ndarray:
    X = starts.copy()
    n = X.shape[1]
    for _ in range(sweeps):
        prev = X.copy()
        for i in range(n):
            rest = X.sum(axis=1) - X[:, i]
            X[:, i] = _best_coordinate(a - rest, D, phi_e, w)
        if np.max(np.abs(X - prev)) < tol:
            break
    return X


def _polish(x: np.ndarray, a: float, D: float, phi_e: float, w: float) -> np.ndarray:
    active = x > 1e-9
    if not active.any():
        return x
    fixed = x.copy()

    def f(z):
        fixed[active] = z
        return float(mcvp_objective(fixed, a, D, phi_e, w))

    def grad(z):
        fixed[active] = z
        r = corner_radius(z, w)
        return phi_e / np.maximum(r, 1e-300) - (a - fixed.sum()) / (8.0 * D)

    res = minimize(f, x[active], jac=grad, method="L-BFGS-B",
                   bounds=[(1e-12, 4.0)] * int(active.sum()), options={"ftol": 1e-15, "gtol": 1e-12})
    out = x.copy()
    if res.fun <= f(x[active]):
        out[active] = res.x
    return out


def solve_mcvp_bernoulli(energy: DirectionalEnergy, a: float, D: float, n_max: int | None = None,
                         starts: int = 32, seed: int = 0, w: float | None = None) -> McvpSolution:
    """Minimise ``sum phi(a_i) + (a - sum a_i)^2 / (16 D)`` over layer areas in ``[0, 4]``.

    Every layer count up to ``n_max`` is tried with projected coordinate
    descent from ``starts`` random initial points (each coordinate update is
    an exact global 1-d minimisation), then polished with L-BFGS-B.  Layers
    of zero area are dropped from the result.
    """
    if a < 0 or D <= 0:
        raise DomainError("need a >= 0 and D > 0")
    w = shape_area(energy) if w is None else w
    phi_e = energy.phi_e
    if n_max is None:
        n_max = int(a // 2) + 3
    rng = np.random.default_rng(seed)
    best = np.zeros(0)
    best_val = a * a / (16.0 * D)
    best_n = 0
    for n in range(1, n_max + 1):
        X0 = rng.uniform(0.0, 4.0, size=(starts, n))
        X0[0] = min(a / n, 4.0)
        X = _descend(X0, a, D, phi_e, w)
        vals = mcvp_objective(X, a, D, phi_e, w)
        x = _polish(X[int(np.argmin(vals))], a, D, phi_e, w)
        val = float(mcvp_objective(x, a, D, phi_e, w))
        if val < best_val - 1e-12:
            best, best_val, best_n = x, val, n
    if best_n == n_max and n_max > 0:
        warnings.warn(f"MCVP optimum uses all {n_max} allowed layers; raise n_max", RuntimeWarning)
    areas = np.sort(best[best > 1e-9])
    shapes = tuple("plaquette" if x > w else "wulff-shape" for x in areas)
    return McvpSolution(a, D, tuple(areas.tolist()), shapes, best_val, w)


@dataclass(frozen=True)
class McvpScan:
    a_values: np.ndarray
    solutions: tuple
    transitions: tuple  # (area, layers below, layers above)

    @property
    def transition_points(self) -> np.ndarray:
        return np.array([t[0] for t in self.transitions])


def scan_mcvp(energy: DirectionalEnergy, D: float, a_values, refine_tol: float = 1e-4,
              starts: int = 32, seed: int = 0) -> McvpScan:
    """Solve on a grid of ``a`` and bisect each jump in the optimal layer count."""
    w = shape_area(energy)
    a_values = np.asarray(a_values, dtype=float)

    def solve(x):
        return solve_mcvp_bernoulli(energy, float(x), D, starts=starts, seed=seed, w=w)

    sols = [solve(x) for x in a_values]
    transitions = []
    for i in range(len(sols) - 1):
        lo, hi = a_values[i], a_values[i + 1]
        l_lo, l_hi = sols[i].layers, sols[i + 1].layers
        if l_lo == l_hi:
            continue
        while hi - lo > refine_tol:
            mid = 0.5 * (lo + hi)
            if solve(mid).layers == l_lo:
                lo = mid
            else:
                hi = mid
        transitions.append((0.5 * (lo + hi), l_lo, l_hi))
    return McvpScan(a_values, tuple(sols), tuple(transitions))


# ---------------------------------------------------------------------------
# entropic repulsion stack
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropicStack:
    beta: float
    N: float
    cbar: float
    n_star: int
    tilts: tuple
    areas: tuple
    nu_beta: float
    boundary: bool


def stack_layer_count(nu_beta: float, beta: float, N: float, cbar: float) -> int:
    """Largest ``n >= 0`` with ``cbar exp(-4 beta n) N >= nu_beta`` (0 if none)."""
    if cbar * N < nu_beta:
        return 0
    n = max(0, int(math.floor(math.log(cbar * N / nu_beta) / (4.0 * beta))))
    while n > 0 and cbar * math.exp(-4.0 * beta * n) * N < nu_beta:
        n -= 1
    while cbar * math.exp(-4.0 * beta * (n + 1)) * N >= nu_beta:
        n += 1
    return n


def entropic_stack(energy: DirectionalEnergy, beta: float, N: float, cbar: float,
                   boundary_tol: float = 1e-9) -> EntropicStack:
    """Layer count, area tilts and nested plaquette areas of a wall-repelled stack."""
    if beta <= 0 or N < 1 or cbar <= 0:
        raise DomainError("need beta > 0, N >= 1 and cbar > 0")
    w = shape_area(energy)
    nu_beta = solve_dcvp(energy, 0.0, grid_points=16, w=w).nu_beta
    n_star = stack_layer_count(nu_beta, beta, N, cbar)
    boundary = any(abs(cbar * math.exp(-4.0 * beta * m) * N / nu_beta - 1.0) < boundary_tol
                   for m in (n_star, n_star + 1))
    tilts, areas = [], []
    if n_star > 0:
        nu1 = cbar * math.exp(-4.0 * beta * n_star) * N
        for k in range(1, n_star + 1):
            nu_k = math.exp(4.0 * beta * (k - 1)) * nu1
            tilts.append(nu_k)
            areas.append(solve_dcvp(energy, nu_k, grid_points=16, w=w).a_star)
    return EntropicStack(beta, N, cbar, n_star, tuple(tilts), tuple(areas), nu_beta, boundary)


# ---------------------------------------------------------------------------
# closed-form constants
# ---------------------------------------------------------------------------


def metastability_B0(m_star: float, energy: DirectionalEnergy, w: float | None = None) -> float:
    """``B_0 = nu_beta / (2 m*)``, checked against ``(4 tau(e) + tau(W)) / (8 m*)``."""
    if m_star <= 0:
        raise DomainError("magnetisation must be positive")
    w = shape_area(energy) if w is None else w
    tau_e = energy.phi_e
    nu_beta = solve_dcvp(energy, 0.0, grid_points=16, w=w).nu_beta
    b0 = nu_beta / (2.0 * m_star)
    other = (4.0 * tau_e + 2.0 * tau_e * math.sqrt(w)) / (8.0 * m_star)
    if w < 4.0 and abs(b0 - other) > 1e-10 * max(1.0, abs(b0)):
        raise FslabError(f"B0 identity violated: {b0} vs {other}")
    return b0


@dataclass(frozen=True)
class IsingConstants:
    beta: float
    m_star: float
    tau_e: float
    w: float
    B0: float
    h_w: float | None


@dataclass(frozen=True)
class AbrahamRoot:
    beta: float
    h_w: float
    residual: float  # relative residual of cosh(2 beta h) = cosh(2 beta) - (1 - e^{-4 beta})/2
    raw_residual: float  # e^{2 beta}(cosh 2beta - cosh 2beta h) - sinh 2beta


def abraham_threshold(beta: float) -> AbrahamRoot:
    """Wetting field ``h_w`` solving ``e^{2b}(cosh 2b - cosh 2b h) = sinh 2b``.

    Bisection on ``[0, 1]`` of the rearranged form
    ``cosh(2 b h) = cosh(2 b) - (1 - e^{-4b})/2``, whose right side is
    computed without cancellation.
    """
    if beta <= BETA_C:
        raise SubcriticalError(f"beta = {beta} is not above the critical value {BETA_C}")
    target = math.cosh(2 * beta) + 0.5 * math.expm1(-4 * beta)

    def g(h):
        return math.cosh(2 * beta * h) - target

    lo, hi = 0.0, 1.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    h = min((lo, hi), key=lambda x: abs(g(x)))
    raw = math.exp(2 * beta) * (math.cosh(2 * beta) - math.cosh(2 * beta * h)) - math.sinh(2 * beta)
    return AbrahamRoot(beta, h, abs(g(h)) / target, raw)


def wulff_curvature(energy: DirectionalEnergy, direction: float = 0.0, step: float = 1e-4,
                    smooth_tol: float = 1e-3) -> float:
    """Curvature ``1 / (phi + phi'')`` of the Wulff boundary at the given normal angle."""
    def second(d):
        return (energy(direction + d) - 2.0 * energy(direction) + energy(direction - d)) / d**2

    d1, d2 = second(step), second(2.0 * step)
    if abs(d1 - d2) > smooth_tol * max(1.0, abs(d1)):
        raise NonSmoothError(f"second differences {d1:.6g} and {d2:.6g} disagree")
    radius = energy(direction) + d1
    if radius <= 0:
        raise ConvexityError(f"phi + phi'' = {radius:.6g} <= 0: energy is not convex here")
    return 1.0 / radius


def ising_constants(beta: float, m_star: float, energy: DirectionalEnergy) -> IsingConstants:
    w = shape_area(energy)
    h = abraham_threshold(beta).h_w if beta > BETA_C else None
    return IsingConstants(beta, m_star, energy.phi_e, w, metastability_B0(m_star, energy, w), h)
