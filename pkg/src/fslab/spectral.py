"""Half-line Sturm-Liouville spectra and the diffusions built from them.

The operator ``(sigma^2/2) d^2/dr^2 - q(r)`` on ``(0, R)`` with Dirichlet
walls is discretised by second-order finite differences.  Its ground state
gives the Ferrari-Spohn diffusion (drift ``sigma^2 phi_0'/phi_0``, stationary
density ``phi_0^2``); Slater determinants of the lowest ``n`` eigenfunctions
give the non-colliding ``n``-path version.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import eigh_tridiagonal

from fslab import _backend
from fslab.errors import DomainError, ResolutionError, SingularityError, SizeError, StiffnessError

AIRY_ZERO = 2.338107410459767  # first zero of Ai is -AIRY_ZERO


@dataclass(frozen=True)
class Potential:
    """Confining potential ``q`` and diffusivity ``sigma``.

    ``form`` is ``"power"`` (``c * r**alpha``), ``"tabulated"`` (linear
    interpolation of ``values`` on ``radii``, constant past the end) or
    ``"box"`` (``q = 0``; confinement comes only from the wall at ``R``).
    """

    form: str = "power"
    c: float = 1.0
    alpha: float = 1.0
    radii: tuple = ()
    values: tuple = ()
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if self.form == "power":
            if not (self.c > 0 and self.alpha > 0):
                raise DomainError("power potential needs c > 0 and alpha > 0")
        elif self.form == "tabulated":
            r = np.asarray(self.radii, dtype=float)
            q = np.asarray(self.values, dtype=float)
            object.__setattr__(self, "radii", tuple(r.tolist()))
            object.__setattr__(self, "values", tuple(q.tolist()))
            if r.ndim != 1 or r.shape != q.shape or len(r) < 2 or r[0] != 0.0:
                raise DomainError("tabulated q needs matching grids starting at r = 0")
            if np.any(np.diff(r) <= 0) or not np.all(np.isfinite(q)) or np.any(q < 0):
                raise DomainError("tabulated q must be finite, non-negative, on increasing radii")
            if q[-1] <= q[0]:
                raise DomainError("tabulated q does not grow over its range")
        elif self.form != "box":
            raise DomainError(f"unknown potential form {self.form!r}")

    @classmethod
    def linear(cls, c: float = 1.0, sigma: float = 1.0) -> "Potential":
        return cls(form="power", c=c, alpha=1.0, sigma=sigma)

    @classmethod
    def power(cls, c: float, alpha: float, sigma: float = 1.0) -> "Potential":
        return cls(form="power", c=c, alpha=alpha, sigma=sigma)

    @classmethod
    def tabulated(cls, radii, values, sigma: float = 1.0) -> "Potential":
        return cls(form="tabulated", radii=tuple(radii), values=tuple(values), sigma=sigma)

    @classmethod
    def box(cls, sigma: float = 1.0) -> "Potential":
        return cls(form="box", sigma=sigma)

    @property
    def sigma2(self) -> float:
        return self.sigma**2

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.form == "power":
            return self.c * r**self.alpha
        if self.form == "box":
            return np.zeros_like(r)
        return np.interp(r, self.radii, self.values)


def airy_chi(c: float, sigma: float) -> float:
    """Length scale ``chi = (2c/sigma^2)^(1/3)`` of the linear-potential ground state."""
    if c <= 0 or sigma <= 0:
        raise DomainError("c and sigma must be positive")
    return (2.0 * c / sigma**2) ** (1.0 / 3.0)


def airy_e0(c: float, sigma: float) -> float:
    """Ground-state energy ``c * omega_1 / chi`` for ``q(r) = c r``."""
    return c * AIRY_ZERO / airy_chi(c, sigma)


def _hermite_eval(phi, dphi, h, r):
    """Cubic Hermite interpolation of grid rows (value, derivative)."""
    r = np.asarray(r, dtype=float)
    G = phi.shape[-1] - 1
    i = np.clip((r / h).astype(np.int64), 0, G - 1)
    s = r / h - i
    s2, s3 = s * s, s * s * s
    y0, y1 = phi[..., i], phi[..., i + 1]
    m0, m1 = dphi[..., i], dphi[..., i + 1]
    val = ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * m0
           + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * m1)
    der = ((6 * s2 - 6 * s) * (y0 - y1)) / h + (3 * s2 - 4 * s + 1) * m0 + (3 * s2 - 2 * s) * m1
    return val, der


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Lowest ``k`` eigenpairs on the grid ``r_i = i h``, ``i = 0..R/h``.

    Eigenfunctions have unit discrete norm ``h * sum(phi_j**2) = 1`` and are
    signed so that they start positive at the wall.
    """

    potential: Potential
    R: float
    h: float
    eigenvalues: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.phi.shape[1]) * self.h

    @property
    def sigma(self) -> float:
        return self.potential.sigma

    @property
    def sigma2(self) -> float:
        return self.potential.sigma2

    def inner(self, f, g) -> float:
        return float(self.h * np.dot(f, g))

    def evaluate(self, j, r):
        """Interpolated ``phi_j(r)`` (``j`` an int or slice)."""
        return _hermite_eval(self.phi[j], self.dphi[j], self.h, r)[0]

    def evaluate_derivative(self, j, r):
        return _hermite_eval(self.phi[j], self.dphi[j], self.h, r)[1]

    def bulk_mask(self, tol: float = 1e-6) -> np.ndarray:
        """Grid points where ``phi_0`` exceeds ``tol`` times its maximum."""
        return self.phi[0] > tol * self.phi[0].max()

    def density(self) -> np.ndarray:
        """Stationary density ``phi_0^2`` on the grid."""
        return self.phi[0] ** 2


def _sign_changes(v: np.ndarray, tol: float) -> int:
    s = np.sign(v[np.abs(v) > tol])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def solve_spectrum(potential: Potential, R: float, h: float, k: int) -> SpectralBasis:
    """Lowest ``k`` eigenpairs of the Dirichlet finite-difference operator."""
    G = R / h
    if abs(G - round(G)) > 1e-9 * max(1.0, G):
        raise DomainError("R/h must be an integer")
    G = int(round(G))
    if k < 1 or k >= G - 1:
        raise ResolutionError(f"cannot resolve {k} eigenpairs on {G - 1} interior points")
    s2 = potential.sigma2
    r = np.arange(1, G) * h
    diag = s2 / h**2 + potential(r)
    off = np.full(G - 2, -s2 / (2 * h**2))
    e, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    vec = vec.T / math.sqrt(h)
    phi = np.zeros((k, G + 1))
    phi[:, 1:G] = vec
    for j in range(k):
        lead = phi[j, np.argmax(np.abs(phi[j]) > 1e-8 * np.abs(phi[j]).max())]
        if lead < 0:
            phi[j] = -phi[j]
    if np.any(np.diff(e) <= 0) or e[0] <= 0:
        raise ResolutionError("eigenvalues are not strictly increasing and positive")
    gram = h * phi @ phi.T
    if np.max(np.abs(gram - np.eye(k))) >= 1e-8:
        raise ResolutionError("eigenvectors failed the orthonormality check")
    for j in range(k):
        if _sign_changes(phi[j], 1e-8 * np.abs(phi[j]).max()) != j:
            raise ResolutionError(f"eigenfunction {j} has the wrong number of nodes")
    dphi = np.empty_like(phi)
    dphi[:, 1:-1] = (phi[:, 2:] - phi[:, :-2]) / (2 * h)
    dphi[:, 0] = (-3 * phi[:, 0] + 4 * phi[:, 1] - phi[:, 2]) / (2 * h)
    dphi[:, -1] = (3 * phi[:, -1] - 4 * phi[:, -2] + phi[:, -3]) / (2 * h)
    for a in (phi, e, dphi):
        a.setflags(write=False)
    return SpectralBasis(potential, float(R), float(h), e, phi, dphi)


def fs_drift(basis: SpectralBasis, r):
    """Ferrari-Spohn drift ``sigma^2 phi_0'(r) / phi_0(r)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= basis.h) or np.any(r >= basis.R - basis.h):
        raise DomainError("r must lie in (h, R - h)")
    val, der = _hermite_eval(basis.phi[0], basis.dphi[0], basis.h, r)
    return basis.sigma2 * der / val


def _slater_matrices(basis: SpectralBasis, r: np.ndarray):
    n = len(r)
    if n > basis.k:
        raise SizeError(f"need {n} eigenfunctions, basis holds {basis.k}")
    if np.any(r < 0) or np.any(r > basis.R):
        raise DomainError("points must lie in [0, R]")
    val, der = _hermite_eval(basis.phi[:n], basis.dphi[:n], basis.h, r)
    return val.T, der.T  # (i, j) = phi_j(r_i)


def slater(basis: SpectralBasis, r) -> float:
    """``det[phi_j(r_i)]`` over the ``n = len(r)`` lowest eigenfunctions."""
    A, _ = _slater_matrices(basis, np.atleast_1d(np.asarray(r, dtype=float)))
    return float(np.linalg.det(A))


def log_abs_slater(basis: SpectralBasis, r) -> float:
    A, _ = _slater_matrices(basis, np.atleast_1d(np.asarray(r, dtype=float)))
    sign, logdet = np.linalg.slogdet(A)
    if sign == 0 or logdet < -690.0:
        raise SingularityError("Slater determinant vanishes")
    return float(logdet)


def dyson_drift(basis: SpectralBasis, r) -> np.ndarray:
    """``grad log |det[phi_j(r_i)]|`` at a strictly ordered interior point."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(np.diff(r) >= 0) or r[-1] <= 0 or r[0] >= basis.R:
        raise DomainError("r must be strictly decreasing inside (0, R)")
    A, B = _slater_matrices(basis, r)
    sign, logdet = np.linalg.slogdet(A)
    if sign == 0 or logdet < -690.0:  # |det| below 1e-300
        raise SingularityError("Slater determinant too close to zero")
    # d/dr_i log det A = (B A^{-1})_{ii}
    return np.einsum("ij,ji->i", B, np.linalg.inv(A))


@dataclass
class DiffusionPath:
    """Recorded states of an Euler-Maruyama run; row ``m`` is at ``times[m]``."""

    times: np.ndarray
    states: np.ndarray
    dt: float
    rejected: int


def _core_tables(basis: SpectralBasis, n: int):
    if n > basis.k:
        raise SizeError(f"need {n} eigenfunctions, basis holds {basis.k}")
    return np.array(basis.phi[:n], order="C"), np.array(basis.dphi[:n], order="C")


def _check_start(basis: SpectralBasis, x0: np.ndarray, n: int) -> None:
    if len(x0) != n:
        raise DomainError("x0 must have one entry per path")
    if np.any(np.diff(x0) >= 0) or x0[-1] <= 0 or x0[0] >= basis.R:
        raise DomainError("x0 must be strictly decreasing inside (0, R)")


def simulate_diffusion(basis: SpectralBasis, n: int, x0, dt: float, steps: int, seed: int,
                       record_every: int = 1, backend: str | None = None) -> DiffusionPath:
    """Euler-Maruyama for ``dX = sigma^2 grad log Delta(X) dt + sigma dB``.

    Proposals leaving the ordered cone inside ``(0, R)`` are redrawn (up to
    100 times) and then the step is split in two halves, recursively.
    """
    x = np.array(x0, dtype=float)
    _check_start(basis, x, n)
    if dt <= 0 or steps < 0 or record_every < 1:
        raise DomainError("need dt > 0, steps >= 0 and record_every >= 1")
    phi, dphi = _core_tables(basis, n)
    core = _backend.get_core(backend)
    gen = np.random.Generator(np.random.PCG64(seed))
    out = np.empty((steps // record_every, n))
    status, done, rejected = core.em_path(x, phi, dphi, basis.h, basis.sigma, basis.R,
                                          dt, steps, record_every, out, gen)
    if status == core.STATUS_SINGULAR:
        raise SingularityError("Slater determinant vanished along the path")
    if status != core.STATUS_OK:
        raise StiffnessError(f"step {done}: proposals keep leaving the cone at x = {x.tolist()}",
                             state=x.copy())
    times = dt * record_every * np.arange(1, len(out) + 1)
    return DiffusionPath(times, out, dt, int(rejected))


def simulate_endpoints(basis: SpectralBasis, n: int, x0, t: float, dt: float, paths: int,
                       seed: int, backend: str | None = None) -> np.ndarray:
    """States at time ``t`` of ``paths`` independent runs started from ``x0``."""
    x = np.array(x0, dtype=float)
    _check_start(basis, x, n)
    steps = int(round(t / dt))
    if abs(steps * dt - t) > 1e-9 * max(t, 1.0):
        raise DomainError("t must be a multiple of dt")
    phi, dphi = _core_tables(basis, n)
    core = _backend.get_core(backend)
    gen = np.random.Generator(np.random.PCG64(seed))
    out = np.empty((paths, n))
    status, _ = core.em_endpoints(x, paths, phi, dphi, basis.h, basis.sigma, basis.R,
                                  dt, steps, out, gen)
    if status == core.STATUS_SINGULAR:
        raise SingularityError("Slater determinant vanished along a path")
    if status != core.STATUS_OK:
        raise StiffnessError("proposals keep leaving the cone")
    return out


def semigroup_apply(basis: SpectralBasis, t: float, f) -> np.ndarray:
    """``S^t f`` on the grid through the eigen-expansion of the h-transform.

    Values at the two walls are copied from their interior neighbours; in
    the far tail where ``phi_0`` underflows the result is not meaningful
    (see ``SpectralBasis.bulk_mask``).
    """
    if t < 0:
        raise DomainError("t must be non-negative")
    f = np.asarray(f, dtype=float)
    if f.shape != basis.grid.shape:
        raise DomainError("f must be sampled on the basis grid")
    phi0 = basis.phi[0]
    coef = basis.h * basis.phi @ (f * phi0)
    decay = np.exp(-(basis.eigenvalues - basis.eigenvalues[0]) * t)
    num = (decay * coef) @ basis.phi
    out = np.empty_like(num)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:-1] = num[1:-1] / phi0[1:-1]
    out[0], out[-1] = out[1], out[-2]
    return out


def stationary_mean(basis: SpectralBasis, f) -> float:
    """``int f phi_0^2``, the long-time limit of the semigroup."""
    return basis.inner(np.asarray(f, dtype=float), basis.density())


def gram_cumulative(basis: SpectralBasis, n: int) -> np.ndarray:
    """``int_0^{r_g} phi_i phi_j`` at every grid point, shape (G+1, n, n)."""
    if n > basis.k:
        raise SizeError(f"need {n} eigenfunctions, basis holds {basis.k}")
    prods = basis.phi[:n, None, :] * basis.phi[None, :n, :]
    cum = cumulative_trapezoid(prods, dx=basis.h, axis=-1, initial=0.0)
    return np.moveaxis(cum, -1, 0)


def marginal_cdfs(basis: SpectralBasis, n: int, s=None) -> np.ndarray:
    """CDFs of each ordered coordinate under the density ``Delta^2``.

    Row ``l`` is ``P(r_{l+1} <= s)`` (row 0 the top path).  With ``G(s)``
    the Gram matrix over ``[0, s]``, the number of points above ``s`` has
    generating function ``det(G + z (I - G))``; the CDF of the ``l``-th
    largest point sums its first ``l`` coefficients.  Evaluated on the
    basis grid unless ``s`` is given (linear interpolation).
    """
    cum = gram_cumulative(basis, n)
    g = np.clip(np.linalg.eigvalsh(cum), 0.0, 1.0)  # (G+1, n)
    coeffs = np.zeros((len(g), n + 1))
    coeffs[:, 0] = 1.0
    for i in range(n):
        # multiply by (g_i + z (1 - g_i))
        shifted = np.zeros_like(coeffs)
        shifted[:, 1:] = coeffs[:, :-1] * (1.0 - g[:, i : i + 1])
        coeffs = coeffs * g[:, i : i + 1] + shifted
    cdfs = np.cumsum(coeffs[:, :n], axis=1).T
    if s is None:
        return cdfs
    return np.array([np.interp(s, basis.grid, row) for row in cdfs])


def top_path_cdf(basis: SpectralBasis, n: int, s=None) -> np.ndarray:
    """``P(r_1 <= s) = det[int_0^s phi_i phi_j]`` for the top of ``n`` paths."""
    d = np.linalg.det(gram_cumulative(basis, n))
    return d if s is None else np.interp(s, basis.grid, d)


def pair_density_grid(basis: SpectralBasis, stride: int = 1):
    """``Delta^2`` for n=2 on the ordered part of a (sub)grid, normalised to 1."""
    r = basis.grid[::stride]
    p0, p1 = basis.phi[0, ::stride], basis.phi[1, ::stride]
    delta = np.outer(p0, p1) - np.outer(p1, p0)  # (i, j) -> r_1 = r[i], r_2 = r[j]
    dens = np.where(r[:, None] > r[None, :], delta**2, 0.0)
    cell = (basis.h * stride) ** 2
    return r, dens / (dens.sum() * cell)
