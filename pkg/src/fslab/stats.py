"""Kolmogorov-Smirnov distances between lattice laws, samples and smooth CDFs."""
from __future__ import annotations

import numpy as np


class TabulatedCDF:
    """Monotone CDF given on a grid, linearly interpolated, 0 below and 1 above."""

    def __init__(self, grid, values):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.clip(np.maximum.accumulate(np.asarray(values, dtype=float)), 0.0, 1.0)

    def __call__(self, s):
        return np.interp(s, self.grid, self.values, left=0.0, right=1.0)


def ks_atoms(positions, probs, cdf) -> float:
    """Sup distance between a discrete law on ``positions`` and a continuous CDF."""
    positions = np.asarray(positions, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(positions)
    positions, probs = positions[order], probs[order]
    F = np.cumsum(probs)
    G = cdf(positions)
    return float(max(np.max(np.abs(F - G)), np.max(np.abs(F - probs - G))))


def ks_cells(centers, width: float, probs, cdf, points: int = 20001) -> float:
    """KS distance after spreading each atom uniformly over a cell of ``width``.

    The smoothed CDF is piecewise linear; the sup is taken over its knots
    and a uniform grid of ``points`` covering the support.
    """
    centers = np.asarray(centers, dtype=float)
    probs = np.asarray(probs, dtype=float)
    keep = probs > 0
    centers, probs = centers[keep], probs[keep]
    lo, hi = centers - width / 2, centers + width / 2
    xs = np.union1d(np.concatenate([lo, hi]), np.linspace(0.0, hi.max() + width, points))
    F = np.zeros_like(xs)
    for a, b, m in zip(lo, hi, probs):
        F += m * np.clip((xs - a) / (b - a), 0.0, 1.0)
    return float(np.max(np.abs(F - cdf(xs))))


def lattice_ks(p, H: float, cdf, period: int = 1, shift: float = 0.0) -> dict:
    """Raw and lattice-corrected KS for a height law ``p`` over ``0..M`` rescaled by ``H``.

    ``raw`` compares atoms at ``x / H``.  ``corrected`` places them at
    ``(x + shift) / H`` and spreads each over the ``period / H`` cell that
    the walk occupies on its sublattice.
    """
    x = np.arange(len(p), dtype=float)
    return {
        "raw": ks_atoms(x / H, p, cdf),
        "corrected": ks_cells((x + shift) / H, period / H, p, cdf),
    }


def lattice_shift(n: int, path: int, period: int, boundary=None) -> float:
    """Offset of path ``path`` (0 = top) of ``n`` weakly ordered walks.

    One unit for the wall, plus for each lower neighbour the gap that turns
    weak ordering into strict ordering on a common sublattice: ``period``
    when the two paths share a residue mod ``period`` (read off
    ``boundary``, default all equal), otherwise ``period - r`` for residue
    difference ``r``.
    """
    u = [0] * n if boundary is None else list(boundary)
    gap = 0
    for j in range(path, n - 1):
        r = (u[j] - u[j + 1]) % period
        gap += period - r
    return 1.0 + gap


def ks_sample(samples, cdf) -> float:
    """One-sample KS statistic of ``samples`` against ``cdf``."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    m = len(s)
    G = cdf(s)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - G), np.max(G - (i - 1) / m)))


def ks_2d(samples, grid, joint_cdf) -> float:
    """Sup over ``grid x grid`` of ``|F_emp(a, b) - F(a, b)|`` with ``F(a, b) = P(X <= a, Y <= b)``.

    ``joint_cdf`` is the reference on the same grid, shape (len(grid), len(grid)).
    """
    samples = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    ia = np.searchsorted(grid, samples[:, 0], side="left")
    ib = np.searchsorted(grid, samples[:, 1], side="left")
    G = len(grid)
    inside = (ia < G) & (ib < G)
    counts = np.zeros((G, G))
    np.add.at(counts, (ia[inside], ib[inside]), 1.0)
    emp = counts.cumsum(axis=0).cumsum(axis=1) / len(samples)
    return float(np.max(np.abs(emp - joint_cdf)))


def total_variation(p, q) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())
