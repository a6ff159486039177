"""Independent reference computations used as test oracles.

None of these call into the code under test.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import solve_ivp

# Ai(0) and Ai'(0) from their Gamma-function closed forms
AI0 = 1.0 / (3.0 ** (2.0 / 3.0) * math.gamma(2.0 / 3.0))
AIP0 = -1.0 / (3.0 ** (1.0 / 3.0) * math.gamma(1.0 / 3.0))


def airy_ode(s_values, s_max_forward: float = 8.0):
    """(Ai(s), Ai'(s)) by integrating ``y'' = s y`` from the values at 0 with DOP853.

    Forward integration picks up the growing Bi mode, so beyond
    ``s_max_forward`` the function is reported as 0 (|Ai| < 1e-7 there).
    """
    s_values = np.asarray(s_values, dtype=float)
    out = np.zeros((2, len(s_values)))

    def rhs(s, y):
        return [y[1], s * y[0]]

    neg = s_values < 0
    pos = (s_values >= 0) & (s_values <= s_max_forward)
    if neg.any():
        pts = s_values[neg]
        order = np.argsort(-pts)
        sol = solve_ivp(rhs, (0.0, pts.min()), [AI0, AIP0], method="DOP853", rtol=1e-12,
                        atol=1e-14, t_eval=pts[order])
        out[:, np.flatnonzero(neg)[order]] = sol.y
    if pos.any():
        pts = s_values[pos]
        order = np.argsort(pts)
        sol = solve_ivp(rhs, (0.0, max(pts.max(), 1e-12)), [AI0, AIP0], method="DOP853",
                        rtol=1e-12, atol=1e-14, t_eval=pts[order])
        out[:, np.flatnonzero(pos)[order]] = sol.y
    return out[0], out[1]


def airy_first_zero() -> float:
    """Largest zero of Ai on the negative axis, by bisection on the ODE solution."""
    lo, hi = -2.5, -2.2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if airy_ode([mid])[0][0] > 0:
            hi = mid
        else:
            lo = mid
    return -0.5 * (lo + hi)


def enumerate_paths(start: int, end: int, steps: int, offsets, M: int):
    """All height sequences of ``steps`` steps from ``start`` to ``end`` inside [0, M]."""
    paths = []
    for seq in itertools.product(offsets, repeat=steps):
        h = [start]
        ok = True
        for z in seq:
            h.append(h[-1] + z)
            if not 0 <= h[-1] <= M:
                ok = False
                break
        if ok and h[-1] == end:
            paths.append((tuple(h), seq))
    return paths


def brute_force_partition(n, N, u, v, steps: dict, V, M: int) -> float:
    """Sum over all weakly ordered n-tuples of paths of prod p_z * exp(-sum V(x_t))."""
    singles = []
    for l in range(n):
        ps = []
        for h, seq in enumerate_paths(u[l], v[l], 2 * N, list(steps), M):
            logw = sum(math.log(steps[z]) for z in seq) - sum(V(x) for x in h)
            ps.append((np.array(h), logw))
        singles.append(ps)
    terms = []
    for combo in itertools.product(*singles):
        hs = [c[0] for c in combo]
        if all(np.all(hs[i] >= hs[i + 1]) for i in range(n - 1)):
            terms.append(sum(c[1] for c in combo))
    if not terms:
        return 0.0
    top = max(terms)
    return math.exp(top) * math.fsum(math.exp(t - top) for t in terms)


def brute_force_marginal(N, u, v, steps: dict, V, M: int, t: int) -> np.ndarray:
    """Law of X(t) for one path by enumeration."""
    p = np.zeros(M + 1)
    for h, seq in enumerate_paths(u, v, 2 * N, list(steps), M):
        w = math.prod(steps[z] for z in seq) * math.exp(-sum(V(x) for x in h))
        p[h[t + N]] += w
    return p / p.sum()


def naive_bridges(N: int, x: int, y: int, cap: int) -> dict:
    """Count bridges by (length, area) with a plain recursive walk (no distance pruning)."""
    counts: dict = {}
    start, goal = (-N, x), (N, y)
    path = [start]
    seen = {start}

    def area(vs):
        return sum(b[1] * (b[0] - a[0]) for a, b in zip(vs, vs[1:]))

    def rec():
        cur = path[-1]
        if cur == goal:
            key = (len(path) - 1, area(path))
            counts[key] = counts.get(key, 0) + 1
            return
        if len(path) - 1 == cap:
            return
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = (cur[0] + dx, cur[1] + dy)
            if q in seen or q[1] < 0 or not -N <= q[0] <= N:
                continue
            path.append(q)
            seen.add(q)
            rec()
            seen.discard(q)
            path.pop()

    rec()
    return counts
