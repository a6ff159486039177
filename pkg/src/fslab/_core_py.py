"""Pure-Python twin of the compiled core (``_core.pyx``).

Same signatures, same arithmetic order and same random-number consumption,
so a fixed seed yields the same stream on either backend.  Orders of
magnitude slower; meant for portability and for cross-checking.
"""
import math

import numpy as np

BACKEND = "python"

OK = 0
BUDGET = 1
STIFF = 2
SINGULAR = 3
MAX_RETRIES = 100
MAX_HALVINGS = 30
MAX_PATHS = 16

STATUS_OK = OK
STATUS_BUDGET = BUDGET
STATUS_STIFF = STIFF
STATUS_SINGULAR = SINGULAR


def heat_bath_sweeps(heights, lo, ptab, boltz, M, sweeps, thin, record_t, hist, joint, gen):
    n, T = heights.shape
    K = len(ptab)
    ptab = [float(p) for p in ptab]
    boltz = [float(b) for b in boltz]
    do_hist = hist.shape[0] > 0
    do_joint = joint.shape[0] > 0
    rows = [list(map(int, row)) for row in heights]
    random = gen.random
    for s in range(sweeps):
        for t in range(1, T - 1):
            for l in range(n):
                a = rows[l][t - 1]
                b = rows[l][t + 1]
                lower = rows[l + 1][t] if l < n - 1 else 0
                upper = rows[l - 1][t] if l > 0 else M
                cw = []
                cx = []
                total = 0.0
                for k in range(K):
                    if ptab[k] == 0.0:
                        continue
                    x = a + lo + k
                    if x < lower or x > upper:
                        continue
                    d2 = b - x - lo
                    if d2 < 0 or d2 >= K:
                        continue
                    w = ptab[k] * ptab[d2] * boltz[x]
                    if w > 0.0:
                        cw.append(w)
                        cx.append(x)
                        total = total + w
                count = len(cw)
                if count == 1:
                    rows[l][t] = cx[0]
                elif count > 1:
                    u = random() * total
                    k = 0
                    while k < count - 1 and u >= cw[k]:
                        u = u - cw[k]
                        k = k + 1
                    rows[l][t] = cx[k]
        if (s + 1) % thin == 0:
            if do_hist:
                for l in range(n):
                    hist[l, rows[l][record_t]] += 1
            if do_joint:
                idx = 0
                stride = 1
                for l in range(n):
                    idx = idx + rows[l][record_t] * stride
                    stride = stride * (M + 1)
                joint[idx] += 1
    heights[:, :] = np.asarray(rows, dtype=np.int64)


class _Tables:
    def __init__(self, phi, dphi, h, n):
        self.phi = phi
        self.dphi = dphi
        self.G = phi.shape[1] - 1
        self.h = h
        self.n = n


def _hermite(tb, j, r):
    i = int(r / tb.h)
    if i < 0:
        i = 0
    if i >= tb.G:
        i = tb.G - 1
    s = r / tb.h - i
    y0 = float(tb.phi[j, i])
    y1 = float(tb.phi[j, i + 1])
    m0 = float(tb.dphi[j, i])
    m1 = float(tb.dphi[j, i + 1])
    s2 = s * s
    s3 = s2 * s
    val = ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * tb.h * m0
           + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * tb.h * m1)
    der = ((6 * s2 - 6 * s) * y0 + (-6 * s2 + 6 * s) * y1) / tb.h \
        + (3 * s2 - 4 * s + 1) * m0 + (3 * s2 - 2 * s) * m1
    return val, der


def _grad_log_det(tb, x, grad):
    n = tb.n
    A = [[0.0] * n for _ in range(n)]
    B = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            A[i][j], B[i][j] = _hermite(tb, j, x[i])
    if n == 1:
        if abs(A[0][0]) < 1e-300:
            return SINGULAR
        grad[0] = B[0][0] / A[0][0]
        return OK
    Inv = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for c in range(n):
        p = c
        piv = abs(A[c][c])
        for i in range(c + 1, n):
            if abs(A[i][c]) > piv:
                piv = abs(A[i][c])
                p = i
        if piv < 1e-300:
            return SINGULAR
        if p != c:
            A[c], A[p] = A[p], A[c]
            Inv[c], Inv[p] = Inv[p], Inv[c]
        piv = A[c][c]
        for j in range(n):
            A[c][j] = A[c][j] / piv
            Inv[c][j] = Inv[c][j] / piv
        for i in range(n):
            if i != c:
                f = A[i][c]
                if f != 0.0:
                    for j in range(n):
                        A[i][j] = A[i][j] - f * A[c][j]
                        Inv[i][j] = Inv[i][j] - f * Inv[c][j]
    for i in range(n):
        v = 0.0
        for j in range(n):
            v = v + B[i][j] * Inv[j][i]
        grad[i] = v
    return OK


def _inside(y, n, R):
    if y[n - 1] <= 0.0 or y[0] >= R:
        return False
    for i in range(n - 1):
        if y[i + 1] >= y[i]:
            return False
    return True


def _advance(tb, gen, x, sigma, R, dt, depth, rejected):
    n = tb.n
    grad = [0.0] * n
    s2 = sigma * sigma
    sq = sigma * math.sqrt(dt)
    status = _grad_log_det(tb, x, grad)
    if status != OK:
        return status
    normal = gen.standard_normal
    for _ in range(MAX_RETRIES):
        y = [x[i] + s2 * grad[i] * dt + sq * normal() for i in range(n)]
        if _inside(y, n, R):
            x[:] = y
            return OK
        rejected[0] += 1
    if depth >= MAX_HALVINGS:
        return STIFF
    status = _advance(tb, gen, x, sigma, R, 0.5 * dt, depth + 1, rejected)
    if status != OK:
        return status
    return _advance(tb, gen, x, sigma, R, 0.5 * dt, depth + 1, rejected)


def em_path(x, phi, dphi, h, sigma, R, dt, steps, record_every, out, gen):
    n = len(x)
    if n > MAX_PATHS:
        raise ValueError("too many paths for the integrator")
    tb = _Tables(phi, dphi, h, n)
    state = [float(v) for v in x]
    rejected = [0]
    status = OK
    done = 0
    row = 0
    for step in range(steps):
        status = _advance(tb, gen, state, sigma, R, dt, 0, rejected)
        if status != OK:
            break
        done += 1
        if record_every > 0 and (step + 1) % record_every == 0:
            out[row, :] = state
            row += 1
    x[:] = state
    return status, done, rejected[0]


def em_endpoints(x0, n_paths, phi, dphi, h, sigma, R, dt, steps, out, gen):
    n = len(x0)
    if n > MAX_PATHS:
        raise ValueError("too many paths for the integrator")
    tb = _Tables(phi, dphi, h, n)
    rejected = [0]
    status = OK
    for p in range(n_paths):
        x = [float(v) for v in x0]
        for _ in range(steps):
            status = _advance(tb, gen, x, sigma, R, dt, 0, rejected)
            if status != OK:
                break
        if status != OK:
            break
        out[p, :] = x
    return status, rejected[0]


def saw_count(N, y_start, y_end, max_length, order, budget):
    Hmax = max(y_start, y_end) + max_length + 2
    amax = Hmax * max_length
    counts = np.zeros((max_length + 1, 2 * amax + 1), dtype=np.int64)
    dxs = (1, 0, -1, 0)
    dys = (0, 1, 0, -1)
    order = [int(o) for o in order]
    visited = {(-N, y_start)}
    px = [-N] + [0] * max_length
    py = [y_start] + [0] * max_length
    pa = [0] * (max_length + 1)
    nd = [0] * (max_length + 1)
    depth = 0
    nodes = 0
    status = OK
    while depth >= 0:
        if nd[depth] == 4:
            visited.discard((px[depth], py[depth]))
            depth -= 1
            continue
        d = order[nd[depth]]
        nd[depth] += 1
        nx = px[depth] + dxs[d]
        ny = py[depth] + dys[d]
        if nx < -N or nx > N or ny < 0 or ny >= Hmax:
            continue
        if (nx, ny) in visited:
            continue
        newlen = depth + 1
        if newlen > max_length:
            continue
        if (N - nx) + abs(ny - y_end) > max_length - newlen:
            continue
        nodes += 1
        if nodes > budget:
            status = BUDGET
            break
        na = pa[depth] + ny * dxs[d]
        if nx == N and ny == y_end:
            counts[newlen, na + amax] += 1
            continue
        depth = newlen
        px[depth] = nx
        py[depth] = ny
        pa[depth] = na
        nd[depth] = 0
        visited.add((nx, ny))
    return status, counts, amax, nodes
