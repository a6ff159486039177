# cython: language_level=3
"""Compiled hot loops: heat-bath sweeps, Euler-Maruyama stepping, SAW DFS.

Every function here has a line-for-line twin in ``_core_py``.  Both draw
their random numbers from the same numpy ``Generator`` in the same order
(uniforms via ``next_double``, normals via the ziggurat sampler), so for a
fixed seed the two backends produce the same stream.
"""
import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_uniform

cnp.import_array()

BACKEND = "compiled"

# status codes shared with the pure-Python twin
DEF OK = 0
DEF BUDGET = 1
DEF STIFF = 2
DEF SINGULAR = 3
DEF MAX_RETRIES = 100
DEF MAX_HALVINGS = 30
DEF MAX_PATHS = 16

STATUS_OK = OK
STATUS_BUDGET = BUDGET
STATUS_STIFF = STIFF
STATUS_SINGULAR = SINGULAR


cdef bitgen_t* _bitgen(object gen) except NULL:
    capsule = gen.bit_generator.capsule
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


# ---------------------------------------------------------------------------
# heat-bath sampler for ordered tilted walks
# ---------------------------------------------------------------------------

def heat_bath_sweeps(cnp.int64_t[:, ::1] heights, long lo, double[::1] ptab,
                     double[::1] boltz, long M, long sweeps, long thin,
                     long record_t, cnp.int64_t[:, ::1] hist,
                     cnp.int64_t[::1] joint, object gen):
    """Run ``sweeps`` systematic-scan heat-bath sweeps in place.

    ``heights`` is (n, T) with row 0 the top path; the first and last
    columns are the pinned boundary values.  ``ptab[k]`` is the probability
    of the step ``lo + k``; ``boltz[x] = exp(-V(x))``.  Every ``thin``
    sweeps the heights at column ``record_t`` are added to ``hist`` (n, M+1)
    and, if ``joint`` is non-empty, to the flattened joint histogram.
    """
    cdef Py_ssize_t n = heights.shape[0]
    cdef Py_ssize_t T = heights.shape[1]
    cdef Py_ssize_t K = ptab.shape[0]
    cdef bint do_hist = hist.shape[0] > 0
    cdef bint do_joint = joint.shape[0] > 0
    cdef bitgen_t* rng = _bitgen(gen)
    cdef double* cw = <double*> malloc(K * sizeof(double))
    cdef long* cx = <long*> malloc(K * sizeof(long))
    cdef long s, t, l, k, a, b, x, lower, upper, d2, count, idx, stride
    cdef double w, total, u
    if cw == NULL or cx == NULL:
        free(cw)
        free(cx)
        raise MemoryError()
    try:
        with gen.bit_generator.lock, nogil:
            for s in range(sweeps):
                for t in range(1, T - 1):
                    for l in range(n):
                        a = heights[l, t - 1]
                        b = heights[l, t + 1]
                        lower = heights[l + 1, t] if l < n - 1 else 0
                        upper = heights[l - 1, t] if l > 0 else M
                        count = 0
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
                                cw[count] = w
                                cx[count] = x
                                total = total + w
                                count = count + 1
                        if count == 1:
                            heights[l, t] = cx[0]
                        elif count > 1:
                            u = random_standard_uniform(rng) * total
                            k = 0
                            while k < count - 1 and u >= cw[k]:
                                u = u - cw[k]
                                k = k + 1
                            heights[l, t] = cx[k]
                if (s + 1) % thin == 0:
                    if do_hist:
                        for l in range(n):
                            hist[l, heights[l, record_t]] += 1
                    if do_joint:
                        idx = 0
                        stride = 1
                        for l in range(n):
                            idx = idx + heights[l, record_t] * stride
                            stride = stride * (M + 1)
                        joint[idx] += 1
    finally:
        free(cw)
        free(cx)


# ---------------------------------------------------------------------------
# Euler-Maruyama for (Dyson) Ferrari-Spohn diffusions
# ---------------------------------------------------------------------------

cdef struct Tables:
    double* phi
    double* dphi
    long stride
    long G
    double h
    int n


cdef inline void _hermite(Tables* tb, int j, double r, double* val, double* der) noexcept nogil:
    """Cubic Hermite value and derivative of eigenfunction j at r."""
    cdef long i = <long>(r / tb.h)
    cdef double s, y0, y1, m0, m1, s2, s3
    if i < 0:
        i = 0
    if i >= tb.G:
        i = tb.G - 1
    s = r / tb.h - i
    y0 = tb.phi[j * tb.stride + i]
    y1 = tb.phi[j * tb.stride + i + 1]
    m0 = tb.dphi[j * tb.stride + i]
    m1 = tb.dphi[j * tb.stride + i + 1]
    s2 = s * s
    s3 = s2 * s
    val[0] = ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * tb.h * m0
              + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * tb.h * m1)
    der[0] = ((6 * s2 - 6 * s) * y0 + (-6 * s2 + 6 * s) * y1) / tb.h \
        + (3 * s2 - 4 * s + 1) * m0 + (3 * s2 - 2 * s) * m1


cdef int _grad_log_det(Tables* tb, double* x, double* grad) noexcept nogil:
    """grad_i log det[phi_j(x_i)] = (B A^{-1})_{ii} with B_ij = phi_j'(x_i)."""
    cdef int n = tb.n
    cdef double A[MAX_PATHS][MAX_PATHS]
    cdef double B[MAX_PATHS][MAX_PATHS]
    cdef double Inv[MAX_PATHS][MAX_PATHS]
    cdef int i, j, c, p
    cdef double v, d, piv, f, tmp
    for i in range(n):
        for j in range(n):
            _hermite(tb, j, x[i], &v, &d)
            A[i][j] = v
            B[i][j] = d
    if n == 1:
        if fabs(A[0][0]) < 1e-300:
            return SINGULAR
        grad[0] = B[0][0] / A[0][0]
        return OK
    for i in range(n):
        for j in range(n):
            Inv[i][j] = 1.0 if i == j else 0.0
    # Gauss-Jordan with partial pivoting
    for c in range(n):
        p = c
        piv = fabs(A[c][c])
        for i in range(c + 1, n):
            if fabs(A[i][c]) > piv:
                piv = fabs(A[i][c])
                p = i
        if piv < 1e-300:
            return SINGULAR
        if p != c:
            for j in range(n):
                tmp = A[c][j]; A[c][j] = A[p][j]; A[p][j] = tmp
                tmp = Inv[c][j]; Inv[c][j] = Inv[p][j]; Inv[p][j] = tmp
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


cdef inline bint _inside(double* y, int n, double R) noexcept nogil:
    cdef int i
    if y[n - 1] <= 0.0 or y[0] >= R:
        return False
    for i in range(n - 1):
        if y[i + 1] >= y[i]:
            return False
    return True


cdef int _advance(Tables* tb, bitgen_t* rng, double* x, double sigma, double R,
                  double dt, int depth, long* rejected) noexcept nogil:
    cdef int n = tb.n
    cdef double grad[MAX_PATHS]
    cdef double y[MAX_PATHS]
    cdef double s2 = sigma * sigma
    cdef double sq = sigma * sqrt(dt)
    cdef int i, attempt, status
    status = _grad_log_det(tb, x, grad)
    if status != OK:
        return status
    for attempt in range(MAX_RETRIES):
        for i in range(n):
            y[i] = x[i] + s2 * grad[i] * dt + sq * random_standard_normal(rng)
        if _inside(y, n, R):
            for i in range(n):
                x[i] = y[i]
            return OK
        rejected[0] += 1
    if depth >= MAX_HALVINGS:
        return STIFF
    status = _advance(tb, rng, x, sigma, R, 0.5 * dt, depth + 1, rejected)
    if status != OK:
        return status
    return _advance(tb, rng, x, sigma, R, 0.5 * dt, depth + 1, rejected)


def em_path(double[::1] x, double[:, ::1] phi, double[:, ::1] dphi, double h,
            double sigma, double R, double dt, long steps, long record_every,
            double[:, ::1] out, object gen):
    """Advance ``x`` (ordered, top first) by ``steps`` Euler-Maruyama steps.

    Returns ``(status, steps_done, rejected)``; ``x`` holds the last state.
    """
    cdef Tables tb
    cdef bitgen_t* rng = _bitgen(gen)
    cdef long step, rejected = 0, row = 0, done = 0
    cdef int status = OK, i
    tb.n = x.shape[0]
    if tb.n > MAX_PATHS:
        raise ValueError("too many paths for the compiled integrator")
    tb.phi = &phi[0, 0]
    tb.dphi = &dphi[0, 0]
    tb.stride = phi.shape[1]
    tb.G = phi.shape[1] - 1
    tb.h = h
    with gen.bit_generator.lock, nogil:
        for step in range(steps):
            status = _advance(&tb, rng, &x[0], sigma, R, dt, 0, &rejected)
            if status != OK:
                break
            done = done + 1
            if record_every > 0 and (step + 1) % record_every == 0:
                for i in range(tb.n):
                    out[row, i] = x[i]
                row = row + 1
    return status, done, rejected


def em_endpoints(double[::1] x0, long n_paths, double[:, ::1] phi,
                 double[:, ::1] dphi, double h, double sigma, double R,
                 double dt, long steps, double[:, ::1] out, object gen):
    """Run ``n_paths`` independent paths from ``x0`` and store final states."""
    cdef Tables tb
    cdef bitgen_t* rng = _bitgen(gen)
    cdef double x[MAX_PATHS]
    cdef long p, step, rejected = 0
    cdef int status = OK, i
    tb.n = x0.shape[0]
    if tb.n > MAX_PATHS:
        raise ValueError("too many paths for the compiled integrator")
    tb.phi = &phi[0, 0]
    tb.dphi = &dphi[0, 0]
    tb.stride = phi.shape[1]
    tb.G = phi.shape[1] - 1
    tb.h = h
    with gen.bit_generator.lock, nogil:
        for p in range(n_paths):
            for i in range(tb.n):
                x[i] = x0[i]
            for step in range(steps):
                status = _advance(&tb, rng, x, sigma, R, dt, 0, &rejected)
                if status != OK:
                    break
            if status != OK:
                break
            for i in range(tb.n):
                out[p, i] = x[i]
    return status, rejected


# ---------------------------------------------------------------------------
# self-avoiding bridge enumeration
# ---------------------------------------------------------------------------

def saw_count(long N, long y_start, long y_end, long max_length,
              cnp.int64_t[::1] order, long budget):
    """Count positive bridges (-N, y_start) -> (N, y_end) by (length, area).

    Returns ``(status, counts, amax, nodes)`` where ``counts[L, A + amax]`` is
    the number of bridges of length L and area A.
    """
    cdef long W = 2 * N + 1
    cdef long Hmax = max(y_start, y_end) + max_length + 2
    cdef long amax = Hmax * max_length
    cdef long dxs[4]
    cdef long dys[4]
    dxs[:] = [1, 0, -1, 0]
    dys[:] = [0, 1, 0, -1]
    counts_np = np.zeros((max_length + 1, 2 * amax + 1), dtype=np.int64)
    visited_np = np.zeros(W * Hmax, dtype=np.uint8)
    px_np = np.zeros(max_length + 1, dtype=np.int64)
    py_np = np.zeros(max_length + 1, dtype=np.int64)
    pa_np = np.zeros(max_length + 1, dtype=np.int64)
    nd_np = np.zeros(max_length + 1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] counts = counts_np
    cdef unsigned char[::1] visited = visited_np
    cdef cnp.int64_t[::1] px = px_np
    cdef cnp.int64_t[::1] py = py_np
    cdef cnp.int64_t[::1] pa = pa_np
    cdef cnp.int64_t[::1] nd = nd_np
    cdef long depth = 0, nodes = 0, d, nx, ny, na, newlen
    cdef int status = OK
    px[0] = -N
    py[0] = y_start
    pa[0] = 0
    nd[0] = 0
    visited[(px[0] + N) * Hmax + py[0]] = 1
    with nogil:
        while depth >= 0:
            if nd[depth] == 4:
                visited[(px[depth] + N) * Hmax + py[depth]] = 0
                depth = depth - 1
                continue
            d = order[nd[depth]]
            nd[depth] += 1
            nx = px[depth] + dxs[d]
            ny = py[depth] + dys[d]
            if nx < -N or nx > N or ny < 0 or ny >= Hmax:
                continue
            if visited[(nx + N) * Hmax + ny]:
                continue
            newlen = depth + 1
            if newlen > max_length:
                continue
            if (N - nx) + (ny - y_end if ny >= y_end else y_end - ny) > max_length - newlen:
                continue
            nodes = nodes + 1
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
            visited[(nx + N) * Hmax + ny] = 1
    return status, counts_np, amax, nodes
