# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pair kernels: linked-cell forces and insertion/deletion energies.

Truncated-shifted 12-6 interactions under per-axis periodic minimum image.
A periodic axis that cannot fit three cells of width >= cutoff degrades to a
single cell (pairs on that axis are then enumerated directly, still exact);
offsets along single-cell axes are skipped so the stencil never aliases.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, nearbyint, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

# half stencil: 13 lexicographically positive neighbor offsets
cdef int[13][3] _HALF = [
    [1, -1, -1], [1, -1, 0], [1, -1, 1],
    [1, 0, -1], [1, 0, 0], [1, 0, 1],
    [1, 1, -1], [1, 1, 0], [1, 1, 1],
    [0, 1, -1], [0, 1, 0], [0, 1, 1],
    [0, 0, 1],
]


cdef inline double _mi(double d, double L, bint per) noexcept nogil:
    if per:
        d -= L * nearbyint(d / L)
    return d


cdef struct CellGrid:
    int nc[3]
    double width[3]
    int* head
    int* nxt
    int ncells


cdef int _grid_build(CellGrid* g, double[:, ::1] q, double[::1] box,
                     cnp.uint8_t[::1] periodic, double rc) except -1:
    cdef int a, i, n = q.shape[0]
    cdef int cx[3]
    cdef int c
    for a in range(3):
        g.nc[a] = <int>(box[a] / rc)
        if g.nc[a] < 1:
            g.nc[a] = 1
        if periodic[a] and g.nc[a] < 3:
            g.nc[a] = 1  # wrap would alias the stencil: fall back to direct pairs
        g.width[a] = box[a] / g.nc[a]
    g.ncells = g.nc[0] * g.nc[1] * g.nc[2]
    g.head = <int*>malloc(g.ncells * sizeof(int))
    g.nxt = <int*>malloc((n if n > 0 else 1) * sizeof(int))
    if g.head == NULL or g.nxt == NULL:
        free(g.head)
        free(g.nxt)
        raise MemoryError()
    for c in range(g.ncells):
        g.head[c] = -1
    for i in range(n):
        for a in range(3):
            cx[a] = <int>(q[i, a] / g.width[a])
            if cx[a] >= g.nc[a]:
                cx[a] = g.nc[a] - 1
            if cx[a] < 0:
                cx[a] = 0
        c = (cx[0] * g.nc[1] + cx[1]) * g.nc[2] + cx[2]
        g.nxt[i] = g.head[c]
        g.head[c] = i
    return 0


cdef inline void _grid_free(CellGrid* g) noexcept nogil:
    free(g.head)
    free(g.nxt)


cdef inline int _wrap_or_skip(int v, int nc, bint per) noexcept nogil:
    # returns valid cell index or -1 to skip
    if v < 0:
        return v + nc if per else -1
    if v >= nc:
        return v - nc if per else -1
    return v


cdef inline int _neighbor_cell(CellGrid* g, cnp.uint8_t[::1] periodic,
                               double[::1] box, int cx, int cy, int cz,
                               int k, double* sh) noexcept nogil:
    """Cell index for half-stencil offset k from (cx,cy,cz), or -1 to skip.

    sh receives the coordinate shift of the neighbor's periodic image, so
    q[i] - q[j] - sh is the separation without per-pair minimum imaging
    (exact for cells at least one cutoff wide; a single-cell axis instead
    signals per-pair imaging through g.nc[a] == 1).
    """
    cdef int vx, vy, vz
    sh[0] = 0.0
    sh[1] = 0.0
    sh[2] = 0.0
    if g.nc[0] == 1 and _HALF[k][0] != 0:
        return -1
    if g.nc[1] == 1 and _HALF[k][1] != 0:
        return -1
    if g.nc[2] == 1 and _HALF[k][2] != 0:
        return -1
    vx = cx + _HALF[k][0]
    vy = cy + _HALF[k][1]
    vz = cz + _HALF[k][2]
    if vx < 0:
        if not periodic[0]:
            return -1
        vx += g.nc[0]
        sh[0] = -box[0]
    elif vx >= g.nc[0]:
        if not periodic[0]:
            return -1
        vx -= g.nc[0]
        sh[0] = box[0]
    if vy < 0:
        if not periodic[1]:
            return -1
        vy += g.nc[1]
        sh[1] = -box[1]
    elif vy >= g.nc[1]:
        if not periodic[1]:
            return -1
        vy -= g.nc[1]
        sh[1] = box[1]
    if vz < 0:
        if not periodic[2]:
            return -1
        vz += g.nc[2]
        sh[2] = -box[2]
    elif vz >= g.nc[2]:
        if not periodic[2]:
            return -1
        vz -= g.nc[2]
        sh[2] = box[2]
    return (vx * g.nc[1] + vy) * g.nc[2] + vz


def forces(double[:, ::1] q, double[::1] box, cnp.uint8_t[::1] periodic,
           double rc, double epsilon, double sigma, double shift,
           double[:, ::1] out):
    """Accumulate pair forces into out; return (total energy, min pair r)."""
    cdef int n = q.shape[0]
    cdef CellGrid g
    cdef int i, j, k, cx, cy, cz, c, d
    cdef double rc2 = rc * rc
    cdef double sig2 = sigma * sigma
    cdef double utot = 0.0, min_r2 = INFINITY
    cdef double dv0, dv1, dv2, r2, s6, fc
    cdef double qi0, qi1, qi2, fi0, fi1, fi2
    cdef double sh[3]
    cdef bint same, deg0, deg1, deg2
    for i in range(n):
        out[i, 0] = 0.0
        out[i, 1] = 0.0
        out[i, 2] = 0.0
    if n < 2:
        return 0.0, INFINITY
    _grid_build(&g, q, box, periodic, rc)
    deg0 = g.nc[0] == 1 and periodic[0]
    deg1 = g.nc[1] == 1 and periodic[1]
    deg2 = g.nc[2] == 1 and periodic[2]
    with nogil:
        for cx in range(g.nc[0]):
            for cy in range(g.nc[1]):
                for cz in range(g.nc[2]):
                    c = (cx * g.nc[1] + cy) * g.nc[2] + cz
                    for k in range(14):  # 13 half-stencil neighbors + self
                        if k == 13:
                            d = c
                            same = True
                            sh[0] = 0.0
                            sh[1] = 0.0
                            sh[2] = 0.0
                        else:
                            same = False
                            d = _neighbor_cell(&g, periodic, box,
                                               cx, cy, cz, k, sh)
                            if d < 0:
                                continue
                        i = g.head[c]
                        while i != -1:
                            qi0 = q[i, 0] - sh[0]
                            qi1 = q[i, 1] - sh[1]
                            qi2 = q[i, 2] - sh[2]
                            fi0 = 0.0
                            fi1 = 0.0
                            fi2 = 0.0
                            j = g.nxt[i] if same else g.head[d]
                            while j != -1:
                                dv0 = qi0 - q[j, 0]
                                dv1 = qi1 - q[j, 1]
                                dv2 = qi2 - q[j, 2]
                                if deg0:
                                    dv0 = _mi(dv0, box[0], True)
                                if deg1:
                                    dv1 = _mi(dv1, box[1], True)
                                if deg2:
                                    dv2 = _mi(dv2, box[2], True)
                                r2 = dv0 * dv0 + dv1 * dv1 + dv2 * dv2
                                if r2 < rc2:
                                    if r2 < min_r2:
                                        min_r2 = r2
                                    s6 = sig2 / r2
                                    s6 = s6 * s6 * s6
                                    utot += 4.0 * epsilon * (s6 * s6 - s6) - shift
                                    fc = 24.0 * epsilon * (2.0 * s6 * s6 - s6) / r2
                                    fi0 += fc * dv0
                                    fi1 += fc * dv1
                                    fi2 += fc * dv2
                                    out[j, 0] -= fc * dv0
                                    out[j, 1] -= fc * dv1
                                    out[j, 2] -= fc * dv2
                                j = g.nxt[j]
                            out[i, 0] += fi0
                            out[i, 1] += fi1
                            out[i, 2] += fi2
                            i = g.nxt[i]
    _grid_free(&g)
    return utot, sqrt(min_r2) if min_r2 < INFINITY else INFINITY


def collect_pairs(double[:, ::1] q, double[::1] box, cnp.uint8_t[::1] periodic,
                  double rc):
    """All unordered pairs with minimum-image separation below rc."""
    cdef int n = q.shape[0]
    cdef list acc_i = [], acc_j = []
    cdef CellGrid g
    cdef int i, j, k, cx, cy, cz, c, d
    cdef double rc2 = rc * rc
    cdef double dv0, dv1, dv2, r2
    cdef double sh[3]
    cdef bint same, deg0, deg1, deg2
    if n < 2:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    _grid_build(&g, q, box, periodic, rc)
    deg0 = g.nc[0] == 1 and periodic[0]
    deg1 = g.nc[1] == 1 and periodic[1]
    deg2 = g.nc[2] == 1 and periodic[2]
    for cx in range(g.nc[0]):
        for cy in range(g.nc[1]):
            for cz in range(g.nc[2]):
                c = (cx * g.nc[1] + cy) * g.nc[2] + cz
                for k in range(14):
                    if k == 13:
                        d = c
                        same = True
                        sh[0] = 0.0
                        sh[1] = 0.0
                        sh[2] = 0.0
                    else:
                        same = False
                        d = _neighbor_cell(&g, periodic, box, cx, cy, cz,
                                           k, sh)
                        if d < 0:
                            continue
                    i = g.head[c]
                    while i != -1:
                        j = g.nxt[i] if same else g.head[d]
                        while j != -1:
                            dv0 = q[i, 0] - sh[0] - q[j, 0]
                            dv1 = q[i, 1] - sh[1] - q[j, 1]
                            dv2 = q[i, 2] - sh[2] - q[j, 2]
                            if deg0:
                                dv0 = _mi(dv0, box[0], True)
                            if deg1:
                                dv1 = _mi(dv1, box[1], True)
                            if deg2:
                                dv2 = _mi(dv2, box[2], True)
                            r2 = dv0 * dv0 + dv1 * dv1 + dv2 * dv2
                            if r2 < rc2:
                                if i < j:
                                    acc_i.append(i)
                                    acc_j.append(j)
                                else:
                                    acc_i.append(j)
                                    acc_j.append(i)
                            j = g.nxt[j]
                        i = g.nxt[i]
    _grid_free(&g)
    return (np.asarray(acc_i, dtype=np.int64), np.asarray(acc_j, dtype=np.int64))


cdef double _one_point_energy(double[:, ::1] q, double[::1] box,
                              cnp.uint8_t[::1] periodic, CellGrid* g,
                              double rc2, double fl2, double epsilon,
                              double sigma, double shift,
                              double x, double y, double z, int skip) noexcept nogil:
    cdef int a, j, dx, dy, dz, nx, ny, nz, d
    cdef int cc[3]
    cdef double pos[3]
    cdef double dv0, dv1, dv2, r2, s6, acc = 0.0
    pos[0] = x
    pos[1] = y
    pos[2] = z
    for a in range(3):
        cc[a] = <int>(pos[a] / g.width[a])
        if cc[a] >= g.nc[a]:
            cc[a] = g.nc[a] - 1
        if cc[a] < 0:
            cc[a] = 0
    for dx in range(-1, 2):
        if dx != 0 and g.nc[0] == 1:
            continue
        nx = _wrap_or_skip(cc[0] + dx, g.nc[0], periodic[0])
        if nx < 0:
            continue
        for dy in range(-1, 2):
            if dy != 0 and g.nc[1] == 1:
                continue
            ny = _wrap_or_skip(cc[1] + dy, g.nc[1], periodic[1])
            if ny < 0:
                continue
            for dz in range(-1, 2):
                if dz != 0 and g.nc[2] == 1:
                    continue
                nz = _wrap_or_skip(cc[2] + dz, g.nc[2], periodic[2])
                if nz < 0:
                    continue
                d = (nx * g.nc[1] + ny) * g.nc[2] + nz
                j = g.head[d]
                while j != -1:
                    if j != skip:
                        dv0 = _mi(x - q[j, 0], box[0], periodic[0])
                        dv1 = _mi(y - q[j, 1], box[1], periodic[1])
                        dv2 = _mi(z - q[j, 2], box[2], periodic[2])
                        r2 = dv0 * dv0 + dv1 * dv1 + dv2 * dv2
                        if r2 < fl2:
                            return INFINITY
                        if r2 < rc2:
                            s6 = sigma * sigma / r2
                            s6 = s6 * s6 * s6
                            acc += 4.0 * epsilon * (s6 * s6 - s6) - shift
                    j = g.nxt[j]
    return acc


def trial_energies(double[:, ::1] q, double[::1] box, cnp.uint8_t[::1] periodic,
                   double rc, double epsilon, double sigma, double shift,
                   double floor, double[:, ::1] trials):
    """Interaction energy of each trial position with the configuration.

    Below-floor separations give +inf (certain rejection for sampling).
    """
    cdef int m = trials.shape[0]
    cdef int n = q.shape[0]
    out = np.zeros(m)
    cdef double[::1] ov = out
    cdef CellGrid g
    cdef int t
    if n == 0:
        return out
    _grid_build(&g, q, box, periodic, rc)
    with nogil:
        for t in range(m):
            ov[t] = _one_point_energy(q, box, periodic, &g, rc * rc,
                                      floor * floor, epsilon, sigma, shift,
                                      trials[t, 0], trials[t, 1], trials[t, 2], -1)
    _grid_free(&g)
    return out


def particle_energy(double[:, ::1] q, double[::1] box, cnp.uint8_t[::1] periodic,
                    double rc, double epsilon, double sigma, double shift,
                    double floor, int idx):
    """Interaction energy of particle idx with the rest of the system."""
    cdef int n = q.shape[0]
    cdef CellGrid g
    cdef double e
    if n < 2:
        return 0.0
    _grid_build(&g, q, box, periodic, rc)
    e = _one_point_energy(q, box, periodic, &g, rc * rc, floor * floor,
                          epsilon, sigma, shift,
                          q[idx, 0], q[idx, 1], q[idx, 2], idx)
    _grid_free(&g)
    return e
