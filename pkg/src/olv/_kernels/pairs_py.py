"""Pure-python pair kernels: the fallback backend.

Same contract as the compiled module: truncated-shifted 12-6 interactions
under per-axis periodic minimum image.  The pair set is produced by chunked
vectorized O(N^2) minimum-image masking, which is exact (identical to the
linked-cell pair set by definition) and numpy-idiomatic; the compiled
backend exists because this path is an order of magnitude slower in the MD
inner loop.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 512


def _min_image(d, box, periodic):
    for a in range(3):
        if periodic[a]:
            d[..., a] -= box[a] * np.round(d[..., a] / box[a])
    return d


def _pair_u_fcoef(r2, epsilon, sigma, shift):
    s6 = (sigma * sigma / r2) ** 3
    u = 4.0 * epsilon * (s6 * s6 - s6) - shift
    fcoef = 24.0 * epsilon * (2.0 * s6 * s6 - s6) / r2
    return u, fcoef


def forces(q, box, periodic, rc, epsilon, sigma, shift, out):
    """Accumulate pair forces into out; return (total energy, min pair r)."""
    n = q.shape[0]
    out[:] = 0.0
    utot = 0.0
    min_r2 = np.inf
    rc2 = rc * rc
    for i0 in range(0, n, _CHUNK):
        i1 = min(i0 + _CHUNK, n)
        d = q[i0:i1, None, :] - q[None, :, :]
        _min_image(d, box, periodic)
        r2 = np.einsum("ijk,ijk->ij", d, d)
        rows = np.arange(i0, i1)
        # keep j > i only: each unordered pair once
        mask = (r2 < rc2) & (np.arange(n)[None, :] > rows[:, None])
        ii, jj = np.nonzero(mask)
        if ii.size == 0:
            continue
        r2p = r2[ii, jj]
        min_r2 = min(min_r2, float(r2p.min()))
        u, fc = _pair_u_fcoef(r2p, epsilon, sigma, shift)
        utot += float(u.sum())
        fvec = fc[:, None] * d[ii, jj]
        np.add.at(out, rows[ii], fvec)
        np.add.at(out, jj, -fvec)
    return utot, float(np.sqrt(min_r2)) if np.isfinite(min_r2) else np.inf


def collect_pairs(q, box, periodic, rc):
    """All unordered pairs with minimum-image separation below rc."""
    n = q.shape[0]
    rc2 = rc * rc
    out_i, out_j = [], []
    for i0 in range(0, n, _CHUNK):
        i1 = min(i0 + _CHUNK, n)
        d = q[i0:i1, None, :] - q[None, :, :]
        _min_image(d, box, periodic)
        r2 = np.einsum("ijk,ijk->ij", d, d)
        rows = np.arange(i0, i1)
        mask = (r2 < rc2) & (np.arange(n)[None, :] > rows[:, None])
        ii, jj = np.nonzero(mask)
        out_i.append(rows[ii])
        out_j.append(jj)
    if not out_i:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return (
        np.concatenate(out_i).astype(np.int64),
        np.concatenate(out_j).astype(np.int64),
    )


def trial_energies(q, box, periodic, rc, epsilon, sigma, shift, floor, trials):
    """Interaction energy of each trial position with the configuration.

    Separations below the hard floor yield +inf (certain rejection) rather
    than an error: random insertions legitimately land on particles.
    """
    trials = np.atleast_2d(trials)
    m = trials.shape[0]
    out = np.zeros(m)
    if q.shape[0] == 0:
        return out
    rc2, fl2 = rc * rc, floor * floor
    for t0 in range(0, m, _CHUNK):
        t1 = min(t0 + _CHUNK, m)
        d = trials[t0:t1, None, :] - q[None, :, :]
        _min_image(d, box, periodic)
        r2 = np.einsum("ijk,ijk->ij", d, d)
        hit = r2 < fl2
        r2 = np.where(r2 < rc2, r2, np.inf)
        s6 = (sigma * sigma / r2) ** 3
        u = np.where(np.isfinite(r2), 4.0 * epsilon * (s6 * s6 - s6) - shift, 0.0)
        e = u.sum(axis=1)
        e[hit.any(axis=1)] = np.inf
        out[t0:t1] = e
    return out


def particle_energy(q, box, periodic, rc, epsilon, sigma, shift, floor, idx):
    """Interaction energy of particle idx with the rest of the system."""
    n = q.shape[0]
    if n < 2:
        return 0.0
    others = np.delete(np.arange(n), idx)
    d = q[idx][None, :] - q[others]
    _min_image(d, box, periodic)
    r2 = np.einsum("ij,ij->i", d, d)
    if np.any(r2 < floor * floor):
        return np.inf
    r2 = np.where(r2 < rc * rc, r2, np.inf)
    s6 = (sigma * sigma / r2) ** 3
    u = np.where(np.isfinite(r2), 4.0 * epsilon * (s6 * s6 - s6) - shift, 0.0)
    return float(u.sum())
