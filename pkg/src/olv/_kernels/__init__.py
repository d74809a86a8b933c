"""Pair-interaction kernel backend.

Prefers the compiled linked-cell extension; falls back to the vectorized
numpy implementation when the extension is unavailable or when the
OLV_PURE_PYTHON environment variable is set to a non-empty value.
Both backends share one calling convention and agree to float precision.
"""

import os
import warnings

import numpy as np

from . import pairs_py

if os.environ.get("OLV_PURE_PYTHON"):
    _impl = pairs_py
    BACKEND = "python"
else:
    try:
        from . import _pairs_cy as _impl
        BACKEND = "cython"
    except ImportError:
        warnings.warn(
            "compiled pair kernels unavailable, using pure-python fallback",
            RuntimeWarning,
            stacklevel=2,
        )
        _impl = pairs_py
        BACKEND = "python"


def _prep(q, box, periodic):
    q = np.ascontiguousarray(q, dtype=np.float64)
    box = np.ascontiguousarray(box, dtype=np.float64)
    per = np.ascontiguousarray(
        [1 if p else 0 for p in periodic], dtype=np.uint8
    )
    return q, box, per


def forces(q, box, periodic, rc, epsilon, sigma, shift, out=None):
    """Pair forces and total shifted energy.

    Returns (forces (n,3), total_energy, min_pair_distance); min distance is
    inf when no pair lies within the cutoff.
    """
    q, box, per = _prep(q, box, periodic)
    if out is None:
        out = np.zeros_like(q)
    utot, min_r = _impl.forces(q, box, per, float(rc), float(epsilon),
                               float(sigma), float(shift), out)
    return out, utot, min_r


def collect_pairs(q, box, periodic, rc):
    """Index arrays (i, j), i < j, of pairs within rc under minimum image."""
    q, box, per = _prep(q, box, periodic)
    i, j = _impl.collect_pairs(q, box, per, float(rc))
    order = np.lexsort((j, i))
    return i[order], j[order]


def trial_energies(q, box, periodic, rc, epsilon, sigma, shift, floor, trials):
    """Energy of each trial point against the configuration (+inf below floor)."""
    q, box, per = _prep(q, box, periodic)
    trials = np.ascontiguousarray(trials, dtype=np.float64)
    if trials.ndim == 1:
        trials = trials[None, :]
    return _impl.trial_energies(q, box, per, float(rc), float(epsilon),
                                float(sigma), float(shift), float(floor),
                                trials)


def particle_energy(q, box, periodic, rc, epsilon, sigma, shift, floor, idx):
    """Energy of particle idx with the rest of the configuration."""
    q, box, per = _prep(q, box, periodic)
    return _impl.particle_energy(q, box, per, float(rc), float(epsilon),
                                 float(sigma), float(shift), float(floor),
                                 int(idx))
