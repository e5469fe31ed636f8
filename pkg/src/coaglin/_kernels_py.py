"""Pure numpy implementation of the interpolation scatter kernel."""

from __future__ import annotations

import numpy as np

_CHUNK = 1 << 16


def accumulate(M, rows, z, coef, Jmin, Jmax, P, ref_nodes, bary):
    """Add coef * l_k(z) into M[row, block(z)*P + k] for every point.

    ``l_k`` are the Lagrange basis polynomials of the block containing z;
    points outside [2^Jmin, 2^Jmax) contribute nothing.
    """
    ncol = M.shape[1]
    flat = M.reshape(-1)
    rows = np.asarray(rows, dtype=np.int64)
    z = np.asarray(z, dtype=float)
    coef = np.asarray(coef, dtype=float)
    lo, hi = 2.0**Jmin, 2.0**Jmax
    keep = (z >= lo) & (z < hi) & (coef != 0.0)
    rows, z, coef = rows[keep], z[keep], coef[keep]
    kk = np.arange(P)
    for s in range(0, len(z), _CHUNK):
        zc, rc, cc = z[s:s + _CHUNK], rows[s:s + _CHUNK], coef[s:s + _CHUNK]
        m, e = np.frexp(zc)
        n = e - 1
        t = 4.0 * m - 3.0  # local coordinate in [-1, 1)
        diff = t[:, None] - ref_nodes[None, :]
        hit = diff == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            q = bary[None, :] / diff
        anyhit = hit.any(axis=1)
        q[anyhit] = hit[anyhit].astype(float)
        q /= q.sum(axis=1, keepdims=True)
        cols = ((n - Jmin) * P)[:, None] + kk[None, :]
        idx = (rc[:, None] * ncol + cols).ravel()
        flat += np.bincount(idx, weights=(cc[:, None] * q).ravel(), minlength=flat.size)
