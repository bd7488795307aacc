"""Numpy implementations of the hot kernels.

These are the reference versions; the compiled module mirrors their
signatures and results.
"""

import numpy as np


def transition_matrix(x0, dx, targets, weights):
    """Dense linear-interpolation operator for a uniform grid.

    Row i holds the weights such that ``T[i] @ f`` equals
    ``sum_j weights[j] * interp(f, targets[i, j])`` with linear interpolation
    inside the grid and linear continuation of the end segments outside it.
    Returns ``(T, outside)`` where ``outside[i]`` is the quadrature mass that
    landed beyond the grid for row i.
    """
    targets = np.asarray(targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    nx = targets.shape[0]
    pos = (targets - x0) / dx
    idx = np.clip(np.floor(pos).astype(np.int64), 0, nx - 2)
    frac = pos - idx
    outside = ((pos < 0.0) | (pos > nx - 1)) @ weights
    T = np.zeros((nx, nx))
    rows = np.broadcast_to(np.arange(nx)[:, None], idx.shape)
    w = np.broadcast_to(weights, idx.shape)
    np.add.at(T, (rows, idx), w * (1.0 - frac))
    np.add.at(T, (rows, idx + 1), w * frac)
    return T, outside


def bellman(gain, cont, lo, hi, unit, bang, realized=None):
    """Maximise ``c*unit*gain + cont[:, u+c]`` over integer controls c.

    ``lo[u] > hi[u]`` marks an unattainable volume node; its value is -inf
    and its choice -1. When ``realized`` is given the decision still uses
    ``cont`` but the reported value uses ``realized`` (regression MC).
    """
    gain = np.asarray(gain, dtype=np.float64)
    cont = np.asarray(cont, dtype=np.float64)
    n, U = cont.shape
    value = np.full((n, U), -np.inf)
    choice = np.full((n, U), -1, dtype=np.int64)
    src = cont if realized is None else np.asarray(realized, dtype=np.float64)
    for u in range(U):
        a, b = int(lo[u]), int(hi[u])
        if a > b:
            continue
        controls = (a, b) if (bang and b > a) else range(a, b + 1)
        best = np.full(n, -np.inf)
        best_c = np.full(n, a, dtype=np.int64)
        for c in controls:
            obj = c * unit * gain + cont[:, u + c]
            better = obj > best
            best = np.where(better, obj, best)
            best_c = np.where(better, c, best_c)
        choice[:, u] = best_c
        value[:, u] = best_c * unit * gain + src[np.arange(n), u + best_c]
    return value, choice


def choose_controls(gain, local, lo, hi, unit, bang):
    """Per-path optimal control.

    ``local[p, c]`` is the continuation value of path p after buying c
    units; ``lo[p]``/``hi[p]`` bound the admissible controls of path p.
    """
    gain = np.asarray(gain, dtype=np.float64)
    local = np.asarray(local, dtype=np.float64)
    a = np.asarray(lo, dtype=np.int64)
    b = np.asarray(hi, dtype=np.int64)
    best = np.full(len(gain), -np.inf)
    best_c = a.copy()
    cmin = int(a.min()) if len(a) else 0
    cmax = int(b.max()) if len(b) else -1
    for c in range(cmin, cmax + 1):
        ok = (c >= a) & (c <= b)
        if bang:
            ok &= (c == a) | (c == b)
        obj = np.where(ok, c * unit * gain + local[:, c], -np.inf)
        better = obj > best
        best = np.where(better, obj, best)
        best_c = np.where(better, c, best_c)
    return best_c


def euler_affine_paths(x0, kappa, zeta, sig_a, sig_b, z, h, s_h):
    """Scalar Euler paths with affine drift and affine volatility.

    ``x_{l+1} = x_l + h*kappa[l]*(x_l - zeta) + sqrt(h)*(sig_a[l]*x_l + sig_b[l])*zt``
    where ``zt = z`` if ``|z| <= s_h`` else 0. ``z`` has shape (paths, steps).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    P, L = z.shape
    out = np.empty((P, L + 1))
    out[:, 0] = x0
    sq = np.sqrt(h)
    x = x0.copy()
    for ell in range(L):
        zl = z[:, ell]
        zt = np.where(np.abs(zl) <= s_h, zl, 0.0)
        x = x + h * kappa[ell] * (x - zeta) + sq * (sig_a[ell] * x + sig_b[ell]) * zt
        out[:, ell + 1] = x
    return out
