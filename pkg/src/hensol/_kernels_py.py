"""Pure-python (numpy) grid kernels: escape-rate evaluation on point batches.

Mirrors _kernels_cy semantics exactly; every point is processed
independently (its own entry step and its own convergence freeze), so
results do not depend on how a grid is chunked across workers.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def green_grid(xs, ys, coeffs, offsets, bs, R, n_max, tol=1e-13, tail_max=64):
    """Escape rate G+ for a batch of points under a composed Henon map.

    `coeffs` is the concatenation of per-factor coefficient arrays
    (lowest degree first), `offsets` delimits factors, `bs` holds the
    factor Jacobians (b == 0 selects the one-dimensional reduction).
    Returns (g, entry_step, converged); g == 0 with converged False marks
    points that never reached V+ within n_max.
    """
    x = np.ascontiguousarray(xs, dtype=np.complex128).ravel().copy()
    y = np.ascontiguousarray(ys, dtype=np.complex128).ravel().copy()
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    bs = np.ascontiguousarray(bs, dtype=np.complex128)
    n = x.size
    n_fac = len(bs)
    degs = [int(offsets[j + 1] - offsets[j] - 1) for j in range(n_fac)]
    d_total = 1
    for dj in degs:
        d_total *= dj

    g = np.zeros(n)
    entry = np.full(n, -1, dtype=np.int32)
    conv = np.zeros(n, dtype=bool)

    # entry phase: iterate until |y| >= R and |y| >= |x|, per point
    alive = np.arange(n)
    for k in range(n_max + 1):
        ax = np.abs(x[alive])
        ay = np.abs(y[alive])
        now = (ay >= R) & (ay >= ax)
        entry[alive[now]] = k
        alive = alive[~now]
        if k == n_max or alive.size == 0:
            break
        xa = x[alive]
        ya = y[alive]
        for j in range(n_fac):
            cj = coeffs[offsets[j] : offsets[j + 1]]
            acc = np.zeros_like(ya)
            for c in cj[::-1]:
                acc = acc * ya + c
            xa, ya = ya, acc - bs[j] * xa
        x[alive] = xa
        y[alive] = ya

    idx = np.flatnonzero(entry >= 0)
    if idx.size == 0:
        return g, entry, conv

    # renormalized tail: s = x/y and v = 1/y stay bounded, r tracks log|y|
    # through r -> d_j*r + log|eps|; G at the entry point is lim r/d^t.
    s = x[idx] / y[idx]
    v = 1.0 / y[idx]
    r = np.log(np.abs(y[idx]))
    gval = r.copy()
    small = np.zeros(idx.size, dtype=np.int8)
    live = np.arange(idx.size)
    weight = 1.0
    tail_factor = d_total / (d_total - 1.0)
    for _ in range(tail_max):
        if live.size == 0:
            break
        sv = s[live]
        vv = v[live]
        rv = r[live]
        for j in range(n_fac):
            cj = coeffs[offsets[j] : offsets[j + 1]]
            dj = degs[j]
            # P(y)/y^d = sum_i c_i v^(d-i): low-first coefficients Horner
            # forward once the variable is v = 1/y
            eps = np.zeros_like(vv)
            for c in cj:
                eps = eps * vv + c
            vpow = vv ** (dj - 1)
            eps = eps - bs[j] * sv * vpow
            rv = dj * rv + np.log(np.abs(eps))
            sv = vpow / eps
            vv = vv**dj / eps
        weight_next = weight / d_total
        gn = rv * weight_next
        delta = np.abs(gn - gval[live])
        s[live] = sv
        v[live] = vv
        r[live] = rv
        gval[live] = gn
        # one accidental zero delta must not stop the refinement: require
        # two consecutive small steps before freezing a point
        is_small = delta * tail_factor < tol
        small[live] = np.where(is_small, small[live] + 1, 0)
        done = small[live] >= 2
        conv[idx[live[done]]] = True
        live = live[~done]
        weight = weight_next

    w0 = np.power(float(d_total), -entry[idx].astype(np.float64))
    g[idx] = np.maximum(gval * w0, 0.0)
    return g, entry, conv
