"""Extended-precision reference evaluations (mpmath).

Used by acceptance tests and the --precision extended verify mode to
recompute escape rates and Boettcher values independently of the
double-precision renormalized engines.  The escape-rate oracle iterates
the map directly at high precision (mpmath exponents absorb the
superexponential growth), so it shares no code path with the production
evaluators.
"""

from __future__ import annotations

import mpmath as mp


def _to_mpc(z) -> mp.mpc:
    z = complex(z)
    return mp.mpc(z.real, z.imag)


def _apply_mp(factors, p):
    x, y = p
    for coeffs, b in factors:
        acc = mp.mpc(0)
        for c in reversed(coeffs):
            acc = acc * y + _to_mpc(c)
        x, y = y, acc - _to_mpc(b) * x
    return x, y


def green_plus_mp(factors, p, dps: int = 60, n_max: int = 80, tol=None):
    """Escape rate by direct high-precision iteration of the definition.

    `factors` is ((coeffs, b), ...) low-first; returns an mp.mpf.
    """
    d = 1
    for coeffs, _ in factors:
        d *= len(coeffs) - 1
    with mp.workdps(dps):
        if tol is None:
            tol = mp.mpf(10) ** (-dps + 8)
        x, y = _to_mpc(p[0]), _to_mpc(p[1])
        prev = None
        scale = mp.mpf(1)
        for n in range(n_max):
            x, y = _apply_mp(factors, (x, y))
            scale /= d
            m = max(abs(x), abs(y))
            if m > 1:
                g = mp.log(m) * scale
                if prev is not None and abs(g - prev) < tol and n > 4:
                    return g
                prev = g
        if prev is None:
            return mp.mpf(0)
        return prev


def boettcher_1d_mp(P_coeffs, z, dps: int = 60, n_terms: int = 48):
    """Boettcher value by the telescoping product at high precision.

    Valid where every product factor stays near 1 (push the point forward
    first if needed); returns an mp.mpc.
    """
    d = len(P_coeffs) - 1
    with mp.workdps(dps):
        zn = _to_mpc(z)
        corr = mp.mpc(0)
        w = mp.mpf(1)
        for _ in range(n_terms):
            acc = mp.mpc(0)
            for c in reversed(P_coeffs):
                acc = acc * zn + _to_mpc(c)
            eps = acc / zn**d
            w /= d
            corr += mp.log(eps) * w
            zn = acc
            if abs(eps - 1) == 0:
                break
        return _to_mpc(z) * mp.exp(corr)


def phi_plus_mp(factors, p, dps: int = 60, n_terms: int = 48):
    """Two-dimensional analogue of boettcher_1d_mp on V+ (tame region)."""
    d = 1
    for coeffs, _ in factors:
        d *= len(coeffs) - 1
    with mp.workdps(dps):
        x, y = _to_mpc(p[0]), _to_mpc(p[1])
        corr = mp.mpc(0)
        w = mp.mpf(1)
        for _ in range(n_terms):
            yd = y**d
            x2, y2 = _apply_mp(factors, (x, y))
            eps = y2 / yd
            w /= d
            corr += mp.log(eps) * w
            x, y = x2, y2
        return _to_mpc(p[1]) * mp.exp(corr)
