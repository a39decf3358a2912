"""Periodic orbits, continuation in the Jacobian parameter and
linearizing coordinates for unstable manifolds.

Saddles of H_b are grown from periodic points of P at b = 0 by Newton
path-following of H_b^m(q) - q = 0.  The unstable-manifold chart gamma
(H^m(gamma(z)) = gamma(lambda z), gamma(0) = q) is evaluated through a
power series at the saddle plus forward pumping, which keeps the
functional-equation residual near machine precision on the whole leaf.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    FactorData,
    Filtration,
    HenonSystem,
    Point,
    Polynomial,
    apply_factors,
    orbit_jacobian,
)
from .errors import NewtonDiverged, NotConverged, NotSaddle, RootPolishFailed
from .potential import dominant_radius
from .serialize import c2p, cseq2p


@dataclass(frozen=True)
class PeriodicOrbit1D:
    """Exact-period-m orbit of a one-variable polynomial."""

    points: tuple[complex, ...]
    period: int
    multiplier: complex

    def quadratic_family_multiplier(self, d: int) -> complex:
        """d^m * prod(q_k): agrees with the standard multiplier only when
        P'(z) = d*z (monic quadratic family); exposed as a diagnostic."""
        prod = 1 + 0j
        for q in self.points:
            prod *= q
        return d**self.period * prod


def _orbit_eval(P: Polynomial, z: complex, m: int) -> tuple[complex, complex]:
    """(P^m(z), (P^m)'(z)) by the chain rule along the orbit."""
    w = z
    dw = 1 + 0j
    for _ in range(m):
        w, dwdz = P.with_derivative(w)
        dw *= dwdz
    return w, dw


def _newton_periodic(P: Polynomial, z: complex, m: int, tol: float = 1e-13) -> complex | None:
    for _ in range(60):
        fm, dfm = _orbit_eval(P, z, m)
        f = fm - z
        df = dfm - 1.0
        if df == 0:
            return None
        step = f / df
        z = z - step
        if abs(step) <= tol * (1.0 + abs(z)):
            return z
    return None


def find_periodic_1d(P: Polynomial, m: int, max_rounds: int = 7) -> list[PeriodicOrbit1D]:
    """All exact-period-m orbits of P, found by iteratively subdivided
    Newton seeding over the square containing every bounded orbit."""
    if m < 1:
        raise ValueError("period must be >= 1")
    d = P.degree
    count = d**m
    if count > 4096:
        raise ValueError("d^m beyond desk scale (max 4096)")
    R = max(2.0, dominant_radius(((P.coeffs, 0j),)))
    roots: list[complex] = []

    def _register(z: complex) -> None:
        for r in roots:
            if abs(r - z) < 1e-8 * (1.0 + abs(r)):
                return
        fm, _ = _orbit_eval(P, z, m)
        res = abs(fm - z)
        if res > 1e-8 * (1.0 + abs(z)):
            raise RootPolishFailed(f"candidate {z} residual {res:.2e}", residual=res)
        roots.append(z)

    n_grid = 8
    for _ in range(max_rounds):
        for i in range(n_grid):
            for j in range(n_grid):
                seed = complex(
                    -R + (2 * R) * (i + 0.5) / n_grid, -R + (2 * R) * (j + 0.5) / n_grid
                )
                z = _newton_periodic(P, seed, m)
                if z is not None and abs(z) <= R * 1.5:
                    _register(z)
        if len(roots) >= count:
            break
        n_grid *= 2
    if len(roots) < count:
        raise RootPolishFailed(
            f"found {len(roots)} of {count} period-{m} solutions for degree {d}"
        )

    # group into orbits, keep exact period m
    orbits: list[PeriodicOrbit1D] = []
    used = [False] * len(roots)

    def _nearest(z: complex) -> int:
        best, bi = math.inf, -1
        for i, r in enumerate(roots):
            dist = abs(r - z)
            if dist < best:
                best, bi = dist, i
        if best > 1e-6 * (1.0 + abs(z)):
            raise RootPolishFailed(f"orbit image {z} missing from root set", residual=best)
        return bi

    for i0 in range(len(roots)):
        if used[i0]:
            continue
        cycle = [i0]
        used[i0] = True
        z = roots[i0]
        while True:
            z = P(z)
            j = _nearest(z)
            if j == i0:
                break
            if used[j]:
                break
            used[j] = True
            cycle.append(j)
        if len(cycle) != m:
            continue
        pts = [roots[j] for j in cycle]
        start = min(range(m), key=lambda k: (round(pts[k].real, 10), round(pts[k].imag, 10)))
        pts = pts[start:] + pts[:start]
        mult = 1 + 0j
        for q in pts:
            _, dq = P.with_derivative(q)
            mult *= dq
        orbits.append(PeriodicOrbit1D(tuple(pts), m, mult))
    orbits.sort(key=lambda o: (round(o.points[0].real, 10), round(o.points[0].imag, 10)))
    return orbits


def _eig2(mat) -> tuple[complex, complex]:
    """Eigenvalues of a 2x2 complex matrix, larger modulus first."""
    tr = mat[0][0] + mat[1][1]
    det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0]
    disc = cmath.sqrt(tr * tr - 4.0 * det)
    l1 = 0.5 * (tr + disc)
    l2 = 0.5 * (tr - disc)
    if abs(l1) < abs(l2):
        l1, l2 = l2, l1
    return l1, l2


def _eigvec(mat, lam: complex) -> tuple[complex, complex]:
    """Unit eigenvector, first nonzero component rotated to positive real."""
    cand1 = (mat[0][1], lam - mat[0][0])
    cand2 = (lam - mat[1][1], mat[1][0])
    v = cand1 if abs(cand1[0]) + abs(cand1[1]) >= abs(cand2[0]) + abs(cand2[1]) else cand2
    norm = math.hypot(abs(v[0]), abs(v[1]))
    v = (v[0] / norm, v[1] / norm)
    lead = v[0] if abs(v[0]) > 1e-12 else v[1]
    phase = abs(lead) / lead
    return (v[0] * phase, v[1] * phase)


def _solve2(mat, rhs):
    det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0]
    return (
        (rhs[0] * mat[1][1] - rhs[1] * mat[0][1]) / det,
        (mat[0][0] * rhs[1] - mat[1][0] * rhs[0]) / det,
    )


@dataclass(frozen=True)
class SaddleOrbit2D:
    """Saddle periodic orbit of a Henon map with its unstable eigenpair."""

    points: tuple[Point, ...]
    period: int
    lam: complex
    v: tuple[complex, complex]
    b: complex
    factors: tuple[FactorData, ...]
    orbit_residual: float
    eigen_residual: float

    @property
    def q(self) -> Point:
        return self.points[0]

    def at_point(self, i: int) -> "SaddleOrbit2D":
        """Same orbit re-based at its i-th point (fresh eigenpair there)."""
        i = i % self.period
        if i == 0:
            return self
        pts = self.points[i:] + self.points[:i]
        return _saddle_from_point(self.factors, pts[0], self.period, self.b)

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "points": [cseq2p(p) for p in self.points],
            "lambda": c2p(self.lam),
            "v": cseq2p(self.v),
            "b": c2p(self.b),
            "orbit_residual": self.orbit_residual,
            "eigen_residual": self.eigen_residual,
        }


def _saddle_from_point(
    factors: tuple[FactorData, ...], q: Point, m: int, b: complex
) -> SaddleOrbit2D:
    pts = [q]
    p = q
    for _ in range(m - 1):
        p = apply_factors(factors, p)
        pts.append(p)
    p_back = apply_factors(factors, pts[-1])
    orbit_res = math.hypot(abs(p_back[0] - q[0]), abs(p_back[1] - q[1]))
    jac = orbit_jacobian(factors, q, m)
    l1, l2 = _eig2(jac)
    if not (abs(l1) > 1.0 > abs(l2)):
        raise NotSaddle(f"eigenvalue moduli {abs(l1):.4f}, {abs(l2):.4f} do not straddle 1")
    v = _eigvec(jac, l1)
    av = (
        jac[0][0] * v[0] + jac[0][1] * v[1] - l1 * v[0],
        jac[1][0] * v[0] + jac[1][1] * v[1] - l1 * v[1],
    )
    eig_res = math.hypot(abs(av[0]), abs(av[1]))
    return SaddleOrbit2D(tuple(pts), m, l1, v, b, factors, orbit_res, eig_res)


def continue_saddle(
    P: Polynomial,
    m: int,
    orbit: PeriodicOrbit1D | tuple[complex, ...],
    b_target: complex,
    steps: int = 16,
) -> SaddleOrbit2D:
    """Path-follow the period-m point of H_b = (y, P(y) - b x) from b = 0.

    Seeds at q = (q'_0, q'_1) on the collapsed parabola and solves
    H_b^m(q) - q = 0 by Newton at each increment of b.
    """
    if isinstance(orbit, PeriodicOrbit1D):
        pts1d = orbit.points
        mult = orbit.multiplier
    else:
        pts1d = tuple(orbit)
        mult = 1 + 0j
        for qk in pts1d:
            _, dq = P.with_derivative(qk)
            mult *= dq
    if abs(mult) <= 1.0:
        raise NotSaddle(f"1d multiplier {mult} is not repelling; cannot continue")
    b_target = complex(b_target)
    if b_target == 0:
        raise ValueError("b_target must be nonzero (use a reduction chart at b=0)")
    q1 = P(pts1d[0]) if m == 1 else pts1d[1]
    q = (pts1d[0], q1)
    for k in range(1, steps + 1):
        b = b_target * (k / steps)
        factors = ((P.coeffs, b),)
        ok = False
        for _ in range(50):
            fq = apply_factors(factors, q)
            for _ in range(m - 1):
                fq = apply_factors(factors, fq)
            f = (fq[0] - q[0], fq[1] - q[1])
            jac = orbit_jacobian(factors, q, m)
            dfdq = ((jac[0][0] - 1.0, jac[0][1]), (jac[1][0], jac[1][1] - 1.0))
            dx, dy = _solve2(dfdq, f)
            q = (q[0] - dx, q[1] - dy)
            if math.hypot(abs(dx), abs(dy)) <= 1e-13 * (1.0 + math.hypot(abs(q[0]), abs(q[1]))):
                ok = True
                break
        if not ok:
            raise NewtonDiverged(f"continuation failed at step {k} (b={b})", where=k)
    return _saddle_from_point(((P.coeffs, b_target),), q, m, b_target)


def linearize(
    saddle: SaddleOrbit2D,
    z: complex,
    n: int | None = None,
    tol: float = 1e-7,
    check: bool = True,
) -> Point:
    """Unstable-manifold point gamma(z) = H^{mn}(q + (z/lambda^n) v).

    With n omitted, the smallest budget placing the seed within the
    relative seed radius is escalated until the doubling check passes.
    """
    z = complex(z)
    q = saddle.q
    scale = 1.0 + math.hypot(abs(q[0]), abs(q[1]))
    r_seed = 0.01 * scale
    la = saddle.lam

    def gamma_n(budget: int) -> Point:
        shift = z / la**budget
        p = (q[0] + shift * saddle.v[0], q[1] + shift * saddle.v[1])
        for _ in range(budget * saddle.period):
            p = apply_factors(saddle.factors, p)
        return p

    if z == 0:
        return q

    def _dist(a: Point, b: Point) -> float:
        return math.hypot(abs(a[0] - b[0]), abs(a[1] - b[1]))

    if n is not None:
        out = gamma_n(n)
        if check:
            ref = gamma_n(2 * n)
            if _dist(out, ref) > tol:
                raise NotConverged(
                    f"gamma budget {n} vs {2 * n} differ by {_dist(out, ref):.2e} > {tol}"
                )
        return out

    n_try = max(1, int(math.ceil(math.log(max(abs(z) / r_seed, 1e-9)) / math.log(abs(la)))))
    prev = gamma_n(n_try)
    best: Point = prev
    best_diff = math.inf
    for _ in range(40):
        n_try += 2
        cur = gamma_n(n_try)
        diff = _dist(cur, prev)
        if diff < best_diff:
            best, best_diff = cur, diff
        if diff <= tol:
            return cur
        if diff > 4.0 * best_diff and best_diff < math.inf:
            break
        prev = cur
    if check and best_diff > tol:
        raise NotConverged(f"gamma floor {best_diff:.2e} above tol {tol}")
    return best


def _series_mul(a: list[complex], b: list[complex], order: int) -> list[complex]:
    out = [0j] * (order + 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        top = min(order - i, len(b) - 1)
        for j in range(top + 1):
            out[i + j] += ai * b[j]
    return out


def _series_apply_factors(
    factors: tuple[FactorData, ...], sx: list[complex], sy: list[complex], order: int
) -> tuple[list[complex], list[complex]]:
    """One composition step on a truncated power series in the leaf parameter."""
    for coeffs, b in factors:
        acc = [0j] * (order + 1)
        acc[0] = coeffs[-1]
        for c in reversed(coeffs[:-1]):
            acc = _series_mul(acc, sy, order)
            acc[0] += c
        new_y = [acc[k] - b * sx[k] for k in range(order + 1)]
        sx, sy = sy, new_y
    return sx, sy


class LeafChart:
    """Linearizing parametrization of an unstable manifold.

    Evaluation combines the Taylor series of gamma at the saddle (solved
    order by order from the conjugacy H^m(gamma(z)) = gamma(lambda z))
    with forward pumping gamma(z) = H^{mn}(gamma(z / lambda^n)).
    """

    def __init__(
        self,
        saddle: SaddleOrbit2D,
        order: int = 18,
        v_scale: complex | None = None,
    ):
        self.saddle = saddle
        self.factors = saddle.factors
        self.m = saddle.period
        self.lam = saddle.lam
        v = saddle.v
        if v_scale is not None:
            v = (v[0] * v_scale, v[1] * v_scale)
        self.v = v
        self.order = order
        self._anchor_cache: dict[float, complex] = {}
        self._build_series()
        self._calibrate_radius()

    @classmethod
    def from_saddle(cls, saddle: SaddleOrbit2D, order: int = 18) -> "LeafChart":
        return cls(saddle, order=order)

    @classmethod
    def reduction(cls, P: Polynomial, q1d, m: int = 1, order: int = 18) -> "LeafChart":
        """b = 0 chart: dynamics collapse to P and gamma follows the
        one-dimensional linearizer (normalized so gamma_y'(0) = 1)."""
        pts1d = (q1d,) if isinstance(q1d, (complex, float, int)) else tuple(q1d)
        q0 = complex(pts1d[0])
        q1 = P(q0)
        factors = ((P.coeffs, 0j),)
        q = (q0, q1)
        jac = orbit_jacobian(factors, q, m)
        l1, _ = _eig2(jac)
        v = _eigvec(jac, l1)
        saddle = SaddleOrbit2D(
            points=tuple(_orbit_points(factors, q, m)),
            period=m,
            lam=l1,
            v=v,
            b=0j,
            factors=factors,
            orbit_residual=0.0,
            eigen_residual=0.0,
        )
        # rescale so the y-component of gamma'(0) is exactly 1
        return cls(saddle, order=order, v_scale=1.0 / v[1])

    def _build_series(self) -> None:
        order = self.order
        q = self.saddle.q
        cx = [0j] * (order + 1)
        cy = [0j] * (order + 1)
        cx[0], cy[0] = q
        cx[1], cy[1] = self.v
        A = orbit_jacobian(self.factors, q, self.m)
        for k in range(2, order + 1):
            sx, sy = cx[:k] + [0j], cy[:k] + [0j]
            for _ in range(self.m):
                sx, sy = _series_apply_factors(self.factors, sx, sy, k)
            rhs = (sx[k], sy[k])
            lamk = self.lam**k
            mat = ((lamk - A[0][0], -A[0][1]), (-A[1][0], lamk - A[1][1]))
            ck = _solve2(mat, rhs)
            cx[k], cy[k] = ck
        self.cx = cx
        self.cy = cy

    def _series_point(self, w: complex) -> Point:
        px = 0j
        py = 0j
        for k in range(self.order, -1, -1):
            px = px * w + self.cx[k]
            py = py * w + self.cy[k]
        return (px, py)

    def _residual(self, z: complex) -> float:
        inner = self._series_point(z / self.lam)
        for _ in range(self.m):
            inner = apply_factors(self.factors, inner)
        outer = self._series_point(z)
        return math.hypot(abs(inner[0] - outer[0]), abs(inner[1] - outer[1]))

    def _calibrate_radius(self) -> None:
        scale = 1.0 + math.hypot(abs(self.saddle.q[0]), abs(self.saddle.q[1]))
        r = 4.0
        while r > 1e-4:
            worst = max(
                self._residual(r * cmath.exp(2j * math.pi * k / 8)) for k in range(8)
            )
            if worst < 1e-11 * scale:
                break
            r *= 0.5
        self.trust_radius = r

    def point(self, z: complex) -> Point:
        """gamma(z) anywhere on the leaf: series inside the trust radius,
        pumped forward by the conjugacy outside it."""
        z = complex(z)
        az = abs(z)
        if az <= self.trust_radius:
            return self._series_point(z)
        n = int(math.ceil(math.log(az / self.trust_radius) / math.log(abs(self.lam))))
        p = self._series_point(z / self.lam**n)
        for _ in range(n * self.m):
            p = apply_factors(self.factors, p)
        return p

    def points_grid(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized gamma over an array of leaf parameters."""
        Z = np.asarray(Z, dtype=np.complex128)
        az = np.abs(Z)
        log_lam = math.log(abs(self.lam))
        n = np.zeros(Z.shape, dtype=np.int64)
        outside = az > self.trust_radius
        n[outside] = np.ceil(np.log(az[outside] / self.trust_radius) / log_lam).astype(
            np.int64
        )
        W = Z / np.power(self.lam, n)
        X = np.zeros_like(W)
        Y = np.zeros_like(W)
        for k in range(self.order, -1, -1):
            X = X * W + self.cx[k]
            Y = Y * W + self.cy[k]
        for pumps in np.unique(n):
            if pumps == 0:
                continue
            sel = n == pumps
            xs, ys = X[sel], Y[sel]
            for _ in range(int(pumps) * self.m):
                for coeffs, b in self.factors:
                    acc = np.zeros_like(ys)
                    for c in reversed(coeffs):
                        acc = acc * ys + c
                    xs, ys = ys, acc - b * xs
            X[sel], Y[sel] = xs, ys
        return X, Y

    def escape_anchor(self, R: float, n_angles: int = 64) -> complex:
        """Deterministic leaf parameter whose image sits well inside V+.

        Scans a fan of radii/angles in a fixed order; used to anchor
        branch continuations on this leaf.
        """
        key = round(float(R), 9)
        if key in self._anchor_cache:
            return self._anchor_cache[key]
        target = max(R, dominant_radius(self.factors)) * 1.5
        r = max(self.trust_radius * 0.5, 1e-3)
        for _ in range(48):
            for k in range(n_angles):
                z = r * cmath.exp(2j * math.pi * k / n_angles)
                p = self.point(z)
                if abs(p[1]) >= target and abs(p[1]) >= abs(p[0]):
                    self._anchor_cache[key] = z
                    return z
            r *= 1.5
        from .errors import NotEscaping

        raise NotEscaping("no V+ anchor found on this leaf (raise the fan budget?)")

    def invert_local(self, target: Point, seed: complex, tol: float = 1e-10) -> complex:
        """Leaf parameter of a point near the chart image (local Newton on
        the y component, x used as a consistency check)."""
        z = complex(seed)
        for _ in range(60):
            px, py = self.point(z)
            h = 1e-7 * (1.0 + abs(z))
            _, py1 = self.point(z + h)
            dy = (py1 - py) / h
            if dy == 0:
                break
            step = (py - target[1]) / dy
            z = z - step
            if abs(step) <= tol * (1.0 + abs(z)):
                return z
        raise NewtonDiverged(f"leaf inversion stalled near {seed}", where=seed)


def _orbit_points(factors, q, m):
    pts = [q]
    for _ in range(m - 1):
        q = apply_factors(factors, q)
        pts.append(q)
    return pts


def jacobian_at(system_or_factors, p: Point, steps: int = 1):
    """DH^steps at p; accepts a HenonSystem or raw factor data (b=0 ok)."""
    if isinstance(system_or_factors, HenonSystem):
        factors = system_or_factors.factor_data()
    else:
        factors = tuple(system_or_factors)
    return orbit_jacobian(factors, p, steps)


def leaf_escape_region(
    chart: LeafChart,
    bounds: tuple[float, float, float, float],
    resolution: tuple[int, int],
    R: float,
    n_max: int = 200,
    backend=None,
):
    """Escape rate of gamma(z) on a rectangular leaf-parameter grid.

    Returns (Z, G): the garden-variety zero set of G approximates the
    bounded part of the leaf.  Grid evaluation runs on the selected
    kernel backend.
    """
    from . import kernels

    ker = backend or kernels.get_backend()
    x0, x1, y0, y1 = bounds
    nx, ny = resolution
    re = np.linspace(x0, x1, nx)
    im = np.linspace(y0, y1, ny)
    Z = re[np.newaxis, :] + 1j * im[:, np.newaxis]
    X, Y = chart.points_grid(Z)
    coeffs = []
    offsets = [0]
    bs = []
    for cf, b in chart.factors:
        coeffs.extend(cf)
        offsets.append(len(coeffs))
        bs.append(b)
    g, _, _ = ker.green_grid(
        X.ravel(),
        Y.ravel(),
        np.array(coeffs, dtype=np.complex128),
        np.array(offsets, dtype=np.int64),
        np.array(bs, dtype=np.complex128),
        R,
        n_max,
    )
    return Z, g.reshape(Z.shape)
