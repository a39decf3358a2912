"""Escape-rate potentials and Boettcher-type coordinates.

G+ is evaluated through a renormalized telescoping product that never
overflows: once an orbit is past the filtration radius we track
s = x/y, v = 1/y and log|y| instead of the exploding coordinates.  The
complex coordinate phi+ (and its one-dimensional specialisation) uses the
same product with branch-tracked logarithms; values are assembled
multiplicatively as y * exp(correction) so the degree-d power map gives
the identity coordinate exactly.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .dynamics import FactorData, Filtration, HenonSystem, Point, Polynomial, swap
from .errors import BranchAmbiguity, DoesNotEscape, NotEscaping, OutsideVPlus

TWO_PI = 2.0 * math.pi

# trusted fraction of a root slot when anchoring a branch on a running
# value; beyond it the nearest-root choice is a coin flip
SLOT_MARGIN = 0.9


@dataclass(frozen=True)
class GreenValue:
    """Escape rate sample: value, iterations spent, convergence flag."""

    value: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class BoettcherValue:
    """Boettcher coordinate sample with its truncation diagnostics."""

    value: complex
    log_value: complex
    n_terms: int
    error_bound: float

    @property
    def potential(self) -> float:
        return self.log_value.real

    @property
    def angle(self) -> float:
        """Argument in turns-compatible radians (continuation lift)."""
        return self.log_value.imag


@dataclass(frozen=True)
class BranchPath:
    """Continuation path; consecutive samples must stay branch-unambiguous."""

    points: tuple[complex, ...]
    max_step: float = 0.25

    def __post_init__(self):
        if len(self.points) < 1:
            raise ValueError("path needs at least one point")

    @classmethod
    def segment(cls, a: complex, b: complex, max_step: float = 0.25) -> "BranchPath":
        a, b = complex(a), complex(b)
        n = max(1, int(math.ceil(abs(b - a) / max_step)))
        pts = tuple(a + (b - a) * k / n for k in range(n + 1))
        return cls(pts, max_step)

    @classmethod
    def spiral(cls, z: complex, ratio: complex, steps: int, substeps: int = 24) -> "BranchPath":
        """Geometric path z * ratio^t for t in [0, steps], finely sampled."""
        z, ratio = complex(z), complex(ratio)
        lr = cmath.log(ratio)
        n = max(1, steps * substeps)
        pts = tuple(z * cmath.exp(lr * (steps * k / n)) for k in range(n + 1))
        return cls(pts)


def degree_of(factors: tuple[FactorData, ...]) -> int:
    d = 1
    for coeffs, _ in factors:
        d *= len(coeffs) - 1
    return d


def dominant_radius(factors: tuple[FactorData, ...]) -> float:
    """Radius past which every product factor stays within 1/2 of 1."""
    r = 1.0
    for coeffs, b in factors:
        r = max(r, 2.0 * (sum(abs(c) for c in coeffs[:-1]) + abs(b)) / abs(coeffs[-1]))
        r = max(r, 2.0 * abs(coeffs[-1]))  # non-monic leads need headroom too
    return r


def _in_v_plus(p: Point, R: float) -> bool:
    ax, ay = abs(p[0]), abs(p[1])
    return ay >= ax and ay >= R


def _green_scalar(
    factors: tuple[FactorData, ...],
    R: float,
    p: Point,
    tol: float = 1e-12,
    n_max: int = 1000,
    tail_max: int = 80,
) -> GreenValue:
    """Scalar reference implementation of the grid kernels."""
    d = degree_of(factors)
    x, y = p
    entry = -1
    for k in range(n_max + 1):
        if abs(y) >= R and abs(y) >= abs(x):
            entry = k
            break
        if k == n_max:
            break
        for coeffs, b in factors:
            acc = 0j
            for c in reversed(coeffs):
                acc = acc * y + c
            x, y = y, acc - b * x
    if entry < 0:
        return GreenValue(0.0, n_max, False)

    s = x / y
    v = 1.0 / y
    r = math.log(abs(y))
    gval = r
    w = 1.0
    small = 0
    converged = False
    steps = entry
    tail_factor = d / (d - 1.0)
    for _ in range(tail_max):
        for coeffs, b in factors:
            dj = len(coeffs) - 1
            eps = 0j
            for c in coeffs:
                eps = eps * v + c
            vpow = v ** (dj - 1)
            eps = eps - b * s * vpow
            r = dj * r + math.log(abs(eps))
            s = vpow / eps
            v = vpow * v / eps
        w /= d
        gn = r * w
        steps += 1
        if abs(gn - gval) * tail_factor < tol:
            small += 1
        else:
            small = 0
        gval = gn
        if small >= 2:
            converged = True
            break
    return GreenValue(max(gval * d ** (-float(entry)), 0.0), steps, converged)


def green_plus(
    sys: HenonSystem,
    filt: Filtration,
    p: Point,
    tol: float = 1e-12,
    n_max: int = 1000,
) -> GreenValue:
    """Forward escape rate; 0 (unconverged) if V+ is not reached."""
    return _green_scalar(sys.factor_data(), filt.radius, p, tol, n_max)


def green_minus(
    sys: HenonSystem,
    filt: Filtration,
    p: Point,
    tol: float = 1e-12,
    n_max: int = 1000,
) -> GreenValue:
    """Backward escape rate via the swap-conjugated inverse system."""
    inv = sys.inverse_system()
    return _green_scalar(inv.factor_data(), filt.radius, swap(p), tol, n_max)


def green_1d(P: Polynomial, z: complex, tol: float = 1e-12, n_max: int = 1000) -> GreenValue:
    """One-dimensional reduction: escape rate of P at z."""
    factors = ((P.coeffs, 0j),)
    R = max(2.0, dominant_radius(factors))
    return _green_scalar(factors, R, (0j, complex(z)), tol, n_max)


def _tame_log_phi(
    factors: tuple[FactorData, ...],
    p: Point,
    tol: float,
    max_terms: int = 64,
) -> tuple[complex, int, float]:
    """Correction C with log phi+(p) = Log(y) + C, valid in the dominant region.

    Every factor of the telescoping product must stay off the branch cut;
    the caller guarantees |y| is past dominant_radius.
    """
    d = degree_of(factors)
    x, y = p
    s = x / y
    v = 1.0 / y
    corr = 0j
    w = 1.0
    term = math.inf
    n = 0
    tail_factor = d / (d - 1.0)
    small = 0
    for n in range(1, max_terms + 1):
        step = 0j
        for coeffs, b in factors:
            dj = len(coeffs) - 1
            eps = 0j
            for c in coeffs:
                eps = eps * v + c
            vpow = v ** (dj - 1)
            eps = eps - b * s * vpow
            if abs(eps - 1.0) >= 0.75:
                raise BranchAmbiguity(
                    f"product factor strayed from 1 (|eps-1|={abs(eps - 1.0):.3f}); "
                    "point is not far enough into the dominant region"
                )
            step = step * dj + cmath.log(eps)
            s = vpow / eps
            v = vpow * v / eps
        w /= d
        corr += step * w
        term = abs(step) * w
        if term * tail_factor < tol * 0.5:
            small += 1
            if small >= 2:
                break
        else:
            small = 0
    return corr, n, term * tail_factor


def _push_past_dominant(
    factors: tuple[FactorData, ...],
    R: float,
    R_dom: float,
    p: Point,
    n_max: int,
) -> tuple[int, tuple[Point, ...]]:
    """Iterate until |y| >= max(R_dom, R); returns (k, orbit p_0..p_k).

    Raises NotEscaping when the budget is exhausted first.
    """
    target = max(R, R_dom)
    orbit = [p]
    x, y = p
    for k in range(n_max + 1):
        if abs(y) >= target and abs(y) >= abs(x):
            return k, tuple(orbit)
        if k == n_max:
            break
        for coeffs, b in factors:
            acc = 0j
            for c in reversed(coeffs):
                acc = acc * y + c
            x, y = y, acc - b * x
        orbit.append((x, y))
    raise NotEscaping(f"orbit did not reach the dominant region within {n_max} steps")


def _pullback_proxy(
    factors: tuple[FactorData, ...],
    orbit: tuple[Point, ...],
    corr_star: complex,
    d: int,
) -> complex:
    """Pull the tame correction back along the orbit, anchoring each d-th
    root at the local argument of y (valid while the orbit is in V+)."""
    margin = math.pi / (d + 1)
    corr = corr_star
    for j in range(len(orbit) - 2, -1, -1):
        ystep = cmath.log(orbit[j + 1][1]) - d * cmath.log(orbit[j][1])
        raw = corr + ystep
        m = round(-raw.imag / TWO_PI)
        corr = (raw + TWO_PI * 1j * m) / d
        if abs(corr.imag) >= margin:
            raise BranchAmbiguity(
                f"argument of phi drifted {corr.imag:.3f} rad from arg(y) at "
                f"pullback step {j}; exceeds the safe sector pi/(d+1)"
            )
    return corr


def _log_phi_at(
    factors: tuple[FactorData, ...],
    R: float,
    p: Point,
    tol: float,
    n_max: int = 200,
) -> BoettcherValue:
    """phi+ at a V+ point: push into the dominant region, evaluate the tame
    product there, pull d-th roots back with arg(y) anchoring."""
    d = degree_of(factors)
    R_dom = dominant_radius(factors)
    k, orbit = _push_past_dominant(factors, R, R_dom, p, n_max)
    corr_star, n_terms, err = _tame_log_phi(factors, orbit[-1], tol)
    corr = _pullback_proxy(factors, orbit, corr_star, d)
    y0 = p[1]
    value = y0 * cmath.exp(corr)
    return BoettcherValue(value, cmath.log(y0) + corr, n_terms + k, err / d**k)


def phi_plus(
    sys: HenonSystem,
    filt: Filtration,
    p: Point,
    tol: float = 1e-12,
) -> BoettcherValue:
    """Boettcher-type coordinate on V+; |phi+| = exp(G+) and
    phi+(H(p)) = phi+(p)^degree."""
    if not filt.in_v_plus(p):
        raise OutsideVPlus(f"{p} is outside V+(R={filt.radius})")
    for poly, _ in sys.factors:
        if not poly.is_monic:
            raise ValueError("phi+ requires monic factors")
    return _log_phi_at(sys.factor_data(), filt.radius, p, tol)


def boettcher_1d(P: Polynomial, z: complex, tol: float = 1e-12, n_max: int = 500) -> BoettcherValue:
    """One-dimensional Boettcher coordinate phi with phi(P(z)) = phi(z)^d.

    The point is pushed forward into the factor-dominant region, the
    telescoping product is evaluated there and branch-tracked d-th roots
    carry it back along the orbit.
    """
    if not P.is_monic:
        raise ValueError("Boettcher coordinate requires a monic polynomial")
    z = complex(z)
    factors = ((P.coeffs, 0j),)
    R_dom = dominant_radius(factors)
    g = _green_scalar(factors, max(2.0, R_dom), (0j, z), 1e-9, n_max)
    if g.value <= 0.0:
        raise DoesNotEscape(f"orbit of {z} stayed bounded for {n_max} steps")
    return _log_phi_at(factors, R_dom, (0j, z), tol, n_max)


def _anchored_log_phi(
    factors: tuple[FactorData, ...],
    R: float,
    p: Point,
    log_run: complex,
    tol: float,
    n_max: int = 200,
    k_cap: int = 48,
) -> BoettcherValue:
    """phi+ at p with the d^k-th root slot chosen nearest a running value.

    Used for continuation past V+: the running log (from the previous
    path sample) resolves which of the d^k roots of the pushed-forward
    value belongs to this branch.
    """
    d = degree_of(factors)
    R_dom = dominant_radius(factors)
    k, orbit = _push_past_dominant(factors, R, R_dom, p, n_max)
    if k > k_cap:
        raise NotEscaping(
            f"continuation point needs {k} pushes (> cap {k_cap}); potential too small"
        )
    corr_star, n_terms, err = _tame_log_phi(factors, orbit[-1], tol)
    log_star = cmath.log(orbit[-1][1]) + corr_star
    dk = float(d) ** k
    m = round((log_run.imag * dk - log_star.imag) / TWO_PI)
    slot_err = abs(log_run.imag * dk - (log_star.imag + TWO_PI * m))
    if slot_err > math.pi * SLOT_MARGIN:
        raise BranchAmbiguity(
            f"running value sits {slot_err:.3f} rad from the nearest root slot "
            f"(depth d^{k}); refine the path"
        )
    log_new = (log_star + TWO_PI * 1j * m) / dk
    if abs(log_new.imag - log_run.imag) >= math.pi / (d + 1):
        raise BranchAmbiguity(
            f"consecutive path samples rotate the argument by "
            f"{abs(log_new.imag - log_run.imag):.3f} >= pi/(d+1); refine the path"
        )
    value = p[1] * cmath.exp(log_new - cmath.log(p[1]))
    return BoettcherValue(value, log_new, n_terms + k, err / dk)


class PhiContinuation:
    """Branch continuation of log phi+ along a path of leaf parameters.

    Wraps a point map (leaf parameter -> C^2, usually a chart) and keeps
    the running branch; move_to() walks to a new parameter refining steps
    as needed, peek() evaluates a trial parameter without committing.
    """

    def __init__(
        self,
        factors: tuple[FactorData, ...],
        R: float,
        point_map,
        tol: float = 1e-10,
        max_refine: int = 12,
        k_cap: int = 48,
    ):
        self.factors = factors
        self.R = R
        self.point_map = point_map
        self.tol = tol
        self.max_refine = max_refine
        self.k_cap = k_cap
        self.z: complex | None = None
        self.log: complex | None = None

    def start(self, z: complex) -> BoettcherValue:
        """Anchor at a parameter whose image lies in V+ (direct evaluation)."""
        p = self.point_map(z)
        if not _in_v_plus(p, self.R):
            raise OutsideVPlus(
                f"continuation anchor gamma({z}) = {p} is outside V+(R={self.R})"
            )
        bv = _log_phi_at(self.factors, self.R, p, self.tol)
        self.z = complex(z)
        self.log = bv.log_value
        return bv

    def peek(self, z: complex) -> BoettcherValue:
        """Evaluate at z (continued from the current state), no commit."""
        if self.log is None:
            raise RuntimeError("continuation not started")
        return self._walk(complex(z), commit=False)

    def move_to(self, z: complex) -> BoettcherValue:
        """Continue to z and commit the new running state."""
        if self.log is None:
            raise RuntimeError("continuation not started")
        return self._walk(complex(z), commit=True)

    def _walk(self, z: complex, commit: bool) -> BoettcherValue:
        za, la = self.z, self.log
        bv = BoettcherValue(cmath.exp(la), la, 0, 0.0)
        waypoints = [z]  # pending targets, nearest on top
        refines = 0
        while waypoints:
            zb = waypoints[-1]
            try:
                bv = _anchored_log_phi(
                    self.factors, self.R, self.point_map(zb), la, self.tol, k_cap=self.k_cap
                )
            except BranchAmbiguity:
                refines += 1
                mid = 0.5 * (za + zb)
                if refines > 4 * self.max_refine or abs(mid - za) < 1e-13 * (1.0 + abs(za)):
                    raise
                waypoints.append(mid)
                continue
            waypoints.pop()
            za, la = zb, bv.log_value
        if commit:
            self.z = z
            self.log = la
        return bv


def extend_phi_plus(
    sys: HenonSystem,
    filt: Filtration,
    chart,
    z: complex,
    path: BranchPath,
    tol: float = 1e-10,
) -> BoettcherValue:
    """Continue phi+ along a leaf path from a V+ reference to z.

    `path` runs from the reference parameter to z; gamma(path[0]) must lie
    in V+.  Raises BranchAmbiguity when a step cannot be disambiguated at
    the given resolution and NotEscaping when the target fails to escape.
    """
    cont = PhiContinuation(sys.factor_data(), filt.radius, chart.point, tol=tol)
    bv = cont.start(path.points[0])
    for pt in path.points[1:]:
        bv = cont.move_to(pt)
    if abs(complex(z) - cont.z) > 1e-12 * (1.0 + abs(z)):
        bv = cont.move_to(z)
    return bv


def dump_green_grid_csv(path, rows) -> None:
    """CSV of (point, G+, phi+) samples; rows yield (x, y, g, phi)."""
    with open(path, "w") as fh:
        fh.write("x_re,x_im,y_re,y_im,g,phi_re,phi_im\n")
        for x, y, g, phi in rows:
            x, y, phi = complex(x), complex(y), complex(phi)
            fh.write(
                f"{x.real!r},{x.imag!r},{y.real!r},{y.imag!r},"
                f"{g!r},{phi.real!r},{phi.imag!r}\n"
            )
