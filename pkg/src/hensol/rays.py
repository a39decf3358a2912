"""External rays, landing identifications and dynamics-respecting motions.

Rays are traced by Newton on the branch-continued log coordinate: the
target potential descends geometrically (halving, with 3/4 backoff on a
failed level) while the argument stays pinned at the ray angle.  Landing
estimates accelerate the geometric tail of the samples (iterated Aitken),
which recovers several extra digits for slowly-landing rays.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .dynamics import Filtration, HenonSystem, Point, Polynomial
from .errors import (
    BranchAmbiguity,
    NewtonDiverged,
    NotEscaping,
    PartitionMismatch,
    RootPolishFailed,
    UnlandedRay,
)
from .potential import PhiContinuation, dominant_radius
from .saddles import LeafChart, SaddleOrbit2D, _newton_periodic, continue_saddle
from .serialize import c2p

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AngleOrbit:
    """Orbit of an exact-period-K angle under multiplication by d (turns)."""

    d: int
    period: int
    angles: tuple[Fraction, ...]


def periodic_angles(d: int, K: int) -> list[AngleOrbit]:
    """All orbits of exact period K of t -> d*t mod 1, as k/(d^K - 1)."""
    if d < 2 or K < 1:
        raise ValueError("need d >= 2 and K >= 1")
    denom = d**K - 1
    seen: set[Fraction] = set()
    orbits = []
    for k in range(denom):
        theta = Fraction(k, denom)
        if theta in seen:
            continue
        orbit = [theta]
        cur = theta
        while True:
            cur = (cur * d) % 1
            if cur == theta:
                break
            orbit.append(cur)
        for t in orbit:
            seen.add(t)
        if len(orbit) == K:
            orbits.append(AngleOrbit(d, K, tuple(orbit)))
    return orbits


@dataclass(frozen=True)
class RayTrace:
    """Discretized external ray with landing diagnostics.

    `samples` pairs (potential, coordinate); for leaf traces the
    coordinate is the leaf parameter and points_2d carries gamma of it.
    """

    angle: Fraction | float
    samples: tuple[tuple[float, complex], ...]
    landing: complex
    tail_bound: float
    status: str  # landed | truncated
    points_2d: tuple[Point, ...] | None = None
    landing_2d: Point | None = None

    @property
    def landed(self) -> bool:
        return self.status == "landed"


def _accelerate_landing(zs: list[complex]) -> tuple[complex, float]:
    """Wynn epsilon extrapolation of a landing tail.

    Returns the most stable even-column estimate and an error bound from
    the column's internal agreement (twice the last in-column gap).
    """
    seq = list(zs[-24:])
    if len(seq) < 2:
        return seq[-1], math.inf
    best = seq[-1]
    best_gap = abs(seq[-1] - seq[-2])
    eps_prev = [0j] * (len(seq) + 1)
    eps_cur = list(seq)
    col = 0
    while len(eps_cur) > 1 and col < 40:
        col += 1
        nxt = []
        for i in range(len(eps_cur) - 1):
            d = eps_cur[i + 1] - eps_cur[i]
            if abs(d) < 1e-300 or not (
                math.isfinite(d.real) and math.isfinite(d.imag)
            ):
                nxt = []
                break
            nxt.append(eps_prev[i + 1] + 1.0 / d)
        if not nxt:
            break
        eps_prev, eps_cur = eps_cur, nxt
        if col % 2 == 0 and len(eps_cur) >= 2:
            gap = abs(eps_cur[-1] - eps_cur[-2])
            if gap < best_gap:
                best, best_gap = eps_cur[-1], gap
    scale = 1.0 + abs(best)
    return best, max(2.0 * best_gap, 1e-15 * scale)


class _NewtonWalker:
    """Newton tracking of log phi = target through a PhiContinuation.

    The finite-difference probe h shrinks with the Newton steps so that
    probes never straddle the bounded set when the target sits close to
    a landing point.
    """

    def __init__(self, cont: PhiContinuation, tol: float = 1e-12, max_iter: int = 60):
        self.cont = cont
        self.tol = tol
        self.max_iter = max_iter

    def _diff(self, z: complex, h: float) -> tuple[complex, float]:
        base = None
        for _ in range(8):
            try:
                lp = self.cont.peek(z + h).log_value
                lm = self.cont.peek(z - h).log_value
                return (lp - lm) / (2.0 * h), h
            except (BranchAmbiguity, NotEscaping):
                pass
            try:
                if base is None:
                    base = self.cont.peek(z).log_value
                lp = self.cont.peek(z + h).log_value
                return (lp - base) / h, h
            except (BranchAmbiguity, NotEscaping):
                pass
            try:
                if base is None:
                    base = self.cont.peek(z).log_value
                lm = self.cont.peek(z - h).log_value
                return (base - lm) / h, h
            except (BranchAmbiguity, NotEscaping):
                h *= 0.25
        raise NewtonDiverged(f"cannot differentiate the coordinate near {z}")

    def solve(
        self,
        target: complex,
        z_guess: complex | None = None,
        h_hint: float | None = None,
    ) -> tuple[complex, complex]:
        z = complex(z_guess) if z_guess is not None else self.cont.z
        z_base = self.cont.z
        h = h_hint if h_hint else 1e-4 * (abs(z) + 1e-3)
        for _ in range(self.max_iter):
            try:
                bv = self.cont.peek(z)
            except (BranchAmbiguity, NotEscaping):
                z = 0.5 * (z + z_base)
                if abs(z - z_base) < 1e-13 * (1.0 + abs(z_base)):
                    raise
                continue
            F = bv.log_value - target
            if abs(F) <= self.tol:
                self.cont.move_to(z)
                return z, bv.log_value
            h = max(h, 4e-16 * (1.0 + abs(z)))
            dL, h = self._diff(z, h)
            if dL == 0:
                raise NewtonDiverged(f"zero derivative at {z}", where=target)
            # close to a landing point |dL| blows up and one ulp of z moves
            # the coordinate by |dL|*eps: accept at that resolution floor
            floor = 8.0 * abs(dL) * 2.3e-16 * (1.0 + abs(z))
            if abs(F) <= max(self.tol, floor):
                self.cont.move_to(z)
                return z, bv.log_value
            step = F / dL
            cap = 0.5 * (abs(z) + 0.05)
            if abs(step) > cap:
                step *= cap / abs(step)
            z = z - step
            h = min(h, max(0.2 * abs(step), 1e-13 * (1.0 + abs(z))))
        raise NewtonDiverged(f"no convergence to target {target}", where=target)


def _descend(
    walker: _NewtonWalker,
    theta_lift: float,
    g_top: float,
    g_start: float,
    g_stop: float,
    z_top: complex,
) -> list[tuple[float, complex]]:
    """Walk the ray from g_top down to g_stop; record samples once g <= g_start."""
    samples: list[tuple[float, complex]] = []
    g, z = g_top, z_top
    g_prev, z_prev = g, z
    if g <= g_start:
        samples.append((g, z))
    while g > g_stop * (1.0 + 1e-12):
        ratio = 0.5
        while True:
            g_next = max(g * ratio, g_stop)
            # linear extrapolation of z(g) seeds Newton; probe scale from
            # the previous inter-level distance
            if g != g_prev:
                guess = z + (z - z_prev) * (g_next - g) / (g - g_prev)
            else:
                guess = z
            hint = 0.2 * abs(z - z_prev) if z != z_prev else None
            try:
                z_new, _ = walker.solve(complex(g_next, theta_lift), guess, h_hint=hint)
                break
            except (NewtonDiverged, BranchAmbiguity, NotEscaping):
                # failed level: halve the step toward g (3/4, 7/8, ...)
                ratio = 0.5 * (1.0 + ratio)
                if 1.0 - ratio < 0.01:
                    raise
        g_prev, z_prev = g, z
        g, z = g_next, z_new
        if g <= g_start:
            samples.append((g, z))
        # fast-landing rays hit machine resolution before g_stop: the
        # samples have converged spatially, descending further is noise
        if abs(z - z_prev) <= 4e-15 * (1.0 + abs(z)):
            break
    return samples


def _landing_status(samples: list[tuple[float, complex]], land_tol: float):
    zs = [z for _, z in samples]
    n = len(zs)
    if n < 2:
        return zs[-1], math.inf, "truncated"
    scale = 1.0 + abs(zs[-1])
    if abs(zs[-1] - zs[-2]) <= 8e-15 * scale:
        # descent saturated machine resolution: fully landed
        return zs[-1], max(abs(zs[-1] - zs[-2]), 2e-16 * scale), "landed"
    # rays landing at an orbit of angle-period K repeat their geometry
    # every K levels; extrapolate the cleanest decimated subsequence
    best = (zs[-1], math.inf, "truncated")
    for stride in (1, 2, 3, 4):
        sub = [zs[i] for i in range(n - 1, -1, -stride)][::-1]
        if len(sub) < 6:
            continue
        diffs = [abs(b - a) for a, b in zip(sub[-6:-1], sub[-5:])]
        if any(d == 0.0 for d in diffs[:-1]):
            continue
        ratios = [b / a for a, b in zip(diffs, diffs[1:])]
        if not ratios or max(ratios) >= 0.9:
            continue
        est, bound = _accelerate_landing(sub)
        if bound < best[1]:
            best = (est, bound, "landed" if bound < land_tol else "truncated")
    return best


def trace_ray_1d(
    P: Polynomial,
    theta,
    g_start: float = 2.0,
    g_stop: float = 1e-8,
    land_tol: float = 1e-6,
) -> RayTrace:
    """External ray of P at angle theta (turns); descends the potential
    from g_start to g_stop, then extrapolates the landing point."""
    theta_f = float(theta)
    factors = ((P.coeffs, 0j),)
    R = max(2.0, dominant_radius(factors))
    g_top = max(g_start, math.log(R) + 0.4)
    lift = TWO_PI * theta_f
    if lift > math.pi:
        lift -= TWO_PI
    cont = PhiContinuation(factors, R, lambda z: (0j, complex(z)))
    z0 = cmath.exp(complex(g_top, lift))
    cont.start(z0)
    walker = _NewtonWalker(cont)
    z_top, _ = walker.solve(complex(g_top, lift), z0)
    samples = _descend(walker, lift, g_top, g_start, g_stop, z_top)
    landing, bound, status = _landing_status(samples, land_tol)
    return RayTrace(
        angle=theta if isinstance(theta, Fraction) else theta_f,
        samples=tuple(samples),
        landing=landing,
        tail_bound=bound,
        status=status,
    )


def detect_identifications(
    P: Polynomial,
    orbits: list[AngleOrbit],
    land_tol: float = 1e-6,
    traces: dict | None = None,
) -> dict:
    """Partition the angles of the given orbits by landing point.

    Returns {"partition": list of angle groups, "landings": per angle,
    "witness": max in-group distance}; raises UnlandedRay when a needed
    trace truncates.
    """
    if traces is None:
        traces = {}
    angles: list[Fraction] = []
    for orb in orbits:
        angles.extend(orb.angles)
    for th in angles:
        if th not in traces:
            traces[th] = trace_ray_1d(P, th, g_stop=1e-9, land_tol=land_tol)
    unlanded = [th for th in angles if not traces[th].landed]
    if unlanded:
        raise UnlandedRay(f"rays did not land: {unlanded}")

    groups: list[list[Fraction]] = []
    witness = 0.0
    for th in angles:
        z = traces[th].landing
        for grp in groups:
            dist = abs(z - traces[grp[0]].landing)
            if dist < land_tol:
                grp.append(th)
                witness = max(witness, dist)
                break
        else:
            groups.append([th])
    return {
        "partition": sorted([sorted(g) for g in groups]),
        "landings": {th: traces[th].landing for th in angles},
        "witness": witness,
        "traces": traces,
    }


def working_radius(factors) -> float:
    """Conservative filtration radius for raw factor data (b = 0 allowed)."""
    R = 1.0
    for coeffs, b in factors:
        R += sum(abs(c) for c in coeffs) + abs(b)
    return R


def trace_ray_leaf(
    chart: LeafChart,
    theta,
    g_start: float = 1.0,
    g_stop: float = 1e-8,
    land_tol: float = 1e-5,
    R: float | None = None,
    anchor: complex | None = None,
) -> RayTrace:
    """Solenoidal external ray on an unstable-manifold leaf.

    Newton runs in the leaf parameter against the continued phi+ of the
    chart (whose factor data fixes the dynamics, b = 0 included); the
    trace is reported both in the leaf and through gamma.
    """
    theta_f = float(theta)
    if R is None:
        R = working_radius(chart.factors)
    cont = PhiContinuation(chart.factors, R, chart.point, tol=1e-11)
    if anchor is None:
        anchor = chart.escape_anchor(R)
    bv = cont.start(anchor)
    walker = _NewtonWalker(cont)

    # homotopy from the anchor value to the ray at its top potential
    lift = TWO_PI * theta_f + TWO_PI * round((bv.log_value.imag - TWO_PI * theta_f) / TWO_PI)
    g_top = max(g_start, min(bv.log_value.real, 4.0))
    src = bv.log_value
    dst = complex(g_top, lift)
    steps = max(1, int(math.ceil(abs(dst - src) / 0.35)))
    z = cont.z
    for k in range(1, steps + 1):
        tgt = src + (dst - src) * k / steps
        z, _ = walker.solve(tgt, z)
    samples = _descend(walker, lift, g_top, g_start, g_stop, z)
    landing, bound, status = _landing_status(samples, land_tol)
    pts = tuple(chart.point(z) for _, z in samples)
    return RayTrace(
        angle=theta if isinstance(theta, Fraction) else theta_f,
        samples=tuple(samples),
        landing=landing,
        tail_bound=bound,
        status=status,
        points_2d=pts,
        landing_2d=chart.point(landing),
    )


def _landing_orbit_1d(P: Polynomial, z_land: complex, match_tol: float = 1e-4):
    """Periodic orbit through a ray landing estimate, Newton-polished."""
    w = z_land
    period = None
    for k in range(1, 65):
        w = P(w)
        if abs(w - z_land) < match_tol * (1.0 + abs(w)):
            period = k
            break
    if period is None:
        raise RootPolishFailed(f"landing {z_land} not periodic within period cap 64")
    z0 = _newton_periodic(P, z_land, period)
    if z0 is None:
        raise RootPolishFailed(f"could not polish landing {z_land}")
    pts = [z0]
    for _ in range(period - 1):
        pts.append(P(pts[-1]))
    return tuple(pts), period


@dataclass
class IdentificationReport:
    """Side-by-side ray identification partitions for P and H_b."""

    b: complex
    angles: list[Fraction]
    partition_1d: list[list[Fraction]]
    partition_henon: list[list[Fraction]]
    landings_1d: dict
    landings_henon: dict
    saddle_distances: dict
    equal: bool

    def to_json(self) -> dict:
        return {
            "b": c2p(self.b),
            "angles": [str(a) for a in self.angles],
            "partition_1d": [[str(a) for a in g] for g in self.partition_1d],
            "partition_henon": [[str(a) for a in g] for g in self.partition_henon],
            "landings_1d": {str(a): c2p(z) for a, z in self.landings_1d.items()},
            "landings_henon": {
                str(a): [c2p(p[0]), c2p(p[1])] for a, p in self.landings_henon.items()
            },
            "saddle_distances": {str(a): d for a, d in self.saddle_distances.items()},
            "equal": self.equal,
        }


def compare_identifications(
    P: Polynomial,
    b: complex,
    orbits: list[AngleOrbit],
    land_tol: float = 1e-6,
    land_tol_2d: float = 1e-4,
    g_stop_leaf: float = 1e-8,
    steps: int = 24,
) -> IdentificationReport:
    """Trace every periodic angle for P and for H_b and compare the two
    partitions of angles by landing point.

    Each Henon-side ray is traced on the leaf of the continued landing
    saddle of its one-dimensional counterpart; a PartitionMismatch is
    raised (with the full report attached) when the partitions differ.
    """
    report_1d = detect_identifications(P, orbits, land_tol)
    angles = sorted(report_1d["landings"].keys())

    # continued saddle (and chart) per distinct landing orbit point
    orbit_cache: list[tuple[tuple[complex, ...], SaddleOrbit2D]] = []
    chart_cache: dict[tuple[int, int], LeafChart] = {}

    def _chart_for(z_land: complex) -> tuple[LeafChart, Point]:
        for oi, (pts1d, saddle) in enumerate(orbit_cache):
            for i, q1 in enumerate(pts1d):
                if abs(q1 - z_land) < 1e-4 * (1.0 + abs(q1)):
                    key = (oi, i)
                    if key not in chart_cache:
                        chart_cache[key] = LeafChart.from_saddle(saddle.at_point(i))
                    ch = chart_cache[key]
                    return ch, ch.saddle.q
        pts1d, period = _landing_orbit_1d(P, z_land)
        saddle = continue_saddle(P, period, pts1d, b, steps=steps)
        orbit_cache.append((pts1d, saddle))
        return _chart_for(z_land)

    landings_henon: dict[Fraction, Point] = {}
    saddle_dist: dict[Fraction, float] = {}
    for th in angles:
        ch, q_target = _chart_for(report_1d["landings"][th])
        trace = trace_ray_leaf(ch, th, g_stop=g_stop_leaf, land_tol=land_tol_2d)
        if not trace.landed:
            raise UnlandedRay(f"Henon-side ray {th} truncated (bound {trace.tail_bound:.2e})")
        landings_henon[th] = trace.landing_2d
        saddle_dist[th] = math.hypot(
            abs(trace.landing_2d[0] - q_target[0]), abs(trace.landing_2d[1] - q_target[1])
        )

    groups: list[list[Fraction]] = []
    for th in angles:
        p = landings_henon[th]
        for grp in groups:
            q = landings_henon[grp[0]]
            if math.hypot(abs(p[0] - q[0]), abs(p[1] - q[1])) < land_tol_2d:
                grp.append(th)
                break
        else:
            groups.append([th])
    partition_henon = sorted([sorted(g) for g in groups])

    report = IdentificationReport(
        b=complex(b),
        angles=angles,
        partition_1d=report_1d["partition"],
        partition_henon=partition_henon,
        landings_1d=report_1d["landings"],
        landings_henon=landings_henon,
        saddle_distances=saddle_dist,
        equal=report_1d["partition"] == partition_henon,
    )
    if not report.equal:
        raise PartitionMismatch(
            f"1d partition {report.partition_1d} != Henon partition {partition_henon}",
            report=report,
        )
    return report


def certify_default(sys: HenonSystem) -> Filtration:
    """Certified filtration at the conservative default radius."""
    from .dynamics import certify_filtration

    R = 1.0 + sys.coeff_abs_sum()
    for _, bj in sys.factors:
        R += abs(bj)
    return certify_filtration(sys, R)


@dataclass(frozen=True)
class MotionCheck:
    """Residuals of a motion identity over a declared sample set."""

    parameters: tuple
    n_samples: int
    conjugacy_residual: float
    identity_residual: float
    witness: complex | None


def motion_psi_1d(
    P0: Polynomial,
    P1: Polynomial,
    z: complex,
    tol: float = 1e-12,
) -> complex:
    """Motion following the Boettcher coordinate: psi = phi_1^{-1} o phi_0.

    Computes w = phi_0(z) and solves phi_1(zeta) = w by Newton seeded at
    high potential, descending to the potential of w.
    """
    from .potential import boettcher_1d

    w = boettcher_1d(P0, z, tol=tol)
    target = w.log_value
    factors1 = ((P1.coeffs, 0j),)
    R1 = max(2.0, dominant_radius(factors1))
    g_top = max(target.real, math.log(R1) + 0.4)
    cont = PhiContinuation(factors1, R1, lambda u: (0j, complex(u)))
    z0 = cmath.exp(complex(g_top, target.imag))
    cont.start(z0)
    walker = _NewtonWalker(cont, tol=tol)
    zeta, _ = walker.solve(complex(g_top, target.imag), z0)
    g = g_top
    while g > target.real * (1.0 + 1e-12):
        g = max(0.5 * g, target.real)
        zeta, _ = walker.solve(complex(g, target.imag), zeta)
    return zeta


def motion_psi_leaf(
    chart0: LeafChart,
    chart1: LeafChart,
    z: complex,
    tol: float = 1e-11,
) -> complex:
    """Leafwise motion matching the continued phi+ coordinate.

    Solves extend_phi_plus(chart1, zeta) = extend_phi_plus(chart0, z);
    realizes the motion between the two saddle leaves.
    """
    R0 = working_radius(chart0.factors)
    cont0 = PhiContinuation(chart0.factors, R0, chart0.point, tol=tol)
    cont0.start(chart0.escape_anchor(R0))
    target = cont0.move_to(complex(z)).log_value

    R1 = working_radius(chart1.factors)
    cont1 = PhiContinuation(chart1.factors, R1, chart1.point, tol=tol)
    bv1 = cont1.start(chart1.escape_anchor(R1))
    walker = _NewtonWalker(cont1, tol=max(tol, 1e-12))
    src = bv1.log_value
    adj = TWO_PI * round((src.imag - target.imag) / TWO_PI)
    dst = complex(target.real, target.imag + adj)
    steps = max(1, int(math.ceil(abs(dst - src) / 0.35)))
    zeta = cont1.z
    for k in range(1, steps + 1):
        tgt = src + (dst - src) * k / steps
        zeta, _ = walker.solve(tgt, zeta)
    return zeta


def dump_ray_csv(path, trace: RayTrace) -> None:
    """1D format "g,theta,z_re,z_im"; leaf format adds leaf and C^2 columns."""
    th = float(trace.angle)
    with open(path, "w") as fh:
        if trace.points_2d is None:
            fh.write("g,theta,z_re,z_im\n")
            for g, z in trace.samples:
                fh.write(f"{g!r},{th!r},{z.real!r},{z.imag!r}\n")
        else:
            fh.write("g,theta0,leaf_re,leaf_im,x_re,x_im,y_re,y_im\n")
            for (g, z), p in zip(trace.samples, trace.points_2d):
                fh.write(
                    f"{g!r},{th!r},{z.real!r},{z.imag!r},"
                    f"{p[0].real!r},{p[0].imag!r},{p[1].real!r},{p[1].imag!r}\n"
                )
