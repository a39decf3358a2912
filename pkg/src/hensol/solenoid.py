"""Truncated degree-d solenoid model and codings of Henon leaf points.

Windows store orbit segments (z_t), t in [-T, T], of z -> z^d on the
closed exterior of the unit disk; the shift map regenerates the top
entry.  Coding a leaf point pulls the phi+ branch backward along the
lambda-spiral of its chart, so every entry carries a consistent root
choice.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

from .dynamics import Filtration, HenonSystem
from .potential import PhiContinuation
from .serialize import c2p, p2c

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SolenoidWindow:
    """Orbit window (z_t), z_{t+1} = z_t^d, |z_t| >= 1, t in [-T, T]."""

    d: int
    T: int
    entries: tuple[complex, ...]

    def __post_init__(self):
        if len(self.entries) != 2 * self.T + 1:
            raise ValueError("window must hold 2T+1 entries")

    def at(self, t: int) -> complex:
        if not -self.T <= t <= self.T:
            raise IndexError(f"t={t} outside window [-{self.T}, {self.T}]")
        return self.entries[t + self.T]

    def consistency_residual(self) -> float:
        worst = 0.0
        for t in range(-self.T, self.T):
            a, b = self.at(t), self.at(t + 1)
            worst = max(worst, abs(a**self.d - b) / max(1.0, abs(b)))
        return worst

    def to_json(self) -> dict:
        return {"d": self.d, "T": self.T, "entries": [c2p(z) for z in self.entries]}

    @classmethod
    def from_json(cls, data: dict) -> "SolenoidWindow":
        return cls(
            int(data["d"]), int(data["T"]), tuple(p2c(e) for e in data["entries"])
        )


@dataclass(frozen=True)
class SolenoidFixedPoint:
    """Constant shift-fixed sequence z_t = s with s^(d-1) = 1."""

    s: complex
    d: int

    def window(self, T: int) -> SolenoidWindow:
        return SolenoidWindow(self.d, T, (self.s,) * (2 * T + 1))


@dataclass(frozen=True)
class RayAddress:
    """Angle window (theta_t) in radians with theta_{t+1} = d*theta_t mod 2pi."""

    d: int
    T: int
    angles: tuple[float, ...]

    def at(self, t: int) -> float:
        return self.angles[t + self.T]

    def consistency_residual(self) -> float:
        worst = 0.0
        for t in range(-self.T, self.T):
            delta = (self.d * self.at(t) - self.at(t + 1)) % TWO_PI
            worst = max(worst, min(delta, TWO_PI - delta))
        return worst

    @classmethod
    def periodic(cls, d: int, theta: Fraction, T: int) -> "RayAddress":
        """Window of a periodic angle (in turns) under multiplication by d."""
        theta = Fraction(theta)
        # backward angles follow the periodic cycle of theta
        orbit = [theta % 1]
        cur = theta
        while True:
            cur = (cur * d) % 1
            if cur == theta % 1:
                break
            orbit.append(cur)
            if len(orbit) > 512:
                raise ValueError("angle is not periodic at desk scale")
        k = len(orbit)
        angles = []
        for t in range(-T, T + 1):
            angles.append(float(orbit[t % k]) * TWO_PI)
        return cls(d, T, tuple(angles))


def shift(w: SolenoidWindow) -> SolenoidWindow:
    """Shift left; the vacated top entry regenerates as z_T^d."""
    new = w.entries[1:] + (w.entries[-1] ** w.d,)
    return SolenoidWindow(w.d, w.T, new)


def theta(w: SolenoidWindow) -> RayAddress:
    return RayAddress(w.d, w.T, tuple(cmath.phase(z) % TWO_PI for z in w.entries))


def solenoid_fixed_points(d: int) -> list[SolenoidFixedPoint]:
    """All d-1 shift-fixed constant sequences (roots of unity)."""
    if d < 2:
        raise ValueError("degree must be >= 2")
    return [
        SolenoidFixedPoint(cmath.exp(2j * math.pi * k / (d - 1)), d)
        for k in range(d - 1)
    ]


def unstable_distance_diag(w1: SolenoidWindow, w2: SolenoidWindow) -> float:
    """max over t <= 0 of |z_t - z'_t|: a truncated-model diagnostic for
    membership in the same unstable set (tails of the same window agree)."""
    if (w1.d, w1.T) != (w2.d, w2.T):
        raise ValueError("windows must share degree and width")
    return max(abs(w1.at(t) - w2.at(t)) for t in range(-w1.T, 1))


def code_window(
    sys: HenonSystem | None,
    filt: Filtration | None,
    chart,
    z: complex,
    T: int,
    substeps: int = 32,
    tol: float = 1e-11,
    anchor: complex | None = None,
) -> SolenoidWindow:
    """Coding Phi of the leaf point gamma(z), truncated to [-T, T].

    Forward entries follow the functional equation from the t = 0 value;
    backward entries continue phi+ down the lambda-spiral of the chart.
    substeps controls the spiral path resolution per backward period.
    sys/filt may be None; the chart's factor data fixes the dynamics.
    """
    if sys is not None and sys.factor_data() != chart.factors:
        raise ValueError("system and chart disagree on the underlying map")
    factors = chart.factors
    d = 1
    for coeffs, _ in factors:
        d *= len(coeffs) - 1
    m = chart.m
    lam = chart.lam
    if filt is not None:
        R = filt.radius
    else:
        R = 1.0 + sum(
            sum(abs(c) for c in coeffs) + abs(b) for coeffs, b in factors
        )
    cont = PhiContinuation(factors, R, chart.point, tol=tol)
    if anchor is None:
        anchor = chart.escape_anchor(R)
    cont.start(anchor)
    log0 = cont.move_to(complex(z)).log_value

    depths = int(math.ceil(T / m))
    logs = [log0]  # log phi at z * lam^(-i)
    lam_root = cmath.exp(cmath.log(lam) / substeps)
    cur = complex(z)
    for _ in range(depths):
        for _ in range(substeps):
            cur = cur / lam_root
            bv = cont.move_to(cur)
        logs.append(bv.log_value)

    entries = []
    for t in range(-T, T + 1):
        i = max(0, int(math.ceil(-t / m)))
        L = logs[i] * float(d) ** (t + i * m)
        entries.append(cmath.exp(L))
    return SolenoidWindow(d, T, tuple(entries))


def covering_degree_probe(
    sys: HenonSystem,
    filt: Filtration,
    chart,
    n_angles: int = 96,
    radius_steps: int = 6,
    cell: float = 0.05,
) -> int:
    """Empirical lower bound for the covering degree of the coding.

    Counts distinct direct-evaluation leaf points whose (potential,
    angle) pairs fall in one cell of the solenoid base; never asserts
    exactness.
    """
    from .potential import _in_v_plus, _log_phi_at, dominant_radius

    factors = sys.factor_data()
    R_dom = max(filt.radius, dominant_radius(factors))
    hits: dict[tuple[int, int], list[complex]] = {}
    best = 0
    r = max(chart.trust_radius * 0.5, 1e-3)
    for _ in range(radius_steps):
        for k in range(n_angles):
            z = r * cmath.exp(2j * math.pi * k / n_angles)
            p = chart.point(z)
            if not _in_v_plus(p, R_dom):
                continue
            bv = _log_phi_at(factors, filt.radius, p, 1e-10)
            key = (
                int(bv.log_value.real / cell),
                int((bv.log_value.imag % TWO_PI) / cell),
            )
            bucket = hits.setdefault(key, [])
            if all(abs(z - other) > 10 * cell * max(1.0, abs(z)) for other in bucket):
                bucket.append(z)
                best = max(best, len(bucket))
        r *= 1.6
    return max(best, 1)
