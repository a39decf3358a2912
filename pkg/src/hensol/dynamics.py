"""Henon maps in composed factor form and the escape-region filtration.

A system is an ordered composition of factors (x, y) -> (y, P(y) - b*x)
with b != 0.  The filtration splits C^2 into V+ (forward escape), V-
(backward escape) and the bidisk V; its radius is certified on a
deterministic boundary sample grid rather than by interval arithmetic.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from enum import Enum

from .errors import CertificationFailed
from .serialize import c2p, p2c

Point = tuple[complex, complex]
# raw factor form used by low-level engines; b == 0 is allowed there
# (one-dimensional reduction mode) but never in a HenonSystem.
FactorData = tuple[tuple[complex, ...], complex]


@dataclass(frozen=True)
class Polynomial:
    """One-variable complex polynomial, coefficients lowest degree first."""

    coeffs: tuple[complex, ...]

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in self.coeffs)
        if len(coeffs) < 3:
            raise ValueError("polynomial degree must be at least 2")
        if coeffs[-1] == 0:
            raise ValueError("leading coefficient must be nonzero")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def quadratic(cls, c) -> "Polynomial":
        """z^2 + c."""
        return cls((complex(c), 0j, 1 + 0j))

    @classmethod
    def power(cls, d: int) -> "Polynomial":
        """z^d."""
        return cls((0j,) * d + (1 + 0j,))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_monic(self) -> bool:
        return self.coeffs[-1] == 1

    def __call__(self, z: complex) -> complex:
        acc = 0j
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return acc

    def with_derivative(self, z: complex) -> tuple[complex, complex]:
        """(P(z), P'(z)) in a single Horner pass."""
        p = 0j
        dp = 0j
        for c in reversed(self.coeffs):
            dp = dp * z + p
            p = p * z + c
        return p, dp

    def coeff_abs_sum(self) -> float:
        return sum(abs(c) for c in self.coeffs[:-1]) + abs(self.coeffs[-1])


def apply_factor(coeffs: tuple[complex, ...], b: complex, p: Point) -> Point:
    x, y = p
    acc = 0j
    for c in reversed(coeffs):
        acc = acc * y + c
    return (y, acc - b * x)


def apply_factors(factors: tuple[FactorData, ...], p: Point) -> Point:
    for coeffs, b in factors:
        p = apply_factor(coeffs, b, p)
    return p


def factor_jacobian(coeffs: tuple[complex, ...], b: complex, p: Point):
    """2x2 Jacobian of one factor at p, rows (dx', dy')."""
    _, y = p
    dp = 0j
    acc = 0j
    for c in reversed(coeffs):
        dp = dp * y + acc
        acc = acc * y + c
    return ((0j, 1 + 0j), (-b, dp))


def _mat_mul(a, m):
    return (
        (a[0][0] * m[0][0] + a[0][1] * m[1][0], a[0][0] * m[0][1] + a[0][1] * m[1][1]),
        (a[1][0] * m[0][0] + a[1][1] * m[1][0], a[1][0] * m[0][1] + a[1][1] * m[1][1]),
    )


def orbit_jacobian(factors: tuple[FactorData, ...], p: Point, steps: int = 1):
    """Jacobian of `steps` full applications of the composition, chained."""
    jac = ((1 + 0j, 0j), (0j, 1 + 0j))
    for _ in range(steps):
        for coeffs, b in factors:
            jac = _mat_mul(factor_jacobian(coeffs, b, p), jac)
            p = apply_factor(coeffs, b, p)
    return jac


@dataclass(frozen=True)
class HenonSystem:
    """Composition of Henon factors, applied in list order."""

    factors: tuple[tuple[Polynomial, complex], ...]

    def __post_init__(self):
        factors = tuple((poly, complex(b)) for poly, b in self.factors)
        if not factors:
            raise ValueError("need at least one factor")
        for _, b in factors:
            if b == 0:
                raise ValueError("factor Jacobian b must be nonzero")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def single(cls, poly: Polynomial, b) -> "HenonSystem":
        return cls(((poly, complex(b)),))

    @property
    def degree(self) -> int:
        d = 1
        for poly, _ in self.factors:
            d *= poly.degree
        return d

    @property
    def jacobian_determinant(self) -> complex:
        b = 1 + 0j
        for _, bj in self.factors:
            b *= bj
        return b

    def factor_data(self) -> tuple[FactorData, ...]:
        return tuple((poly.coeffs, b) for poly, b in self.factors)

    def apply(self, p: Point) -> Point:
        return apply_factors(self.factor_data(), p)

    def inverse(self, p: Point) -> Point:
        for poly, b in reversed(self.factors):
            x, y = p
            p = ((poly(x) - y) / b, x)
        return p

    def iterate(self, p: Point, n: int) -> Point:
        step = self.apply if n >= 0 else self.inverse
        for _ in range(abs(n)):
            p = step(p)
        return p

    def orbit(self, p: Point, n: int) -> list[Point]:
        """Points p, H(p), ..., H^n(p) (backward for n < 0)."""
        out = [p]
        step = self.apply if n >= 0 else self.inverse
        for _ in range(abs(n)):
            p = step(p)
            out.append(p)
        return out

    def jacobian(self, p: Point, steps: int = 1):
        return orbit_jacobian(self.factor_data(), p, steps)

    def inverse_system(self) -> "HenonSystem":
        """Swap-conjugate of H^-1, again in Henon factor form.

        With s(x,y)=(y,x), the map s o H^-1 o s is the composition of
        factors (P_j/b_j, 1/b_j) in reverse order; forward dynamics of the
        returned system mirror backward dynamics of this one.
        """
        rev = []
        for poly, b in reversed(self.factors):
            rev.append((Polynomial(tuple(c / b for c in poly.coeffs)), 1 / b))
        return HenonSystem(tuple(rev))

    def coeff_abs_sum(self) -> float:
        return sum(poly.coeff_abs_sum() for poly, _ in self.factors)

    def to_json(self) -> dict:
        return {
            "factors": [
                {"coeffs": [c2p(c) for c in poly.coeffs], "b": c2p(b)}
                for poly, b in self.factors
            ]
        }

    @classmethod
    def from_json(cls, data: dict) -> "HenonSystem":
        factors = []
        for fac in data["factors"]:
            coeffs = tuple(p2c(c) for c in fac["coeffs"])
            factors.append((Polynomial(coeffs), p2c(fac["b"])))
        return cls(tuple(factors))


def swap(p: Point) -> Point:
    return (p[1], p[0])


@dataclass(frozen=True)
class Filtration:
    """Certified filtration radius with the three region predicates."""

    radius: float
    expansion: float = 1.0
    samples: int = 0

    def in_v_plus(self, p: Point) -> bool:
        ax, ay = abs(p[0]), abs(p[1])
        return ay >= ax and ay >= self.radius

    def in_v_minus(self, p: Point) -> bool:
        ax, ay = abs(p[0]), abs(p[1])
        return ax >= ay and ax >= self.radius

    def in_v(self, p: Point) -> bool:
        return abs(p[0]) < self.radius and abs(p[1]) < self.radius


def _boundary_grid(R: float, n: int):
    """Deterministic product grid on the sphere {|y| = R, |x| <= R}.

    Yields (x, y) pairs; includes the extreme rings |x| in {0, R}.
    """
    n_ty = max(8, int(round((n / 4.0) ** (1.0 / 3.0) * 2.0)))
    n_r = max(4, int(round(n_ty / 2.0)))
    n_tx = max(4, int(math.ceil(n / (n_ty * n_r))))
    for i in range(n_ty):
        y = R * cmath.exp(2j * math.pi * i / n_ty)
        for k in range(n_r):
            r = R * k / (n_r - 1)
            if r == 0.0:
                yield (0j, y)
                continue
            for j in range(n_tx):
                x = r * cmath.exp(2j * math.pi * j / n_tx)
                yield (x, y)


def certify_filtration(sys: HenonSystem, R: float, samples: int = 10_000) -> Filtration:
    """Check the invariance and expansion properties on boundary grids.

    H must map samples of {|y|=R>=|x|} into V+ with |pi_y H| >= rho*R for
    some rho > 1, and H^-1 must map samples of {|x|=R>=|y|} into V-.
    Raises CertificationFailed with a witness point otherwise.
    """
    if R <= 0:
        raise ValueError("radius must be positive")
    rho = math.inf
    count = 0
    for p in _boundary_grid(R, samples):
        q = sys.apply(p)
        ax, ay = abs(q[0]), abs(q[1])
        if not (ay >= ax and ay >= R):
            raise CertificationFailed(
                f"H(V+) left V+ at sample {p} -> {q} (R={R})", witness=p
            )
        rho = min(rho, ay / R)
        count += 1
    if not rho > 1.0:
        raise CertificationFailed(
            f"no expansion on V+ boundary: rho={rho:.6f} (R={R})", witness=None
        )
    for ps in _boundary_grid(R, samples):
        p = swap(ps)
        q = sys.inverse(p)
        ax, ay = abs(q[0]), abs(q[1])
        if not (ax >= ay and ax >= R):
            raise CertificationFailed(
                f"H^-1(V-) left V- at sample {p} -> {q} (R={R})", witness=p
            )
        count += 1
    return Filtration(radius=R, expansion=rho, samples=count)


def find_radius(sys: HenonSystem, samples: int = 10_000, bisections: int = 24) -> Filtration:
    """Smallest certifiable radius found by downward bisection.

    Starts at 1 + sum of coefficient magnitudes over all factors, which
    certifies for every composed system tried so far, then shrinks while
    certification keeps passing.
    """
    hi = 1.0 + sys.coeff_abs_sum()
    for _, b in sys.factors:
        hi += abs(b)
    best = certify_filtration(sys, hi, samples)
    lo = 0.0
    for _ in range(bisections):
        mid = 0.5 * (lo + best.radius)
        try:
            best = certify_filtration(sys, mid, samples)
        except CertificationFailed:
            lo = mid
        if best.radius - lo < 1e-3 * best.radius:
            break
    return best


class OrbitClass(Enum):
    ESCAPED = "entered-v-plus"
    BOUNDED = "stayed-in-v"
    BACKWARD_ESCAPED = "entered-v-minus-backward"


@dataclass(frozen=True)
class OrbitRecord:
    start: Point
    steps: int
    samples: tuple[Point, ...]
    kind: OrbitClass
    entry_step: int | None


def classify_orbit(
    sys: HenonSystem, filt: Filtration, p: Point, n_max: int = 1000
) -> OrbitRecord:
    """Iterate forward until V+ is entered or the budget runs out.

    Exhausting the budget is the BOUNDED classification (presumed K+ at
    this resolution), not an error.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    samples = [p]
    q = p
    for k in range(n_max + 1):
        if filt.in_v_plus(q):
            return OrbitRecord(p, k, tuple(samples), OrbitClass.ESCAPED, k)
        if k == n_max:
            break
        q = sys.apply(q)
        samples.append(q)
    return OrbitRecord(p, n_max, tuple(samples), OrbitClass.BOUNDED, None)


def classify_backward_orbit(
    sys: HenonSystem, filt: Filtration, p: Point, n_max: int = 1000
) -> OrbitRecord:
    """Mirror of classify_orbit for H^-1 and V-."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    samples = [p]
    q = p
    for k in range(n_max + 1):
        if filt.in_v_minus(q):
            return OrbitRecord(p, k, tuple(samples), OrbitClass.BACKWARD_ESCAPED, k)
        if k == n_max:
            break
        q = sys.inverse(q)
        samples.append(q)
    return OrbitRecord(p, n_max, tuple(samples), OrbitClass.BOUNDED, None)


def load_system(source) -> tuple[HenonSystem, Filtration]:
    """Read a system description ({"factors": [...], "R": optional}).

    `source` may be a path or an already-parsed dict.  When R is absent a
    certified radius is searched automatically.
    """
    if isinstance(source, (str, bytes)):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = source
    sys = HenonSystem.from_json(data)
    if data.get("R") is not None:
        filt = certify_filtration(sys, float(data["R"]))
    else:
        filt = find_radius(sys)
    return sys, filt
