"""The cubic pair, its critical orbits, and escape-time classification.

The two polynomials are determined by algebraic conditions on their critical
orbits:

* ``P1 = z^3 + a z + b`` with ``a = -3x^2``, ``b = 2x^3 - x`` where the
  critical points ``x`` and ``y = -x`` lie on a superattracting 3-cycle
  ``x -> y -> y1 -> x`` (so ``32x^8 - 24x^6 + 2x^2 - 1 = 0``);
* ``P2 = z^3 + c`` whose double critical point 0 has period 3
  (so ``c^8 + 3c^6 + 3c^4 + c^2 + 1 = 0``).

Both defining equations have several roots; the intended ones are selected by
proximity to 0.8445 and -0.264 + 1.260i and then validated a posteriori
against the orbit relations.

This module also classifies points by escape time (Green's function value and
external angle, via the Boettcher functional equation ``phi(P(z)) = phi(z)^3``)
and builds the initial marked-sphere configuration: the two filled Julia sets
glued along the equipotential of level log R with the large-R identity-chart
approximation, normalized so that ``c0 -> 0``, ``e0 -> 1``, ``x -> infinity``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping

import gmpy2

from .numerics import (
    INFINITY,
    BigComplex,
    CoincidentPointsError,
    Mobius,
    NumericsError,
    Poly,
    RiemannPoint,
    RootFindingError,
    context_for,
    mobius_from_triple,
    poly_roots,
    real_to_string,
)

__all__ = [
    "MatingParameters",
    "EscapeStatus",
    "EscapeClassification",
    "MarkedConfiguration",
    "LABELS",
    "FREE_LABELS",
    "X_EQUATION",
    "C_EQUATION",
    "solve_parameters",
    "p1_polynomial",
    "p2_polynomial",
    "classify",
    "basic_escape_radius",
    "initial_configuration",
    "identity_chart_configuration",
    "normalizer_for_level",
]

#: Marked-point labels: three on the P1 side, three on the P2 side, plus the
#: angle-zero equator point.  c0/e0/x are pinned to 0/1/infinity.
LABELS = ("c0", "e0", "x", "y", "y1", "c1", "c2")
FREE_LABELS = ("y", "y1", "c1", "c2")

#: Integer coefficient lists (lowest degree first) of the defining equations.
X_EQUATION = (-1, 0, 2, 0, 0, 0, -24, 0, 32)
C_EQUATION = (1, 0, 1, 0, 3, 0, 3, 0, 1)

_X_APPROX = ("0.8445", "0")
_C_APPROX = ("-0.264", "1.260")


@dataclass(frozen=True)
class MatingParameters:
    """Solved parameters of the pair, validated against the orbit relations."""

    x: BigComplex
    y: BigComplex
    y1: BigComplex
    a: BigComplex
    b: BigComplex
    c: BigComplex
    c2: BigComplex
    precision: int

    def validate(self) -> None:
        """Check every defining relation to 2^(20 - precision)."""
        p = self.precision
        tol = gmpy2.exp2(gmpy2.mpfr(20 - p, p))
        checks = {
            "crit_x": (self.x * self.x * 3 + self.a).abs(),
            "crit_y": (self.y * self.y * 3 + self.a).abs(),
            "orbit_x_to_y": (_p1_at(self, self.x) - self.y).abs(),
            "orbit_y_to_y1": (_p1_at(self, self.y) - self.y1).abs(),
            "orbit_y1_to_x": (_p1_at(self, self.y1) - self.x).abs(),
            "orbit_0_to_c": (BigComplex.zero(p) + self.c - self.c).abs(),
            "orbit_c_to_c2": (self.c * self.c * self.c + self.c - self.c2).abs(),
            "orbit_c2_to_0": (self.c2 * self.c2 * self.c2 + self.c).abs(),
            "x_equation": _int_poly_residual(X_EQUATION, self.x),
            "c_equation": _int_poly_residual(C_EQUATION, self.c),
        }
        bad = {k: float(v) for k, v in checks.items() if not v <= tol}
        if bad:
            raise NumericsError(f"parameter invariants violated: {bad}")

    def to_json(self) -> dict:
        data = {name: getattr(self, name).to_json()
                for name in ("x", "y", "y1", "a", "b", "c", "c2")}
        data["precision"] = self.precision
        return data

    @classmethod
    def from_json(cls, data: dict) -> "MatingParameters":
        p = data["precision"]
        vals = {name: BigComplex.from_json(data[name], p)
                for name in ("x", "y", "y1", "a", "b", "c", "c2")}
        params = cls(precision=p, **vals)
        params.validate()
        return params


def _p1_at(params: MatingParameters, z: BigComplex) -> BigComplex:
    return z * z * z + params.a * z + params.b


def _int_poly_residual(coeffs, z: BigComplex):
    acc = BigComplex.zero(z.precision)
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc.abs()


def p1_polynomial(params: MatingParameters) -> Poly:
    p = params.precision
    return Poly([params.b, params.a, BigComplex.zero(p), BigComplex.one(p)])


def p2_polynomial(params: MatingParameters) -> Poly:
    p = params.precision
    zero = BigComplex.zero(p)
    return Poly([params.c, zero, zero, BigComplex.one(p)])


def solve_parameters(precision: int) -> MatingParameters:
    """Solve both defining equations and derive the dependent quantities.

    Root selection is by proximity to the known decimal approximations
    (within 0.05, else the root finder is at fault), every derived relation
    is then re-validated.
    """
    if precision < 64:
        raise ValueError("precision must be at least 64 bits")
    x = _nearest_root(X_EQUATION, _X_APPROX, precision)
    c = _nearest_root(C_EQUATION, _C_APPROX, precision)
    # The real x-root has a tiny spurious imaginary part from the iteration.
    if abs(float(x.im)) < 2.0 ** (-precision // 2):
        x = BigComplex(x.re, 0, precision)
    a = -(x * x * 3)
    b = x * x * x * 2 - x
    params = MatingParameters(
        x=x,
        y=-x,
        y1=x * x * x * 4 - x,
        a=a,
        b=b,
        c=c,
        c2=c * c * c + c,
        precision=precision,
    )
    params.validate()
    return params


def _nearest_root(coeffs, approx, precision: int) -> BigComplex:
    poly = Poly.from_numbers(coeffs, precision)
    roots = poly_roots(poly, precision)
    target = BigComplex(approx[0], approx[1], precision)
    best = min(roots, key=lambda r: (r - target).abs())
    if not (best - target).abs() < gmpy2.mpfr("0.05", precision):
        raise RootFindingError(f"no root within 0.05 of {approx}")
    return best


# ---------------------------------------------------------------------------
# Escape-time classification
# ---------------------------------------------------------------------------


class EscapeStatus(enum.Enum):
    INTERIOR = "interior"
    ESCAPED = "escaped"


@dataclass(frozen=True)
class EscapeClassification:
    """Result of iterating a monic cubic at one point.

    ``potential`` is the Green's function value (0 for interior points);
    ``angle`` the external angle in [0, 1), defined only when escaped.
    """

    status: EscapeStatus
    potential: object
    angle: object | None
    steps: int

    @property
    def escaped(self) -> bool:
        return self.status is EscapeStatus.ESCAPED


def basic_escape_radius(poly: Poly):
    """Radius beyond which one iterate at least doubles the modulus."""
    p = poly.precision
    ctx = context_for(p)
    s = gmpy2.mpfr(1, p)
    for c in poly.coeffs[:-1]:
        s = ctx.add(s, ctx.abs(c.raw))
    two = gmpy2.mpfr(2, p)
    return s if s > two else two


def classify(poly: Poly, z: BigComplex, cutoff_potential=None, max_iter: int = 200) -> EscapeClassification:
    """Iterate ``poly`` at ``z`` until escape or ``max_iter``.

    Escape is declared past ``max(e^cutoff_potential, basic radius)``; the
    orbit is then pushed a few more steps into the asymptotic region where
    ``phi(w) ~ w``, so the returned potential ``3^-k log|z_k|`` and the
    unwound-argument angle are accurate far below rounding level.
    """
    if poly.degree != 3 or not poly.coeffs[3] == 1:
        raise ValueError("classify expects a monic cubic")
    p = z.precision
    ctx = context_for(p)
    radius = basic_escape_radius(poly.at_precision(p))
    if cutoff_potential is not None:
        cut = ctx.exp(gmpy2.mpfr(cutoff_potential, p))
        if cut > radius:
            radius = cut
    radius2 = ctx.mul(radius, radius)

    c0 = poly.coeffs[0].at_precision(p).raw
    c1 = poly.coeffs[1].at_precision(p).raw
    c2 = poly.coeffs[2].at_precision(p).raw
    has_c2 = not poly.coeffs[2].is_zero()

    def step(w):
        acc = ctx.add(w, c2) if has_c2 else w
        acc = ctx.add(ctx.mul(acc, w), c1)
        return ctx.add(ctx.mul(acc, w), c0)

    w = z.raw
    k = 0
    while ctx.norm(w) <= radius2:
        if k >= max_iter:
            return EscapeClassification(EscapeStatus.INTERIOR, gmpy2.mpfr(0, p), None, k)
        w = step(w)
        k += 1
    escape_index = k

    # Refinement: at least one extra step, then push |z| beyond 2^64 so the
    # identity-chart error of the Boettcher coordinate is ~2^-128 relative.
    deep2 = gmpy2.exp2(gmpy2.mpfr(130, p))
    w = step(w)
    k += 1
    extra = 0
    while ctx.norm(w) < deep2 and extra < 60:
        w = step(w)
        k += 1
        extra += 1

    three_k = gmpy2.mpfr(3**k, p)
    potential = ctx.div(ctx.div(ctx.log(ctx.norm(w)), gmpy2.mpfr(2, p)), three_k)

    # Second pass for the external angle: track a continuous branch of arg
    # along the orbit (theta_{j+1} = 3 theta_j + principal correction).
    two_pi = ctx.mul(gmpy2.mpfr(2, p), ctx.const_pi())
    u = z.raw
    theta = ctx.atan2(u.imag, u.real)
    for _ in range(k):
        u = step(u)
        target = ctx.mul(gmpy2.mpfr(3, p), theta)
        d = ctx.sub(ctx.atan2(u.imag, u.real), target)
        n = gmpy2.floor(ctx.add(ctx.div(d, two_pi), gmpy2.mpfr("0.5", p)))
        theta = ctx.add(target, ctx.sub(d, ctx.mul(n, two_pi)))
    angle = ctx.div(ctx.div(theta, three_k), two_pi)
    angle = ctx.sub(angle, gmpy2.floor(angle))

    return EscapeClassification(EscapeStatus.ESCAPED, potential, angle, escape_index)


# ---------------------------------------------------------------------------
# Marked configurations
# ---------------------------------------------------------------------------


class MarkedConfiguration:
    """Positions of the seven marked points at one gluing level.

    The level is carried exactly as ``log10_radius`` (a Fraction), so that
    cubing/cube-rooting the level is exact along a chain.  The pinned points
    ``c0 = 0``, ``e0 = 1``, ``x = infinity`` are stored exactly.
    """

    __slots__ = ("log10_radius", "positions", "precision")

    def __init__(self, log10_radius: Fraction, positions: Mapping[str, RiemannPoint],
                 precision: int):
        if set(positions) != set(LABELS):
            raise ValueError(f"need positions for exactly {LABELS}")
        if not positions["c0"] == RiemannPoint.finite(BigComplex.zero(precision)):
            raise ValueError("c0 must be pinned at 0")
        if not positions["e0"] == RiemannPoint.finite(BigComplex.one(precision)):
            raise ValueError("e0 must be pinned at 1")
        if not positions["x"].is_infinite:
            raise ValueError("x must be pinned at infinity")
        for label in FREE_LABELS:
            if positions[label].is_infinite:
                raise ValueError(f"{label} must be finite")
        pos = dict(positions)
        object.__setattr__(self, "log10_radius", Fraction(log10_radius))
        object.__setattr__(self, "positions", MappingProxyType(pos))
        object.__setattr__(self, "precision", precision)
        self._check_distinct()

    def __setattr__(self, *_):
        raise AttributeError("MarkedConfiguration is immutable")

    def _check_distinct(self):
        labs = list(LABELS)
        for i in range(len(labs)):
            for j in range(i + 1, len(labs)):
                a, b = self.positions[labs[i]], self.positions[labs[j]]
                if a == b:
                    raise CoincidentPointsError(f"{labs[i]} and {labs[j]} coincide")

    @classmethod
    def from_free_positions(cls, log10_radius: Fraction, free: Mapping[str, BigComplex],
                            precision: int) -> "MarkedConfiguration":
        pos = {
            "c0": RiemannPoint.finite(BigComplex.zero(precision)),
            "e0": RiemannPoint.finite(BigComplex.one(precision)),
            "x": INFINITY,
        }
        for label in FREE_LABELS:
            pos[label] = RiemannPoint.finite(free[label])
        return cls(log10_radius, pos, precision)

    def radius(self):
        """The gluing level R = 10^log10_radius as an mpfr."""
        p = self.precision
        ctx = context_for(p)
        e = ctx.div(gmpy2.mpfr(self.log10_radius.numerator, p),
                    gmpy2.mpfr(self.log10_radius.denominator, p))
        return ctx.exp10(e)

    def position(self, label: str) -> RiemannPoint:
        return self.positions[label]

    def free_values(self) -> dict[str, BigComplex]:
        return {label: self.positions[label].finite_value() for label in FREE_LABELS}

    def min_pairwise_chordal2(self):
        p = self.precision
        best = None
        labs = list(LABELS)
        for i in range(len(labs)):
            for j in range(i + 1, len(labs)):
                d2 = self.positions[labs[i]].chordal_distance2(self.positions[labs[j]], p)
                if best is None or d2 < best:
                    best = d2
        return best

    def to_json(self) -> dict:
        return {
            "log10_radius": f"{self.log10_radius.numerator}/{self.log10_radius.denominator}",
            "radius": real_to_string(self.radius()),
            "precision": self.precision,
            "positions": {label: self.positions[label].to_json() for label in LABELS},
        }

    @classmethod
    def from_json(cls, data: dict) -> "MarkedConfiguration":
        p = data["precision"]
        num, den = data["log10_radius"].split("/")
        positions = {label: RiemannPoint.from_json(data["positions"][label], p)
                     for label in LABELS}
        return cls(Fraction(int(num), int(den)), positions, p)

    def __repr__(self):
        return (f"MarkedConfiguration(log10_R={self.log10_radius}, "
                f"p={self.precision})")


def normalizer_for_level(params: MatingParameters, log10_radius: Fraction) -> Mobius:
    """Mobius map pinning the raw chart: (c0_raw, e0_raw, x_raw) -> (0, 1, inf).

    In the raw chart c0 sits at infinity (the P2 side is charted by
    w -> R^2 / w), e0 at R and x at its plane position, so the normalizer is
    zeta -> (R - x) / (zeta - x).
    """
    p = params.precision
    ctx = context_for(p)
    e = ctx.div(gmpy2.mpfr(Fraction(log10_radius).numerator, p),
                gmpy2.mpfr(Fraction(log10_radius).denominator, p))
    radius = BigComplex(ctx.exp10(e), 0, p)
    return mobius_from_triple(
        INFINITY, RiemannPoint.finite(radius), RiemannPoint.finite(params.x)
    )


def initial_configuration(params: MatingParameters, log10_radius: Fraction | int = 4) -> MarkedConfiguration:
    """Marked configuration at a large starting level R = 10^log10_radius.

    Raw sphere coordinates in the identity-chart approximation: P1-side points
    at their plane positions, P2-side points at R^2 / position (hence
    c0 -> infinity), the equator point at R; then normalized by pinning
    (c0, e0, x) to (0, 1, infinity).  Valid in the large-R regime where the
    Boettcher coordinates are the identity to relative O(1/R^2).
    """
    log10_radius = Fraction(log10_radius)
    if log10_radius < 3:
        raise ValueError("initial level must satisfy R >= 10^3")
    return identity_chart_configuration(params, log10_radius)


def identity_chart_configuration(params: MatingParameters, log10_radius: Fraction) -> MarkedConfiguration:
    """Identity-chart configuration without the large-R floor.

    Down at moderate levels this is only a rough approximation of the
    conformal positions; it is what seeds the first pull-back solve.
    """
    log10_radius = Fraction(log10_radius)
    if log10_radius <= 0:
        raise ValueError("level must satisfy R > 1")
    p = params.precision
    ctx = context_for(p)
    e = ctx.div(gmpy2.mpfr(log10_radius.numerator, p),
                gmpy2.mpfr(log10_radius.denominator, p))
    radius = BigComplex(ctx.exp10(e), 0, p)
    r2 = radius * radius
    mob = normalizer_for_level(params, log10_radius)
    raw = {
        "y": params.y,
        "y1": params.y1,
        "c1": r2 / params.c,
        "c2": r2 / params.c2,
    }
    free = {}
    for label, value in raw.items():
        img = mob(RiemannPoint.finite(value))
        if img.is_infinite:
            raise CoincidentPointsError(f"raw position of {label} collides with x")
        free[label] = img.finite_value()
    return MarkedConfiguration.from_free_positions(log10_radius, free, p)
