"""Configurable-precision complex arithmetic and the solvers built on it.

Everything downstream (critical-orbit algebra, the pull-back Newton system,
escape-time classification, rendering) runs on the types defined here:

* ``BigComplex``   -- a complex value carrying its binary precision.  Mixing
  two different precisions in one operation raises; precision changes are
  explicit via :meth:`BigComplex.at_precision`.
* ``RiemannPoint`` -- a point of the Riemann sphere: a finite ``BigComplex``
  or the point at infinity.
* ``Poly``         -- dense polynomial, coefficients lowest degree first.
* ``Mobius``       -- a fractional-linear map with nonzero determinant.

plus three numerical engines: simultaneous (Aberth-Ehrlich) polynomial root
finding with Newton polish, a damped multivariate Newton solver over square
complex systems, and Gaussian elimination for the small dense solves Newton
needs.

The backend is MPFR/MPC via gmpy2; overflow and invalid operations trap and
surface as :class:`NumericsError` instead of leaking NaN/inf.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Sequence

import gmpy2

__all__ = [
    "NumericsError",
    "PrecisionMismatchError",
    "DivisionCollapseError",
    "PrecisionExhaustionError",
    "CoincidentPointsError",
    "RootFindingError",
    "SingularJacobianError",
    "NewtonDivergenceError",
    "BigComplex",
    "RiemannPoint",
    "INFINITY",
    "Poly",
    "Mobius",
    "poly_eval",
    "poly_roots",
    "mobius_from_triple",
    "newton_solve",
    "solve_linear",
    "context_for",
    "real_from",
    "real_to_string",
    "truncate_decimal",
]


class NumericsError(ArithmeticError):
    """Base class for numeric failures in this package."""


class PrecisionMismatchError(NumericsError):
    """Two operands of different working precision met in one operation."""


class DivisionCollapseError(NumericsError):
    """Denominator magnitude fell below 2^(-p/2) of the numerator scale."""


class PrecisionExhaustionError(NumericsError):
    """An intermediate value left the representable exponent range."""


class CoincidentPointsError(NumericsError):
    """Points required to be pairwise distinct coincide."""


class RootFindingError(NumericsError):
    """Simultaneous root iteration failed to reach the residual target."""


class SingularJacobianError(NumericsError):
    """Pivoting found no usable pivot; the linearized system is singular."""


class NewtonDivergenceError(NumericsError):
    """Damped Newton could not reduce the residual below tolerance."""


# One shared context per precision; traps turn silent inf/NaN into exceptions.
_CONTEXTS: dict[int, "gmpy2.context"] = {}

_GMPY_ERRORS = (
    gmpy2.OverflowResultError,
    gmpy2.UnderflowResultError,
    gmpy2.InvalidOperationError,
    gmpy2.DivisionByZeroError,
    OverflowError,
)


def context_for(precision: int) -> "gmpy2.context":
    """Shared gmpy2 context at ``precision`` bits with overflow/NaN traps."""
    ctx = _CONTEXTS.get(precision)
    if ctx is None:
        if precision < 2:
            raise ValueError(f"precision must be >= 2 bits, got {precision}")
        ctx = gmpy2.context(
            precision=precision,
            trap_overflow=True,
            trap_invalid=True,
            trap_divzero=True,
        )
        _CONTEXTS[precision] = ctx
    return ctx


def _roundtrip_digits(precision: int) -> int:
    # ceil(p*log10 2) + 3 decimal digits round-trip p binary digits.
    return (precision * 30103) // 100000 + 4


def real_from(value, precision: int):
    """Build an mpfr at ``precision`` bits from int/str/Fraction/mpfr."""
    if isinstance(value, float):
        raise TypeError("floats carry implicit 53-bit precision; pass a string")
    return gmpy2.mpfr(value, precision)


def real_to_string(x) -> str:
    """Decimal string that reparses to the exact same binary value."""
    digits, exp, _ = gmpy2.digits(x, 10, _roundtrip_digits(x.precision))
    if digits.lstrip("-") == "0":
        return "0"
    sign = "-" if digits.startswith("-") else ""
    return f"{sign}0.{digits.lstrip('-')}e{exp}"


def truncate_decimal(x, sig_digits: int) -> str:
    """Format ``x`` with ``sig_digits`` significant digits, truncated toward zero.

    Exact: works on the integer ratio of the binary value, so no rounding of
    a formatting intermediate can flip the last kept digit.
    """
    if sig_digits < 1:
        raise ValueError("need at least one significant digit")
    if not gmpy2.is_finite(x):
        raise PrecisionExhaustionError("cannot format a non-finite value")
    num, den = x.as_integer_ratio()
    if num == 0:
        return "0"
    sign = "-" if num < 0 else ""
    num = abs(num)
    # Decimal exponent e with 10^(e-1) <= |x| < 10^e, found exactly.
    e = len(str(num)) - len(str(den)) + 1
    while 10 ** max(e - 1, 0) * den > num * 10 ** max(1 - e, 0):
        e -= 1
    while 10 ** max(e, 0) * den <= num * 10 ** max(-e, 0):
        e += 1
    shift = sig_digits - e
    if shift >= 0:
        mant = num * 10**shift // den
    else:
        mant = num // (den * 10**-shift)
    digits = str(mant).rjust(sig_digits, "0")
    if 0 < e <= sig_digits:
        out = digits[:e] + ("." + digits[e:] if digits[e:] else "")
    elif -4 < e <= 0:
        out = "0." + "0" * (-e) + digits
    else:
        frac = digits[1:].rstrip("0")
        out = digits[0] + ("." + frac if frac else "") + f"e{e - 1:+03d}"
    return sign + out


class BigComplex:
    """Immutable complex number carrying an explicit binary precision.

    Arithmetic between two ``BigComplex`` values requires equal precision;
    exact Python ints and Fractions are accepted and adopted at the operand
    precision.  Each operation is correctly rounded at that precision, so the
    relative error per operation is below 2^(1-p).
    """

    __slots__ = ("_z", "precision")

    def __init__(self, re, im=0, precision: int | None = None):
        if isinstance(re, gmpy2.mpc):
            if precision is None:
                raise ValueError("precision required when wrapping an mpc")
            z = re
        else:
            if precision is None:
                raise ValueError("precision is required")
            if isinstance(re, float) or isinstance(im, float):
                raise TypeError("floats carry implicit precision; pass strings")
            z = gmpy2.mpc(
                gmpy2.mpfr(re, precision), gmpy2.mpfr(im, precision), precision=precision
            )
        if not gmpy2.is_finite(z):
            raise PrecisionExhaustionError("non-finite complex value")
        object.__setattr__(self, "_z", z)
        object.__setattr__(self, "precision", precision)

    def __setattr__(self, *_):
        raise AttributeError("BigComplex is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def wrap(cls, z, precision: int) -> "BigComplex":
        """Wrap a raw mpc produced under the context for ``precision``."""
        return cls(z, precision=precision)

    @classmethod
    def zero(cls, precision: int) -> "BigComplex":
        return cls(0, 0, precision)

    @classmethod
    def one(cls, precision: int) -> "BigComplex":
        return cls(1, 0, precision)

    @classmethod
    def from_json(cls, pair, precision: int) -> "BigComplex":
        re, im = pair
        return cls(re, im, precision)

    # -- views --------------------------------------------------------------

    @property
    def re(self):
        return self._z.real

    @property
    def im(self):
        return self._z.imag

    @property
    def raw(self):
        """Underlying mpc, for tight loops that manage their own context."""
        return self._z

    def to_json(self) -> list[str]:
        return [real_to_string(self._z.real), real_to_string(self._z.imag)]

    def __complex__(self) -> complex:
        return complex(float(self._z.real), float(self._z.imag))

    def __repr__(self) -> str:
        return f"BigComplex({float(self._z.real):.6g}, {float(self._z.imag):.6g}, p={self.precision})"

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, BigComplex):
            if other.precision != self.precision:
                raise PrecisionMismatchError(
                    f"mixed precisions {self.precision} and {other.precision}"
                )
            return other._z
        if isinstance(other, (int, Fraction)):
            return gmpy2.mpc(
                gmpy2.mpfr(other, self.precision), precision=self.precision
            )
        return None

    def _wrap(self, z) -> "BigComplex":
        return BigComplex(z, precision=self.precision)

    def __add__(self, other):
        w = self._coerce(other)
        if w is None:
            return NotImplemented
        try:
            return self._wrap(context_for(self.precision).add(self._z, w))
        except _GMPY_ERRORS as exc:
            raise PrecisionExhaustionError(str(exc)) from exc

    __radd__ = __add__

    def __sub__(self, other):
        w = self._coerce(other)
        if w is None:
            return NotImplemented
        try:
            return self._wrap(context_for(self.precision).sub(self._z, w))
        except _GMPY_ERRORS as exc:
            raise PrecisionExhaustionError(str(exc)) from exc

    def __rsub__(self, other):
        w = self._coerce(other)
        if w is None:
            return NotImplemented
        try:
            return self._wrap(context_for(self.precision).sub(w, self._z))
        except _GMPY_ERRORS as exc:
            raise PrecisionExhaustionError(str(exc)) from exc

    def __mul__(self, other):
        w = self._coerce(other)
        if w is None:
            return NotImplemented
        try:
            return self._wrap(context_for(self.precision).mul(self._z, w))
        except _GMPY_ERRORS as exc:
            raise PrecisionExhaustionError(str(exc)) from exc

    __rmul__ = __mul__

    def __truediv__(self, other):
        w = self._coerce(other)
        if w is None:
            return NotImplemented
        return self._wrap(_checked_div(self._z, w, self.precision))

    def __rtruediv__(self, other):
        w = self._coerce(other)
        if w is None:
            return NotImplemented
        return self._wrap(_checked_div(w, self._z, self.precision))

    def __neg__(self):
        # gmpy2's bare operators round at the *global* context; stay explicit.
        return self._wrap(context_for(self.precision).minus(self._z))

    def __eq__(self, other):
        if isinstance(other, BigComplex):
            return self._z == other._z
        if isinstance(other, (int, Fraction)):
            return self._z == other
        return NotImplemented

    def __hash__(self):
        return hash(self._z)

    def conj(self) -> "BigComplex":
        p = self.precision
        return self._wrap(gmpy2.mpc(self._z.real,
                                    context_for(p).minus(self._z.imag),
                                    precision=p))

    def abs(self):
        """Modulus as an mpfr at this precision."""
        return context_for(self.precision).abs(self._z)

    def abs2(self):
        """Squared modulus as an mpfr at this precision."""
        return context_for(self.precision).norm(self._z)

    def is_zero(self) -> bool:
        return self._z == 0

    def sqrt(self) -> "BigComplex":
        return self._wrap(context_for(self.precision).sqrt(self._z))

    def at_precision(self, precision: int) -> "BigComplex":
        """Explicit precision change (rounds when narrowing)."""
        if precision == self.precision:
            return self
        return BigComplex(
            gmpy2.mpc(self._z, precision=precision), precision=precision
        )


def _checked_div(num, den, precision: int):
    """Division with the collapsing-denominator guard.

    Raises once |den| falls below 2^(-p/2) of the numerator scale, instead of
    producing a huge value that would silently poison a solve.
    """
    ctx = context_for(precision)
    nd = ctx.norm(den)
    if nd == 0:
        raise DivisionCollapseError("division by zero")
    nn = ctx.norm(num)
    if nn != 0 and nd < gmpy2.div_2exp(nn, precision):
        raise DivisionCollapseError(
            f"denominator 2^{precision // 2} times smaller than numerator scale"
        )
    try:
        return ctx.div(num, den)
    except _GMPY_ERRORS as exc:
        raise PrecisionExhaustionError(str(exc)) from exc


class RiemannPoint:
    """A point of the Riemann sphere: Finite(BigComplex) or Infinity."""

    __slots__ = ("value",)

    def __init__(self, value: BigComplex | None):
        object.__setattr__(self, "value", value)

    def __setattr__(self, *_):
        raise AttributeError("RiemannPoint is immutable")

    @classmethod
    def finite(cls, z: BigComplex) -> "RiemannPoint":
        return cls(z)

    @property
    def is_infinite(self) -> bool:
        return self.value is None

    def finite_value(self) -> BigComplex:
        if self.value is None:
            raise ValueError("point at infinity has no finite value")
        return self.value

    def __eq__(self, other):
        if not isinstance(other, RiemannPoint):
            return NotImplemented
        if self.value is None or other.value is None:
            return self.value is None and other.value is None
        return self.value == other.value

    def __hash__(self):
        return hash(self.value) if self.value is not None else hash("inf")

    def __repr__(self):
        return "RiemannPoint(inf)" if self.value is None else f"RiemannPoint({self.value!r})"

    def to_json(self):
        return "inf" if self.value is None else self.value.to_json()

    @classmethod
    def from_json(cls, data, precision: int) -> "RiemannPoint":
        if data == "inf":
            return INFINITY
        return cls(BigComplex.from_json(data, precision))

    def chordal_distance2(self, other: "RiemannPoint", precision: int):
        """Squared chordal metric, well defined at infinity (diameter 2)."""
        ctx = context_for(precision)
        one = gmpy2.mpfr(1, precision)
        if self.value is None and other.value is None:
            return gmpy2.mpfr(0, precision)
        if self.value is None or other.value is None:
            z = (self.value or other.value)._z
            return ctx.div(gmpy2.mpfr(4, precision), ctx.add(one, ctx.norm(z)))
        a, b = self.value._z, other.value._z
        d2 = ctx.norm(ctx.sub(a, b))
        return ctx.div(
            ctx.mul(gmpy2.mpfr(4, precision), d2),
            ctx.mul(ctx.add(one, ctx.norm(a)), ctx.add(one, ctx.norm(b))),
        )


INFINITY = RiemannPoint(None)


class Poly:
    """Dense polynomial over BigComplex, coefficients lowest degree first.

    Exact trailing zeros are trimmed so the leading coefficient is nonzero
    unless the polynomial is identically zero.
    """

    __slots__ = ("coeffs", "precision")

    def __init__(self, coeffs: Sequence[BigComplex], precision: int | None = None):
        coeffs = list(coeffs)
        if not coeffs:
            raise ValueError("need at least one coefficient")
        p = precision if precision is not None else coeffs[0].precision
        for c in coeffs:
            if c.precision != p:
                raise PrecisionMismatchError("polynomial coefficients at mixed precision")
        while len(coeffs) > 1 and coeffs[-1].is_zero():
            coeffs.pop()
        object.__setattr__(self, "coeffs", tuple(coeffs))
        object.__setattr__(self, "precision", p)

    def __setattr__(self, *_):
        raise AttributeError("Poly is immutable")

    @classmethod
    def from_numbers(cls, values, precision: int) -> "Poly":
        return cls([BigComplex(v, 0, precision) if not isinstance(v, (tuple, list))
                    else BigComplex(v[0], v[1], precision) for v in values])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0].is_zero()

    def __call__(self, z: BigComplex) -> BigComplex:
        if z.precision != self.precision:
            raise PrecisionMismatchError("evaluation point at different precision")
        ctx = context_for(self.precision)
        acc = self.coeffs[-1]._z
        zz = z._z
        try:
            for c in reversed(self.coeffs[:-1]):
                acc = ctx.add(ctx.mul(acc, zz), c._z)
        except _GMPY_ERRORS as exc:
            raise PrecisionExhaustionError(str(exc)) from exc
        return BigComplex(acc, precision=self.precision)

    def derivative(self) -> "Poly":
        if self.degree == 0:
            return Poly([BigComplex.zero(self.precision)])
        return Poly([c * k for k, c in enumerate(self.coeffs)][1:])

    def __add__(self, other: "Poly") -> "Poly":
        n = max(len(self.coeffs), len(other.coeffs))
        zero = BigComplex.zero(self.precision)
        a = list(self.coeffs) + [zero] * (n - len(self.coeffs))
        b = list(other.coeffs) + [zero] * (n - len(other.coeffs))
        return Poly([x + y for x, y in zip(a, b)])

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.scale(BigComplex(-1, 0, self.precision))

    def __mul__(self, other: "Poly") -> "Poly":
        zero = BigComplex.zero(self.precision)
        out = [zero] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a.is_zero():
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a * b
        return Poly(out)

    def scale(self, factor: BigComplex) -> "Poly":
        return Poly([c * factor for c in self.coeffs])

    def monic(self) -> "Poly":
        lead = self.coeffs[-1]
        if lead.is_zero():
            raise ValueError("zero polynomial has no monic form")
        return Poly([c / lead for c in self.coeffs])

    def max_coeff_abs(self):
        ctx = context_for(self.precision)
        m = gmpy2.mpfr(0, self.precision)
        for c in self.coeffs:
            a = ctx.abs(c._z)
            if a > m:
                m = a
        return m

    @classmethod
    def from_roots(cls, roots: Sequence[BigComplex], precision: int) -> "Poly":
        acc = cls([BigComplex.one(precision)])
        for r in roots:
            acc = acc * cls([-r, BigComplex.one(precision)])
        return acc

    def at_precision(self, precision: int) -> "Poly":
        if precision == self.precision:
            return self
        return Poly([c.at_precision(precision) for c in self.coeffs])

    def to_json(self):
        return [c.to_json() for c in self.coeffs]

    @classmethod
    def from_json(cls, data, precision: int) -> "Poly":
        return cls([BigComplex.from_json(c, precision) for c in data])


def poly_eval(p: Poly, z: RiemannPoint) -> RiemannPoint:
    """Evaluate on the sphere: Horner at finite points, degree rule at infinity."""
    if z.is_infinite:
        if p.degree >= 1:
            return INFINITY
        return RiemannPoint.finite(p.coeffs[0])
    return RiemannPoint.finite(p(z.finite_value()))


def poly_roots(p: Poly, precision: int, max_iterations: int = 400) -> list[BigComplex]:
    """All roots of ``p`` by Aberth-Ehrlich simultaneous iteration.

    Starts on a circle of radius 1 + max |c_i / c_n| with deterministically
    perturbed angles, then polishes each root with plain Newton.  A root set
    is accepted only if every residual satisfies
    ``|p(r)| <= 2^(10 - precision) * max |coeff|``; otherwise the caller
    should retry at higher precision.
    """
    if p.degree < 1:
        raise ValueError("need degree >= 1")
    work = p.at_precision(precision).monic()
    n = work.degree
    ctx = context_for(precision)
    dwork = work.derivative()

    ratio_max = gmpy2.mpfr(0, precision)
    for c in work.coeffs[:-1]:
        a = ctx.abs(c._z)
        if a > ratio_max:
            ratio_max = a
    radius = ctx.add(gmpy2.mpfr(1, precision), ratio_max)
    two_pi = ctx.mul(gmpy2.mpfr(2, precision), ctx.const_pi())
    pts: list[BigComplex] = []
    for k in range(n):
        # Offset angles break the conjugation symmetry of real-coefficient input.
        frac = Fraction(2000 * k + 733, 2000 * n) + Fraction(13 * k, 9973 * n * n + 1)
        theta = ctx.mul(two_pi, gmpy2.mpfr(frac, precision))
        pts.append(BigComplex(
            gmpy2.mpc(ctx.mul(radius, ctx.cos(theta)), ctx.mul(radius, ctx.sin(theta)),
                      precision=precision),
            precision=precision,
        ))

    stop2 = gmpy2.exp2(gmpy2.mpfr(-2 * (precision - 12), precision))
    one = gmpy2.mpc(gmpy2.mpfr(1, precision), precision=precision)
    for _ in range(max_iterations):
        biggest = gmpy2.mpfr(0, precision)
        new_pts = []
        for i, zi in enumerate(pts):
            pz = work(zi)._z
            dz = dwork(zi)._z
            if dz == 0:
                # Landed on a critical point: nudge deterministically.
                zi = zi + BigComplex(Fraction(1, 1 << (precision // 2)), 0, precision)
                pz = work(zi)._z
                dz = dwork(zi)._z
            newton = ctx.div(pz, dz)
            s = gmpy2.mpc(gmpy2.mpfr(0, precision), precision=precision)
            for j, zj in enumerate(pts):
                if j == i:
                    continue
                diff = ctx.sub(zi._z, zj._z)
                if diff == 0:
                    diff = gmpy2.mpc(gmpy2.exp2(gmpy2.mpfr(-precision // 2, precision)),
                                     precision=precision)
                s = ctx.add(s, ctx.div(one, diff))
            denom = ctx.sub(one, ctx.mul(newton, s))
            if denom == 0:
                step = newton
            else:
                step = ctx.div(newton, denom)
            zn = ctx.sub(zi._z, step)
            rel = ctx.div(ctx.norm(step), ctx.add(gmpy2.mpfr(1, precision), ctx.norm(zn)))
            if rel > biggest:
                biggest = rel
            new_pts.append(BigComplex(zn, precision=precision))
        pts = new_pts
        if biggest < stop2:
            break
    else:
        raise RootFindingError(f"Aberth iteration cap {max_iterations} reached")

    # Newton polish sharpens each root to the precision floor.
    polished = []
    for zi in pts:
        z = zi
        for _ in range(4):
            dz = dwork(z)._z
            if dz == 0:
                break
            z = BigComplex(ctx.sub(z._z, ctx.div(work(z)._z, dz)), precision=precision)
        polished.append(z)

    orig = p.at_precision(precision)
    limit = ctx.mul(gmpy2.exp2(gmpy2.mpfr(10 - precision, precision)),
                    orig.max_coeff_abs())
    for z in polished:
        if ctx.abs(orig(z)._z) > limit:
            raise RootFindingError("residual above 2^(10-p) * max|coeff|; raise precision")
    return polished


def mobius_from_triple(p0: RiemannPoint, p1: RiemannPoint, pinf: RiemannPoint) -> "Mobius":
    """The unique Mobius map sending (p0, p1, pinf) to (0, 1, infinity)."""
    pts = (p0, p1, pinf)
    for i in range(3):
        for j in range(i + 1, 3):
            if pts[i] == pts[j]:
                raise CoincidentPointsError("triple must be pairwise distinct")
    precision = next(q.value.precision for q in pts if q.value is not None)
    one = BigComplex.one(precision)
    zero = BigComplex.zero(precision)
    if p0.is_infinite:
        a, b = zero, p1.finite_value() - pinf.finite_value()
        c, d = one, -pinf.finite_value()
    elif p1.is_infinite:
        a, b = one, -p0.finite_value()
        c, d = one, -pinf.finite_value()
    elif pinf.is_infinite:
        a, b = one, -p0.finite_value()
        c, d = zero, p1.finite_value() - p0.finite_value()
    else:
        z0, z1, zi = p0.finite_value(), p1.finite_value(), pinf.finite_value()
        a, b = z1 - zi, -z0 * (z1 - zi)
        c, d = z1 - z0, -zi * (z1 - z0)
    return Mobius(a, b, c, d)


class Mobius:
    """z -> (a z + b) / (c z + d) with a determinant away from rounding noise."""

    __slots__ = ("a", "b", "c", "d", "precision")

    def __init__(self, a: BigComplex, b: BigComplex, c: BigComplex, d: BigComplex):
        p = a.precision
        if any(v.precision != p for v in (b, c, d)):
            raise PrecisionMismatchError("Mobius coefficients at mixed precision")
        det = a * d - b * c
        ctx = context_for(p)
        scale = max(ctx.abs((a * d).raw), ctx.abs((b * c).raw), gmpy2.mpfr(1, p))
        if ctx.abs(det.raw) <= ctx.mul(scale, gmpy2.exp2(gmpy2.mpfr(16 - p, p))):
            raise CoincidentPointsError("degenerate Mobius map (determinant ~ 0)")
        for name, v in zip("abcd", (a, b, c, d)):
            object.__setattr__(self, name, v)
        object.__setattr__(self, "precision", p)

    def __setattr__(self, *_):
        raise AttributeError("Mobius is immutable")

    def __call__(self, z: RiemannPoint) -> RiemannPoint:
        if z.is_infinite:
            if self.c.is_zero():
                return INFINITY
            return RiemannPoint.finite(self.a / self.c)
        w = z.finite_value()
        num = self.a * w + self.b
        den = self.c * w + self.d
        if den.is_zero():
            return INFINITY
        try:
            return RiemannPoint.finite(num / den)
        except DivisionCollapseError:
            return INFINITY

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a)

    def compose(self, other: "Mobius") -> "Mobius":
        """self after other: (self . other)(z) = self(other(z))."""
        return Mobius(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def at_precision(self, precision: int) -> "Mobius":
        return Mobius(*(v.at_precision(precision) for v in (self.a, self.b, self.c, self.d)))


def _inf_norm(vec: Sequence[BigComplex], precision: int):
    ctx = context_for(precision)
    m = gmpy2.mpfr(0, precision)
    for v in vec:
        a = ctx.abs(v._z)
        if a > m:
            m = a
    return m


def solve_linear(matrix: list[list[BigComplex]], rhs: list[BigComplex]) -> list[BigComplex]:
    """Gaussian elimination with partial pivoting for small dense systems."""
    n = len(rhs)
    precision = rhs[0].precision
    ctx = context_for(precision)
    a = [[matrix[i][j]._z for j in range(n)] for i in range(n)]
    b = [rhs[i]._z for i in range(n)]

    scale = gmpy2.mpfr(0, precision)
    for row in a:
        for v in row:
            nv = ctx.norm(v)
            if nv > scale:
                scale = nv
    if scale == 0:
        raise SingularJacobianError("zero matrix")
    floor = ctx.mul(scale, gmpy2.exp2(gmpy2.mpfr(-2 * (precision - 24), precision)))

    for col in range(n):
        piv, piv_norm = col, ctx.norm(a[col][col])
        for r in range(col + 1, n):
            nr = ctx.norm(a[r][col])
            if nr > piv_norm:
                piv, piv_norm = r, nr
        if piv_norm <= floor:
            raise SingularJacobianError(f"no usable pivot in column {col}")
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            b[col], b[piv] = b[piv], b[col]
        inv = ctx.div(gmpy2.mpc(1), a[col][col])
        for r in range(col + 1, n):
            if a[r][col] == 0:
                continue
            f = ctx.mul(a[r][col], inv)
            for cidx in range(col, n):
                a[r][cidx] = ctx.sub(a[r][cidx], ctx.mul(f, a[col][cidx]))
            b[r] = ctx.sub(b[r], ctx.mul(f, b[col]))

    out = [gmpy2.mpc(0)] * n
    for row in range(n - 1, -1, -1):
        acc = b[row]
        for cidx in range(row + 1, n):
            acc = ctx.sub(acc, ctx.mul(a[row][cidx], out[cidx]))
        out[row] = ctx.div(acc, a[row][row])
    return [BigComplex(v, precision=precision) for v in out]


def newton_solve(
    residual: Callable[[list[BigComplex]], list[BigComplex]],
    jacobian: Callable[[list[BigComplex]], list[list[BigComplex]]],
    seed: Sequence[BigComplex],
    tol,
    max_iter: int = 80,
    max_halvings: int = 50,
) -> list[BigComplex]:
    """Damped Newton for a square complex system.

    Takes the full step when it reduces the residual inf-norm, otherwise
    halves (so a linear system converges in one undamped step).  Residual
    evaluation failures during the line search count as rejected trials.
    """
    x = list(seed)
    precision = x[0].precision
    tol = gmpy2.mpfr(tol, precision)
    r = residual(x)
    rnorm = _inf_norm(r, precision)
    for _ in range(max_iter):
        if rnorm <= tol:
            return x
        jac = jacobian(x)
        step = solve_linear(jac, [-ri for ri in r])
        lam = Fraction(1)
        accepted = False
        for _h in range(max_halvings):
            try:
                trial = [xi + BigComplex(lam, 0, precision) * si for xi, si in zip(x, step)]
                rt = residual(trial)
                rtnorm = _inf_norm(rt, precision)
            except NumericsError:
                lam /= 2
                continue
            if rtnorm < rnorm or rtnorm <= tol:
                x, r, rnorm = trial, rt, rtnorm
                accepted = True
                break
            lam /= 2
        if not accepted:
            raise NewtonDivergenceError(
                f"line search stalled at residual {float(rnorm):.3e}"
            )
    if rnorm <= tol:
        return x
    raise NewtonDivergenceError(
        f"iteration cap {max_iter} reached at residual {float(rnorm):.3e}"
    )
