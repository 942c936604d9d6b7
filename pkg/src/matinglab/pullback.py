"""One pull-back step on marked configurations, iterated down a level schedule.

A configuration at level ``R^3`` is pulled back to level ``R`` by solving for
a degree-3 rational map ``F = p/q`` (normalized ``q(0) = 1``) together with
the free marked positions one level down.  The critical structure is imposed
through the Wronskian ``W = p'q - pq' = w0 + w1 z + ... + w4 z^4``:

* ``w0 = w1 = 0``  -- double critical point at the pinned ``c0 = 0``,
* ``w4 = 0``       -- a simple critical point at the pinned ``x = infinity``,
* the remaining simple critical point is ``y' = -w2/w3``, eliminated
  analytically instead of being solved for.

That leaves a square system of 10 complex equations in 10 unknowns (seven map
coefficients plus the free positions ``y1'``, ``c1'``, ``c2'``): three
Wronskian constraints plus seven transport constraints sending each marked
point to the image of its label (``x->y``, ``y->y1``, ``y1->x``, ``c0->c1``,
``c1->c2``, ``c2->c0``, ``e0->e0``).  The solver is damped Newton with an
analytic Jacobian, seeded from the previous level's solution (first level:
from an explicit large-R interpolation of the gluing), with a linear
continuation of the target positions as a fallback.

Levels follow ``R_n = 10^(4/3^n)``, carried exactly as Fractions so that
``R_n^3 = R_(n-1)`` holds in the exponent representation.  The measurement
series tracks ``v_n = c1 - y`` and ``u_n = c2 - y1``, whose ratios converge as
the configuration degenerates.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import gmpy2

from .dynamics import (
    FREE_LABELS,
    LABELS,
    MarkedConfiguration,
    MatingParameters,
    identity_chart_configuration,
    normalizer_for_level,
)
from .numerics import (
    INFINITY,
    BigComplex,
    NewtonDivergenceError,
    NumericsError,
    Poly,
    RiemannPoint,
    context_for,
    newton_solve,
    poly_roots,
    real_to_string,
    truncate_decimal,
)

__all__ = [
    "MatingSchema",
    "DEFAULT_SCHEMA",
    "RationalMap",
    "PullbackChain",
    "MeasurementRow",
    "PullbackError",
    "IsotopyViolationError",
    "DenominatorCollapseError",
    "PrecisionFloorError",
    "seed_map",
    "pullback_step",
    "run_chain",
    "measure",
    "measurements_to_csv",
    "resubstitution_residual",
]


class PullbackError(NumericsError):
    """A pull-back step failed beyond recovery (with its step annotated)."""


class IsotopyViolationError(PullbackError):
    """Two marked points got close enough to put the branch choice in doubt."""


class DenominatorCollapseError(PullbackError):
    """The solved map's denominator vanishes at a marked point it should not."""


class PrecisionFloorError(NumericsError):
    """A measured difference fell below the resolvable scale."""


@dataclass(frozen=True)
class MatingSchema:
    """Combinatorics of the marked set: label images and local degrees."""

    image_of: Mapping[str, str]
    local_degree_at: Mapping[str, int]
    degree: int = 3

    def validate(self) -> None:
        excess = sum(d - 1 for d in self.local_degree_at.values())
        if excess != 2 * self.degree - 2:
            raise ValueError("local degrees do not sum to 2d-2")
        for cycle in (("x", "y", "y1"), ("c0", "c1", "c2")):
            if sorted(self.image_of[l] for l in cycle) != sorted(cycle):
                raise ValueError(f"image_of is not a bijection on {cycle}")
        if self.image_of["e0"] != "e0":
            raise ValueError("the equator point must be fixed")


DEFAULT_SCHEMA = MatingSchema(
    image_of={"x": "y", "y": "y1", "y1": "x",
              "c0": "c1", "c1": "c2", "c2": "c0", "e0": "e0"},
    local_degree_at={"x": 2, "y": 2, "c0": 3, "y1": 1, "c1": 1, "c2": 1, "e0": 1},
)
DEFAULT_SCHEMA.validate()


class RationalMap:
    """Quotient of two polynomials, normalized so q(0) = 1 when possible."""

    __slots__ = ("p", "q", "precision")

    def __init__(self, p: Poly, q: Poly):
        if p.precision != q.precision:
            raise NumericsError("numerator and denominator at mixed precision")
        if q.is_zero():
            raise ValueError("zero denominator")
        pivot = q.coeffs[0]
        normalize_at_zero = not pivot.is_zero()
        if not normalize_at_zero:
            pivot = next(c for c in q.coeffs if not c.is_zero())
        inv = 1 / pivot
        qc = [c * inv for c in q.coeffs]
        if normalize_at_zero:
            qc[0] = BigComplex.one(p.precision)  # exact, not 1 + rounding noise
        object.__setattr__(self, "p", p.scale(inv))
        object.__setattr__(self, "q", Poly(qc, p.precision))
        object.__setattr__(self, "precision", p.precision)

    def __setattr__(self, *_):
        raise AttributeError("RationalMap is immutable")

    @property
    def degree(self) -> int:
        return max(self.p.degree, self.q.degree)

    def __call__(self, z: RiemannPoint) -> RiemannPoint:
        """Evaluate on the sphere; values indistinguishable from a pole map to infinity."""
        if z.is_infinite:
            d = self.degree
            lead_p = self.p.coeffs[d] if self.p.degree == d else BigComplex.zero(self.precision)
            lead_q = self.q.coeffs[d] if self.q.degree == d else BigComplex.zero(self.precision)
            if lead_q.is_zero():
                return INFINITY
            return RiemannPoint.finite(lead_p / lead_q)
        w = z.finite_value()
        num = self.p(w)
        den = self.q(w)
        if den.is_zero():
            return INFINITY
        try:
            return RiemannPoint.finite(num / den)
        except NumericsError:
            return INFINITY

    def wronskian(self) -> Poly:
        return self.p.derivative() * self.q - self.p * self.q.derivative()

    def at_precision(self, precision: int) -> "RationalMap":
        if precision == self.precision:
            return self
        return RationalMap(self.p.at_precision(precision), self.q.at_precision(precision))

    def to_json(self):
        return {"p": self.p.to_json(), "q": self.q.to_json()}

    @classmethod
    def from_json(cls, data, precision: int) -> "RationalMap":
        return cls(Poly.from_json(data["p"], precision), Poly.from_json(data["q"], precision))

    def __repr__(self):
        return f"RationalMap(deg p={self.p.degree}, deg q={self.q.degree}, p={self.precision})"


# ---------------------------------------------------------------------------
# The square system for one step
# ---------------------------------------------------------------------------
# Unknown vector X = [p0, p1, p2, p3, q1, q2, q3, y1', c1', c2'].

_NP = 4   # p-coefficient slots
_IY1, _IC1, _IC2 = 7, 8, 9


def _poly_at(coeffs: Sequence[BigComplex], z: BigComplex, zero: BigComplex) -> BigComplex:
    acc = zero
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc


class _StepSystem:
    """Residual and analytic Jacobian of the 10x10 pull-back system."""

    def __init__(self, targets: dict[str, BigComplex], precision: int):
        self.yt = targets["y"]
        self.y1t = targets["y1"]
        self.c1t = targets["c1"]
        self.c2t = targets["c2"]
        self.precision = precision
        self.zero = BigComplex.zero(precision)
        self.one = BigComplex.one(precision)

    # -- pieces --------------------------------------------------------------

    def _wronskian_tail(self, X):
        p0, p1, p2, p3, q1, q2, q3 = X[:7]
        w2 = (p3 - p0 * q3) * 3 + p2 * q1 - p1 * q2
        w3 = (p3 * q1 - p1 * q3) * 2
        return w2, w3

    def critical_point(self, X) -> BigComplex:
        """The non-pinned simple critical point y' = -w2/w3."""
        w2, w3 = self._wronskian_tail(X)
        return -(w2 / w3)

    def residual(self, X):
        p0, p1, p2, p3, q1, q2, q3, Y, C, D = X
        zero, one = self.zero, self.one
        pc = X[:4]
        qc = [one, q1, q2, q3]
        yn = self.critical_point(X)
        P_yn = _poly_at(pc, yn, zero)
        Q_yn = _poly_at(qc, yn, zero)
        return [
            p1 - p0 * q1,
            (p2 - p0 * q2) * 2,
            p3 * q2 - p2 * q3,
            p0 - self.c1t,
            p3 - self.yt * q3,
            (p0 + p1 + p2 + p3) - (q1 + q2 + q3) - 1,
            P_yn - self.y1t * Q_yn,
            _poly_at(qc, Y, zero),
            _poly_at(pc, C, zero) - self.c2t * _poly_at(qc, C, zero),
            _poly_at(pc, D, zero),
        ]

    def jacobian(self, X):
        p0, p1, p2, p3, q1, q2, q3, Y, C, D = X
        zero, one = self.zero, self.one
        pr = self.precision
        pc = X[:4]
        qc = [one, q1, q2, q3]

        w2, w3 = self._wronskian_tail(X)
        yn = -(w2 / w3)
        w3sq = w3 * w3
        # dw2, dw3 by unknown index (0..6); others zero.
        dw2 = [-(q3 * 3), -q2, q1, BigComplex(3, 0, pr), p2, -p1, -(p0 * 3)]
        dw3 = [zero, -(q3 * 2), zero, q1 * 2, p3 * 2, zero, -(p1 * 2)]
        dyn = [(w2 * dw3[i] - w3 * dw2[i]) / w3sq for i in range(7)]

        yn2 = yn * yn
        yn_pows = [one, yn, yn2, yn2 * yn]
        Ppr_yn = p1 + p2 * yn * 2 + p3 * yn2 * 3
        Qpr_yn = q1 + q2 * yn * 2 + q3 * yn2 * 3
        A = Ppr_yn - self.y1t * Qpr_yn

        Y2 = Y * Y
        C2 = C * C
        D2 = D * D
        C_pows = [one, C, C2, C2 * C]
        D_pows = [one, D, D2, D2 * D]

        rows = [[zero] * 10 for _ in range(10)]
        # w0 = p1 - p0 q1
        rows[0][0], rows[0][1], rows[0][4] = -q1, one, -p0
        # w1 = 2 (p2 - p0 q2)
        rows[1][0], rows[1][2], rows[1][5] = -(q2 * 2), BigComplex(2, 0, pr), -(p0 * 2)
        # w4 = p3 q2 - p2 q3
        rows[2][2], rows[2][3], rows[2][5], rows[2][6] = -q3, q2, p3, -p2
        # p0 = c1t
        rows[3][0] = one
        # p3 = yt q3
        rows[4][3], rows[4][6] = one, -self.yt
        # P(1) - Q(1) = 0
        for i in range(4):
            rows[5][i] = one
        for j in range(4, 7):
            rows[5][j] = -one
        # P(yn) - y1t Q(yn) = 0, with yn = yn(p, q)
        for i in range(4):
            rows[6][i] = yn_pows[i] + A * dyn[i]
        for j in range(1, 4):
            rows[6][3 + j] = -(self.y1t * yn_pows[j]) + A * dyn[3 + j]
        # Q(Y) = 0
        for j in range(1, 4):
            rows[7][3 + j] = [one, Y, Y2, Y2 * Y][j]
        rows[7][_IY1] = q1 + q2 * Y * 2 + q3 * Y2 * 3
        # P(C) - c2t Q(C) = 0
        for i in range(4):
            rows[8][i] = C_pows[i]
        for j in range(1, 4):
            rows[8][3 + j] = -(self.c2t * C_pows[j])
        rows[8][_IC1] = (p1 + p2 * C * 2 + p3 * C2 * 3) - self.c2t * (q1 + q2 * C * 2 + q3 * C2 * 3)
        # P(D) = 0
        for i in range(4):
            rows[9][i] = D_pows[i]
        rows[9][_IC2] = p1 + p2 * D * 2 + p3 * D2 * 3
        return rows


def _coeff_vector(map_: RationalMap, precision: int) -> list[BigComplex]:
    """[p0..p3, q1..q3] padded to degree 3, at the working precision."""
    m = map_.at_precision(precision)
    zero = BigComplex.zero(precision)
    pc = list(m.p.coeffs) + [zero] * (4 - len(m.p.coeffs))
    qc = list(m.q.coeffs) + [zero] * (4 - len(m.q.coeffs))
    if not qc[0] == 1:
        raise PullbackError("seed map must be normalized with q(0) = 1")
    return pc[:4] + qc[1:4]


def _map_from_vector(X, precision: int) -> RationalMap:
    one = BigComplex.one(precision)
    return RationalMap(Poly(list(X[:4]), precision), Poly([one] + list(X[4:7]), precision))


def _project_to_critical_manifold(vec):
    """Force the target-independent equations on a seed coefficient vector.

    Sets q2 = p2 = 0 and p1 = p0 q1 (exact Wronskian structure), then rescales
    the numerator so F(1) = 1.  Nearby seeds move O(seed error).
    """
    p0, _p1, _p2, p3, q1, _q2, q3 = vec
    P1v = p0 * (q1 + 1) + p3
    Q1v = q1 + q3 + 1
    lam = Q1v / P1v
    zero = BigComplex.zero(p0.precision)
    return [p0 * lam, p0 * lam * q1, zero, p3 * lam, q1, zero, q3]


def _nearest(candidates, guess: BigComplex) -> BigComplex:
    return min(candidates, key=lambda r: (r - guess).abs())


@dataclass(frozen=True)
class StepResult:
    map: RationalMap
    config: MarkedConfiguration
    residual: object


def pullback_step(
    target: MarkedConfiguration,
    seed: tuple[RationalMap, Mapping[str, BigComplex]],
    tolerance=None,
    schema: MatingSchema = DEFAULT_SCHEMA,
    max_newton_iter: int = 60,
    max_continuation_substeps: int = 16,
) -> StepResult:
    """Solve one pull-back: target at level R^3, result at level R.

    Tries damped Newton straight from the seed; if that diverges, restarts
    from an exactly self-consistent projection of the seed and follows a
    straight-line homotopy of the four free target positions.
    """
    schema.validate()
    precision = target.precision
    if tolerance is None:
        tolerance = gmpy2.exp2(gmpy2.mpfr(30 - precision, precision))
    true_targets = {label: target.position(label).finite_value()
                    for label in FREE_LABELS}

    seed_map_, seed_positions = seed
    coeffs = _coeff_vector(seed_map_, precision)
    X0 = coeffs + [seed_positions[l].at_precision(precision) for l in ("y1", "c1", "c2")]

    try:
        system = _StepSystem(true_targets, precision)
        X = newton_solve(system.residual, system.jacobian, X0, tolerance,
                         max_iter=max_newton_iter)
    except (NewtonDivergenceError, NumericsError):
        X = _continuation_solve(X0, true_targets, precision, tolerance,
                                max_newton_iter, max_continuation_substeps)

    system = _StepSystem(true_targets, precision)
    res = system.residual(X)
    ctx = context_for(precision)
    residual = max(ctx.abs(r.raw) for r in res)
    if not residual <= tolerance:
        raise PullbackError(f"accepted residual {float(residual):.3e} above tolerance")

    new_map = _map_from_vector(X, precision)
    free = {
        "y": system.critical_point(X),
        "y1": X[_IY1],
        "c1": X[_IC1],
        "c2": X[_IC2],
    }
    config = MarkedConfiguration.from_free_positions(
        target.log10_radius / 3, free, precision
    )
    _check_separation(config)
    _check_denominator(new_map, config)
    return StepResult(new_map, config, residual)


def _continuation_solve(X0, true_targets, precision, tolerance, max_newton_iter,
                        max_substeps):
    """Homotopy fallback: from the seed's own image configuration to the target."""
    coeffs = _project_to_critical_manifold(X0[:7])
    p0, p1, p2, p3, q1, q2, q3 = coeffs
    one = BigComplex.one(precision)
    qpoly = Poly([one, q1, q2, q3], precision)
    ppoly = Poly([p0, p1, p2, p3], precision)
    y1n = _nearest(poly_roots(qpoly, precision), X0[_IY1])
    c2n = _nearest(poly_roots(ppoly, precision), X0[_IC2])
    c1n = X0[_IC1]
    X = coeffs + [y1n, c1n, c2n]

    fmap = _map_from_vector(X, precision)
    sys0 = _StepSystem(true_targets, precision)
    dummy = {
        "y": fmap(INFINITY).finite_value(),
        "c1": p0,
        "y1": fmap(RiemannPoint.finite(sys0.critical_point(X))).finite_value(),
        "c2": fmap(RiemannPoint.finite(c1n)).finite_value(),
    }

    for substeps in (4, max_substeps):
        Xtry = list(X)
        try:
            for k in range(1, substeps + 1):
                t = Fraction(k, substeps)
                stage = {lab: dummy[lab] + (true_targets[lab] - dummy[lab]) * t
                         for lab in FREE_LABELS}
                system = _StepSystem(stage, precision)
                Xtry = newton_solve(system.residual, system.jacobian, Xtry,
                                    tolerance, max_iter=max_newton_iter)
            return Xtry
        except (NewtonDivergenceError, NumericsError):
            continue
    raise PullbackError("continuation failed even with the finest homotopy")


def _check_separation(config: MarkedConfiguration) -> None:
    p = config.precision
    floor = gmpy2.exp2(gmpy2.mpfr(-(p // 2), p))  # chordal^2 floor = (2^-p/4)^2
    d2 = config.min_pairwise_chordal2()
    if d2 <= floor:
        raise IsotopyViolationError(
            f"marked points within 2^-{p // 4} chordally; branch tracking unsafe"
        )


def _check_denominator(map_: RationalMap, config: MarkedConfiguration) -> None:
    p = config.precision
    ctx = context_for(p)
    scale = map_.q.max_coeff_abs()
    floor = ctx.mul(scale, gmpy2.exp2(gmpy2.mpfr(-(p // 2), p)))
    for label in ("e0", "y", "c1", "c2"):
        pos = config.position(label).finite_value()
        if ctx.abs(map_.q(pos).raw) <= floor:
            raise DenominatorCollapseError(f"denominator vanishes at {label}")


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


class PullbackChain:
    """The solved sequence: configs[n] at level R_n, maps[n-1] : R_n -> R_(n-1)."""

    __slots__ = ("params", "configs", "maps", "residuals", "precision")

    def __init__(self, params: MatingParameters, configs, maps, residuals):
        if len(maps) != len(configs) - 1 or len(residuals) != len(maps):
            raise ValueError("chain lengths are inconsistent")
        for n in range(1, len(configs)):
            if configs[n].log10_radius * 3 != configs[n - 1].log10_radius:
                raise ValueError("levels do not satisfy R_n^3 = R_(n-1)")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "configs", tuple(configs))
        object.__setattr__(self, "maps", tuple(maps))
        object.__setattr__(self, "residuals", tuple(residuals))
        object.__setattr__(self, "precision", params.precision)

    def __setattr__(self, *_):
        raise AttributeError("PullbackChain is immutable")

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def steps(self) -> int:
        return len(self.maps)

    def map_to_previous(self, n: int) -> RationalMap:
        """The solved map sending level R_n to level R_(n-1), for n >= 1."""
        return self.maps[n - 1]

    def schedule(self):
        return [c.log10_radius for c in self.configs]

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "params": self.params.to_json(),
            "configs": [c.to_json() for c in self.configs],
            "maps": [m.to_json() for m in self.maps],
            "residuals": [real_to_string(r) for r in self.residuals],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PullbackChain":
        params = MatingParameters.from_json(data["params"])
        p = data["precision"]
        configs = [MarkedConfiguration.from_json(c) for c in data["configs"]]
        maps = [RationalMap.from_json(m, p) for m in data["maps"]]
        residuals = [gmpy2.mpfr(r, p) for r in data["residuals"]]
        return cls(params, configs, maps, residuals)


def seed_map(params: MatingParameters, log10_radius: Fraction) -> tuple[RationalMap, dict[str, BigComplex]]:
    """Explicit large-R interpolation of the level-R map, in pinned coordinates.

    In raw charts the map is F~(z) = (z^3 + a z + b) / (1 + c z^3 / R^6):
    the P1 action near its filled Julia set, matching the P2 action seen
    through the chart w -> R^2 / w near the other.  Conjugating by the two
    normalizers gives a startable approximation of the solved map, together
    with approximate positions from the identity-chart configuration.
    """
    log10_radius = Fraction(log10_radius)
    if log10_radius < Fraction(1):
        raise ValueError("seed map needs R >= 10")
    p = params.precision
    ctx = context_for(p)
    e = ctx.div(gmpy2.mpfr(log10_radius.numerator, p), gmpy2.mpfr(log10_radius.denominator, p))
    R = BigComplex(ctx.exp10(e), 0, p)
    e3 = ctx.div(gmpy2.mpfr((3 * log10_radius).numerator, p),
                 gmpy2.mpfr((3 * log10_radius).denominator, p))
    R3 = BigComplex(ctx.exp10(e3), 0, p)
    r6 = (R * R) * (R * R) * (R * R)

    x, a, b, c = params.x, params.a, params.b, params.c
    s = R - x
    s3 = R3 - x
    zero = BigComplex.zero(p)
    lin = Poly([s, x])                       # x z + s
    cube = lin * lin * lin
    n_poly = cube + Poly([zero, zero, a * s, a * x]) + Poly([zero, zero, zero, b])
    d_poly = Poly([zero, zero, zero, BigComplex.one(p)]) + cube.scale(c / r6)
    p_seed = d_poly.scale(s3)
    q_seed = n_poly - d_poly.scale(x)
    positions = identity_chart_configuration(params, log10_radius).free_values()
    return RationalMap(p_seed, q_seed), positions


def run_chain(
    params: MatingParameters,
    n_steps: int,
    log10_r0: Fraction | int = 4,
    tolerance=None,
    initial: MarkedConfiguration | None = None,
    schema: MatingSchema = DEFAULT_SCHEMA,
) -> PullbackChain:
    """Pull the initial configuration back ``n_steps`` levels.

    Each step is seeded from the previous solution; the first from the
    explicit large-R seed.  Failures are annotated with their step index.
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    from .dynamics import initial_configuration

    log10_r0 = Fraction(log10_r0)
    if initial is None:
        initial = initial_configuration(params, log10_r0)
    elif initial.log10_radius != log10_r0:
        raise ValueError("initial configuration level disagrees with log10_r0")
    configs = [initial]
    maps: list[RationalMap] = []
    residuals = []
    for n in range(1, n_steps + 1):
        level = log10_r0 / 3**n
        if maps:
            seed = (maps[-1], configs[-1].free_values())
        else:
            seed = seed_map(params, level)
        try:
            result = pullback_step(configs[-1], seed, tolerance=tolerance, schema=schema)
        except NumericsError as exc:
            raise PullbackError(f"step {n} (level 10^{level}) failed: {exc}") from exc
        configs.append(result.config)
        maps.append(result.map)
        residuals.append(result.residual)
    return PullbackChain(params, configs, maps, residuals)


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementRow:
    """Differences and ratios at one level: v = c1 - y, u = c2 - y1."""

    n: int
    log10_radius: Fraction
    radius: object
    v: BigComplex
    u: BigComplex
    v_ratio: BigComplex       # v_n / v_(n-1)
    uv: BigComplex            # u_n / v_n
    uv_prev: BigComplex       # u_n / v_(n-1)


def _difference(config: MarkedConfiguration, upper: str, lower: str) -> BigComplex:
    return config.position(upper).finite_value() - config.position(lower).finite_value()


def measure(chain: PullbackChain) -> list[MeasurementRow]:
    """Per-level measurement rows for n >= 1 (ratios need the previous level)."""
    if len(chain) < 2:
        raise ValueError("need at least two configurations")
    p = chain.precision
    floor = gmpy2.exp2(gmpy2.mpfr(-(p - 30), p))
    rows = []
    v_prev = _difference(chain.configs[0], "c1", "y")
    for n in range(1, len(chain)):
        config = chain.configs[n]
        v = _difference(config, "c1", "y")
        u = _difference(config, "c2", "y1")
        if not v_prev.abs() > floor:
            raise PrecisionFloorError(f"v_{n-1} below the precision floor")
        if not v.abs() > floor:
            raise PrecisionFloorError(f"v_{n} below the precision floor")
        rows.append(MeasurementRow(
            n=n,
            log10_radius=config.log10_radius,
            radius=config.radius(),
            v=v,
            u=u,
            v_ratio=v / v_prev,
            uv=u / v,
            uv_prev=u / v_prev,
        ))
        v_prev = v
    return rows


_CSV_HEADER = ["n", "R_n", "v_re", "v_im", "u_re", "u_im",
               "vratio_re", "vratio_im", "uv_re", "uv_im",
               "uvprev_re", "uvprev_im"]


def measurements_to_csv(rows: Sequence[MeasurementRow], digits: int | None = None) -> str:
    """CSV with one row per level; ``digits`` truncates (never rounds)."""

    def fmt(x) -> str:
        if digits is None:
            return real_to_string(x)
        return truncate_decimal(x, digits)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_HEADER)
    for row in rows:
        writer.writerow([
            row.n,
            fmt(row.radius),
            fmt(row.v.re), fmt(row.v.im),
            fmt(row.u.re), fmt(row.u.im),
            fmt(row.v_ratio.re), fmt(row.v_ratio.im),
            fmt(row.uv.re), fmt(row.uv.im),
            fmt(row.uv_prev.re), fmt(row.uv_prev.im),
        ])
    return buf.getvalue()


def resubstitution_residual(chain: PullbackChain, n: int,
                            schema: MatingSchema = DEFAULT_SCHEMA):
    """Oracle check: max distance of F_n(marked point) from its target image."""
    fmap = chain.map_to_previous(n)
    lower = chain.configs[n]
    upper = chain.configs[n - 1]
    p = chain.precision
    worst = gmpy2.mpfr(0, p)
    for label in LABELS:
        image = fmap(lower.position(label))
        expected = upper.position(schema.image_of[label])
        d2 = image.chordal_distance2(expected, p)
        if d2 > worst:
            worst = d2
    return context_for(p).sqrt(worst)
