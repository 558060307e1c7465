"""Physical parameters, rectangle geometry, and flux-quantized subdivision.

Flux is bookkept as an integer number of 2*pi quanta throughout: a rectangle
never stores a floating-point flux, and every subdivision first splits the
integer quanta and only then derives the split coordinate.  This keeps flux
conservation exact over arbitrarily many refinement rounds while side lengths
remain ordinary floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConstraintViolated, NotGood

TWO_PI = 2.0 * math.pi

#: relative slack for aspect-ratio and flux-consistency checks
_REL_TOL = 1e-9

MODE_LOWER = "lower"
MODE_UPPER = "upper"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle carrying an integer number of flux quanta.

    ``origin`` is the lower-left corner, ``sides`` the (a, b) edge lengths.
    An empty rectangle has both sides equal to zero and carries no flux; it
    keeps its parent's origin so that output ordering stays reproducible.
    """

    x1: float
    x2: float
    a: float
    b: float
    quanta: int = 0

    @property
    def origin(self) -> tuple[float, float]:
        return (self.x1, self.x2)

    @property
    def sides(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def area(self) -> float:
        return self.a * self.b

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + 0.5 * self.a, self.x2 + 0.5 * self.b)

    @property
    def is_empty(self) -> bool:
        return self.a == 0.0 and self.b == 0.0

    @property
    def aspect(self) -> float:
        """max(a,b)/min(a,b); empty rectangles report 1."""
        if self.is_empty:
            return 1.0
        lo, hi = min(self.a, self.b), max(self.a, self.b)
        return math.inf if lo == 0.0 else hi / lo

    def flux(self, b_star: float) -> float:
        return self.area * b_star

    def scaled_concentric(self, factor: float, quanta: int | None = None) -> "Rect":
        """Rectangle with the same center and aspect, sides scaled by ``factor``."""
        cx, cy = self.center
        a, b = self.a * factor, self.b * factor
        return Rect(cx - 0.5 * a, cy - 0.5 * b, a, b,
                    self.quanta if quanta is None else quanta)

    def with_area_concentric(self, area: float, quanta: int) -> "Rect":
        """Concentric same-aspect rectangle of prescribed area and quanta."""
        if self.is_empty or area == 0.0:
            return Rect(self.x1, self.x2, 0.0, 0.0, quanta)
        return self.scaled_concentric(math.sqrt(area / self.area), quanta)

    def contains(self, other: "Rect", tol: float = 1e-9) -> bool:
        if other.is_empty:
            return True
        pad = tol * max(self.a, self.b, 1.0)
        return (self.x1 - pad <= other.x1 and other.x1 + other.a <= self.x1 + self.a + pad
                and self.x2 - pad <= other.x2 and other.x2 + other.b <= self.x2 + self.b + pad)


def _empty_like(r: Rect) -> Rect:
    return Rect(r.x1, r.x2, 0.0, 0.0, 0)


def is_good_rect(r: Rect, b_star: float, rtol: float = _REL_TOL) -> bool:
    """True iff ``r`` has aspect ratio at most 3 and carries flux 2*pi*quanta.

    Empty rectangles are good iff their quanta count is zero.  The flux test
    compares ``a*b*b_star`` against the stored integer quanta (the integer is
    authoritative; the float product only has to agree to relative ``rtol``).
    """
    if b_star <= 0.0:
        raise ValueError("b_star must be positive")
    if r.is_empty:
        return r.quanta == 0
    if r.a <= 0.0 or r.b <= 0.0 or r.quanta < 0:
        return False
    if r.aspect > 3.0 * (1.0 + rtol):
        return False
    target = TWO_PI * r.quanta
    return abs(r.flux(b_star) - target) <= rtol * max(target, TWO_PI)


def split_once(r: Rect, b_star: float) -> tuple[Rect, Rect]:
    """Split a B*-good rectangle across its longer side into two good halves.

    The child quanta are fixed first in integer arithmetic (floor(m/2) to the
    lower/left child) and the cut coordinate follows from them:
    y = 2*pi*floor(m/2) / (b_star * s) with s the shorter side.  A rectangle
    with a single quantum yields (copy, empty); an empty one yields two
    empties.  Children are returned lower/left first.
    """
    if not is_good_rect(r, b_star):
        raise NotGood(f"rectangle {r} is not {b_star}-good")
    if r.is_empty:
        return (_empty_like(r), _empty_like(r))
    m = r.quanta
    if m == 1:
        return (r, _empty_like(r))
    m_lo = m // 2
    m_hi = m - m_lo
    # Split along the longer side; on ties cut the second coordinate.
    axis = 1 if r.b >= r.a else 0
    s = r.a if axis == 1 else r.b
    y = TWO_PI * m_lo / (b_star * s)
    if axis == 1:
        lo = Rect(r.x1, r.x2, r.a, y, m_lo)
        hi = Rect(r.x1, r.x2 + y, r.a, r.b - y, m_hi)
    else:
        lo = Rect(r.x1, r.x2, y, r.b, m_lo)
        hi = Rect(r.x1 + y, r.x2, r.a - y, r.b, m_hi)
    return (lo, hi)


def subdivide(r: Rect, b_star: float, k: int) -> list[Rect]:
    """Apply 2k rounds of :func:`split_once` level-wise, yielding 4**k rectangles.

    Every output is B*-good, the outputs are pairwise disjoint with union r
    (up to null sets), total quanta are conserved exactly, and each output
    area differs from 4**-k * |r| by at most 4*pi/b_star.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if not is_good_rect(r, b_star):
        raise NotGood(f"rectangle {r} is not {b_star}-good")
    level = [r]
    for _ in range(2 * k):
        nxt: list[Rect] = []
        for rect in level:
            nxt.extend(split_once(rect, b_star))
        level = nxt
    return level


@dataclass(frozen=True)
class Params:
    """Applied-field and geometry parameters of one slab problem.

    ``b_ext`` is stored as exactly 2*pi*flux_quanta_total / L**2 so that the
    quantization constraint b_ext*L**2 = 2*pi*m holds by construction.  The
    recorded ``mode`` states which field bound is in force: ``"lower"`` caps
    b_ext at kappa/8, ``"upper"`` at kappa/4.
    """

    kappa: float
    b_ext: float
    L: float
    T: float
    flux_quanta_total: int
    mode: str = MODE_UPPER

    @property
    def regime_threshold(self) -> float:
        """Field value separating the two scaling regimes at this (kappa, T)."""
        return self.kappa ** (5.0 / 7.0) / (math.sqrt(2.0) * self.T ** (2.0 / 7.0))

    @property
    def regime(self) -> str:
        return "intermediate" if self.b_ext >= self.regime_threshold else "extreme"

    @property
    def predicted_bound(self) -> float:
        """min(b*k^(3/7)*T^(3/7), b^(2/3)*k^(2/3)*T^(1/3)) * L**2."""
        b, k, T = self.b_ext, self.kappa, self.T
        return min(b * k ** (3.0 / 7.0) * T ** (3.0 / 7.0),
                   b ** (2.0 / 3.0) * k ** (2.0 / 3.0) * T ** (1.0 / 3.0)) * self.L ** 2

    @property
    def bulk_energy(self) -> float:
        """(sqrt(2)*kappa*b - b**2) * L**2 * T, the split-off bulk term."""
        return bulk_value(self.kappa, self.b_ext, self.L, self.T)

    def admissible_L(self) -> float:
        """Smallest admissible period for a branching construction."""
        b, k, T = self.b_ext, self.kappa, self.T
        if b == 0.0:
            return 0.0
        return min(8.0 * T ** (2.0 / 3.0) / (k * b) ** (1.0 / 6.0),
                   8.0 * T ** (4.0 / 7.0) * k ** (1.0 / 14.0) / math.sqrt(b))

    def cell(self) -> Rect:
        """The full periodic cross-section Q_L as a flux-carrying rectangle."""
        return Rect(0.0, 0.0, self.L, self.L, self.flux_quanta_total)


def bulk_value(kappa: float, b_ext: float, L: float, T: float) -> float:
    """Bulk energy constant (sqrt(2)*kappa*b_ext - b_ext**2) * L**2 * T."""
    return (math.sqrt(2.0) * kappa * b_ext - b_ext * b_ext) * L * L * T


def validate_params(kappa: float, quanta: int, L: float, T: float,
                    mode: str = MODE_UPPER) -> Params:
    """Build Params from (kappa, m, L, T), checking every admissibility inequality.

    Raises :class:`ConstraintViolated` naming the first inequality that fails.
    ``quanta = 0`` is admitted and represents the zero-field (empty) problem.
    """
    if mode not in (MODE_LOWER, MODE_UPPER):
        raise ConstraintViolated("mode in {lower, upper}", f"got {mode!r}")
    for name, v in (("kappa", kappa), ("L", L), ("T", T)):
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConstraintViolated(f"{name} > 0", f"got {v!r}")
    if not isinstance(quanta, int) or quanta < 0:
        raise ConstraintViolated("quanta >= 0 integer", f"got {quanta!r}")
    if kappa > 0.5 * (1.0 + _REL_TOL):
        raise ConstraintViolated("kappa <= 1/2", f"kappa = {kappa}")
    if kappa * T < 1.0 * (1.0 - _REL_TOL):
        raise ConstraintViolated("kappa*T >= 1", f"kappa*T = {kappa * T}")
    b_ext = TWO_PI * quanta / (L * L)
    cap = kappa / 8.0 if mode == MODE_LOWER else kappa / 4.0
    cap_name = "b_ext <= kappa/8" if mode == MODE_LOWER else "b_ext <= kappa/4"
    if b_ext > cap * (1.0 + _REL_TOL):
        raise ConstraintViolated(cap_name, f"b_ext = {b_ext}, cap = {cap}")
    return Params(kappa=kappa, b_ext=b_ext, L=L, T=T,
                  flux_quanta_total=quanta, mode=mode)


def quanta_for_field(b_target: float, L: float) -> int:
    """Integer quanta count whose snapped field 2*pi*m/L**2 is nearest b_target."""
    if b_target < 0 or not math.isfinite(b_target):
        raise ValueError("b_target must be finite and nonnegative")
    return round(b_target * L * L / TWO_PI)
