"""Branched flux-tube patterns: parameter selection, tube maps, tree assembly.

The construction concentrates the applied flux into an N x N grid of root
tubes, refines each tube through I generations of four-way splits as the
slab faces are approached, and mirrors everything about the mid-plane
x3 = T/2.  Level i lives at height y_i = (T/2) * theta**i; between
consecutive levels each tube's inner rectangle is partitioned into four
flux-proportional pieces, and each piece is carried onto its child's inner
rectangle by an area-preserving tube map, so the field is divergence-free
with the locally optimal magnitude kappa/sqrt(2) throughout.

Flux bookkeeping is exact: every rectangle, piece, and segment carries an
integer quanta count, children always sum to their parent, and every
cross-section's total flux is 2*pi times the total quanta count.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import TWO_PI, Params, Rect, split_once, validate_params
from .errors import AreaMismatch, Infeasible, TooShort

SQRT2 = math.sqrt(2.0)

REGIME_INTERMEDIATE = "intermediate"
REGIME_EXTREME = "extreme"

#: number-of-tubes calibration constant in N*/L (the paper's alpha)
ALPHA = 8.0


@dataclass(frozen=True)
class BranchConfig:
    """Tunable constants the construction leaves free.

    ``theta``: vertical contraction ratio of the refinement levels, valid in
    (1/4, 1/2).  ``level_cap``: constant C in 2**I <= C * min(kappa*rho0,
    H/d0).  ``min_segment_aspect``: constant c in the segment admissibility
    requirement t >= c * (largest endpoint side).
    """

    theta: float = 1.0 / 3.0
    level_cap: float = 1.0
    min_segment_aspect: float = 1.0

    def __post_init__(self):
        if not (0.25 < self.theta < 0.5):
            raise ValueError("theta must lie in (1/4, 1/2)")
        if self.level_cap <= 0 or self.min_segment_aspect < 0:
            raise ValueError("level_cap must be positive, min_segment_aspect >= 0")


DEFAULT_CONFIG = BranchConfig()


@dataclass(frozen=True)
class ConstructionPlan:
    """Resolved construction parameters for one pattern."""

    regime: str
    gamma: float
    N: int
    rho0: float
    d0: float
    theta: float
    I: int
    b_hat: float
    min_root_quanta: int
    predicted_energy: float

    @property
    def levels(self) -> list[float]:
        """Heights y_i = (T-half) * theta**i are stored relative to H = T/2."""
        return [self.theta**i for i in range(self.I + 1)]

    def heights(self, T: float) -> list[float]:
        H = 0.5 * T
        return [H * self.theta**i for i in range(self.I + 1)]

    def gaps(self, T: float) -> list[float]:
        ys = self.heights(T)
        return [ys[i] - ys[i + 1] for i in range(self.I)]

    def validate(self, p: Params, config: BranchConfig = DEFAULT_CONFIG) -> None:
        """Check every plan invariant; raise Infeasible naming the violation."""
        b, k, L, T = p.b_ext, p.kappa, p.L, p.T
        if p.flux_quanta_total == 0:
            return
        if not (self.N >= 1 and (self.N & (self.N - 1)) == 0):
            raise Infeasible("N power of two", f"N = {self.N}")
        gmin = math.sqrt(b * SQRT2 / k)
        if not (gmin * (1 - 1e-12) <= self.gamma <= 1.0 + 1e-12):
            raise Infeasible("(b*sqrt(2)/kappa)^(1/2) <= gamma <= 1",
                             f"gamma = {self.gamma}, lower = {gmin}")
        if self.N**2 > b * L * L / (8.0 * math.pi) * (1 + 1e-12):
            raise Infeasible("N^2 <= b_ext*L^2/(8*pi)",
                             f"N^2 = {self.N**2}, bound = {b * L * L / (8 * math.pi)}")
        if math.sqrt(b * k) * L / self.N < 1.0 * (1 - 1e-12):
            raise Infeasible("(b_ext*kappa)^(1/2)*L/N >= 1")
        if self.I > 0:
            H = 0.5 * T
            cap = config.level_cap * min(k * self.rho0, H / self.d0)
            if 2**self.I > cap * (1 + 1e-12):
                raise Infeasible("2^I <= C*min(kappa*rho0, (T/2)/d0)",
                                 f"2^I = {2**self.I}, cap = {cap}")
            if 4**self.I > self.min_root_quanta / 4 * (1 + 1e-12):
                raise Infeasible("4^I <= kappa*|r_hat|/(8*pi*sqrt(2))",
                                 f"4^I = {4**self.I}, min quanta/4 = "
                                 f"{self.min_root_quanta / 4}")


def select_parameters(p: Params, config: BranchConfig = DEFAULT_CONFIG) -> ConstructionPlan:
    """Pick the regime and all construction parameters for given Params.

    Intermediate regime (b >= kappa^(5/7)/(sqrt(2) T^(2/7))): gamma = 1 and
    N*/L = (kappa*b)^(1/6)/(8 T^(2/3)); extreme regime: gamma =
    2^(1/4) T^(1/7) b^(1/2) / kappa^(5/14) and N*/L = b^(1/2)/(8 kappa^(1/14)
    T^(4/7)).  N is the smallest power of two >= N*; rho0 = (L/N) *
    (b*sqrt(2)/kappa)^(1/2); d0 = gamma*L/N; theta comes from the config; I is
    maximal subject to the plan invariants and the segment-length requirement.
    """
    b, k, L, T = p.b_ext, p.kappa, p.L, p.T
    if p.flux_quanta_total == 0:
        return ConstructionPlan(regime=REGIME_INTERMEDIATE, gamma=1.0, N=1,
                                rho0=0.0, d0=L, theta=config.theta, I=0,
                                b_hat=0.0, min_root_quanta=0, predicted_energy=0.0)
    intermediate = b >= p.regime_threshold
    if intermediate:
        regime = REGIME_INTERMEDIATE
        gamma = 1.0
        n_star = L * (k * b) ** (1.0 / 6.0) / (ALPHA * T ** (2.0 / 3.0))
        predicted = (b * k) ** (2.0 / 3.0) * T ** (1.0 / 3.0) * L * L
    else:
        regime = REGIME_EXTREME
        gamma = 2.0**0.25 * T ** (1.0 / 7.0) * math.sqrt(b) / k ** (5.0 / 14.0)
        n_star = L * math.sqrt(b) / (ALPHA * k ** (1.0 / 14.0) * T ** (4.0 / 7.0))
        predicted = b * k ** (3.0 / 7.0) * T ** (3.0 / 7.0) * L * L
    if n_star < 1.0:
        raise Infeasible("L admissible (N* >= 1)",
                         f"N* = {n_star:.4g}; L >= {p.admissible_L():.6g} required")
    N = 1 << max(0, math.ceil(math.log2(n_star) - 1e-12))
    gamma = min(gamma, 1.0)
    d0 = gamma * L / N
    rho0 = (L / N) * math.sqrt(b * SQRT2 / k)

    # level count: largest power of two below the geometric cap, then reduced
    # until the per-tube quanta bound and the segment-length requirement hold
    H = 0.5 * T
    cap = config.level_cap * min(k * rho0, H / d0)
    I = max(0, math.floor(math.log2(cap) + 1e-12)) if cap >= 1.0 else 0
    root_quanta = _root_quanta(p, N)
    min_q = min(root_quanta)
    while I > 0 and 4**I > min_q / 4:
        I -= 1
    while I > 0 and not _segments_long_enough(I, H, rho0, config):
        I -= 1

    plan = ConstructionPlan(regime=regime, gamma=gamma, N=N, rho0=rho0, d0=d0,
                            theta=config.theta, I=I, b_hat=b / gamma**2,
                            min_root_quanta=min_q, predicted_energy=predicted)
    plan.validate(p, config)
    return plan


def make_plan(p: Params, N: int, gamma: float = 1.0, I: int | None = None,
              config: BranchConfig = DEFAULT_CONFIG) -> ConstructionPlan:
    """Build a plan from explicit (N, gamma, I) choices, checking feasibility.

    Unlike :func:`select_parameters` this does not follow the closed-form
    parameter formulas; it is meant for experiments and custom instances.
    When ``I`` is None the maximal feasible level count is used.
    """
    b, k, L, T = p.b_ext, p.kappa, p.L, p.T
    d0 = gamma * L / N
    rho0 = (L / N) * math.sqrt(b * SQRT2 / k) if b > 0 else 0.0
    root_quanta = _root_quanta(p, N) if p.flux_quanta_total else [0]
    min_q = min(root_quanta)
    H = 0.5 * T
    if I is None:
        cap = config.level_cap * min(k * rho0, H / d0) if b > 0 else 0.0
        I = max(0, math.floor(math.log2(cap) + 1e-12)) if cap >= 1.0 else 0
        while I > 0 and 4**I > min_q / 4:
            I -= 1
        while I > 0 and not _segments_long_enough(I, H, rho0, config):
            I -= 1
    regime = p.regime
    predicted = p.predicted_bound
    plan = ConstructionPlan(regime=regime, gamma=gamma, N=N, rho0=rho0, d0=d0,
                            theta=config.theta, I=I,
                            b_hat=b / gamma**2 if gamma else 0.0,
                            min_root_quanta=min_q, predicted_energy=predicted)
    plan.validate(p, config)
    return plan


def _segments_long_enough(I: int, H: float, rho0: float,
                          config: BranchConfig) -> bool:
    """Gap t_i must dominate the largest tube side at each level.

    Tube rectangles at level i have area <= 1.5 * 4**-i * (1.5 * rho0**2)
    (area-drift slack at both subdivision stages) and aspect <= 3, so their
    sides stay below sqrt(6.75) * rho0 * 2**-i.
    """
    theta = config.theta
    for i in range(I):
        t_i = H * theta**i * (1.0 - theta)
        side_bound = math.sqrt(6.75) * rho0 * 2.0**-i
        if t_i < config.min_segment_aspect * side_bound:
            return False
    return True


def _root_quanta(p: Params, N: int) -> list[int]:
    k = int(round(math.log2(N)))
    from .core import subdivide

    cells = subdivide(p.cell(), p.b_ext, k)
    return [c.quanta for c in cells]


# ---------------------------------------------------------------------------
# Tube segments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TubeSegment:
    """Flux tube between two equal-area rectangles at heights z_bottom < z_top.

    The tube is the image of bottom x [0, t] under the measure-preserving map
    that moves the center linearly from p to p_hat while the sides rescale
    exponentially, x-side by phi(z) = exp(lam * (z - z_bottom)/t) with
    lam = ln(top.a / bottom.a) and y-side by 1/phi.  The vertical field inside
    is exactly kappa/sqrt(2); the horizontal field is (kappa/sqrt(2)) times
    the center/shape velocity, which makes the field divergence-free and the
    per-section flux constant.
    """

    bottom: Rect
    top: Rect
    z_bottom: float
    z_top: float
    quanta: int

    @property
    def t(self) -> float:
        return self.z_top - self.z_bottom

    @property
    def p(self) -> tuple[float, float]:
        return self.bottom.center

    @property
    def p_hat(self) -> tuple[float, float]:
        return self.top.center

    @property
    def lam(self) -> float:
        return math.log(self.top.a / self.bottom.a)

    @property
    def is_straight(self) -> bool:
        return self.lam == 0.0 and self.p == self.p_hat

    def rect_at(self, z: float) -> Rect:
        """Cross-section rectangle at height z in [z_bottom, z_top]."""
        s = (z - self.z_bottom) / self.t
        phi = math.exp(self.lam * s)
        a = self.bottom.a * phi
        b = self.bottom.b / phi
        cx = self.bottom.center[0] + s * (self.top.center[0] - self.bottom.center[0])
        cy = self.bottom.center[1] + s * (self.top.center[1] - self.bottom.center[1])
        return Rect(cx - 0.5 * a, cy - 0.5 * b, a, b, self.quanta)

    def horizontal_velocity(self, xi1: float, xi2: float, z: float) -> tuple[float, float]:
        """d/dz of the map at reference offsets (xi1, xi2) from the center."""
        s = (z - self.z_bottom) / self.t
        phi = math.exp(self.lam * s)
        dphi = self.lam / self.t * phi
        dc1 = (self.top.center[0] - self.bottom.center[0]) / self.t
        dc2 = (self.top.center[1] - self.bottom.center[1]) / self.t
        return (dc1 + xi1 * dphi, dc2 - xi2 * dphi / phi**2)

    def transport_energy(self, kappa: float) -> float:
        """Closed-form integral of |B'|^2 over the tube.

        (kappa^2/2) * [ |dp|^2 ab / t
                        + (a^3 b/12) * lam*(e^{2 lam}-1)/(2t)
                        + (a b^3/12) * lam*(1-e^{-2 lam})/(2t) ]
        with (a, b) the bottom sides; the cross terms vanish because the map
        is centered.
        """
        a, b = self.bottom.a, self.bottom.b
        if a == 0.0 or b == 0.0:
            return 0.0
        t = self.t
        dp1 = self.top.center[0] - self.bottom.center[0]
        dp2 = self.top.center[1] - self.bottom.center[1]
        lam = self.lam
        shift = (dp1 * dp1 + dp2 * dp2) * a * b / t
        if lam != 0.0:
            scale = (a**3 * b / 12.0) * lam * math.expm1(2.0 * lam) / (2.0 * t) \
                + (a * b**3 / 12.0) * lam * (-math.expm1(-2.0 * lam)) / (2.0 * t)
        else:
            scale = 0.0
        return 0.5 * kappa**2 * (shift + scale)

    def transport_density(self, kappa: float, z: float) -> float:
        """Integral of |B'(., z)|^2 over the cross-section at height z."""
        a, b = self.bottom.a, self.bottom.b
        if a == 0.0 or b == 0.0:
            return 0.0
        s = (z - self.z_bottom) / self.t
        phi = math.exp(self.lam * s)
        dphi = self.lam / self.t * phi
        dc1 = (self.top.center[0] - self.bottom.center[0]) / self.t
        dc2 = (self.top.center[1] - self.bottom.center[1]) / self.t
        val = (dc1**2 + dc2**2) * a * b \
            + dphi**2 * (a**3 * b / 12.0) \
            + (dphi / phi**2) ** 2 * (a * b**3 / 12.0)
        return 0.5 * kappa**2 * val

    def lateral_area(self, order: int = 32) -> float:
        """Exact area of the four ruled lateral faces (Gauss-Legendre in z)."""
        a, b = self.bottom.a, self.bottom.b
        if a == 0.0 or b == 0.0:
            return 0.0
        t = self.t
        nodes, weights = np.polynomial.legendre.leggauss(order)
        z = 0.5 * t * (nodes + 1.0)
        w = 0.5 * t * weights
        lam = self.lam
        phi = np.exp(lam * z / t)
        w1 = a * phi          # x-side width
        w2 = b / phi          # y-side width
        dw1 = lam / t * w1
        dw2 = -lam / t * w2
        dc1 = (self.top.center[0] - self.bottom.center[0]) / t
        dc2 = (self.top.center[1] - self.bottom.center[1]) / t
        area = 0.0
        for sign in (+1.0, -1.0):
            e1 = dc1 + sign * 0.5 * dw1   # x-face edge slope
            area += float(np.sum(w * w2 * np.sqrt(1.0 + e1**2)))
            e2 = dc2 + sign * 0.5 * dw2   # y-face edge slope
            area += float(np.sum(w * w1 * np.sqrt(1.0 + e2**2)))
        return area

    def bounding_rect(self) -> Rect:
        x1 = min(self.bottom.x1, self.top.x1)
        y1 = min(self.bottom.x2, self.top.x2)
        x2 = max(self.bottom.x1 + self.bottom.a, self.top.x1 + self.top.a)
        y2 = max(self.bottom.x2 + self.bottom.b, self.top.x2 + self.top.b)
        return Rect(x1, y1, x2 - x1, y2 - y1, self.quanta)


def build_segment(bottom: Rect, top: Rect, z_bottom: float, z_top: float,
                  kappa: float, min_aspect: float = 1.0,
                  area_rtol: float = 1e-9) -> TubeSegment:
    """Validate and assemble one tube segment.

    The endpoint areas must agree to ``area_rtol``; the top rectangle is then
    rescaled (second side) so the areas match exactly.  The segment must be
    tall enough: z_top - z_bottom >= min_aspect * max(side of either end).
    """
    if bottom.is_empty != top.is_empty:
        raise AreaMismatch("one endpoint is empty, the other is not")
    if bottom.quanta != top.quanta:
        raise AreaMismatch(f"endpoint quanta differ: {bottom.quanta} vs {top.quanta}")
    if z_top <= z_bottom:
        raise TooShort("z_top must exceed z_bottom")
    if bottom.is_empty:
        return TubeSegment(bottom=bottom, top=top, z_bottom=z_bottom,
                           z_top=z_top, quanta=0)
    if abs(bottom.area - top.area) > area_rtol * max(bottom.area, top.area):
        raise AreaMismatch(f"areas differ: {bottom.area} vs {top.area}")
    t = z_top - z_bottom
    side = max(bottom.a, bottom.b, top.a, top.b)
    if t < min_aspect * side * (1 - 1e-12):
        raise TooShort(f"t = {t} < {min_aspect} * max side {side}")
    # reconcile: keep top.a, adjust top.b so the areas agree exactly
    b_new = bottom.area / top.a
    cx, cy = top.center
    top = Rect(cx - 0.5 * top.a, cy - 0.5 * b_new, top.a, b_new, top.quanta)
    return TubeSegment(bottom=bottom, top=top, z_bottom=z_bottom, z_top=z_top,
                       quanta=bottom.quanta)


# ---------------------------------------------------------------------------
# Pattern assembly
# ---------------------------------------------------------------------------

@dataclass
class SharpPattern:
    """The full branched normal-region geometry with its field.

    ``trees[j][i]`` lists the 4**i outer rectangles of tube j at refinement
    level i (level 0 is the concentrated rectangle r_j).  The matching inner
    rectangles carry the field kappa/sqrt(2) and are recovered with
    :meth:`inner`.  ``segments`` covers the whole slab [0, T], mirror copies
    included; the straight core region around each face is represented by
    straight segments.
    """

    params: Params
    plan: ConstructionPlan
    root_cells: list[Rect]
    trees: list[list[list[Rect]]]
    segments: list[TubeSegment]

    @property
    def kappa(self) -> float:
        return self.params.kappa

    @property
    def field_value(self) -> float:
        return self.params.kappa / SQRT2

    def inner(self, outer: Rect) -> Rect:
        """Inner rectangle: concentric, same aspect, area 2*pi*q*sqrt(2)/kappa."""
        return _inner_rect(outer, self.params.kappa)

    def is_empty(self) -> bool:
        return self.params.flux_quanta_total == 0

    def junction_heights(self) -> list[float]:
        ys = self.plan.heights(self.params.T)
        T = self.params.T
        inner = [y for y in ys[1:]]
        return sorted({*inner, *[T - y for y in inner],T / 2.0})

    def cross_section(self, z: float) -> list[tuple[Rect, float]]:
        """Disjoint cross-section rectangles at height z with the field value.

        Segments own the half-open span [z_bottom, z_top); the top face z = T
        is served by the segments ending there.
        """
        if not (0.0 <= z <= self.params.T):
            raise ValueError("z outside the slab")
        if z == 0.5 * self.params.T and not self.is_empty():
            # canonical mid-plane trace: the level-0 inner rectangles r_hat_j
            return [(self.inner(tree[0][0]), self.field_value)
                    for tree in self.trees if tree[0][0].quanta > 0]
        out = []
        for seg in self.segments:
            if seg.quanta == 0:
                continue
            if (seg.z_bottom <= z < seg.z_top) or (z == self.params.T and
                                                   seg.z_top == z):
                out.append((seg.rect_at(z), self.field_value))
        return out

    def section_quanta(self, z: float) -> int:
        return sum(r.quanta for r, _ in self.cross_section(z))

    def total_lateral_area(self) -> float:
        return sum(seg.lateral_area() for seg in self.segments if seg.quanta > 0)

    def total_transport_energy(self) -> float:
        return sum(seg.transport_energy(self.params.kappa) for seg in self.segments)

    def leaf_inner_rects(self) -> list[Rect]:
        """Finest-level inner rectangles (the trace at z = 0 and z = T)."""
        out = []
        for tree in self.trees:
            for r in tree[-1]:
                if r.quanta > 0:
                    out.append(self.inner(r))
        return out

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        def rect_row(r: Rect):
            return [r.x1, r.x2, r.a, r.b, r.quanta]

        return {
            "format": "fluxbranch-pattern",
            "version": 1,
            "params": {
                "kappa": self.params.kappa,
                "L": self.params.L,
                "T": self.params.T,
                "quanta": self.params.flux_quanta_total,
                "mode": self.params.mode,
            },
            "plan": asdict(self.plan),
            "root_cells": [rect_row(r) for r in self.root_cells],
            "trees": [[[rect_row(r) for r in level] for level in tree]
                      for tree in self.trees],
        }

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def from_json(cls, doc: dict) -> "SharpPattern":
        if doc.get("format") != "fluxbranch-pattern":
            raise ValueError("not a fluxbranch pattern document")
        if doc.get("version") != 1:
            raise ValueError(f"unsupported pattern version {doc.get('version')}")
        pr = doc["params"]
        params = validate_params(pr["kappa"], int(pr["quanta"]), pr["L"], pr["T"],
                                 pr["mode"])
        plan = ConstructionPlan(**doc["plan"])

        def rect(row):
            return Rect(row[0], row[1], row[2], row[3], int(row[4]))

        root_cells = [rect(r) for r in doc["root_cells"]]
        trees = [[[rect(r) for r in level] for level in tree]
                 for tree in doc["trees"]]
        return _assemble(params, plan, root_cells, trees)

    @classmethod
    def load(cls, path: str) -> "SharpPattern":
        with open(path) as f:
            return cls.from_json(json.load(f))


def _inner_rect(outer: Rect, kappa: float) -> Rect:
    area = TWO_PI * outer.quanta * SQRT2 / kappa
    return outer.with_area_concentric(area, outer.quanta)


def build_pattern(p: Params, plan: ConstructionPlan,
                  config: BranchConfig = DEFAULT_CONFIG) -> SharpPattern:
    """Assemble the full branched pattern for a feasible plan."""
    plan.validate(p, config)
    if p.flux_quanta_total == 0:
        return SharpPattern(params=p, plan=plan, root_cells=[], trees=[],
                            segments=[])
    from .core import subdivide

    k = int(round(math.log2(plan.N)))
    cells = subdivide(p.cell(), p.b_ext, k)
    trees = []
    for cell in cells:
        r_j = cell.scaled_concentric(plan.gamma)
        b_hat_j = TWO_PI * r_j.quanta / r_j.area
        levels = [[r_j]]
        for _ in range(plan.I):
            nxt = []
            for parent in levels[-1]:
                c1, c2 = split_once(parent, b_hat_j)
                for c in (c1, c2):
                    nxt.extend(split_once(c, b_hat_j))
            levels.append(nxt)
        trees.append(levels)
    return _assemble(p, plan, cells, trees)


def _guillotine_pieces(inner_parent: Rect, outer_parent: Rect,
                       b_hat: float) -> list[Rect]:
    """Partition the parent's inner rectangle into four flux-proportional pieces.

    The cuts mirror the outer subdivision: same split axes, cut positions at
    the child-quanta fractions, so each piece's area is exactly the child's
    share of the parent's inner area.
    """
    c1, c2 = split_once(outer_parent, b_hat)
    hA, hB = _cut_by_quanta(inner_parent, outer_parent, c1)
    pieces = []
    for half_inner, half_outer in ((hA, c1), (hB, c2)):
        if half_outer.quanta == 0:
            pieces.extend([_zero_piece(half_inner), _zero_piece(half_inner)])
            continue
        g1, _ = split_once(half_outer, b_hat)
        pA, pB = _cut_by_quanta(half_inner, half_outer, g1)
        pieces.extend([pA, pB])
    return pieces


def _zero_piece(r: Rect) -> Rect:
    return Rect(r.x1, r.x2, 0.0, 0.0, 0)


def _cut_by_quanta(inner: Rect, outer: Rect, child_lo: Rect) -> tuple[Rect, Rect]:
    """Cut ``inner`` along the same axis as the outer split, flux-proportionally."""
    m = outer.quanta
    m_lo = child_lo.quanta
    if m == 0:
        return _zero_piece(inner), _zero_piece(inner)
    if m_lo == m:  # copy + empty split (single quantum)
        return inner, _zero_piece(inner)
    f = m_lo / m
    # same deterministic axis rule as split_once: cut the longer side
    axis = 1 if outer.b >= outer.a else 0
    if axis == 1:
        y = inner.b * f
        lo = Rect(inner.x1, inner.x2, inner.a, y, m_lo)
        hi = Rect(inner.x1, inner.x2 + y, inner.a, inner.b - y, m - m_lo)
    else:
        y = inner.a * f
        lo = Rect(inner.x1, inner.x2, y, inner.b, m_lo)
        hi = Rect(inner.x1 + y, inner.x2, inner.a - y, inner.b, m - m_lo)
    return lo, hi


def _assemble(p: Params, plan: ConstructionPlan, cells: list[Rect],
              trees: list[list[list[Rect]]],
              config: BranchConfig = DEFAULT_CONFIG) -> SharpPattern:
    kappa = p.kappa
    T = p.T
    ys = plan.heights(T)
    segments: list[TubeSegment] = []
    for tree, cell in zip(trees, cells):
        r_j = tree[0][0]
        b_hat_j = TWO_PI * r_j.quanta / r_j.area if r_j.quanta else 0.0
        # branching segments between consecutive levels (upper half, built
        # from the mid-plane downward), plus their mirror images
        for i in range(plan.I):
            z_top, z_bot = ys[i], ys[i + 1]
            for h, parent in enumerate(tree[i]):
                if parent.quanta == 0:
                    continue
                inner_parent = _inner_rect(parent, kappa)
                pieces = _guillotine_pieces(inner_parent, parent, b_hat_j)
                children = tree[i + 1][4 * h:4 * h + 4]
                for piece, child in zip(pieces, children):
                    if child.quanta == 0:
                        continue
                    inner_child = _inner_rect(child, kappa)
                    seg = build_segment(inner_child, piece, z_bot, z_top,
                                        kappa, config.min_segment_aspect)
                    segments.append(seg)
                    segments.append(TubeSegment(
                        bottom=seg.top, top=seg.bottom,
                        z_bottom=T - z_top, z_top=T - z_bot,
                        quanta=seg.quanta))
        # straight core region (0, y_I) and its mirror (T - y_I, T)
        y_core = ys[-1]
        for leaf in tree[-1]:
            if leaf.quanta == 0:
                continue
            inner_leaf = _inner_rect(leaf, kappa)
            segments.append(TubeSegment(bottom=inner_leaf, top=inner_leaf,
                                        z_bottom=0.0, z_top=y_core,
                                        quanta=leaf.quanta))
            segments.append(TubeSegment(bottom=inner_leaf, top=inner_leaf,
                                        z_bottom=T - y_core, z_top=T,
                                        quanta=leaf.quanta))
    return SharpPattern(params=p, plan=plan, root_cells=cells, trees=trees,
                        segments=segments)


# ---------------------------------------------------------------------------
# Neighborhood measurement
# ---------------------------------------------------------------------------

def neighborhood_excess(pat: SharpPattern, delta: float,
                        grid_factor: float = 6.0,
                        max_voxels: int = 200_000_000) -> float:
    """Measure |(omega)_delta \\ omega| inside the slab on a voxel grid.

    The distance is periodic in-plane and Euclidean vertically; the grid
    resolution is ``delta / grid_factor`` (must be finer than delta/4).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if grid_factor < 4.0:
        raise ValueError("resolution must be finer than delta/4")
    if pat.is_empty():
        return 0.0
    L, T = pat.params.L, pat.params.T
    h = delta / grid_factor
    n1 = max(4, int(math.ceil(L / h)))
    n3 = max(4, int(math.ceil(T / h)))
    if n1 * n1 * n3 > max_voxels:
        raise MemoryError(f"neighborhood grid {n1}x{n1}x{n3} exceeds the voxel cap")
    inside = _voxelize(pat, n1, n1, n3)
    from scipy import ndimage

    pad = int(math.ceil(delta / (L / n1))) + 2
    padded = np.concatenate([inside[-pad:], inside, inside[:pad]], axis=0)
    padded = np.concatenate([padded[:, -pad:], padded, padded[:, :pad]], axis=1)
    dist = ndimage.distance_transform_edt(
        ~padded, sampling=(L / n1, L / n1, T / n3))
    dist = dist[pad:pad + n1, pad:pad + n1, :]
    shell = (~inside) & (dist < delta)
    return float(np.count_nonzero(shell)) * (L / n1) ** 2 * (T / n3)


def _voxelize(pat: SharpPattern, n1: int, n2: int, n3: int) -> np.ndarray:
    """Indicator of omega at voxel centers (z-slice by z-slice)."""
    L, T = pat.params.L, pat.params.T
    inside = np.zeros((n1, n2, n3), dtype=bool)
    h1, h2, h3 = L / n1, L / n2, T / n3
    zs = (np.arange(n3) + 0.5) * h3
    for k, z in enumerate(zs):
        for rect, _ in pat.cross_section(z):
            i0 = int(np.ceil((rect.x1 - 0.5 * h1) / h1))
            i1 = int(np.floor((rect.x1 + rect.a - 0.5 * h1) / h1))
            j0 = int(np.ceil((rect.x2 - 0.5 * h2) / h2))
            j1 = int(np.floor((rect.x2 + rect.b - 0.5 * h2) / h2))
            ii = np.arange(i0, i1 + 1) % n1
            jj = np.arange(j0, j1 + 1) % n2
            inside[np.ix_(ii, jj, [k])] = True
    return inside
