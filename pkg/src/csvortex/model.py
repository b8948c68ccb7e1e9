"""Gauge-theoretic input data: rank-2 Cartan pairs, vortex configurations,
and the scalar constants derived from them.

The three rank-2 gauge groups are encoded through the positive off-diagonal
magnitudes ``(a, b)`` of the Cartan matrix ``K = [[2, -b], [-a, 2]]``.  Only
the five orientations of the pairs (1,1), (1,2), (1,3) are admissible; every
other pair is rejected at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

Point = tuple[float, float]

#: Admissible (a, b) pairs, both orientations of the off-diagonal entries.
ADMISSIBLE_PAIRS: tuple[tuple[int, int], ...] = ((1, 1), (1, 2), (2, 1), (1, 3), (3, 1))

_GROUP_BASE_PAIR = {"SU3": (1, 1), "SO5": (1, 2), "G2": (1, 3)}

#: Tolerance for exact-coincidence tests on vortex coordinates.
COINCIDENCE_TOL = 1e-12


class UnsupportedConfigurationError(ValueError):
    """Raised for gauge/vortex configurations outside the supported families."""


def _canonical_group_tag(tag: str) -> str:
    key = tag.upper().replace("(", "").replace(")", "").replace("-", "").replace("_", "")
    if key not in _GROUP_BASE_PAIR:
        raise UnsupportedConfigurationError(f"unknown gauge group tag: {tag!r}")
    return key


def cartan_pair(group_tag: str, orientation: str = "ab") -> tuple[int, int]:
    """Off-diagonal magnitudes (a, b) for a rank-2 gauge group.

    Parameters
    ----------
    group_tag : str
        One of ``"SU3"``, ``"SO5"``, ``"G2"`` (parenthesised spellings accepted).
    orientation : str
        ``"ab"`` keeps the listed pair as (a, b); ``"ba"`` swaps the entries.
    """
    base = _GROUP_BASE_PAIR[_canonical_group_tag(group_tag)]
    if orientation == "ab":
        return base
    if orientation == "ba":
        return (base[1], base[0])
    raise UnsupportedConfigurationError(f"unknown orientation: {orientation!r} (use 'ab' or 'ba')")


def _as_points(pts: Sequence[Sequence[float]]) -> tuple[Point, ...]:
    out = []
    for p in pts:
        x, y = float(p[0]), float(p[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite vortex point: {p!r}")
        out.append((x, y))
    return tuple(out)


def center_vortices(
    p_points: Sequence[Sequence[float]],
    q_points: Sequence[Sequence[float]],
    b: int,
) -> tuple[tuple[Point, ...], tuple[Point, ...]]:
    """Translate both vortex families by a common shift so that
    ``sum_j b*p_j + sum_k 2*q_k = 0``.

    Empty configurations pass through unchanged.  The operation is idempotent.
    """
    p = _as_points(p_points)
    q = _as_points(q_points)
    weight = b * len(p) + 2 * len(q)
    if weight == 0:
        return p, q
    sx = (b * sum(pt[0] for pt in p) + 2 * sum(pt[0] for pt in q)) / weight
    sy = (b * sum(pt[1] for pt in p) + 2 * sum(pt[1] for pt in q)) / weight
    p_shift = tuple((x - sx, y - sy) for x, y in p)
    q_shift = tuple((x - sx, y - sy) for x, y in q)
    return p_shift, q_shift


@dataclass(frozen=True)
class GaugeModel:
    """Immutable bundle of gauge pair and vortex configuration.

    Vortex multiplicity is represented by repeated points.  ``lam`` is kept
    as an exact rational so the integer/non-integer branch (kernel dimension
    3 versus 1) is decided without floating point.
    """

    a: int
    b: int
    p_points: tuple[Point, ...] = ()
    q_points: tuple[Point, ...] = ()

    def __post_init__(self):
        if (self.a, self.b) not in ADMISSIBLE_PAIRS:
            raise UnsupportedConfigurationError(
                f"(a, b) = ({self.a}, {self.b}) is not an admissible rank-2 pair; "
                f"expected one of {ADMISSIBLE_PAIRS}"
            )
        object.__setattr__(self, "p_points", _as_points(self.p_points))
        object.__setattr__(self, "q_points", _as_points(self.q_points))

    # -- derived scalars -------------------------------------------------

    @property
    def N1(self) -> int:
        return len(self.p_points)

    @property
    def N2(self) -> int:
        return len(self.q_points)

    @property
    def lam(self) -> Fraction:
        """Flux parameter b*N1/2 + N2 + 1 as an exact rational."""
        return Fraction(self.b * self.N1, 2) + self.N2 + 1

    @property
    def lam_is_integer(self) -> bool:
        return self.lam.denominator == 1

    @property
    def prefactor(self) -> int:
        """(4 - a*b) * (2 + b), the positive constant of the limit profile."""
        return (4 - self.a * self.b) * (2 + self.b)

    @property
    def cartan_matrix(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return ((2, -self.b), (-self.a, 2))

    def max_vortex_radius(self) -> float:
        pts = self.p_points + self.q_points
        if not pts:
            return 0.0
        return max(math.hypot(x, y) for x, y in pts)

    def min_vortex_separation(self) -> float:
        """Smallest pairwise distance among distinct vortex points (inf if < 2 points)."""
        pts = self.p_points + self.q_points
        best = math.inf
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = math.hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1])
                if d > COINCIDENCE_TOL:
                    best = min(best, d)
        return best

    def all_vortices_at_origin(self, tol: float = COINCIDENCE_TOL) -> bool:
        return all(
            math.hypot(x, y) <= tol for x, y in self.p_points + self.q_points
        )

    # -- centering -------------------------------------------------------

    def is_centered(self, tol: float = 1e-12) -> bool:
        scale = 1.0 + self.max_vortex_radius()
        sx = self.b * sum(p[0] for p in self.p_points) + 2 * sum(q[0] for q in self.q_points)
        sy = self.b * sum(p[1] for p in self.p_points) + 2 * sum(q[1] for q in self.q_points)
        return math.hypot(sx, sy) <= tol * scale * max(1, self.N1 + self.N2)

    def centered(self) -> "GaugeModel":
        p, q = center_vortices(self.p_points, self.q_points, self.b)
        return GaugeModel(self.a, self.b, p, q)


def lambda_of(model: GaugeModel) -> Fraction:
    """Exact flux parameter b*N1/2 + N2 + 1."""
    return model.lam


def build_model(
    group_tag: str,
    orientation: str = "ab",
    p_points: Sequence[Sequence[float]] = (),
    q_points: Sequence[Sequence[float]] = (),
) -> GaugeModel:
    """Construct a centered model from a group tag and raw vortex lists."""
    a, b = cartan_pair(group_tag, orientation)
    p, q = center_vortices(p_points, q_points, b)
    return GaugeModel(a, b, p, q)


# -- excluded configuration -----------------------------------------------


def is_excluded_case(model: GaugeModel) -> bool:
    """True for the one configuration the construction cannot handle:
    b = 1 with exactly two u1-vortices mirrored through the origin
    (p2 = -p1 != 0 after centering) and no u2-vortices.

    Coincident double vortices at the origin are supported.
    """
    if model.b != 1 or model.N1 != 2 or model.N2 != 0:
        return False
    p, _ = center_vortices(model.p_points, model.q_points, model.b)
    (x1, y1), (x2, y2) = p
    scale = 1.0 + model.max_vortex_radius()
    mirrored = math.hypot(x1 + x2, y1 + y2) <= COINCIDENCE_TOL * scale
    nonzero = math.hypot(x1, y1) > COINCIDENCE_TOL * scale
    return mirrored and nonzero


def reject_excluded_case(model: GaugeModel) -> None:
    """Raise UnsupportedConfigurationError for the excluded mirrored-pair case."""
    if is_excluded_case(model):
        raise UnsupportedConfigurationError(
            "unsupported configuration: b = 1, N1 = 2, N2 = 0 with p2 = -p1 != 0 "
            "is outside the scope of this solver"
        )


# -- asymptotic type limits -------------------------------------------------


@dataclass(frozen=True)
class SolutionTypeLimits:
    """Far-field limits distinguishing the solution types.

    ``topological_limit_j`` is ln((K^-1)_{1j} + (K^-1)_{2j}); the mixed type
    keeps the first component at ``-ln K_11 = -ln 2``.
    """

    topological_limit_1: float
    topological_limit_2: float
    mixed_limit_u1: float = field(default=-math.log(2.0))


def solution_type_limits(model: GaugeModel) -> SolutionTypeLimits:
    det = 4 - model.a * model.b
    col1 = (2 + model.a) / det
    col2 = (model.b + 2) / det
    if col1 <= 0 or col2 <= 0:
        raise ValueError("topological limits undefined: column sums of K^-1 not positive")
    return SolutionTypeLimits(
        topological_limit_1=math.log(col1),
        topological_limit_2=math.log(col2),
    )
