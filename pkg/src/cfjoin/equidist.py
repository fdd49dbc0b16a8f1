"""Discrepancy, quasi-random sequences, Haar charts and finite sample sets.

The finite sample sets built here play two roles: a dense per-time-shell
low-discrepancy net used to approximate conditional measures on the slabs
S_n of the semidirect product, and small per-level alphabets from which the
correction maps of the cutting construction draw their values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .groups import (
    GElement,
    SU2Element,
    quat_normalize,
)

__all__ = [
    "PointCloud",
    "FiniteSampleSet",
    "EmpiricalDistribution",
    "Alphabet",
    "radical_inverse",
    "van_der_corput",
    "halton",
    "star_discrepancy",
    "star_discrepancy_exact_1d",
    "extreme_discrepancy",
    "koksma_hlawka_bound",
    "haar_sample_su2",
    "chart_to_su2",
    "su2_to_chart",
    "chart_to_su2_array",
    "su2_to_chart_array",
    "build_sample_set",
    "default_alphabet",
    "build_s_map",
    "SMapResult",
    "DistributionTestError",
    "dist_l1",
    "product_distribution",
    "window_pair_distance",
    "window_triple_distance",
    "slab_half_width",
]


# ---------------------------------------------------------------------------
# low-discrepancy sequences
# ---------------------------------------------------------------------------

_HALTON_BASES = (2, 3, 5, 7)


def radical_inverse(base: int, i: int) -> float:
    """Digit-reversal of i in the given base, as a point of [0, 1)."""
    inv = 0.0
    denom = 1.0
    while i > 0:
        i, digit = divmod(i, base)
        denom *= base
        inv += digit / denom
    return inv


def van_der_corput(n: int, base: int = 2, start: int = 1) -> np.ndarray:
    """First n points of the base-b radical-inverse sequence."""
    return np.array([radical_inverse(base, i) for i in range(start, start + n)])


def halton(n: int, dim: int, start: int = 1) -> np.ndarray:
    """First n points of the Halton sequence in the given dimension.

    Indexing starts at 1 so the all-zero point is never produced (it would sit
    on a chart boundary).
    """
    if dim > len(_HALTON_BASES):
        raise ValueError(f"halton supports dim <= {len(_HALTON_BASES)}")
    cols = [van_der_corput(n, _HALTON_BASES[k], start=start) for k in range(dim)]
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# discrepancy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointCloud:
    """Finite list of points in [0,1]^s."""

    points: np.ndarray  # shape (N, s)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            raise ValueError("point coordinates must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


def _star_discrepancy_1d(x: np.ndarray) -> float:
    """Exact anchored discrepancy in one dimension via the sorted formula."""
    n = len(x)
    xs = np.sort(x)
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(i / n - xs, xs - (i - 1) / n)))


def star_discrepancy_exact_1d(points: Sequence) -> "Fraction":
    """Sorted-formula anchored discrepancy over exact rationals."""
    from fractions import Fraction

    n = len(points)
    if n == 0:
        raise ValueError("no points")
    xs = sorted(Fraction(p) for p in points)
    best = Fraction(0)
    for i, x in enumerate(xs, start=1):
        best = max(best, Fraction(i, n) - x, x - Fraction(i - 1, n))
    return best


def star_discrepancy(cloud: PointCloud) -> float:
    """Exact sup over anchored boxes [0, beta) of |empirical - volume|.

    Dimension 1 uses the sorted closed form.  Dimensions 2..4 evaluate every
    candidate corner of the coordinate grid at once: point counts below all
    corners come from prefix sums of an occupancy tensor, so the cost is
    O(N^s) rather than O(N^{s+1}).
    """
    n = len(cloud)
    if n == 0:
        raise ValueError("no points")
    s = cloud.dim
    if s > 4:
        raise ValueError("exact star discrepancy restricted to dim <= 4")
    pts = cloud.points
    if s == 1:
        return _star_discrepancy_1d(pts[:, 0])
    grids = [np.unique(np.concatenate([pts[:, k], [1.0]])) for k in range(s)]
    sizes = [len(g) for g in grids]
    if np.prod([sz + 1 for sz in sizes]) > 5e7:
        raise ValueError("candidate corner grid too large for exact evaluation")
    strict_occ = np.zeros([sz + 1 for sz in sizes])
    closed_occ = np.zeros([sz + 1 for sz in sizes])
    pos_strict = tuple(
        np.searchsorted(grids[k], pts[:, k], side="right") for k in range(s)
    )
    pos_closed = tuple(
        np.searchsorted(grids[k], pts[:, k], side="left") for k in range(s)
    )
    np.add.at(strict_occ, pos_strict, 1.0)
    np.add.at(closed_occ, pos_closed, 1.0)
    for axis in range(s):
        strict_occ = np.cumsum(strict_occ, axis=axis)
        closed_occ = np.cumsum(closed_occ, axis=axis)
    sl = tuple(slice(0, sz) for sz in sizes)
    strict = strict_occ[sl]
    closed = closed_occ[sl]
    vol = grids[0]
    for k in range(1, s):
        vol = np.multiply.outer(vol, grids[k])
    return float(max(np.max(vol - strict / n), np.max(closed / n - vol)))


def extreme_discrepancy(cloud: PointCloud) -> float:
    """Exact sup over boxes [alpha, beta) of |empirical - volume|."""
    n = len(cloud)
    if n == 0:
        raise ValueError("no points")
    s = cloud.dim
    if s > 4:
        raise ValueError("exact extreme discrepancy restricted to dim <= 4")
    pts = cloud.points
    lo_grids = [np.unique(np.concatenate([[0.0], pts[:, k]])) for k in range(s)]
    hi_grids = [np.unique(np.concatenate([pts[:, k], [1.0]])) for k in range(s)]
    best = 0.0
    for lo in itertools.product(*lo_grids):
        alpha = np.array(lo)
        for hi in itertools.product(*hi_grids):
            beta = np.array(hi)
            if np.any(beta < alpha):
                continue
            vol = float(np.prod(beta - alpha))
            # limits of the count as the box edges are approached from
            # either side: widest includes both faces, narrowest neither
            wide = int(np.sum(np.all((pts >= alpha) & (pts <= beta), axis=1)))
            narrow = int(np.sum(np.all((pts > alpha) & (pts < beta), axis=1)))
            best = max(best, wide / n - vol, vol - narrow / n)
    return best


def koksma_hlawka_bound(modulus: Callable[[float], float], d_star: float, s: int) -> float:
    """Quantitative equidistribution bound for a continuous integrand.

    For a point set with anchored discrepancy d_star and an integrand with
    modulus of continuity M, the integration error is at most
    (1 + 2^{2s-1}) * M(1 / floor(d_star^{-1/s})).
    """
    if d_star <= 0.0:
        raise ValueError("d_star must be positive")
    if d_star > 1.0:
        d_star = 1.0
    mesh = 1.0 / math.floor(d_star ** (-1.0 / s))
    return (1 + 2 ** (2 * s - 1)) * modulus(mesh)


# ---------------------------------------------------------------------------
# Haar sampling and the measure-transport chart
# ---------------------------------------------------------------------------

def haar_sample_su2(rng: np.random.Generator, n: Optional[int] = None):
    """Haar-uniform SU(2) elements (normalized 4-d Gaussians).

    Returns a single element when n is None, else an (n, 4) quaternion array.
    """
    if n is None:
        return SU2Element.from_array(quat_normalize(rng.standard_normal(4)))
    return quat_normalize(rng.standard_normal((n, 4)))


def chart_to_su2_array(u: np.ndarray) -> np.ndarray:
    """Vectorized chart: open cube (0,1)^3 -> unit quaternions.

    Pushes Lebesgue measure to Haar measure; coordinates are the classical
    double-polar parametrization (u1 splits the (a,b) and (c,d) circles,
    u2 and u3 are the two angles).
    """
    u = np.asarray(u, dtype=float)
    u1, u2, u3 = u[..., 0], u[..., 1], u[..., 2]
    r1 = np.sqrt(1.0 - u1)
    r2 = np.sqrt(u1)
    out = np.empty(u.shape[:-1] + (4,))
    out[..., 0] = r1 * np.sin(2 * math.pi * u2)
    out[..., 1] = r1 * np.cos(2 * math.pi * u2)
    out[..., 2] = r2 * np.sin(2 * math.pi * u3)
    out[..., 3] = r2 * np.cos(2 * math.pi * u3)
    return out


def su2_to_chart_array(q: np.ndarray) -> np.ndarray:
    """Vectorized chart inverse (defined off the two null circles)."""
    q = np.asarray(q, dtype=float)
    a, b, c, d = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    u1 = c * c + d * d
    u2 = np.mod(np.arctan2(a, b) / (2 * math.pi), 1.0)
    u3 = np.mod(np.arctan2(c, d) / (2 * math.pi), 1.0)
    return np.stack([u1, u2, u3], axis=-1)


def chart_to_su2(u: Sequence[float]) -> SU2Element:
    u = np.asarray(u, dtype=float)
    if u.shape != (3,):
        raise ValueError("chart point must have 3 coordinates")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("chart boundary")
    return SU2Element.from_array(chart_to_su2_array(u))


def su2_to_chart(m: SU2Element) -> np.ndarray:
    q = m.array()
    u1 = q[2] * q[2] + q[3] * q[3]
    if u1 <= 0.0 or u1 >= 1.0:
        raise ValueError("chart boundary")
    return su2_to_chart_array(q)


# ---------------------------------------------------------------------------
# empirical distributions and the l1 distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalDistribution:
    """Finitely supported probability vector keyed by hashable atoms."""

    weights: dict

    def __post_init__(self):
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, not 1 within 1e-12")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be nonnegative")

    @staticmethod
    def from_samples(samples: Sequence) -> "EmpiricalDistribution":
        weights: dict = {}
        n = len(samples)
        for s in samples:
            weights[s] = weights.get(s, 0.0) + 1.0 / n
        return EmpiricalDistribution(weights)

    @staticmethod
    def uniform(atoms: Sequence) -> "EmpiricalDistribution":
        n = len(atoms)
        return EmpiricalDistribution({a: 1.0 / n for a in atoms})


def dist_l1(p: EmpiricalDistribution, q: EmpiricalDistribution) -> float:
    """Sum over the union support of |p(b) - q(b)|."""
    support = set(p.weights) | set(q.weights)
    return float(sum(abs(p.weights.get(b, 0.0) - q.weights.get(b, 0.0)) for b in support))


def product_distribution(p: EmpiricalDistribution, q: EmpiricalDistribution) -> EmpiricalDistribution:
    weights = {}
    for a, wa in p.weights.items():
        for b, wb in q.weights.items():
            weights[(a, b)] = wa * wb
    return EmpiricalDistribution(weights)


# ---------------------------------------------------------------------------
# finite sample sets on the slabs S_n
# ---------------------------------------------------------------------------

@dataclass
class FiniteSampleSet:
    """Per-shell low-discrepancy net on S_n = (-K, K] x SU(2).

    The same `count` points are reused in every unit time shell [l, l+1),
    l = -K .. K-1, shifted by the integer l; this keeps the set exactly
    stackable under the integer translations the construction applies.
    Points are stored in factored form (shell offsets u in [0,1), chart
    coordinates, quaternions) so the full set never needs materializing:
    at deeper levels it has millions of virtual elements.
    """

    n: int
    half_width: int  # K: time support is (-K, K]
    u_time: np.ndarray  # (count,) fractional time offsets in [0, 1)
    chart: np.ndarray  # (count, 3) chart coordinates of the fiber points
    quats: np.ndarray  # (count, 4)

    @property
    def count(self) -> int:
        return len(self.u_time)

    @property
    def shells(self) -> range:
        return range(-self.half_width, self.half_width)

    @property
    def size(self) -> int:
        return 2 * self.half_width * self.count

    def elements(self, shells: Optional[Sequence[int]] = None):
        """Yield (shell, u, quaternion) triples, optionally restricted."""
        for l in self.shells if shells is None else shells:
            for u, q in zip(self.u_time, self.quats):
                yield l, float(u), q

    def gelements(self, shells: Optional[Sequence[int]] = None):
        return [
            GElement(l + u, SU2Element.from_array(q, renormalize=False))
            for l, u, q in self.elements(shells)
        ]

    def to_json(self, max_size: int = 200_000) -> dict:
        if self.size > max_size:
            return {
                "n": self.n,
                "half_width": self.half_width,
                "pattern": [
                    {"u": float(u), "q": [float(v) for v in q]}
                    for u, q in zip(self.u_time, self.quats)
                ],
            }
        return {
            "n": self.n,
            "half_width": self.half_width,
            "points": [
                {"t": l + u, "q": [float(v) for v in q]} for l, u, q in self.elements()
            ],
        }


def slab_half_width(n: int, a_tilde_prev: int) -> int:
    """Half-width K of the slab S_n = (-(2n-1) * a_tilde_{n-1}, ...] x SU(2)."""
    return (2 * n - 1) * a_tilde_prev


def build_sample_set(
    n: int,
    a_tilde_prev: int,
    count: int,
    rng: Optional[np.random.Generator] = None,
) -> FiniteSampleSet:
    """Per-shell net of `count` points of the 4-d Halton sequence on S_n.

    The sequence is fixed (no scrambling) so rebuilt sets are identical; the
    rng argument applies an optional Cranley-Patterson rotation when given.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = halton(count, 4)
    if rng is not None:
        pts = np.mod(pts + rng.uniform(size=4), 1.0)
        pts = np.clip(pts, 1e-9, 1 - 1e-9)
    u_time = pts[:, 0]
    chart = pts[:, 1:]
    quats = chart_to_su2_array(chart)
    return FiniteSampleSet(
        n=n,
        half_width=slab_half_width(n, a_tilde_prev),
        u_time=u_time,
        chart=chart,
        quats=quats,
    )


# ---------------------------------------------------------------------------
# correction-map alphabets and the maps s_n : H_n -> alphabet
# ---------------------------------------------------------------------------

@dataclass
class Alphabet:
    """Small finite subset of a slab S_n, in factored (shell, frac, quat) form.

    Element j is (shells[j] + u[j], quats[j]); the identity (0, I) is always
    present so the boundary pinning of the correction maps stays inside the
    alphabet.
    """

    n: int
    shells: np.ndarray  # (m,) int64
    u: np.ndarray  # (m,) float in [0, 1)
    quats: np.ndarray  # (m, 4)
    identity_index: int

    @property
    def size(self) -> int:
        return len(self.shells)

    def gelements(self) -> list[GElement]:
        return [
            GElement(int(l) + float(u), SU2Element.from_array(q, renormalize=False))
            for l, u, q in zip(self.shells, self.u, self.quats)
        ]


def default_alphabet(n: int, half_width: int, size: int = 8) -> Alphabet:
    """Identity plus size-1 Halton points on shells spread across the slab."""
    if size < 1:
        raise ValueError("alphabet size must be >= 1")
    shells = [0]
    u = [0.0]
    quats = [np.array([1.0, 0.0, 0.0, 0.0])]
    if size > 1:
        pts = halton(size - 1, 4)
        spread = np.linspace(-half_width, half_width - 1, size - 1)
        for j in range(size - 1):
            shells.append(int(round(spread[j])))
            u.append(float(pts[j, 0]))
            quats.append(chart_to_su2_array(pts[j, 1:]))
    return Alphabet(
        n=n,
        shells=np.array(shells, dtype=np.int64),
        u=np.array(u, dtype=float),
        quats=np.stack(quats),
        identity_index=0,
    )


class DistributionTestError(RuntimeError):
    """Raised when the pair-distribution check keeps failing after retries."""

    def __init__(self, n: int, distance: float, tolerance: float, retries: int):
        self.distance = distance
        self.tolerance = tolerance
        super().__init__(
            f"distribution test failed at level {n}: pair l1 distance "
            f"{distance:.4f} >= {tolerance:.4f} after {retries} retries"
        )


@dataclass
class SMapResult:
    """A correction map on H_n = {|h| < r_n}, stored by alphabet index.

    values[j] is the alphabet index assigned to h = j - (r_n - 1); the two
    boundary shifts are pinned to the identity's index.
    """

    n: int
    r: int
    alphabet: Alphabet
    values: np.ndarray  # (2r-1,) int indices into the alphabet
    pair_distance: float
    triple_distance: float
    tolerance: float
    attempts: int

    def index_of(self, h) -> np.ndarray:
        return self.values[np.asarray(h) + (self.r - 1)]

    def gelement(self, h: int) -> GElement:
        j = int(self.values[h + (self.r - 1)])
        return GElement(
            int(self.alphabet.shells[j]) + float(self.alphabet.u[j]),
            SU2Element.from_array(self.alphabet.quats[j], renormalize=False),
        )


def window_pair_distance(values: np.ndarray, alphabet_size: int, offset: int = 1) -> float:
    """L1 distance between the sliding-pair distribution at the given offset
    and the product of uniform laws on the alphabet."""
    a = values[:-offset] if offset > 0 else values
    b = values[offset:]
    m = len(a)
    counts = np.bincount(a * alphabet_size + b, minlength=alphabet_size**2)
    return float(np.sum(np.abs(counts / m - 1.0 / alphabet_size**2)))


def window_triple_distance(values: np.ndarray, alphabet_size: int) -> float:
    a, b, c = values[:-2], values[1:-1], values[2:]
    m = len(a)
    counts = np.bincount(
        (a * alphabet_size + b) * alphabet_size + c, minlength=alphabet_size**3
    )
    return float(np.sum(np.abs(counts / m - 1.0 / alphabet_size**3)))


def build_s_map(
    n: int,
    r: int,
    alphabet: Alphabet,
    eps: float,
    rng: np.random.Generator,
    max_retries: int = 5000,
) -> SMapResult:
    """Draw s_n i.i.d.-uniform over the alphabet, pin the boundary values to
    the identity, and retry until the sliding-pair distribution over the
    maximal window is eps-close in l1 to the product of uniform laws.

    The check is gated only when an admissible window exists at all, i.e.
    a width delta with r/n^2 <= delta <= r - 2 (at n = 1, and for very small
    r, there is none); triple distances are always measured but never gated
    (at desk-scale r_n an i.i.d. draw cannot meet eps on the cubed alphabet).
    """
    size = 2 * r - 1
    m = alphabet.size
    gate = n >= 2 and size >= 3 and m > 1 and (r - 2) * n * n >= r
    attempts = 0
    best = math.inf
    while True:
        attempts += 1
        values = rng.integers(0, m, size=size)
        values[0] = alphabet.identity_index
        values[-1] = alphabet.identity_index
        pair = window_pair_distance(values, m) if size >= 2 else 0.0
        if not gate or pair < eps:
            triple = window_triple_distance(values, m) if size >= 3 else 0.0
            return SMapResult(
                n=n,
                r=r,
                alphabet=alphabet,
                values=values,
                pair_distance=pair,
                triple_distance=triple,
                tolerance=eps,
                attempts=attempts,
            )
        best = min(best, pair)
        if attempts >= max_retries:
            raise DistributionTestError(n, best, eps, attempts)
