"""Exact arithmetic for SU(2), the semidirect product G = R x| SU(2), D6 and Z2.

SU(2) elements are stored as unit quaternions (a, b, c, d).  The associated
matrix is [[z, -conj(w)], [w, conj(z)]] with z = a + bi and w = c + di, and the
quaternion product here is defined so that it matches the matrix product in
that convention (tests verify this against direct 2x2 complex matmuls).

The time-one twist of the semidirect product conjugates the fiber by
diag(e^{i pi t/2}, e^{-i pi t/2}); it has period 2 in t as an automorphism,
which is why the center of G sits over the even integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "SU2Element",
    "GElement",
    "D6Element",
    "SU2_I",
    "SU2_MINUS_I",
    "SU2_H0",
    "G_IDENTITY",
    "D6_ELEMENTS",
    "su2_mul",
    "su2_inv",
    "su2_dist",
    "su2_from_angle",
    "phi",
    "g_mul",
    "g_inv",
    "g_dist",
    "conj_star",
    "d6_mul",
    "d6_inv",
    "is_central",
    "quat_mul",
    "quat_inv",
    "quat_normalize",
    "quat_phi_int",
    "quat_phi_real",
    "quat_to_matrix",
    "adjoint_matrix",
]


# ---------------------------------------------------------------------------
# vectorized quaternion kernels (shape (..., 4) float arrays)
# ---------------------------------------------------------------------------

def quat_mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Quaternion product matching the SU(2) matrix product convention above."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a1, b1, c1, d1 = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    a2, b2, c2, d2 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(np.broadcast_shapes(p.shape, q.shape), dtype=float)
    out[..., 0] = a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2
    out[..., 1] = a1 * b2 + b1 * a2 - c1 * d2 + d1 * c2
    out[..., 2] = a1 * c2 + b1 * d2 + c1 * a2 - d1 * b2
    out[..., 3] = a1 * d2 - b1 * c2 + c1 * b2 + d1 * a2
    return out


def quat_inv(q: np.ndarray) -> np.ndarray:
    """Inverse of a unit quaternion (its conjugate)."""
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    norm = np.sqrt(np.sum(q * q, axis=-1, keepdims=True))
    return q / norm


def quat_phi_int(k, q: np.ndarray) -> np.ndarray:
    """Fiber twist by an integer time: identity for even k, (a,b,c,d) ->
    (a,b,-c,-d) for odd k.  Exact, no trigonometry."""
    q = np.asarray(q, dtype=float)
    odd = np.asarray(k) % 2
    sign = np.where(odd == 0, 1.0, -1.0)
    out = q.copy()
    out[..., 2] = q[..., 2] * sign
    out[..., 3] = q[..., 3] * sign
    return out


def quat_phi_real(t, q: np.ndarray) -> np.ndarray:
    """Fiber twist by a real time t: conjugation by the diagonal one-parameter
    subgroup at angle pi*t/2.  t may be an array broadcastable against q."""
    t = np.asarray(t, dtype=float)
    ang = 0.5 * math.pi * np.mod(t, 4.0)
    u = np.zeros(ang.shape + (4,))
    u[..., 0] = np.cos(ang)
    u[..., 1] = np.sin(ang)
    return quat_mul(quat_mul(u, q), quat_inv(u))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """2x2 complex matrix [[z, -conj(w)], [w, conj(z)]] of a quaternion."""
    q = np.asarray(q, dtype=float)
    z = q[..., 0] + 1j * q[..., 1]
    w = q[..., 2] + 1j * q[..., 3]
    m = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    m[..., 0, 0] = z
    m[..., 0, 1] = -np.conj(w)
    m[..., 1, 0] = w
    m[..., 1, 1] = np.conj(z)
    return m


def adjoint_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of the conjugation action m -> q m q^{-1} on the
    imaginary part (b, c, d).  Columns are the images of i, j, k."""
    q = np.asarray(q, dtype=float)
    # The product convention here is opposite to Hamilton's, so conjugation by
    # q acts as the classical rotation matrix of the conjugate quaternion.
    a, b, c, d = q[..., 0], -q[..., 1], -q[..., 2], -q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=float)
    m[..., 0, 0] = a * a + b * b - c * c - d * d
    m[..., 0, 1] = 2 * (b * c - a * d)
    m[..., 0, 2] = 2 * (b * d + a * c)
    m[..., 1, 0] = 2 * (b * c + a * d)
    m[..., 1, 1] = a * a - b * b + c * c - d * d
    m[..., 1, 2] = 2 * (c * d - a * b)
    m[..., 2, 0] = 2 * (b * d - a * c)
    m[..., 2, 1] = 2 * (c * d + a * b)
    m[..., 2, 2] = a * a - b * b - c * c + d * d
    return m


# ---------------------------------------------------------------------------
# scalar SU(2) and G elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SU2Element:
    """Unit quaternion a + bi + cj + dk; I and -I are distinct elements."""

    q: tuple[float, float, float, float]

    def __post_init__(self):
        a, b, c, d = self.q
        norm2 = a * a + b * b + c * c + d * d
        if abs(norm2 - 1.0) > 1e-12:
            raise ValueError(f"quaternion norm^2 {norm2!r} is not 1 within 1e-12")

    @staticmethod
    def from_array(q: np.ndarray, renormalize: bool = True) -> "SU2Element":
        q = np.asarray(q, dtype=float)
        if renormalize:
            q = quat_normalize(q)
        return SU2Element((float(q[0]), float(q[1]), float(q[2]), float(q[3])))

    def array(self) -> np.ndarray:
        return np.array(self.q, dtype=float)

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.array())


SU2_I = SU2Element((1.0, 0.0, 0.0, 0.0))
SU2_MINUS_I = SU2Element((-1.0, 0.0, 0.0, 0.0))
# fiber element with matrix [[0, -1], [1, 0]] (the quaternion j)
SU2_H0 = SU2Element((0.0, 0.0, 1.0, 0.0))


def su2_mul(p: SU2Element, q: SU2Element) -> SU2Element:
    """Product of two SU(2) elements, renormalized to control drift."""
    return SU2Element.from_array(quat_mul(p.array(), q.array()))


def su2_inv(p: SU2Element) -> SU2Element:
    return SU2Element.from_array(quat_inv(p.array()), renormalize=False)


def su2_dist(p: SU2Element, q: SU2Element) -> float:
    """Max componentwise quaternion distance (distinguishes M from -M)."""
    return float(np.max(np.abs(p.array() - q.array())))


def su2_from_angle(t: float) -> SU2Element:
    """Diagonal element diag(e^{2 pi i t}, e^{-2 pi i t}) as a quaternion."""
    return SU2Element((math.cos(2 * math.pi * t), math.sin(2 * math.pi * t), 0.0, 0.0))


def phi(t: float, n: SU2Element) -> SU2Element:
    """Twist automorphism: conjugation by diag(e^{i pi t/2}, e^{-i pi t/2}).

    Integer times take an exact branch (the conjugator is then one of
    1, i, -1, -i), so the period-2 identity holds to machine precision.
    """
    ti = round(t)
    if t == ti:
        return SU2Element.from_array(quat_phi_int(ti, n.array()), renormalize=False)
    return SU2Element.from_array(quat_phi_real(t, n.array()))


@dataclass(frozen=True)
class GElement:
    """Element (t, m) of G with group law (t,M)(s,N) = (t+s, M phi_t(N))."""

    t: float
    m: SU2Element


G_IDENTITY = GElement(0.0, SU2_I)


def g_mul(x: GElement, y: GElement) -> GElement:
    return GElement(x.t + y.t, su2_mul(x.m, phi(x.t, y.m)))


def g_inv(x: GElement) -> GElement:
    return GElement(-x.t, phi(-x.t, su2_inv(x.m)))


def g_dist(x: GElement, y: GElement) -> float:
    return max(abs(x.t - y.t), su2_dist(x.m, y.m))


def conj_star(k: GElement) -> GElement:
    """Conjugation by the time-one translate: (t, M) -> (t, phi_1(M))."""
    return GElement(k.t, phi(1, k.m))


# ---------------------------------------------------------------------------
# D6 (the symmetric group on three letters, smallest non-abelian group)
# ---------------------------------------------------------------------------

_D6_LABELS = ("e", "a", "b", "c", "d", "f")

# Cayley table, row * column.
_D6_TABLE = {
    "e": {"e": "e", "a": "a", "b": "b", "c": "c", "d": "d", "f": "f"},
    "a": {"e": "a", "a": "e", "b": "d", "c": "f", "d": "b", "f": "c"},
    "b": {"e": "b", "a": "f", "b": "e", "c": "d", "d": "c", "f": "a"},
    "c": {"e": "c", "a": "d", "b": "f", "c": "e", "d": "a", "f": "b"},
    "d": {"e": "d", "a": "c", "b": "a", "c": "b", "d": "f", "f": "e"},
    "f": {"e": "f", "a": "b", "b": "c", "c": "a", "d": "e", "f": "d"},
}


@dataclass(frozen=True)
class D6Element:
    label: str

    def __post_init__(self):
        if self.label not in _D6_LABELS:
            raise ValueError(f"unknown D6 label {self.label!r}")


D6_ELEMENTS = tuple(D6Element(s) for s in _D6_LABELS)
D6_IDENTITY = D6Element("e")


def d6_mul(g: D6Element, h: D6Element) -> D6Element:
    return D6Element(_D6_TABLE[g.label][h.label])


def d6_inv(g: D6Element) -> D6Element:
    for h in D6_ELEMENTS:
        if _D6_TABLE[g.label][h.label] == "e":
            return h
    raise AssertionError("Cayley table has no inverse row")  # unreachable


# ---------------------------------------------------------------------------
# centrality probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CentralityResult:
    central: bool
    witness: Optional[GElement]

    def __bool__(self) -> bool:
        return self.central


def _haar_quaternions(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 4))
    return quat_normalize(v)


def is_central(k: GElement, trials: int, rng: np.random.Generator) -> CentralityResult:
    """Probabilistic centrality test: commute with `trials` random elements.

    Time coordinates always commute exactly, so only the fiber is compared,
    at tolerance 1e-10.  Random elements mix integer, half-integer and
    continuous times so that the twist is exercised away from its period.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    times = rng.uniform(-4.0, 4.0, size=trials)
    # make sure some plain time translations are tested as well
    times[::3] = np.round(times[::3] * 2) / 2 + 0.25
    quats = _haar_quaternions(rng, trials)
    quats[1::3] = np.array([1.0, 0.0, 0.0, 0.0])
    kq = k.m.array()
    kt_twist = (
        quat_phi_int(round(k.t), quats)
        if k.t == round(k.t)
        else quat_phi_real(np.full(trials, k.t), quats)
    )
    left = quat_mul(quats, quat_phi_real(times, np.broadcast_to(kq, quats.shape)))
    right = quat_mul(np.broadcast_to(kq, quats.shape), kt_twist)
    bad = np.max(np.abs(left - right), axis=-1) > 1e-10
    if np.any(bad):
        i = int(np.argmax(bad))
        return CentralityResult(False, GElement(float(times[i]), SU2Element.from_array(quats[i])))
    return CentralityResult(True, None)
