"""Fixed-size geometric algebra of R^3.

Multivectors carry 8 coefficients over the ordered basis
``[1, e1, e2, e3, e12, e23, e31, I]``.  The stored bivector is ``e31``;
``e13`` is represented as ``-e31``.
"""
from __future__ import annotations

import math

import numpy as np

from .kernels import sandwich

__all__ = [
    "BLADES", "GRADES", "Multivector", "DegenerateRotorError",
    "geometric_product", "outer_product", "reverse", "scalar_product",
    "magnitude", "grade", "vector", "rotor", "scalar",
    "rotor_apply", "rotor_normalize", "rotor_from_axis_angle",
    "rotor_from_euler_xyz", "exp_bivector", "rotor_to_matrix",
    "matrix_to_rotor", "rotor_distance", "rotation_angle", "even4",
    "ONE", "E1", "E2", "E3", "E12", "E23", "E31", "I",
    "EPS_NORM",
]

# generator indices of each stored blade, in storage order
BLADES = ((), (1,), (2,), (3,), (1, 2), (2, 3), (3, 1), (1, 2, 3))
GRADES = np.array([len(b) for b in BLADES])
_EVEN = np.array([0, 4, 5, 6])
_ODD = np.array([1, 2, 3, 7])

EPS_NORM = 1e-12
UNIT_TOL = 1e-9


class DegenerateRotorError(ValueError):
    """Raised when a rotor's magnitude is too small to normalize."""


def _blade_bitmap(blade):
    """Bitmap and sign relating a stored blade to its ascending-order form."""
    bits, sign = 0, 1
    order = list(blade)
    # e31 = -e13; count inversions to get the sign
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if order[i] > order[j]:
                sign = -sign
    for g in order:
        bits |= 1 << (g - 1)
    return bits, sign


def _reorder_sign(a, b):
    """Sign from moving canonical blade ``b`` past ``a`` (Euclidean metric)."""
    a >>= 1
    swaps = 0
    while a:
        swaps += bin(a & b).count("1")
        a >>= 1
    return -1 if swaps & 1 else 1


def _build_tables():
    bitmap = [_blade_bitmap(b) for b in BLADES]
    slot_of = {bits: k for k, (bits, _) in enumerate(bitmap)}
    index = np.zeros((8, 8), dtype=np.intp)
    sign = np.zeros((8, 8))
    wedge = np.zeros((8, 8), dtype=bool)
    for i, (ba, sa) in enumerate(bitmap):
        for j, (bb, sb) in enumerate(bitmap):
            bits = ba ^ bb
            k = slot_of[bits]
            s = sa * sb * _reorder_sign(ba, bb) * bitmap[k][1]
            index[i, j] = k
            sign[i, j] = s
            wedge[i, j] = (ba & bb) == 0
    return index, sign, wedge


# Cayley table: e_i e_j = _SIGN[i, j] * e_{_INDEX[i, j]}
_INDEX, _SIGN, _WEDGE = _build_tables()
_REV = np.array([1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0])


class Multivector:
    """Immutable element of G(R^3)."""

    __slots__ = ("c",)

    def __init__(self, coeffs=None):
        if coeffs is None:
            c = np.zeros(8)
        else:
            c = np.array(coeffs, dtype=np.float64)
            if c.shape != (8,):
                raise ValueError(f"expected 8 coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    def __setattr__(self, name, value):
        raise AttributeError("Multivector is immutable")

    def __repr__(self):
        names = ("", "e1", "e2", "e3", "e12", "e23", "e31", "I")
        terms = [f"{float(v)!r}{'*' + n if n else ''}" for v, n in zip(self.c, names) if v != 0.0]
        return f"Multivector({' + '.join(terms) or '0'})"

    def __getitem__(self, k):
        return float(self.c[k])

    def __iter__(self):
        return iter(self.c.tolist())

    def __len__(self):
        return 8

    def __eq__(self, other):
        if isinstance(other, Multivector):
            return bool(np.array_equal(self.c, other.c))
        return NotImplemented

    __hash__ = None

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = scalar(other)
        if not isinstance(other, Multivector):
            return NotImplemented
        return Multivector(self.c + other.c)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = scalar(other)
        if not isinstance(other, Multivector):
            return NotImplemented
        return Multivector(self.c - other.c)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Multivector(-self.c)

    def __mul__(self, other):
        if isinstance(other, Multivector):
            return geometric_product(self, other)
        if isinstance(other, (int, float, np.floating)):
            return Multivector(self.c * float(other))
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return Multivector(float(other) * self.c)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return Multivector(self.c / float(other))
        return NotImplemented

    def __xor__(self, other):
        return outer_product(self, other)

    def __invert__(self):
        return reverse(self)

    def grade(self, g):
        return grade(self, g)

    @property
    def scalar(self):
        return float(self.c[0])

    @property
    def vector_part(self):
        """The grade-1 coefficients as a length-3 array."""
        return self.c[1:4].copy()

    def is_grade(self, g, tol=0.0):
        """True when every coefficient outside grade ``g`` is within ``tol``."""
        off = self.c[GRADES != g]
        return bool(np.all(np.abs(off) <= tol))

    def is_even(self, tol=0.0):
        return bool(np.all(np.abs(self.c[_ODD]) <= tol))


def scalar(v):
    return Multivector([v, 0, 0, 0, 0, 0, 0, 0])


def vector(x, y=None, z=None):
    """Grade-1 multivector from three coordinates or a length-3 sequence."""
    if y is None:
        x, y, z = x
    return Multivector([0, x, y, z, 0, 0, 0, 0])


def rotor(s, b12=0.0, b23=0.0, b31=0.0):
    return Multivector([s, 0, 0, 0, b12, b23, b31, 0])


ONE = scalar(1.0)
E1 = vector(1.0, 0.0, 0.0)
E2 = vector(0.0, 1.0, 0.0)
E3 = vector(0.0, 0.0, 1.0)
E12 = Multivector([0, 0, 0, 0, 1, 0, 0, 0])
E23 = Multivector([0, 0, 0, 0, 0, 1, 0, 0])
E31 = Multivector([0, 0, 0, 0, 0, 0, 1, 0])
I = Multivector([0, 0, 0, 0, 0, 0, 0, 1])


def _fold(a, b, mask=None):
    terms = _SIGN * np.outer(a, b)
    if mask is not None:
        terms = np.where(mask, terms, 0.0)
    return np.bincount(_INDEX.ravel(), weights=terms.ravel(), minlength=8)


def geometric_product(a, b):
    return Multivector(_fold(a.c, b.c))


def outer_product(a, b):
    """Graded wedge: blade pairs sharing a generator contribute nothing."""
    return Multivector(_fold(a.c, b.c, _WEDGE))


def reverse(a):
    return Multivector(_REV * a.c)


_DIAG_SIGN = np.diag(_SIGN).copy()


def scalar_product(a, b):
    """Grade-0 part of ``a b``, summed in the same order as the product."""
    acc = 0.0
    for t in _DIAG_SIGN * a.c * b.c:
        acc += t
    return float(acc)


def magnitude(a):
    return math.sqrt(float(np.dot(a.c, a.c)))


def grade(a, g):
    if g not in (0, 1, 2, 3):
        raise ValueError(f"grade must be 0..3 in G(R^3), got {g!r}")
    return Multivector(np.where(GRADES == g, a.c, 0.0))


def _require_unit(r, tol=UNIT_TOL):
    if not r.is_even():
        raise ValueError(f"rotor must be even-grade: {r!r}")
    n = magnitude(r)
    if abs(n - 1.0) > tol:
        raise ValueError(f"rotor is not unit (|r| = {n!r})")


def even4(r):
    """The even coefficients ``(s, b12, b23, b31)`` as floats."""
    c = r.c
    return float(c[0]), float(c[4]), float(c[5]), float(c[6])


def rotor_apply(r, x):
    """Rotate vector ``x`` by the sandwich ``r x ~r``."""
    _require_unit(r)
    if not x.is_grade(1):
        raise ValueError(f"expected a grade-1 vector, got {x!r}")
    z1, z2, z3, z7 = sandwich(even4(r), (float(x.c[1]), float(x.c[2]), float(x.c[3])))
    if abs(z7) >= 1e-12 * max(magnitude(x), 1e-300):
        raise ArithmeticError(f"sandwich left a trivector residue {z7!r}")
    return vector(z1, z2, z3)


def rotor_normalize(r):
    n = magnitude(r)
    if not n > EPS_NORM:
        raise DegenerateRotorError(f"cannot normalize rotor with |r| = {n!r}")
    return Multivector(r.c / n)


def exp_bivector(b):
    """``exp(B) = cos|B| + (B/|B|) sin|B|`` for a pure bivector ``B``."""
    if not b.is_grade(2):
        raise ValueError(f"exp_bivector needs a pure bivector, got {b!r}")
    theta = magnitude(b)
    if theta == 0.0:
        return ONE
    return scalar(math.cos(theta)) + b * (math.sin(theta) / theta)


def _dual_bivector(axis):
    ax, ay, az = axis
    return Multivector([0, 0, 0, 0, az, ax, ay, 0])


def rotor_from_axis_angle(axis, angle):
    """Rotor turning vectors by ``angle`` (right-handed) about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    n = float(np.linalg.norm(axis))
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    if abs(n - 1.0) > UNIT_TOL:
        raise ValueError(f"rotation axis must be unit length (|axis| = {n!r})")
    half = 0.5 * angle
    return scalar(math.cos(half)) - _dual_bivector(axis) * math.sin(half)


def rotor_from_euler_xyz(ax, ay, az, order="intrinsic"):
    """Rotor for angles (radians) about x, y and z.

    ``"intrinsic"``: R = Rx Ry Rz (x first, then the moved y, then the
    moved z).  ``"extrinsic"``: R = Rz Ry Rx (fixed axes x, y, z in turn).
    """
    rx = rotor_from_axis_angle((1.0, 0.0, 0.0), ax)
    ry = rotor_from_axis_angle((0.0, 1.0, 0.0), ay)
    rz = rotor_from_axis_angle((0.0, 0.0, 1.0), az)
    if order == "intrinsic":
        return rotor_normalize(rx * ry * rz)
    if order == "extrinsic":
        return rotor_normalize(rz * ry * rx)
    raise ValueError(f"unknown Euler order {order!r}")


def rotor_to_matrix(r):
    """3x3 rotation matrix whose column j is ``r e_j ~r``."""
    _require_unit(r)
    # unit quaternion (w, x, y, z) carried by the rotor
    w, qz, qx, qy = r.c[0], -r.c[4], -r.c[5], -r.c[6]
    return np.array([
        [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - w * qz), 2 * (qx * qz + w * qy)],
        [2 * (qx * qy + w * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - w * qx)],
        [2 * (qx * qz - w * qy), 2 * (qy * qz + w * qx), 1 - 2 * (qx * qx + qy * qy)],
    ])


def _check_rotation_matrix(m, tol=1e-9):
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise ValueError("rotation matrix must be a finite 3x3 array")
    if np.max(np.abs(m.T @ m - np.eye(3))) > tol:
        raise ValueError("matrix is not orthogonal")
    if abs(np.linalg.det(m) - 1.0) > tol:
        raise ValueError("matrix determinant is not +1")
    return m


def matrix_to_rotor(m):
    """Inverse of :func:`rotor_to_matrix`, with ``c[0] >= 0``.

    Uses the largest-diagonal branch so 180 degree rotations stay stable.
    """
    m = _check_rotation_matrix(m)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    cand = (tr, m[0, 0], m[1, 1], m[2, 2])
    k = int(np.argmax(cand))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        w = 0.25 * s
        qx = (m[2, 1] - m[1, 2]) / s
        qy = (m[0, 2] - m[2, 0]) / s
        qz = (m[1, 0] - m[0, 1]) / s
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        w = (m[2, 1] - m[1, 2]) / s
        qx = 0.25 * s
        qy = (m[0, 1] + m[1, 0]) / s
        qz = (m[0, 2] + m[2, 0]) / s
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        w = (m[0, 2] - m[2, 0]) / s
        qx = (m[0, 1] + m[1, 0]) / s
        qy = 0.25 * s
        qz = (m[1, 2] + m[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        w = (m[1, 0] - m[0, 1]) / s
        qx = (m[0, 2] + m[2, 0]) / s
        qy = (m[1, 2] + m[2, 1]) / s
        qz = 0.25 * s
    r = rotor_normalize(rotor(w, -qz, -qx, -qy))
    return _canonical_sign(r)


def _canonical_sign(r):
    c = r.c
    if c[0] > 0.0:
        return r
    if c[0] < 0.0:
        return -r
    for k in (4, 5, 6):
        if c[k] != 0.0:
            return r if c[k] > 0.0 else -r
    return r


def rotor_distance(a, b):
    """``min(|a - b|, |a + b|)``: distance modulo the double cover."""
    return min(magnitude(a - b), magnitude(a + b))


def rotation_angle(a, b):
    """Angle in radians of the relative rotation between unit rotors."""
    d = abs(float(np.dot(a.c[_EVEN], b.c[_EVEN])))
    return 2.0 * math.acos(min(1.0, d))
