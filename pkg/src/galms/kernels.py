"""Hand-expanded rotor arithmetic.

Rotors are ``(s, b12, b23, b31)`` tuples and vectors ``(x1, x2, x3)``.  Only
``+``, ``-`` and ``*`` are used, so arguments may be floats, numpy arrays
(elementwise lanes) or operation-counting numbers, with identical rounding.
"""
import numpy as np


def sandwich(r, x):
    """``r x ~r`` as odd coefficients ``(z1, z2, z3, z123)``.

    The trivector slot is zero up to rounding for an even ``r``.
    """
    s, a, b, c = r
    x1, x2, x3 = x
    # r x: vector part p1..p3 and trivector p7
    p1 = s * x1 + a * x2 - c * x3
    p2 = s * x2 - a * x1 + b * x3
    p3 = s * x3 - b * x2 + c * x1
    p7 = a * x3 + b * x1 + c * x2
    # (r x) ~r
    z1 = s * p1 + a * p2 - c * p3 + b * p7
    z2 = s * p2 - a * p1 + b * p3 + c * p7
    z3 = s * p3 + c * p1 - b * p2 + a * p7
    z7 = s * p7 - b * p1 - c * p2 - a * p3
    return z1, z2, z3, z7


def wedge(y, z):
    """``y ^ z`` as an even 4-tuple (zero scalar slot)."""
    y1, y2, y3 = y
    z1, z2, z3 = z[0], z[1], z[2]
    return 0.0, y1 * z2 - y2 * z1, y2 * z3 - y3 * z2, y3 * z1 - y1 * z3


def scaled_product(mu, w, r):
    """``(mu w) r`` for even 4-tuples ``w`` and ``r``."""
    u0, u12, u23, u31 = mu * w[0], mu * w[1], mu * w[2], mu * w[3]
    s, a, b, c = r
    return (
        u0 * s - u12 * a - u23 * b - u31 * c,
        u0 * a + u12 * s - u23 * c + u31 * b,
        u0 * b + u23 * s + u12 * c - u31 * a,
        u0 * c + u31 * s - u12 * b + u23 * a,
    )


def add4(r, g):
    return r[0] + g[0], r[1] + g[1], r[2] + g[2], r[3] + g[3]


def norm4(r):
    s, a, b, c = r
    return np.sqrt(s * s + a * a + b * b + c * c)


def normalize4(r):
    n = norm4(r)
    return r[0] / n, r[1] / n, r[2] / n, r[3] / n


def squared_error(y, z):
    e1, e2, e3 = y[0] - z[0], y[1] - z[1], y[2] - z[2]
    return e1 * e1 + e2 * e2 + e3 * e3
