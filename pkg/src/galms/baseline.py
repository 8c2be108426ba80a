"""Batch SVD (Kabsch) rotation estimate from the cross-covariance."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

MAX_SWEEPS = 60
OFF_TOL = 1e-14


class ConvergenceError(RuntimeError):
    pass


class DegenerateConfigurationError(ValueError):
    pass


class SvdFactors(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return self.u @ np.diag(self.s) @ self.v.T


def cross_covariance(pairs, use_noisy=True):
    """``H = sum_n x_n t_n^T`` with ``t`` the observed (or clean) target."""
    if len(pairs) == 0:
        raise ValueError("need at least one pair")
    x = pairs.x
    t = pairs.targets(use_noisy)
    return x.T @ t


def _symmetric_rotation(p, q, r):
    """(c, s) with [[c, s], [-s, c]]^T [[p, q], [q, r]] [[c, s], [-s, c]] diagonal."""
    if q == 0.0:
        return 1.0, 0.0
    zeta = (r - p) / (2.0 * q)
    t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
    c = 1.0 / math.hypot(1.0, t)
    return c, c * t


_OFF = ~np.eye(3, dtype=bool)


def _off_norm(a):
    return math.sqrt(float(np.sum(a[_OFF] ** 2)))


def svd3(m):
    """Two-sided Jacobi SVD of a 3x3 matrix.

    Each (p, q) step first rotates rows so the 2x2 block is symmetric, then
    diagonalizes it with a symmetric Jacobi rotation applied on both sides.
    Singular values come back non-negative and descending.
    """
    a = np.array(m, dtype=np.float64)
    if a.shape != (3, 3) or not np.all(np.isfinite(a)):
        raise ValueError("svd3 needs a finite 3x3 matrix")
    u = np.eye(3)
    v = np.eye(3)
    scale = float(np.linalg.norm(a))
    if scale > 0.0:
        for _ in range(MAX_SWEEPS):
            if _off_norm(a) <= OFF_TOL * scale:
                break
            for p, q in ((0, 1), (0, 2), (1, 2)):
                w, x, y, z = a[p, p], a[p, q], a[q, p], a[q, q]
                phi = math.atan2(y - x, w + z)
                c1, s1 = math.cos(phi), math.sin(phi)
                g1 = np.eye(3)
                g1[p, p], g1[p, q], g1[q, p], g1[q, q] = c1, s1, -s1, c1
                a = g1 @ a
                c2, s2 = _symmetric_rotation(a[p, p], 0.5 * (a[p, q] + a[q, p]), a[q, q])
                j = np.eye(3)
                j[p, p], j[p, q], j[q, p], j[q, q] = c2, s2, -s2, c2
                a = j.T @ a @ j
                u = u @ g1.T @ j
                v = v @ j
        else:
            if _off_norm(a) > OFF_TOL * scale:
                raise ConvergenceError(
                    f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps "
                    f"(off-diagonal {_off_norm(a)!r})")
    s = np.diag(a).copy()
    for k in range(3):
        if s[k] < 0.0:
            s[k] = -s[k]
            u[:, k] = -u[:, k]
    order = np.argsort(-s, kind="stable")
    return SvdFactors(u[:, order], s[order], v[:, order])


def kabsch_rotation(pairs, use_noisy=True):
    """Rotation ``R`` minimizing ``sum |t_n - R x_n|^2`` (det R = +1)."""
    h = cross_covariance(pairs, use_noisy)
    u, s, v = svd3(h)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateConfigurationError(
            "cross-covariance has rank < 2; rotation is not determined")
    d = math.copysign(1.0, np.linalg.det(v @ u.T))
    return v @ np.diag([1.0, 1.0, d]) @ u.T


def rotation_cost(rot, pairs, use_noisy=True):
    """Mean ``|t_n - R x_n|^2``."""
    t = pairs.targets(use_noisy)
    e = t - pairs.x @ rot.T
    return float(np.mean(np.sum(e * e, axis=1)))
