"""GA-LMS rotor estimation.

The per-pair update is ``r <- r + mu * [d ^ (r x ~r)] r`` followed by
normalization.  The arithmetic lives in small kernels written against
plain ``+ - *`` so the same code runs on Python floats, on numpy arrays
(one lane per ensemble realization) and on :class:`CountingFloat`
(operation counting).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import algebra as ga
from .algebra import Multivector
from .kernels import add4, normalize4, norm4 as _norm4, sandwich, scaled_product, squared_error, wedge

# r0 = 0.5 + 0.5 e12 + 0.5 e23 + 0.5 e31
INITIAL_ROTOR = ga.rotor(0.5, 0.5, 0.5, 0.5)
DIVERGENCE_NORM = 1e6
DB_FLOOR = -300.0
POWER_FLOOR = 1e-30


class DivergenceError(RuntimeError):
    def __init__(self, iteration, norm):
        super().__init__(f"filter diverged at iteration {iteration} (|r| = {norm!r})")
        self.iteration = iteration
        self.norm = norm


def raw_lms_update(r, x, d, mu):
    """Unnormalized GA-LMS update; returns ``(r_new, r x ~r)``."""
    z = sandwich(r, x)
    return add4(r, scaled_product(mu, wedge(d, z), r)), z


def _even4(r):
    return ga.even4(r)


def _from4(r):
    return ga.rotor(float(r[0]), float(r[1]), float(r[2]), float(r[3]))


# ---------------------------------------------------------------------------
# data types

class CorrespondencePair(NamedTuple):
    """Source ``x``, clean target ``y`` and observed target ``d`` (meters)."""

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray

    @classmethod
    def clean(cls, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return cls(x, y, y)

    def target(self, use_noisy):
        return self.d if use_noisy else self.y


@dataclass(frozen=True)
class Correspondences:
    """Ordered pair stream stored as ``(K, 3)`` arrays."""

    x: np.ndarray
    y: np.ndarray
    d: Optional[np.ndarray] = None
    inlier: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64).reshape(-1, 3)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1, 3)
        d = y if self.d is None else np.asarray(self.d, dtype=np.float64).reshape(-1, 3)
        if not (len(x) == len(y) == len(d)):
            raise ValueError("source and target arrays differ in length")
        inlier = (np.ones(len(x), dtype=bool) if self.inlier is None
                  else np.asarray(self.inlier, dtype=bool))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "inlier", inlier)

    def __len__(self):
        return len(self.x)

    def __getitem__(self, k):
        if isinstance(k, slice) or isinstance(k, np.ndarray):
            return Correspondences(self.x[k], self.y[k], self.d[k], self.inlier[k])
        return CorrespondencePair(self.x[k], self.y[k], self.d[k])

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def inliers(self):
        return self[np.flatnonzero(self.inlier)]

    def targets(self, use_noisy):
        return self.d if use_noisy else self.y


@dataclass(frozen=True)
class FilterConfig:
    mu: float
    rank_m: int = 1
    max_iterations: Optional[int] = None
    normalize_each_step: bool = True
    noise_variance: float = 0.0
    seed: int = 0
    initial_rotor: Multivector = INITIAL_ROTOR

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be finite and positive, got {self.mu!r}")
        if self.rank_m < 1:
            raise ValueError(f"rank_m must be >= 1, got {self.rank_m!r}")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")


@dataclass(frozen=True)
class FilterState:
    r: Multivector
    iteration: int = 0


def to_db(values):
    """``10 log10`` with 0 mapped to ``-inf``."""
    v = np.asarray(values, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(v)


def report_db(value):
    """dB for reports: clamps powers below 1e-30 to -300 dB."""
    if value is None:
        return None
    if value < POWER_FLOOR:
        return DB_FLOOR
    return 10.0 * math.log10(value)


@dataclass
class LearningCurve:
    """Per-iteration squared error, cost and EMSE (m^2)."""

    sq_err: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cost: Optional[np.ndarray] = None
    emse: Optional[np.ndarray] = None

    def __post_init__(self):
        self.sq_err = np.asarray(self.sq_err, dtype=np.float64)
        n = len(self.sq_err)
        for name in ("cost", "emse"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64)
                if len(v) != n:
                    raise ValueError(f"{name} length {len(v)} != {n}")
                setattr(self, name, v)

    def __len__(self):
        return len(self.sq_err)

    @property
    def i(self):
        return np.arange(1, len(self) + 1)

    @property
    def sq_err_db(self):
        return to_db(self.sq_err)

    @property
    def cost_db(self):
        return None if self.cost is None else to_db(self.cost)

    @property
    def emse_db(self):
        return None if self.emse is None else to_db(self.emse)


# ---------------------------------------------------------------------------
# cost and gradient

def _as_pairs(pairs):
    if len(pairs) == 0:
        raise ValueError("need at least one correspondence pair")
    return pairs


def error_vector(r, pair, use_noisy=False):
    """``e = y - r x ~r`` (or ``d`` in place of ``y``)."""
    x = ga.vector(pair.x)
    t = ga.vector(pair.target(use_noisy))
    return t - ga.rotor_apply(r, x)


def cost_J(r, pairs, use_noisy=False):
    """Mean squared error magnitude over ``pairs``."""
    pairs = _as_pairs(pairs)
    total = 0.0
    for p in pairs:
        e = error_vector(r, p, use_noisy)
        total += ga.scalar_product(e, ~e)
    return total / len(pairs)


def cost_J_expanded(r, pairs, use_noisy=False):
    """The same cost via ``|y|^2 + |x|^2 - 2<y r x ~r>`` (unit ``r``)."""
    pairs = _as_pairs(pairs)
    total = 0.0
    rr = ~r
    for p in pairs:
        x = ga.vector(p.x)
        y = ga.vector(p.target(use_noisy))
        total += (ga.scalar_product(y, y) + ga.scalar_product(x, x)
                  - 2.0 * (y * r * x * rr).scalar)
    return total / len(pairs)


def wedge_sum(r, pairs, use_noisy=False):
    """``sum_n y_n ^ (r x_n ~r)``."""
    w = Multivector()
    for p in _as_pairs(pairs):
        z = ga.rotor_apply(r, ga.vector(p.x))
        w = w + (ga.vector(p.target(use_noisy)) ^ z)
    return w


def gradient_J(r, pairs, use_noisy=False, normalized=True):
    """Gradient ``4 ~r sum y_n ^ (r x_n ~r)``, divided by K when ``normalized``."""
    g = 4.0 * (~r * wedge_sum(r, pairs, use_noisy))
    return g / len(pairs) if normalized else g


def gradient_J_unreduced(r, pairs, use_noisy=False, normalized=True):
    """Same gradient from ``-2 sum [x ~r y - ~r (y r x) ~r]``."""
    rr = ~r
    acc = Multivector()
    for p in _as_pairs(pairs):
        x = ga.vector(p.x)
        y = ga.vector(p.target(use_noisy))
        acc = acc + (x * rr * y - rr * (y * r * x) * rr)
    g = -2.0 * acc
    return g / len(pairs) if normalized else g


def directional_derivative(r, pairs, b, use_noisy=False):
    """Analytic ``d/dtau J(exp(tau B) r)`` at 0, read off the gradient.

    Equals ``<B r grad J>`` = ``(4/K) sum <B (y ^ (r x ~r))>``.
    """
    return ga.scalar_product(b * r, gradient_J(r, pairs, use_noisy))


def directional_derivative_fd(r, pairs, b, h=1e-6, use_noisy=False):
    """Central difference of ``J`` along the geodesic ``exp(tau B) r``."""
    if not b.is_grade(2):
        raise ValueError("probe direction must be a pure bivector")
    if abs(ga.magnitude(b) - 1.0) > 1e-9:
        raise ValueError("probe direction must be a unit bivector")
    if not 1e-8 <= h <= 1e-4:
        raise ValueError(f"step h={h!r} outside [1e-8, 1e-4]")
    plus = ga.rotor_normalize(ga.exp_bivector(b * h) * r)
    minus = ga.rotor_normalize(ga.exp_bivector(b * -h) * r)
    return (cost_J(plus, pairs, use_noisy) - cost_J(minus, pairs, use_noisy)) / (2.0 * h)


# ---------------------------------------------------------------------------
# filter steps

def _finish(r_raw, iteration, config):
    n = float(_norm4(r_raw))
    if not math.isfinite(n) or n > DIVERGENCE_NORM:
        raise DivergenceError(iteration, n)
    if n <= ga.EPS_NORM:
        raise ga.DegenerateRotorError(f"rotor collapsed at iteration {iteration} (|r| = {n!r})")
    if config.normalize_each_step:
        r_raw = normalize4(r_raw)
    return FilterState(_from4(r_raw), iteration)


def lms_step(state, pair, config):
    """One GA-LMS iteration on a single pair (observed target ``d``)."""
    r_raw, _ = raw_lms_update(_even4(state.r), tuple(pair.x), tuple(pair.d), config.mu)
    return _finish(r_raw, state.iteration + 1, config)


def sd_step(state, pairs, m, config):
    """Rank-``m`` steepest descent using the first ``m`` pairs."""
    if not 1 <= m <= len(pairs):
        raise ValueError(f"rank m={m!r} outside [1, {len(pairs)}]")
    r = _even4(state.r)
    w = None
    for k in range(m):
        p = pairs[k]
        wk = wedge(tuple(p.d), sandwich(r, tuple(p.x)))
        w = wk if w is None else add4(w, wk)
    scale = config.mu * 4.0 / m
    r_raw = add4(r, scaled_product(scale, w, r))
    return _finish(r_raw, state.iteration + 1, config)


# ---------------------------------------------------------------------------
# operation counting

class OpTally:
    def __init__(self):
        self.mul = 0
        self.add = 0

    def as_tuple(self):
        return self.mul, self.add


class CountingFloat:
    """Float that records real multiplications and additions in a tally."""

    __slots__ = ("v", "t")

    def __init__(self, v, tally):
        self.v = float(v)
        self.t = tally

    @staticmethod
    def _val(o):
        return o.v if isinstance(o, CountingFloat) else float(o)

    def __mul__(self, o):
        self.t.mul += 1
        return CountingFloat(self.v * self._val(o), self.t)

    def __rmul__(self, o):
        self.t.mul += 1
        return CountingFloat(self._val(o) * self.v, self.t)

    def __add__(self, o):
        self.t.add += 1
        return CountingFloat(self.v + self._val(o), self.t)

    def __radd__(self, o):
        self.t.add += 1
        return CountingFloat(self._val(o) + self.v, self.t)

    def __sub__(self, o):
        self.t.add += 1
        return CountingFloat(self.v - self._val(o), self.t)

    def __rsub__(self, o):
        self.t.add += 1
        return CountingFloat(self._val(o) - self.v, self.t)

    def __neg__(self):
        return CountingFloat(-self.v, self.t)


def _counted(values, tally):
    return tuple(CountingFloat(v, tally) for v in values)


def _plain(values):
    return tuple(v.v if isinstance(v, CountingFloat) else float(v) for v in values)


STAGES = ("rotate", "wedge", "scale", "accumulate")


def op_counted_lms_step(state, pair, config):
    """:func:`lms_step` with real-operation counts per stage.

    Returns ``(new_state, counts)`` where ``counts`` maps each stage name and
    ``"total"`` to ``(real_multiplications, real_additions)``.  The
    normalization that follows the update is not counted.
    """
    counts = {}
    r = _counted(_even4(state.r), OpTally())
    x = _counted(pair.x, OpTally())
    d = _counted(pair.d, OpTally())

    def stage(name, fn, *args):
        tally = OpTally()
        args = [_counted(_plain(a), tally) if isinstance(a, tuple) else CountingFloat(a, tally)
                for a in args]
        out = fn(*args)
        counts[name] = tally.as_tuple()
        return _counted(_plain(out), OpTally())

    z = stage("rotate", sandwich, r, x)
    w = stage("wedge", wedge, d, z)
    g = stage("scale", scaled_product, config.mu, w, r)
    r_raw = stage("accumulate", add4, r, g)
    counts["total"] = (sum(counts[s][0] for s in STAGES), sum(counts[s][1] for s in STAGES))
    return _finish(_plain(r_raw), state.iteration + 1, config), counts


# ---------------------------------------------------------------------------
# runs

def _check_unit_state(r):
    ga._require_unit(r)


def run_filter(pairs, config, ground_truth=None, evaluation=None):
    """Single pass of the filter over an ordered pair stream.

    Records, for each iteration ``i`` with rotor ``r_{i-1}``: the squared
    error against the observed target, the EMSE contribution against the
    clean target (``r* x`` when ``ground_truth`` is given) and, if
    ``evaluation`` pairs are supplied, the cost over them.  ``rank_m > 1``
    switches to steepest descent over the ``m`` most recent pairs
    (cyclically).
    """
    if len(pairs) == 0:
        raise ValueError("empty pair stream")
    k_total = len(pairs)
    m = config.rank_m
    if m > k_total:
        raise ValueError(f"rank_m={m} exceeds the {k_total} available pairs")
    n_iter = k_total if config.max_iterations is None else config.max_iterations

    r0 = config.initial_rotor
    _check_unit_state(r0)
    state = FilterState(r0, 0)
    clean = pairs.y if ground_truth is None else _rotate_rows(ground_truth, pairs.x)

    sq = np.empty(n_iter)
    emse = np.empty(n_iter)
    cost = np.empty(n_iter) if evaluation is not None else None
    for it in range(n_iter):
        k = it % k_total
        r = _even4(state.r)
        z = sandwich(r, tuple(pairs.x[k]))
        sq[it] = squared_error(tuple(pairs.d[k]), z)
        emse[it] = squared_error(tuple(clean[k]), z)
        if cost is not None:
            cost[it] = batch_cost(state.r, evaluation)
        if m == 1:
            state = lms_step(state, pairs[k], config)
        else:
            idx = np.arange(it - m + 1, it + 1) % k_total
            state = sd_step(state, pairs[idx], m, config)
    return state, LearningCurve(sq, cost, emse)


def _rotate_rows(r, points):
    zs = sandwich(_even4(r), (points[:, 0], points[:, 1], points[:, 2]))
    return np.stack(zs[:3], axis=1)


def batch_cost(r, pairs, use_noisy=True):
    """Cost over a :class:`Correspondences` block, vectorized over pairs."""
    z = _rotate_rows(r, pairs.x)
    t = pairs.targets(use_noisy)
    return float(np.mean(np.sum((t - z) ** 2, axis=1)))


def run_ensemble(x, y, d, config):
    """LMS over ``R`` independent streams at once.

    ``x``, ``y``, ``d`` have shape ``(R, K, 3)``.  Returns final rotors
    ``(R, 4)`` and per-realization EMSE and squared-error traces ``(R, K)``.
    """
    if config.rank_m != 1:
        raise ValueError("ensemble runs use the one-pair-per-iteration filter")
    n_real, k_total, _ = x.shape
    n_iter = k_total if config.max_iterations is None else min(config.max_iterations, k_total)
    r = tuple(np.full(n_real, v) for v in _even4(config.initial_rotor))
    _check_unit_state(config.initial_rotor)
    emse = np.empty((n_real, n_iter))
    sq = np.empty((n_real, n_iter))
    for it in range(n_iter):
        xi = (x[:, it, 0], x[:, it, 1], x[:, it, 2])
        di = (d[:, it, 0], d[:, it, 1], d[:, it, 2])
        r_raw, z = raw_lms_update(r, xi, di, config.mu)
        emse[:, it] = squared_error((y[:, it, 0], y[:, it, 1], y[:, it, 2]), z)
        sq[:, it] = squared_error(di, z)
        n = _norm4(r_raw)
        bad = ~np.isfinite(n) | (n > DIVERGENCE_NORM)
        if np.any(bad):
            raise DivergenceError(it + 1, float(n[np.argmax(bad)]))
        r = r_raw if not config.normalize_each_step else normalize4(r_raw)
    return np.stack(r, axis=1), emse, sq


def emse_ensemble(scenario, config, n_realizations, seed=None, return_rotors=False):
    """Ensemble-averaged learning curve over independent realizations.

    Realization ``k`` draws fresh noise and a fresh pair order from stream
    ``(seed, k)`` of ``scenario``.  The returned curve holds the mean EMSE
    (against clean targets) and the mean squared error against the noisy
    targets.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    x, y, d = scenario.batch(n_realizations, seed)
    rotors, emse, sq = run_ensemble(x, y, d, config)
    curve = LearningCurve(sq.mean(axis=0), None, emse.mean(axis=0))
    if return_rotors:
        return curve, [_from4(r) for r in rotors]
    return curve


# ---------------------------------------------------------------------------
# curve summaries

def steady_state_power(values, tail=100):
    """Mean of the last ``tail`` samples (linear power)."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        raise ValueError("empty curve")
    return float(np.mean(v[-tail:]))


def convergence_iteration(values, window=50, tail=100, tol_db=3.0):
    """First 1-based iteration whose trailing ``window`` mean is within
    ``tol_db`` of the final ``tail``-sample mean; ``None`` if never."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return None
    final = steady_state_power(v, tail)
    means = np.lib.stride_tricks.sliding_window_view(v, window).mean(axis=1)
    for k, mean in enumerate(means):
        if final == 0.0 or mean == 0.0:
            ok = mean == final
        else:
            ok = abs(10.0 * math.log10(mean / final)) <= tol_db
        if ok:
            return k + window
    return None
