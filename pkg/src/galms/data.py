"""Point clouds, synthetic scenarios and file formats."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import algebra as ga
from .estimation import Correspondences, LearningCurve, DB_FLOOR, POWER_FLOOR
from .rng import XorShift64Star

CURVE_COLUMNS = ("i", "sq_err", "sq_err_db", "cost", "cost_db", "emse", "emse_db")


class PlyParseError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFormatError(PlyParseError):
    pass


class CorrespondenceError(ValueError):
    pass


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    name: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def count(self):
        return len(self.points)

    @property
    def centroid(self):
        return self.points.mean(axis=0)


def gen_cube(points_per_edge=12, edge_length=0.5):
    """Full ``n^3`` lattice filling a cube centered at the origin."""
    if int(points_per_edge) != points_per_edge or points_per_edge < 2:
        raise ValueError(f"points_per_edge must be an integer >= 2, got {points_per_edge!r}")
    if not edge_length > 0:
        raise ValueError("edge_length must be positive")
    n = int(points_per_edge)
    half = 0.5 * edge_length
    ticks = np.linspace(-half, half, n)
    # symmetric ticks: enforce exact antisymmetry so the centroid is 0
    ticks = 0.5 * (ticks - ticks[::-1])
    gx, gy, gz = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return PointCloud(pts, name=f"cube{n}")


def center(cloud):
    if len(cloud) == 0:
        raise ValueError("cannot center an empty cloud")
    return PointCloud(cloud.points - cloud.centroid, cloud.name)


def gen_scan_cloud(n_points=245, semi_axes=(0.078, 0.076, 0.06), seed=0):
    """Random points inside an ellipsoid, roughly the size of a bunny scan."""
    g = XorShift64Star(seed, 0x5CA9)
    pts = []
    a = np.asarray(semi_axes, dtype=np.float64)
    while len(pts) < n_points:
        p = np.array([2.0 * g.uniform() - 1.0 for _ in range(3)])
        if p @ p <= 1.0:
            pts.append(p * a)
    return center(PointCloud(np.array(pts), name="scan"))


def rotate_cloud(r, points):
    """Rotate every row of ``points`` with :func:`algebra.rotor_apply`."""
    return np.array([ga.rotor_apply(r, ga.vector(p)).vector_part for p in points])


@dataclass(frozen=True)
class Scenario:
    """Source cloud, true rotor and corruption model for pair streams."""

    source: PointCloud
    ground_truth: ga.Multivector
    noise_variance: float = 0.0
    inlier_ratio: float = 1.0
    seed: int = 0
    shuffle: bool = True
    rotated: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.noise_variance >= 0:
            raise ValueError("noise variance must be >= 0")
        if not 0.0 < self.inlier_ratio <= 1.0:
            raise ValueError(f"inlier_ratio must be in (0, 1], got {self.inlier_ratio!r}")
        if len(self.source) == 0:
            raise ValueError("empty source cloud")
        ga._require_unit(self.ground_truth)
        if self.rotated is None:
            object.__setattr__(self, "rotated",
                               rotate_cloud(self.ground_truth, self.source.points))

    @property
    def n_outliers(self):
        k = len(self.source)
        n_out = k - int(math.floor(self.inlier_ratio * k + 0.5))
        # a single mismatched pair cannot be deranged
        return 2 if n_out == 1 and k >= 2 else n_out

    def pairs(self, realization=0, seed=None):
        """Pair stream for one realization.

        Draw order on stream ``(seed, realization)``: outlier selection,
        target noise (pair-major, xyz), presentation order.
        """
        seed = self.seed if seed is None else seed
        g = XorShift64Star(seed, realization)
        k = len(self.source)
        target_index = np.arange(k)
        n_out = self.n_outliers
        if n_out:
            idx = list(range(k))
            for t in range(n_out):
                j = t + g.below(k - t)
                idx[t], idx[j] = idx[j], idx[t]
            chosen = idx[:n_out]
            for t in range(n_out):
                target_index[chosen[t]] = chosen[(t + 1) % n_out]
        y = self.rotated[target_index]
        if self.noise_variance > 0:
            sigma = math.sqrt(self.noise_variance)
            v = np.array([[sigma * g.normal() for _ in range(3)] for _ in range(k)])
            d = y + v
        else:
            d = y.copy()
        inlier = target_index == np.arange(k)
        order = np.array(g.permutation(k)) if self.shuffle else np.arange(k)
        return Correspondences(self.source.points[order], y[order], d[order], inlier[order])

    def batch(self, n_realizations, seed=None):
        """Stacked ``(R, K, 3)`` arrays ``x, y, d`` for realizations ``0..R-1``."""
        streams = [self.pairs(k, seed) for k in range(n_realizations)]
        return (np.stack([s.x for s in streams]), np.stack([s.y for s in streams]),
                np.stack([s.d for s in streams]))


def make_scenario(cloud, rotor, noise_variance=0.0, inlier_ratio=1.0, seed=0,
                  shuffle=True, realization=0):
    """Build a :class:`Scenario` and its pair stream for ``realization``."""
    sc = Scenario(cloud, rotor, noise_variance, inlier_ratio, seed, shuffle)
    return sc, sc.pairs(realization)


CUBE_ANGLES_DEG = (120.0, 90.0, 45.0)


def cube_scenario(noise_variance=0.0, points_per_edge=12, edge_length=0.5, seed=0,
                  euler_order="intrinsic"):
    """Cube rotated by 120, 90, 45 degrees about x, y, z.

    With ``euler_order="extrinsic"`` the true rotor is exactly 180 degrees
    from the default initial rotor, a stationary point of the cost for
    the isotropic lattice.
    """
    r = ga.rotor_from_euler_xyz(*(math.radians(a) for a in CUBE_ANGLES_DEG), order=euler_order)
    return Scenario(gen_cube(points_per_edge, edge_length), r, noise_variance, 1.0, seed)


# ---------------------------------------------------------------------------
# PLY

def parse_ply_ascii(text, name=""):
    """Vertices of an ASCII PLY document, in declaration order."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyParseError("missing 'ply' magic", 1)
    n_vertex = None
    props = []
    elements = []
    fmt_seen = False
    header_end = None
    for ln, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        key = tok[0]
        if key == "format":
            if len(tok) != 3:
                raise PlyParseError("malformed format line", ln)
            if tok[1] != "ascii":
                raise UnsupportedFormatError(f"unsupported PLY format {tok[1]!r}", ln)
            fmt_seen = True
        elif key == "element":
            if len(tok) != 3:
                raise PlyParseError("malformed element line", ln)
            try:
                count = int(tok[2])
            except ValueError:
                raise PlyParseError(f"bad element count {tok[2]!r}", ln) from None
            elements.append([tok[1], count, []])
            if tok[1] == "vertex":
                n_vertex = count
        elif key == "property":
            if not elements:
                raise PlyParseError("property before any element", ln)
            if len(tok) < 3:
                raise PlyParseError("malformed property line", ln)
            elements[-1][2].append(tok[-1] if tok[1] != "list" else ("list", tok[-1]))
        elif key == "end_header":
            header_end = ln
            break
        else:
            raise PlyParseError(f"unexpected header keyword {key!r}", ln)
    if header_end is None:
        raise PlyParseError("missing end_header")
    if not fmt_seen:
        raise PlyParseError("missing format line")
    if n_vertex is None:
        raise PlyParseError("no vertex element declared")

    ln = header_end
    pts = []
    for el_name, count, el_props in elements:
        if el_name == "vertex":
            props = el_props
            try:
                cols = [props.index(c) for c in ("x", "y", "z")]
            except ValueError:
                raise PlyParseError("vertex element lacks x, y, z properties") from None
        for _ in range(count):
            ln += 1
            if ln > len(lines):
                raise PlyParseError(f"expected {count} {el_name} rows, data ended", ln)
            tok = lines[ln - 1].split()
            if el_name != "vertex":
                continue
            if len(tok) < len(props):
                raise PlyParseError(f"expected {len(props)} values, got {len(tok)}", ln)
            try:
                pts.append([float(tok[c]) for c in cols])
            except ValueError:
                raise PlyParseError("non-numeric vertex data", ln) from None
    arr = np.array(pts, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(arr)):
        raise PlyParseError("non-finite vertex coordinate")
    return PointCloud(arr, name)


def read_ply(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    head = raw[:512]
    if b"format binary" in head:
        raise UnsupportedFormatError(f"{path}: binary PLY is not supported")
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise UnsupportedFormatError(f"{path}: not an ASCII PLY file") from None
    return parse_ply_ascii(text, name=os.path.basename(str(path)))


def format_ply_ascii(cloud):
    out = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
           "property float x", "property float y", "property float z", "end_header"]
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in cloud.points.tolist()]
    return "\n".join(out) + "\n"


def write_ply_ascii(cloud, path):
    _write_text(path, format_ply_ascii(cloud))


# ---------------------------------------------------------------------------
# correspondences

def parse_correspondences(text):
    """``source_index target_index`` per line, 0-based, ``#`` comments."""
    out = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        tok = body.split()
        if len(tok) != 2:
            raise CorrespondenceError(f"line {ln}: expected two indices, got {body!r}")
        try:
            a, b = int(tok[0]), int(tok[1])
        except ValueError:
            raise CorrespondenceError(f"line {ln}: non-integer index in {body!r}") from None
        if a < 0 or b < 0:
            raise CorrespondenceError(f"line {ln}: negative index")
        out.append((a, b))
    return np.array(out, dtype=np.intp).reshape(-1, 2)


def parse_index_list(text):
    """One non-negative integer per line, ``#`` comments allowed."""
    out = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            v = int(body)
        except ValueError:
            raise CorrespondenceError(f"line {ln}: bad index {body!r}") from None
        if v < 0:
            raise CorrespondenceError(f"line {ln}: negative index")
        out.append(v)
    return np.array(out, dtype=np.intp)


def resolve_pairs(source, target, index_pairs=None):
    """Pair up two clouds either row by row or through an index table."""
    if index_pairs is None:
        if len(source) != len(target):
            raise CorrespondenceError(
                f"clouds differ in size ({len(source)} vs {len(target)}) and no pairs file given")
        return source.points.copy(), target.points.copy()
    if len(index_pairs) == 0:
        raise CorrespondenceError("pairs file lists no correspondences")
    src, tgt = index_pairs[:, 0], index_pairs[:, 1]
    if src.max() >= len(source) or tgt.max() >= len(target):
        raise CorrespondenceError("correspondence index out of range")
    return source.points[src], target.points[tgt]


# ---------------------------------------------------------------------------
# curves

def _fmt(v):
    return repr(float(v))


def _db_field(v):
    if v < POWER_FLOOR:
        return _fmt(DB_FLOOR)
    return _fmt(10.0 * math.log10(v))


def format_curve_csv(curve):
    cols = {"sq_err": curve.sq_err, "cost": curve.cost, "emse": curve.emse}
    lines = [",".join(CURVE_COLUMNS)]
    for k in range(len(curve)):
        row = [str(k + 1)]
        for name in ("sq_err", "cost", "emse"):
            v = cols[name]
            if v is None:
                row += ["", ""]
            else:
                row += [_fmt(v[k]), _db_field(v[k])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_curve_csv(curve, path):
    _write_text(path, format_curve_csv(curve))


def read_curve_csv(path):
    with open(path, encoding="ascii", newline="") as fh:
        lines = fh.read().split("\n")
    if lines[0] != ",".join(CURVE_COLUMNS):
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    cols = {}
    for name, pos in (("sq_err", 1), ("cost", 3), ("emse", 5)):
        vals = [r[pos] for r in rows]
        cols[name] = None if rows and vals[0] == "" else np.array([float(v) for v in vals])
    return LearningCurve(cols["sq_err"] if cols["sq_err"] is not None else np.zeros(0),
                         cols["cost"], cols["emse"])


def _write_text(path, text):
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
