"""Command-line experiments: cube ensembles, stream registration, checks."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import algebra as ga
from . import baseline, data
from . import estimation as est

REPORT_SCHEMA = "galms.report/1"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3

# synthetic scan defaults: 45 degrees about z, 245 pairs, 77% true matches
SCAN_ANGLE_DEG = 45.0
SCAN_PAIRS = 245
SCAN_INLIER_RATIO = 0.77
SCAN_SIGMA2 = 6.25e-8  # (0.25 mm)^2, half the nearest-neighbour spacing


def _rotor_arg(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rotor {text!r}") from None
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("rotor needs 4 values: s,b12,b23,b31")
    r = ga.rotor(*vals)
    if abs(ga.magnitude(r) - 1.0) > 1e-9:
        r = ga.rotor_normalize(r)
    return r


def _rotor_list(r):
    return [float(v) for v in r]


def _db(v):
    return None if v is None else est.report_db(float(v))


def _opcounts(pair=None):
    if pair is None:
        pair = est.CorrespondencePair.clean([0.1, -0.2, 0.3], [0.25, 0.1, -0.05])
    _, counts = est.op_counted_lms_step(est.FilterState(est.INITIAL_ROTOR), pair,
                                        est.FilterConfig(mu=0.1))
    return counts


def _opcount_json(counts):
    return {
        "stages": {s: {"real_multiplications": counts[s][0], "real_additions": counts[s][1]}
                   for s in est.STAGES},
        "total": {"real_multiplications": counts["total"][0],
                  "real_additions": counts["total"][1]},
    }


def _write_json(path, obj):
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------

def cmd_cube(mus, sigma2s, realizations=200, seed=1, out=None, points_per_edge=12,
             edge=0.5, euler_order="intrinsic", r0=est.INITIAL_ROTOR):
    """Ensemble EMSE runs on the rotated cube for every (mu, sigma2)."""
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    t0 = time.perf_counter()
    runs = []
    for s2 in sigma2s:
        sc = data.cube_scenario(s2, points_per_edge, edge, seed, euler_order)
        batch = sc.batch(realizations)
        first = sc.pairs(0)
        for mu in mus:
            cfg = est.FilterConfig(mu=mu, noise_variance=s2, seed=seed, initial_rotor=r0)
            rotors, emse, sq = est.run_ensemble(*batch, cfg)
            curve = est.LearningCurve(sq.mean(axis=0), None, emse.mean(axis=0))
            r_hat = est._from4(rotors[0])
            kabsch = baseline.kabsch_rotation(first)
            r_kabsch = ga.matrix_to_rotor(kabsch)
            entry = {
                "mu": mu,
                "sigma2": s2,
                "final_rotor": _rotor_list(r_hat),
                "rotor_distance": ga.rotor_distance(r_hat, sc.ground_truth),
                "rotor_distance_max": max(ga.rotor_distance(est._from4(r), sc.ground_truth)
                                          for r in rotors),
                "steady_state_emse_db": _db(est.steady_state_power(curve.emse)),
                "steady_state_mse_db": _db(est.steady_state_power(curve.sq_err)),
                "convergence_iteration": est.convergence_iteration(curve.emse),
                "baseline": {
                    "rotation_matrix": kabsch.tolist(),
                    "rotor": _rotor_list(r_kabsch),
                    "angle_to_truth_deg": math.degrees(ga.rotation_angle(r_kabsch, sc.ground_truth)),
                    "angle_to_filter_deg": math.degrees(ga.rotation_angle(r_kabsch, r_hat)),
                    "cost_db": _db(baseline.rotation_cost(kabsch, first, use_noisy=False)),
                },
            }
            if out is not None:
                name = f"cube_mu{mu!r}_sigma2{s2!r}.csv"
                data.write_curve_csv(curve, os.path.join(out, name))
                entry["curve_csv"] = name
            runs.append(entry)
    report = {
        "schema": REPORT_SCHEMA,
        "command": "cube",
        "config": {"mu": list(mus), "sigma2": list(sigma2s), "realizations": realizations,
                   "seed": seed, "points_per_edge": points_per_edge, "edge_length": edge,
                   "euler_order": euler_order, "angles_deg": list(data.CUBE_ANGLES_DEG),
                   "initial_rotor": _rotor_list(r0)},
        "ground_truth_rotor": _rotor_list(
            data.cube_scenario(0.0, 2, edge, seed, euler_order).ground_truth),
        "runs": runs,
        "op_counts": _opcount_json(_opcounts()),
        "wall_clock_s": time.perf_counter() - t0,
    }
    if out is not None:
        _write_json(os.path.join(out, "report.json"), report)
    return report


def synthetic_scan_stream(seed=1, n_pairs=SCAN_PAIRS, inlier_ratio=SCAN_INLIER_RATIO,
                          sigma2=SCAN_SIGMA2, angle_deg=SCAN_ANGLE_DEG):
    """Bunny-sized random cloud, 45 degree z rotation, mismatched pairs."""
    cloud = data.gen_scan_cloud(n_pairs, seed=seed)
    gt = ga.rotor_from_axis_angle((0.0, 0.0, 1.0), math.radians(angle_deg))
    return data.make_scenario(cloud, gt, sigma2, inlier_ratio, seed)


def load_register_stream(source, target, pairs_file=None, inliers_file=None,
                         sigma2=0.0, seed=1):
    """Pair stream from two PLY files; both sides centered on their pairs."""
    src = data.read_ply(source)
    tgt = data.read_ply(target)
    index_pairs = None
    if pairs_file is not None:
        index_pairs = data.parse_correspondences(_read_text(pairs_file))
    x, y = data.resolve_pairs(src, tgt, index_pairs)
    cx, cy = x.mean(axis=0), y.mean(axis=0)
    x, y = x - cx, y - cy
    inlier = None
    if inliers_file is not None:
        idx = data.parse_index_list(_read_text(inliers_file))
        if len(idx) and idx.max() >= len(x):
            raise data.CorrespondenceError("inlier index out of range")
        inlier = np.zeros(len(x), dtype=bool)
        inlier[idx] = True
    d = y
    if sigma2 > 0:
        from .rng import XorShift64Star
        g = XorShift64Star(seed, 0)
        sd = math.sqrt(sigma2)
        d = y + np.array([[sd * g.normal() for _ in range(3)] for _ in range(len(y))])
    pairs = est.Correspondences(x, y, d, inlier)
    return pairs, {"source_centroid": cx.tolist(), "target_centroid": cy.tolist()}


def _read_text(path):
    try:
        with open(path, encoding="ascii") as fh:
            return fh.read()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def cmd_register(pairs, mu=8.0, out=None, ground_truth=None, r0=est.INITIAL_ROTOR,
                 extra=None):
    """Single pass over a pair stream plus a Kabsch comparison."""
    t0 = time.perf_counter()
    cfg = est.FilterConfig(mu=mu, initial_rotor=r0)
    window = pairs.inliers()
    if len(window) == 0:
        raise ValueError("inlier window is empty")
    state, curve = est.run_filter(pairs, cfg, ground_truth=ground_truth, evaluation=window)
    kabsch = baseline.kabsch_rotation(pairs)
    r_kabsch = ga.matrix_to_rotor(kabsch)
    report = {
        "schema": REPORT_SCHEMA,
        "command": "register",
        "config": {"mu": mu, "pairs": len(pairs), "inliers": int(len(window)),
                   "initial_rotor": _rotor_list(r0), **(extra or {})},
        "final_rotor": _rotor_list(state.r),
        "steady_state_mse_db": _db(est.steady_state_power(curve.sq_err)),
        "steady_state_cost_db": _db(est.steady_state_power(curve.cost)),
        "final_cost_db": _db(est.batch_cost(state.r, window)),
        "convergence_iteration": est.convergence_iteration(curve.cost),
        "baseline": {
            "rotation_matrix": kabsch.tolist(),
            "rotor": _rotor_list(r_kabsch),
            "cost_db": _db(baseline.rotation_cost(kabsch, window)),
            "angle_to_filter_deg": math.degrees(ga.rotation_angle(r_kabsch, state.r)),
        },
        "op_counts": _opcount_json(_opcounts(pairs[0])),
    }
    if ground_truth is not None:
        report["ground_truth_rotor"] = _rotor_list(ground_truth)
        report["rotor_distance"] = ga.rotor_distance(state.r, ground_truth)
        report["angle_to_truth_deg"] = math.degrees(ga.rotation_angle(state.r, ground_truth))
        report["baseline"]["angle_to_truth_deg"] = math.degrees(
            ga.rotation_angle(r_kabsch, ground_truth))
        report["steady_state_emse_db"] = _db(est.steady_state_power(curve.emse))
    report["wall_clock_s"] = time.perf_counter() - t0
    if out is not None:
        data.write_curve_csv(curve, os.path.join(out, "register_curve.csv"))
        report["curve_csv"] = "register_curve.csv"
        _write_json(os.path.join(out, "report.json"), report)
    return report, state, curve


def _random_rotor(rng):
    q = rng.normal(size=4)
    return ga.rotor_normalize(ga.rotor(*q))


def _random_unit_bivector(rng):
    b = rng.normal(size=3)
    b /= np.linalg.norm(b)
    return ga.Multivector([0, 0, 0, 0, b[0], b[1], b[2], 0])


def gradient_trial(rng, n_pairs=6, h=1e-6, aligned=False):
    """One random instance: (form error, FD error) as relative errors."""
    r = _random_rotor(rng)
    x = rng.normal(size=(n_pairs, 3))
    if aligned:
        y = data.rotate_cloud(r, x)
    else:
        y = rng.normal(size=(n_pairs, 3))
    pairs = est.Correspondences(x, y)
    b = _random_unit_bivector(rng)
    g = est.gradient_J(r, pairs)
    g_alt = est.gradient_J_unreduced(r, pairs)
    an = est.directional_derivative(r, pairs, b)
    fd = est.directional_derivative_fd(r, pairs, b, h)
    if aligned:
        scale = float(np.mean(np.sum(x * x, axis=1)))
        return {"analytic": an, "fd": fd, "abs_error": max(abs(an), abs(fd)) / scale}
    gn = ga.magnitude(g)
    form = ga.magnitude(g - g_alt) / max(gn, ga.magnitude(g_alt), 1e-300)
    fd_err = abs(fd - an) / max(abs(an), gn, 1e-300)
    return {"form_rel_error": form, "fd_rel_error": fd_err}


FORM_TOL = 1e-11
FD_TOL = 1e-6


def cmd_gradient_check(seed=1, trials=1000, n_pairs=6, h=1e-6):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    form = fd = 0.0
    for _ in range(trials):
        t = gradient_trial(rng, n_pairs, h)
        form = max(form, t["form_rel_error"])
        fd = max(fd, t["fd_rel_error"])
    aligned = gradient_trial(rng, n_pairs, h, aligned=True)
    ok = form < FORM_TOL and fd < FD_TOL and aligned["abs_error"] < 1e-9
    return {
        "schema": REPORT_SCHEMA,
        "command": "gradient-check",
        "config": {"seed": seed, "trials": trials, "pairs_per_trial": n_pairs, "h": h},
        "max_form_rel_error": form,
        "max_fd_rel_error": fd,
        "aligned_trial": aligned,
        "tolerances": {"form": FORM_TOL, "fd": FD_TOL},
        "passed": bool(ok),
    }


def cmd_opcount():
    counts = _opcounts()
    rep = _opcount_json(counts)
    rep["expected_total"] = {"real_multiplications": 54, "real_additions": 39}
    rep["passed"] = counts["total"] == (54, 39)
    return rep


# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="galms", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cube", help="EMSE ensembles on the rotated cube")
    c.add_argument("--mu", type=float, nargs="+", default=[0.3])
    c.add_argument("--sigma2", type=float, nargs="+", default=[0.0])
    c.add_argument("--realizations", type=int, default=200)
    c.add_argument("--seed", type=int, default=1)
    c.add_argument("--out", default="cube_out")
    c.add_argument("--points-per-edge", type=int, default=12)
    c.add_argument("--edge", type=float, default=0.5)
    c.add_argument("--euler-order", choices=("intrinsic", "extrinsic"), default="intrinsic")
    c.add_argument("--r0", type=_rotor_arg, default=est.INITIAL_ROTOR,
                   help="initial rotor s,b12,b23,b31")

    r = sub.add_parser("register", help="single-pass registration of a pair stream")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--source", help="source cloud (ASCII PLY)")
    src.add_argument("--synthetic", action="store_true",
                     help="synthetic 245-pair stream with 77%% true matches")
    r.add_argument("--target", help="target cloud (ASCII PLY)")
    r.add_argument("--pairs", help="correspondence file: source_index target_index")
    r.add_argument("--inliers", help="file of pair indices forming the cost window")
    r.add_argument("--mu", type=float, default=8.0)
    r.add_argument("--sigma2", type=float, default=None,
                   help=f"target noise variance (default 0; synthetic {SCAN_SIGMA2})")
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--ground-truth", type=_rotor_arg, default=None)
    r.add_argument("--r0", type=_rotor_arg, default=est.INITIAL_ROTOR)
    r.add_argument("--out", default="register_out")

    g = sub.add_parser("gradient-check", help="validate the analytic gradient")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--trials", type=int, default=1000)
    g.add_argument("--pairs", type=int, default=6)
    g.add_argument("--json", action="store_true")

    o = sub.add_parser("opcount", help="real operations per GA-LMS iteration")
    o.add_argument("--json", action="store_true")
    return p


def _print_opcount(rep):
    for s in est.STAGES:
        st = rep["stages"][s]
        print(f"{s:<11} RM {st['real_multiplications']:>3}  RA {st['real_additions']:>3}")
    t = rep["total"]
    print(f"{'total':<11} RM {t['real_multiplications']:>3}  RA {t['real_additions']:>3}")


def _run(args):
    if args.command == "cube":
        _ensure_dir(args.out)
        rep = cmd_cube(args.mu, args.sigma2, args.realizations, args.seed, args.out,
                       args.points_per_edge, args.edge, args.euler_order, args.r0)
        for run in rep["runs"]:
            print(f"mu={run['mu']!r} sigma2={run['sigma2']!r}: "
                  f"EMSE {run['steady_state_emse_db']:.1f} dB, "
                  f"converged at {run['convergence_iteration']}, "
                  f"|r-r*| {run['rotor_distance']:.3g}")
        return EXIT_OK
    if args.command == "register":
        if args.synthetic:
            s2 = SCAN_SIGMA2 if args.sigma2 is None else args.sigma2
            sc, pairs = synthetic_scan_stream(args.seed, sigma2=s2)
            gt = sc.ground_truth if args.ground_truth is None else args.ground_truth
            extra = {"synthetic": True, "sigma2": s2, "seed": args.seed}
        else:
            if args.target is None:
                raise ValueError("--target is required with --source")
            s2 = 0.0 if args.sigma2 is None else args.sigma2
            pairs, offsets = load_register_stream(args.source, args.target, args.pairs,
                                                  args.inliers, s2, args.seed)
            gt = args.ground_truth
            extra = {"source": args.source, "target": args.target, "sigma2": s2,
                     "seed": args.seed, "centering": offsets}
        _ensure_dir(args.out)
        rep, _, _ = cmd_register(pairs, args.mu, args.out, gt, args.r0, extra)
        print(f"final rotor {rep['final_rotor']}")
        print(f"steady-state MSE {rep['steady_state_mse_db']:.2f} dB, "
              f"cost {rep['steady_state_cost_db']:.2f} dB, "
              f"converged at {rep['convergence_iteration']}")
        print(f"Kabsch cost {rep['baseline']['cost_db']:.2f} dB, "
              f"{rep['baseline']['angle_to_filter_deg']:.3f} deg from the filter")
        return EXIT_OK
    if args.command == "gradient-check":
        rep = cmd_gradient_check(args.seed, args.trials, args.pairs)
        if args.json:
            print(json.dumps(rep, indent=2, sort_keys=True))
        else:
            print(f"max form error {rep['max_form_rel_error']:.3e}, "
                  f"max FD error {rep['max_fd_rel_error']:.3e}: "
                  f"{'PASS' if rep['passed'] else 'FAIL'}")
        return EXIT_OK if rep["passed"] else EXIT_VALIDATION
    if args.command == "opcount":
        rep = cmd_opcount()
        if args.json:
            print(json.dumps(rep, indent=2, sort_keys=True))
        else:
            _print_opcount(rep)
        return EXIT_OK if rep["passed"] else EXIT_VALIDATION
    raise AssertionError(args.command)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        return _run(args)
    except (est.DivergenceError, baseline.ConvergenceError) as exc:
        print(f"galms: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"galms: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"galms: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
