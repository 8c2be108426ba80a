"""Acceptance checks, one per headline criterion.

Each check prints a single ``PASS``/``FAIL`` line.  Under pytest the lines
are also collected into the terminal summary; ``python tests/test_acceptance.py``
runs the checks directly.
"""
import functools
import math
import os
import sys
import tempfile
import time

import numpy as np

from galms import algebra as ga
from galms import baseline, cli, data
from galms import estimation as est

RESULTS = []


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------------------
# shared ensembles

N_REAL = 200
SEED = 1


@functools.lru_cache(maxsize=None)
def _cube(sigma2):
    return data.cube_scenario(sigma2, seed=SEED)


@functools.lru_cache(maxsize=None)
def _batch(sigma2):
    return _cube(sigma2).batch(N_REAL)


@functools.lru_cache(maxsize=None)
def _ensemble(sigma2, mu):
    t0 = time.perf_counter()
    rotors, emse, _ = est.run_ensemble(*_batch(sigma2), est.FilterConfig(mu=mu))
    return rotors, emse.mean(axis=0), time.perf_counter() - t0


# ---------------------------------------------------------------------------
# checks

def check_algebra_suite():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = {"assoc": 0.0, "reverse": 0.0, "cyclic": 0.0, "norm": 0.0, "matrix": 0.0}
    exact = True
    for _ in range(1000):
        a, b, c = (ga.Multivector(rng.normal(size=8)) for _ in range(3))
        u, v = ga.vector(*rng.normal(size=3)), ga.vector(*rng.normal(size=3))
        r = ga.rotor_normalize(ga.rotor(*rng.normal(size=4)))
        lhs, rhs = (a * b) * c, a * (b * c)
        worst["assoc"] = max(worst["assoc"], ga.magnitude(lhs - rhs) / ga.magnitude(lhs))
        exact &= u * v == ga.scalar(ga.scalar_product(u, v)) + (u ^ v)
        exact &= (u ^ v) == -(v ^ u)
        ab = ~(a * b)
        worst["reverse"] = max(worst["reverse"], ga.magnitude(ab - ~b * ~a) / ga.magnitude(ab))
        s1 = abs(ga.scalar_product(a, b) - ga.scalar_product(b, a))
        s2 = abs((a * b * c).scalar - (c * a * b).scalar)
        worst["cyclic"] = max(worst["cyclic"], s1 / ga.magnitude(a * b), s2 / ga.magnitude(a * b * c))
        rx = ga.rotor_apply(r, u)
        worst["norm"] = max(worst["norm"], abs(ga.magnitude(rx) - ga.magnitude(u)) / ga.magnitude(u))
        worst["matrix"] = max(worst["matrix"], float(np.max(np.abs(
            rx.vector_part - ga.rotor_to_matrix(r) @ u.vector_part))))
        exact &= ga.grade(a, 0) + ga.grade(a, 1) + ga.grade(a, 2) + ga.grade(a, 3) == a
    elapsed = time.perf_counter() - t0
    ok = exact and elapsed < 5.0 and all(v < 1e-12 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return report("algebra suite", ok, f"1000 cases, {detail}, exact identities {exact}, {elapsed:.2f} s")


def check_worked_example():
    out = ga.geometric_product(ga.E1, 2 * ga.E1 + 4 * ga.E3)
    ok = list(out) == [2.0, 0, 0, 0, 0, 0, -4.0, 0]
    return report("worked example", ok, f"e1 (2 e1 + 4 e3) = {out!r}")


def check_gradient_validation():
    t0 = time.perf_counter()
    rep = cli.cmd_gradient_check(seed=SEED, trials=1000, h=1e-6)
    elapsed = time.perf_counter() - t0
    ok = (rep["max_form_rel_error"] < 1e-6 and rep["max_fd_rel_error"] < 1e-6
          and rep["passed"] and elapsed < 10.0)
    return report("gradient validation", ok,
                  f"form {rep['max_form_rel_error']:.2e}, FD {rep['max_fd_rel_error']:.2e}, "
                  f"{elapsed:.2f} s")


def check_noiseless_cube():
    sc = _cube(0.0)
    pairs = sc.pairs(0)
    t0 = time.perf_counter()
    state, curve = est.run_filter(pairs, est.FilterConfig(mu=0.3), ground_truth=sc.ground_truth)
    elapsed = time.perf_counter() - t0
    dist = ga.rotor_distance(state.r, sc.ground_truth)
    emse_db = est.report_db(est.steady_state_power(curve.emse))
    _, ens, _ = _ensemble(0.0, 0.3)
    ens_db = est.report_db(est.steady_state_power(ens))
    ok = dist < 1e-5 and emse_db <= -140.0 and ens_db <= -140.0 and elapsed < 1.0
    return report("noiseless cube recovery", ok,
                  f"|r-r*| {dist:.1e}, EMSE {emse_db:.1f} dB ({N_REAL}-run ensemble {ens_db:.1f} dB), "
                  f"{elapsed:.3f} s")


def check_convergence_ordering():
    t0 = time.perf_counter()
    _batch(1e-5)
    _, fast, _ = _ensemble(1e-5, 0.3)
    _, slow, _ = _ensemble(1e-5, 0.06)
    elapsed = time.perf_counter() - t0
    i_fast = est.convergence_iteration(fast)
    i_slow = est.convergence_iteration(slow)
    ok = (i_fast is not None and i_slow is not None and i_fast < i_slow
          and 150 <= i_fast <= 600 and 900 <= i_slow <= 1900 and elapsed < 120.0)
    return report("convergence-speed ordering", ok,
                  f"mu=0.3 at {i_fast}, mu=0.06 at {i_slow}, {N_REAL} runs each, {elapsed:.1f} s")


def check_noise_floor_ordering():
    levels = []
    for s2 in (1e-9, 1e-5, 1e-2):
        _, emse, _ = _ensemble(s2, 0.2)
        levels.append(est.steady_state_power(emse))
    ok = levels[0] < levels[1] < levels[2]
    db = ", ".join(f"{10 * math.log10(v):.1f}" for v in levels)
    return report("noise-floor ordering", ok, f"steady-state EMSE at mu=0.2: {db} dB")


def check_baseline_agreement():
    angles = []
    for s2 in (1e-9, 1e-5):
        rotors, _, _ = _ensemble(s2, 0.3)
        pairs = _cube(s2).pairs(0)
        r_kabsch = ga.matrix_to_rotor(baseline.kabsch_rotation(pairs))
        angles.append(math.degrees(ga.rotation_angle(r_kabsch, est._from4(rotors[0]))))
    sc = _cube(0.0)
    pairs = sc.pairs(0)
    state, _ = est.run_filter(pairs, est.FilterConfig(mu=0.3))
    m_diff = float(np.max(np.abs(baseline.kabsch_rotation(pairs) - ga.rotor_to_matrix(state.r))))
    ok = all(a < 0.5 for a in angles) and m_diff < 1e-4
    return report("baseline agreement", ok,
                  f"angles {angles[0]:.2e} / {angles[1]:.2e} deg, noiseless matrix diff {m_diff:.1e}")


def check_op_counts():
    seen = []
    for k in (10, 1728):
        cloud = data.gen_scan_cloud(k, seed=SEED) if k == 10 else data.gen_cube(12)
        pairs = data.Scenario(cloud, est.INITIAL_ROTOR, 1e-4).pairs(0)
        state = est.FilterState(ga.ONE)
        cfg = est.FilterConfig(mu=0.1)
        for p in list(pairs)[:5]:
            state, counts = est.op_counted_lms_step(state, p, cfg)
            seen.append(counts)
    stages = tuple(seen[0][s] for s in est.STAGES)
    ok = (all(c == seen[0] for c in seen) and seen[0]["total"] == (54, 39)
          and stages == ((28, 20), (6, 3), (20, 12), (0, 4)))
    return report("op-count reproduction", ok,
                  f"total {seen[0]['total']}, stages {stages}, K in (10, 1728)")


def check_outlier_stream():
    sc, pairs = cli.synthetic_scan_stream(seed=SEED)
    rep, _, _ = cli.cmd_register(pairs, mu=8.0, ground_truth=sc.ground_truth)
    it = rep["convergence_iteration"]
    angle = rep["angle_to_truth_deg"]
    ok = it is not None and it < 245 and angle < 3.0
    return report("outlier-stream behavior", ok,
                  f"{rep['config']['inliers']}/245 inliers, converged at {it}, "
                  f"{angle:.2f} deg from truth, cost {rep['steady_state_cost_db']:.1f} dB")


def _bytes_of(folder):
    return {n: open(os.path.join(folder, n), "rb").read()
            for n in sorted(os.listdir(folder)) if n.endswith(".csv")}


def check_determinism():
    runs = [
        ["cube", "--mu", "0.3", "0.06", "--sigma2", "1e-5", "--realizations", "5",
         "--points-per-edge", "8", "--seed", "3"],
        ["register", "--synthetic", "--seed", "2"],
    ]
    same = True
    with tempfile.TemporaryDirectory() as tmp:
        for k, argv in enumerate(runs):
            outs = []
            for rep in range(2):
                out = os.path.join(tmp, f"{k}_{rep}")
                code = cli.main(argv + ["--out", out])
                same &= code == 0
                outs.append(_bytes_of(out))
            same &= bool(outs[0]) and outs[0] == outs[1]
    return report("determinism", same, f"{len(runs)} commands run twice, CSV bytes identical: {same}")


# ---------------------------------------------------------------------------
# pytest entry points

def test_algebra_suite():
    assert check_algebra_suite()


def test_worked_example():
    assert check_worked_example()


def test_gradient_validation():
    assert check_gradient_validation()


def test_noiseless_cube_recovery():
    assert check_noiseless_cube()


def test_convergence_speed_ordering():
    assert check_convergence_ordering()


def test_noise_floor_ordering():
    assert check_noise_floor_ordering()


def test_baseline_agreement():
    assert check_baseline_agreement()


def test_op_count_reproduction():
    assert check_op_counts()


def test_outlier_stream_behavior():
    assert check_outlier_stream()


def test_determinism():
    assert check_determinism()


CHECKS = (check_algebra_suite, check_worked_example, check_gradient_validation,
          check_noiseless_cube, check_convergence_ordering, check_noise_floor_ordering,
          check_baseline_agreement, check_op_counts, check_outlier_stream, check_determinism)


if __name__ == "__main__":
    results = [check() for check in CHECKS]
    sys.exit(0 if all(results) else 1)
