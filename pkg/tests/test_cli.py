import json
import math
import subprocess
import sys

import numpy as np
import pytest

from galms import algebra as ga
from galms import cli, data


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------------------
# opcount

def test_opcount_text(capsys):
    code, out, _ = run(["opcount"], capsys)
    assert code == 0
    assert out.splitlines() == [
        "rotate      RM  28  RA  20",
        "wedge       RM   6  RA   3",
        "scale       RM  20  RA  12",
        "accumulate  RM   0  RA   4",
        "total       RM  54  RA  39",
    ]
    assert run(["opcount"], capsys)[1] == out


def test_opcount_json(capsys):
    code, out, _ = run(["opcount", "--json"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["total"] == {"real_multiplications": 54, "real_additions": 39}
    assert rep["stages"]["rotate"] == {"real_multiplications": 28, "real_additions": 20}
    assert rep["passed"] is True


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "galms", "opcount", "--json"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["total"]["real_additions"] == 39


# ---------------------------------------------------------------------------
# gradient check

def test_gradient_check_passes(capsys):
    code, out, _ = run(["gradient-check", "--trials", "50", "--json"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert rep["max_fd_rel_error"] < 1e-6
    assert rep["max_form_rel_error"] < 1e-11


def test_gradient_check_aligned_trial():
    t = cli.gradient_trial(np.random.default_rng(3), aligned=True)
    assert abs(t["analytic"]) < 1e-12
    assert abs(t["fd"]) < 1e-9


def test_corrupted_table_is_caught(monkeypatch, capsys):
    bad = ga._SIGN.copy()
    bad[4, 5] = -bad[4, 5]
    monkeypatch.setattr(ga, "_SIGN", bad)
    code, out, _ = run(["gradient-check", "--trials", "20"], capsys)
    assert code == 1
    assert "FAIL" in out


def test_gradient_check_rejects_zero_trials(capsys):
    code, _, err = run(["gradient-check", "--trials", "0"], capsys)
    assert code == 1 and "trials" in err


# ---------------------------------------------------------------------------
# cube

CUBE_ARGS = ["cube", "--mu", "0.3", "--sigma2", "0", "1e-5", "--realizations", "3",
             "--points-per-edge", "8", "--seed", "4"]


def test_cube_writes_curves_and_report(tmp_path, capsys):
    code, out, _ = run(CUBE_ARGS + ["--out", str(tmp_path)], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["schema"] == "galms.report/1"
    assert [r["sigma2"] for r in rep["runs"]] == [0.0, 1e-5]
    for r in rep["runs"]:
        curve = data.read_curve_csv(tmp_path / r["curve_csv"])
        assert len(curve) == 512
        assert curve.cost is None
        assert len(r["final_rotor"]) == 8
    assert rep["runs"][0]["rotor_distance"] < 1e-5
    assert rep["op_counts"]["total"]["real_multiplications"] == 54
    assert "EMSE" in out


def test_single_realization_is_the_single_trace(tmp_path, capsys):
    from galms import estimation as est
    code, _, _ = run(["cube", "--realizations", "1", "--points-per-edge", "5", "--sigma2", "1e-5",
                      "--seed", "2", "--out", str(tmp_path)], capsys)
    assert code == 0
    curve = data.read_curve_csv(tmp_path / "cube_mu0.3_sigma21e-05.csv")
    sc = data.cube_scenario(1e-5, points_per_edge=5, seed=2)
    _, single = est.run_filter(sc.pairs(0), est.FilterConfig(mu=0.3), ground_truth=sc.ground_truth)
    np.testing.assert_array_equal(curve.emse, single.emse)


def test_cube_csv_is_byte_identical_across_runs(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(CUBE_ARGS + ["--out", str(a)], capsys)[0] == 0
    assert run(CUBE_ARGS + ["--out", str(b)], capsys)[0] == 0
    for name in ("cube_mu0.3_sigma20.0.csv", "cube_mu0.3_sigma21e-05.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cube_divergence_exit_code(tmp_path, capsys):
    code, _, err = run(["cube", "--mu", "1e9", "--realizations", "1", "--points-per-edge", "3",
                        "--out", str(tmp_path)], capsys)
    assert code == 2
    assert "diverged at iteration" in err


def test_bad_flags_exit_one(tmp_path, capsys):
    assert run(["cube", "--mu", "abc"], capsys)[0] == 1
    assert run(["cube", "--mu", "-0.1", "--points-per-edge", "3", "--out", str(tmp_path)],
               capsys)[0] == 1
    assert run(["nosuch"], capsys)[0] == 1


def test_unwritable_output_exit_three(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(["cube", "--realizations", "1", "--points-per-edge", "3",
                        "--out", str(blocker / "sub")], capsys)
    assert code == 3
    assert str(blocker) in err


# ---------------------------------------------------------------------------
# register

def _write_pair_files(tmp_path, rot, n=40, seed=0):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(n, 3)) * 0.05 + [0.3, -0.2, 0.1]
    tgt = data.rotate_cloud(rot, src - src.mean(axis=0)) + [1.0, 2.0, 3.0]
    data.write_ply_ascii(data.PointCloud(src), tmp_path / "src.ply")
    # reverse the target order and supply an explicit pairing
    data.write_ply_ascii(data.PointCloud(tgt[::-1]), tmp_path / "tgt.ply")
    (tmp_path / "pairs.txt").write_text(
        "# source target\n" + "".join(f"{k} {n - 1 - k}\n" for k in range(n)))


def test_register_from_files(tmp_path, capsys):
    gt = ga.rotor_from_axis_angle((0.0, 0.6, 0.8), 0.4)
    _write_pair_files(tmp_path, gt)
    out = tmp_path / "out"
    code, stdout, _ = run(["register", "--source", str(tmp_path / "src.ply"),
                           "--target", str(tmp_path / "tgt.ply"),
                           "--pairs", str(tmp_path / "pairs.txt"), "--mu", "8",
                           "--out", str(out)], capsys)
    assert code == 0, stdout
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["centering"]["target_centroid"] == pytest.approx([1.0, 2.0, 3.0])
    r = ga.Multivector(rep["final_rotor"])
    base = ga.Multivector([rep["baseline"]["rotor"][k] for k in range(8)])
    assert ga.rotation_angle(base, gt) < 1e-9
    assert math.isfinite(rep["steady_state_mse_db"])
    curve = data.read_curve_csv(out / "register_curve.csv")
    assert len(curve) == 40 and curve.cost is not None
    assert ga.magnitude(r) == pytest.approx(1.0)


def test_register_aligned_inputs_give_zero_error(tmp_path, capsys):
    _write_pair_files(tmp_path, ga.ONE)
    out = tmp_path / "out"
    code, _, _ = run(["register", "--source", str(tmp_path / "src.ply"),
                      "--target", str(tmp_path / "tgt.ply"), "--pairs", str(tmp_path / "pairs.txt"),
                      "--r0", "1,0,0,0", "--out", str(out)], capsys)
    assert code == 0
    curve = data.read_curve_csv(out / "register_curve.csv")
    assert np.all(curve.sq_err < 1e-30)
    rep = json.loads((out / "report.json").read_text())
    assert ga.rotation_angle(ga.Multivector(rep["final_rotor"]), ga.ONE) < 1e-7


def test_register_index_out_of_range(tmp_path, capsys):
    _write_pair_files(tmp_path, ga.ONE)
    (tmp_path / "pairs.txt").write_text("0 99\n")
    code, _, err = run(["register", "--source", str(tmp_path / "src.ply"),
                        "--target", str(tmp_path / "tgt.ply"), "--pairs", str(tmp_path / "pairs.txt"),
                        "--out", str(tmp_path / "o")], capsys)
    assert code == 1 and "out of range" in err


def test_register_parse_error_and_missing_file(tmp_path, capsys):
    (tmp_path / "bad.ply").write_text("ply\nformat ascii 1.0\nelement vertex 2\n"
                                      "property float x\nproperty float y\nproperty float z\n"
                                      "end_header\n0 0 0\n")
    code, _, err = run(["register", "--source", str(tmp_path / "bad.ply"),
                        "--target", str(tmp_path / "bad.ply"), "--out", str(tmp_path / "o")], capsys)
    assert code == 1 and "line 9" in err
    code, _, _ = run(["register", "--source", str(tmp_path / "none.ply"),
                      "--target", str(tmp_path / "none.ply"), "--out", str(tmp_path / "o")], capsys)
    assert code == 3


def test_register_synthetic_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["register", "--synthetic", "--out", str(a)], capsys)[0] == 0
    assert run(["register", "--synthetic", "--out", str(b)], capsys)[0] == 0
    assert (a / "register_curve.csv").read_bytes() == (b / "register_curve.csv").read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["config"]["pairs"] == 245 and rep["config"]["inliers"] == 189
    assert "angle_to_truth_deg" in rep
