import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_random_network
from topoid import io
from topoid.cli import main
from topoid.errors import DimensionMismatch, UsageError
from topoid.graph import make_oscillator_ring
from topoid.lti import markov_exact


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return path


def run(tmp_path, command, cfg, *extra):
    conf = write_config(tmp_path / f"{command}.json", cfg)
    return main([command, "--config", str(conf), "--output", str(tmp_path / "out"), *extra])


RING = {"builtin": "oscillator_ring", "params": {"N": 10}}


# -- file formats -------------------------------------------------------------


def test_network_json_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    net = make_random_network(rng, N=3, mimo=True, S_identity=False)
    io.save_network(net, tmp_path / "net.json")
    back = io.load_network(tmp_path / "net.json")
    for a, b in zip(net.nodes, back.nodes):
        assert np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B) and np.array_equal(a.C, b.C)
    for key in "QRS":
        assert np.array_equal(getattr(net, key), getattr(back, key))


def test_network_json_block_check(tmp_path):
    doc = io.network_to_dict(make_oscillator_ring(3))
    doc["Q"]["row_blocks"] = [2, 1]
    with pytest.raises(DimensionMismatch):
        io.network_from_dict(doc)


def test_network_json_malformed():
    with pytest.raises(UsageError):
        io.network_from_dict({"nodes": [{"n": 1}]})


def test_markov_json_round_trip():
    seq = markov_exact(make_oscillator_ring(10), 5)
    back = io.markov_from_dict(json.loads(json.dumps(io.markov_to_dict(seq))))
    assert np.array_equal(back.params, seq.params)


def test_trajectory_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    u, y = rng.standard_normal((7, 2)), rng.standard_normal((7, 3))
    io.write_trajectory(tmp_path / "t.csv", u, y)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,u_1,u_2,y_1,y_2,y_3"
    u2, y2 = io.read_trajectory(tmp_path / "t.csv")
    assert np.array_equal(u, u2) and np.array_equal(y, y2)


def test_missing_files(tmp_path):
    with pytest.raises(UsageError):
        io.load_json(tmp_path / "nope.json")
    with pytest.raises(UsageError):
        io.read_trajectory(tmp_path / "nope.csv")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(UsageError):
        io.load_json(tmp_path / "bad.json")


# -- simulate -------------------------------------------------------------------


def test_simulate_deterministic(tmp_path):
    cfg = {"network": RING, "input": {"seed": 3, "r": 40}}
    assert run(tmp_path, "simulate", cfg) == 0
    first = (tmp_path / "out" / "trajectory.csv").read_bytes()
    net_first = (tmp_path / "out" / "network.json").read_bytes()
    assert run(tmp_path, "simulate", cfg) == 0
    assert (tmp_path / "out" / "trajectory.csv").read_bytes() == first
    assert (tmp_path / "out" / "network.json").read_bytes() == net_first
    u, y = io.read_trajectory(tmp_path / "out" / "trajectory.csv")
    assert u.shape == (161, 1) and y.shape == (161, 10)


def test_simulate_zero_length(tmp_path):
    assert run(tmp_path, "simulate", {"network": RING, "input": {"seed": 0, "length": 0}}) == 2


def test_seed_override(tmp_path):
    cfg = {"network": RING, "input": {"seed": 3, "r": 4}}
    assert run(tmp_path, "simulate", cfg, "--seed", "9") == 0
    a = (tmp_path / "out" / "trajectory.csv").read_bytes()
    assert run(tmp_path, "simulate", cfg) == 0
    assert (tmp_path / "out" / "trajectory.csv").read_bytes() != a


@pytest.mark.parametrize(
    "cfg",
    [
        {},
        {"network": {}},
        {"network": {"builtin": "oscillator_ring", "path": "x.json"}},
        {"network": {"builtin": "nope"}},
        {"network": RING, "input": {"r": 4}},
        {"network": RING, "input": {"seed": 1, "r": 4}, "noise": {"bound": 1e-3}},
        {"network": RING, "solver": {"method": "krylov"}},
    ],
)
def test_config_errors(tmp_path, cfg):
    assert run(tmp_path, "simulate" if "solver" not in cfg and "noise" not in cfg else "identify", cfg) == 2


def test_missing_config_file(tmp_path):
    assert main(["check", "--config", str(tmp_path / "missing.json")]) == 2


# -- estimate / check -------------------------------------------------------------


def test_estimate_markov(tmp_path):
    assert run(tmp_path, "estimate-markov", {"network": RING, "input": {"seed": 0, "r": 40}}) == 0
    seq = io.markov_from_dict(json.loads((tmp_path / "out" / "markov.json").read_text()))
    exact = markov_exact(make_oscillator_ring(10), 39, use_S=True)
    assert np.max(np.abs(seq.params - exact.params)) < 1e-8


def test_estimate_from_trajectory(tmp_path):
    run(tmp_path, "simulate", {"network": RING, "input": {"seed": 0, "r": 40}})
    traj = tmp_path / "out" / "trajectory.csv"
    cfg = {"network": RING, "input": {"r": 40, "trajectory": str(traj)}}
    assert run(tmp_path, "estimate-markov", cfg) == 0


def test_estimate_not_exciting_exit_1(tmp_path):
    traj = tmp_path / "zero.csv"
    io.write_trajectory(traj, np.zeros((161, 1)), np.zeros((161, 10)))
    cfg = {"network": RING, "input": {"r": 40, "trajectory": str(traj)}}
    assert run(tmp_path, "estimate-markov", cfg) == 1


def check(tmp_path, network):
    assert run(tmp_path, "check", {"network": network}) == 0
    return json.loads((tmp_path / "out" / "identifiability.json").read_text())


def test_check_ring(tmp_path):
    assert check(tmp_path, RING)["identifiable"] is True


def test_check_decoupled_ring(tmp_path):
    report = check(tmp_path, {**RING, "Q": "zero"})
    assert report["identifiable"] is False


def test_check_homogeneous_deficient(tmp_path):
    Q = [[0, 0, 1], [1, 0, 0], [0, 1, 0]]
    net = {"builtin": "integrator_network", "params": {"Q": Q, "R": [[1], [0], [0]], "S": [[1, 0, 0]]}}
    report = check(tmp_path, net)
    assert report["identifiable"] is False
    homo = report["verdicts"][0]
    assert homo["method"] == "homogeneous_siso"
    assert any("rank S < N and rank R < N" in c for c in homo["caveats"])
    assert "indistinguishable_Q" in homo


# -- identify / evaluate -------------------------------------------------------


def test_identify_noise_free(tmp_path):
    assert run(tmp_path, "identify", {"network": RING, "input": {"seed": 0, "r": 40}}) == 0
    doc = json.loads((tmp_path / "out" / "solve_report.json").read_text())
    Q_hat = np.asarray(doc["Q_hat"]["data"]).reshape(doc["Q_hat"]["shape"])
    assert np.max(np.abs(Q_hat - make_oscillator_ring(10).Q)) < 1e-6
    assert doc["unique"] is True and doc["r"] == 39


def test_identify_small_noise_threshold(tmp_path):
    cfg = {
        "network": RING,
        "input": {"r": 40, "source": "exact"},
        "noise": {"bound": 1e-5, "seed": 0},
        "solver": {"r": 40},
        "gamma": 0.5,
        "weight_bound": 1.0,
    }
    assert run(tmp_path, "identify", cfg) == 0
    out = tmp_path / "out"
    doc = json.loads((out / "solve_report.json").read_text())
    assert doc["bound"] < 0.25 and doc["threshold"]["valid"]
    truth = tmp_path / "truth.json"
    io.save_network(make_oscillator_ring(10), truth)
    assert main(["evaluate", "--truth", str(truth), "--estimate", str(out / "solve_report.json"), "--gamma", "0.5", "--output", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["missing_edges"] == [] and metrics["spurious_edges"] == []


def test_identify_blockwise_parallel_matches(tmp_path):
    base = {"network": RING, "input": {"r": 40, "source": "exact"}, "solver": {"r": 40}}
    run(tmp_path, "identify", base)
    a = json.loads((tmp_path / "out" / "solve_report.json").read_text())
    run(tmp_path, "identify", {**base, "solver": {"r": 40, "method": "blockwise"}}, "--parallel")
    b = json.loads((tmp_path / "out" / "solve_report.json").read_text())
    assert np.max(np.abs(np.subtract(a["Q_hat"]["data"], b["Q_hat"]["data"]))) < 1e-9


def test_identify_order_too_small(tmp_path):
    cfg = {"network": RING, "input": {"r": 40, "source": "exact"}, "solver": {"r": 10}}
    assert run(tmp_path, "identify", cfg) == 2


def test_pipeline_deterministic(tmp_path):
    cfg = {"network": RING, "input": {"seed": 2, "r": 40}, "noise": {"bound": 1e-6, "seed": 4}, "weight_bound": 1.0}
    outputs = []
    for _ in range(2):
        assert run(tmp_path, "identify", cfg) == 0
        outputs.append([(tmp_path / "out" / f).read_bytes() for f in ("markov.json", "solve_report.json", "topology.json")])
    assert outputs[0] == outputs[1]


def test_evaluate_identical(tmp_path):
    truth = tmp_path / "truth.json"
    io.save_network(make_oscillator_ring(10), truth)
    run(tmp_path, "identify", {"network": {"path": str(truth)}, "input": {"r": 40, "source": "exact"}})
    est = tmp_path / "out" / "solve_report.json"
    assert main(["evaluate", "--truth", str(truth), "--estimate", str(est), "--output", str(tmp_path / "ev")]) == 0
    metrics = json.loads((tmp_path / "ev" / "metrics.json").read_text())
    assert metrics["precision"] == metrics["recall"] == 1.0
    assert metrics["max_abs_error"] < 1e-8
    heat = (tmp_path / "ev" / "heatmap.csv").read_text().splitlines()
    assert heat[0] == "row,col,true,estimate,abs_error" and len(heat) == 101


def test_evaluate_sweep(tmp_path):
    truth = tmp_path / "truth.json"
    io.save_network(make_oscillator_ring(10), truth)
    cfg = {
        "network": RING,
        "gamma": 0.5,
        "weight_bound": 1.0,
        "evaluate": {"truth": str(truth), "sweep": {"levels": [1e-5, 1e-4, 1e-3, 1e-2], "seed": 0, "r": 40}},
    }
    assert run(tmp_path, "evaluate", cfg) == 0
    rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("level,alpha,bound,max_abs_error")
    errors = [float(r.split(",")[3]) for r in rows[1:]]
    assert all(a < b for a, b in zip(errors, errors[1:]))


def test_evaluate_partition_mismatch(tmp_path):
    truth = tmp_path / "truth.json"
    io.save_network(make_oscillator_ring(3), truth)
    run(tmp_path, "identify", {"network": RING, "input": {"r": 40, "source": "exact"}})
    est = tmp_path / "out" / "solve_report.json"
    assert main(["evaluate", "--truth", str(truth), "--estimate", str(est), "--output", str(tmp_path / "ev")]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "topoid", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "identify" in proc.stdout
