"""End-to-end tests of the command-line surface: file contracts, exit
codes, manifests, and cross-command round trips."""

import hashlib
import json

import numpy as np
import pytest

from bisim.cli import main
from bisim.envs import build_pessimism_mdp
from bisim.exact import read_metric_csv
from bisim.mdp import DeterministicPolicy, load_mdp, save_mdp, save_policy


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """Shared inputs: a small grid MDP, its exact metric, and the 3-state
    action-mismatch instance."""
    root = tmp_path_factory.mktemp("cli")
    layout = root / "layout.txt"
    layout.write_text("G...\n....\n")
    assert main(["gridworld", "--layout", str(layout), "--gamma", "0.9",
                 "--out", str(root / "small.json")]) == 0
    assert main(["exact", "--mdp", str(root / "small.json"),
                 "--mode", "bisim", "--tol", "1e-9",
                 "--out", str(root / "small_exact")]) == 0
    save_mdp(build_pessimism_mdp(k=1.0, gamma=0.9), root / "pess.json")
    return root


def _read_json(path):
    with open(path) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# gridworld
# ---------------------------------------------------------------------------

def test_gridworld_default_emits_31_states(tmp_path):
    out = tmp_path / "world.json"
    assert main(["gridworld", "--gamma", "0.9", "--out", str(out)]) == 0
    mdp = load_mdp(out)
    assert mdp.num_states == 31
    assert mdp.num_actions == 4
    assert mdp.gamma == 0.9
    assert len(mdp.labels) == 31


def test_gridworld_rejects_bad_gamma(tmp_path, capsys):
    rc = main(["gridworld", "--gamma", "1.5",
               "--out", str(tmp_path / "w.json")])
    assert rc == 2
    assert "gamma" in capsys.readouterr().err


def test_gridworld_missing_layout_file(tmp_path, capsys):
    rc = main(["gridworld", "--layout", str(tmp_path / "nope.txt"),
               "--gamma", "0.9", "--out", str(tmp_path / "w.json")])
    assert rc == 2
    assert "not found" in capsys.readouterr().err


def test_gridworld_output_feeds_every_other_command(work, tmp_path):
    """Round trip: the emitted MDP is accepted unmodified downstream."""
    mdp_path = str(work / "small.json")
    assert main(["exact", "--mdp", mdp_path, "--mode", "lax",
                 "--out", str(tmp_path / "lax")]) == 0
    assert main(["sample", "--mdp", mdp_path, "--budget", "1000",
                 "--out", str(tmp_path / "samp")]) == 0
    assert main(["eval", "--oracle", str(work / "small_exact/metric.csv"),
                 "--approx", str(tmp_path / "samp/metric.csv"),
                 "--mdp", mdp_path, "--out", str(tmp_path / "ev")]) == 0
    assert main(["aggregate", "--metric",
                 str(work / "small_exact/metric.csv"),
                 "--epsilon", "0.5", "--out", str(tmp_path / "agg")]) == 0


# ---------------------------------------------------------------------------
# exact
# ---------------------------------------------------------------------------

def test_exact_output_files_and_report(work):
    out = work / "small_exact"
    metric = read_metric_csv(out / "metric.csv")
    assert metric.shape == (8, 8)
    report = _read_json(out / "report.json")
    assert set(report) == {"iterations", "final_residual",
                           "guaranteed_error", "apriori_iterations"}
    assert report["guaranteed_error"] <= 1e-9
    assert (out / "metric.png").exists()


def test_exact_manifest_contract(work):
    out = work / "small_exact"
    manifest = _read_json(out / "manifest.json")
    assert manifest["command"] == "exact"
    assert manifest["seed"] is None
    assert "--mode" in manifest["argv"]
    assert sorted(manifest["outputs"]) == ["metric.csv", "metric.png",
                                           "report.json"]
    for name in manifest["outputs"]:
        assert (out / name).exists()
    # digests are sha256 of the input files
    mdp_path = str(work / "small.json")
    expect = hashlib.sha256(open(mdp_path, "rb").read()).hexdigest()
    assert manifest["inputs"][mdp_path] == expect
    # exactly one manifest in the directory
    assert len(list(out.glob("*manifest*"))) == 1


def test_exact_is_byte_deterministic(work, tmp_path):
    args = ["exact", "--mdp", str(work / "small.json"), "--mode", "bisim",
            "--tol", "1e-6"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("metric.csv", "report.json", "metric.png"):
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()


def test_exact_csv_uses_12_significant_digits(work, tmp_path):
    assert main(["exact", "--mdp", str(work / "pess.json"),
                 "--mode", "bisim", "--tol", "1e-9",
                 "--out", str(tmp_path / "p")]) == 0
    first = (tmp_path / "p" / "metric.csv").read_text().splitlines()[0]
    cells = first.split(",")
    assert cells[0] == "0"
    assert len(cells) == 3
    # d(s, t) = 10 at k=1, gamma=0.9; printed at 12 significant digits
    assert abs(float(cells[1]) - 10.0) < 1e-6


def test_exact_pi_bisim_requires_policy(work, tmp_path, capsys):
    rc = main(["exact", "--mdp", str(work / "small.json"),
               "--mode", "pi-bisim", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "--policy" in capsys.readouterr().err


def test_exact_policy_only_valid_for_pi_bisim(work, tmp_path, capsys):
    pol = tmp_path / "pol.json"
    save_policy(DeterministicPolicy(np.zeros(8, dtype=int)), pol)
    rc = main(["exact", "--mdp", str(work / "small.json"),
               "--mode", "bisim", "--policy", str(pol),
               "--out", str(tmp_path / "x")])
    assert rc == 2


def test_exact_pi_bisim_with_policy_runs(work, tmp_path):
    pol = tmp_path / "pol.json"
    save_policy(DeterministicPolicy(np.full(8, 3, dtype=int)), pol)
    assert main(["exact", "--mdp", str(work / "small.json"),
                 "--mode", "pi-bisim", "--policy", str(pol),
                 "--out", str(tmp_path / "pi")]) == 0
    metric = read_metric_csv(tmp_path / "pi" / "metric.csv")
    assert metric.shape == (8, 8)


def test_exact_malformed_mdp_names_field(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"num_states": 2, "num_actions": 1,
                               "gamma": 0.9, "reward": [[0.0], [0.0]]}))
    rc = main(["exact", "--mdp", str(bad), "--mode", "bisim",
               "--out", str(tmp_path / "x")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "next_state" in err or "transition" in err


def test_exact_unreadable_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = main(["exact", "--mdp", str(bad), "--mode", "bisim",
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "malformed" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

def test_sample_budget_zero_gives_zero_matrix(work, tmp_path):
    assert main(["sample", "--mdp", str(work / "small.json"),
                 "--budget", "0", "--out", str(tmp_path / "z")]) == 0
    metric = read_metric_csv(tmp_path / "z" / "metric.csv")
    np.testing.assert_array_equal(metric, np.zeros((8, 8)))
    report = _read_json(tmp_path / "z" / "report.json")
    assert report["samples_drawn"] == 0


def test_sample_close_to_exact_on_three_state_instance(work, tmp_path):
    assert main(["exact", "--mdp", str(work / "pess.json"),
                 "--mode", "bisim", "--tol", "1e-9",
                 "--out", str(tmp_path / "ex")]) == 0
    assert main(["sample", "--mdp", str(work / "pess.json"),
                 "--budget", "100000", "--seed", "7",
                 "--out", str(tmp_path / "sm")]) == 0
    exact = read_metric_csv(tmp_path / "ex" / "metric.csv")
    sampled = read_metric_csv(tmp_path / "sm" / "metric.csv")
    assert np.abs(exact - sampled).max() <= 1e-3


def test_sample_trace_only_when_requested(work, tmp_path):
    base = ["sample", "--mdp", str(work / "small.json"),
            "--budget", "500", "--seed", "1"]
    assert main(base + ["--out", str(tmp_path / "plain")]) == 0
    assert not (tmp_path / "plain" / "trace.jsonl").exists()
    assert main(base + ["--trace", "--out", str(tmp_path / "tr")]) == 0
    lines = (tmp_path / "tr" / "trace.jsonl").read_text().splitlines()
    assert lines
    record = json.loads(lines[0])
    assert set(record) == {"step", "s", "t", "old", "new"}
    assert record["new"] > record["old"]
    manifest = _read_json(tmp_path / "tr" / "manifest.json")
    assert "trace.jsonl" in manifest["outputs"]
    assert manifest["seed"] == 1


def test_sample_same_seed_byte_identical(work, tmp_path):
    args = ["sample", "--mdp", str(work / "small.json"),
            "--budget", "2000", "--seed", "5", "--trace"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("metric.csv", "report.json", "trace.jsonl", "metric.png"):
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()


def test_sample_different_seeds_differ(work, tmp_path):
    base = ["sample", "--mdp", str(work / "small.json"), "--budget", "300"]
    assert main(base + ["--seed", "0", "--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--seed", "1", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "metric.csv").read_text() != \
           (tmp_path / "b" / "metric.csv").read_text()


def test_sample_on_policy_requires_policy(work, tmp_path, capsys):
    rc = main(["sample", "--mdp", str(work / "small.json"),
               "--mode", "on", "--budget", "100",
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "policy" in capsys.readouterr().err


def test_sample_on_policy_runs(work, tmp_path):
    pol = tmp_path / "pol.json"
    save_policy(DeterministicPolicy(np.full(8, 2, dtype=int)), pol)
    assert main(["sample", "--mdp", str(work / "small.json"),
                 "--mode", "on", "--policy", str(pol),
                 "--budget", "5000", "--out", str(tmp_path / "on")]) == 0
    report = _read_json(tmp_path / "on" / "report.json")
    assert report["budget"] == 5000


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _train_config(work, **overrides):
    data = {
        "gamma": 0.9, "batch_size": 8, "target_update_period": 10,
        "beta_gap_factor": 0.9, "learning_rate": 0.01, "total_steps": 40,
        "hidden_layers": [16], "representation": {"type": "xy"},
        "mode": "off-policy", "seed": 0,
        "layout": str(work / "layout.txt"),
    }
    data.update(overrides)
    return data


def _write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_train_writes_expected_files(work, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", _train_config(
        work, oracle_metric=str(work / "small_exact/metric.csv"),
        eval_period=20))
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "run")]) == 0
    out = tmp_path / "run"
    for name in ("net.json", "training_log.csv", "training_curves.png",
                 "error_curve.csv", "error_curves.png", "manifest.json"):
        assert (out / name).exists(), name
    log_lines = (out / "training_log.csv").read_text().splitlines()
    assert log_lines[0] == "step,loss,beta"
    assert len(log_lines) == 41
    err_lines = (out / "error_curve.csv").read_text().splitlines()
    assert [line.split(",")[0] for line in err_lines] == \
        ["step", "0", "20", "40"]
    net = _read_json(out / "net.json")
    assert net["layer_sizes"] == [4, 16, 1]
    assert net["representation"] == {"type": "xy"}
    assert net["layout_rows"] == ["G...", "...."]


def test_train_without_oracle_skips_error_outputs(work, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", _train_config(work))
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "run")]) == 0
    assert not (tmp_path / "run" / "error_curve.csv").exists()
    manifest = _read_json(tmp_path / "run" / "manifest.json")
    assert "error_curve.csv" not in manifest["outputs"]
    assert manifest["seed"] == 0


def test_train_zero_steps_emits_initialized_net(work, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json",
                        _train_config(work, total_steps=0))
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "run")]) == 0
    log = (tmp_path / "run" / "training_log.csv").read_text().splitlines()
    assert log == ["step,loss,beta"]
    assert (tmp_path / "run" / "net.json").exists()


def test_train_is_byte_deterministic(work, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", _train_config(
        work, oracle_metric=str(work / "small_exact/metric.csv"),
        eval_period=20, total_steps=30))
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "a")]) == 0
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "b")]) == 0
    for name in ("net.json", "training_log.csv", "error_curve.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()


def test_train_config_error_names_key_path(work, tmp_path, capsys):
    data = _train_config(work)
    data["representation"] = {"type": "xy_noisy", "noise_clip": 0.3}
    cfg = _write_config(tmp_path / "cfg.json", data)
    rc = main(["train", "--config", cfg, "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "representation.noise_sigma" in capsys.readouterr().err


def test_train_rejects_unknown_config_key(work, tmp_path, capsys):
    cfg = _write_config(tmp_path / "cfg.json",
                        _train_config(work, optimizer="sgd"))
    rc = main(["train", "--config", cfg, "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "optimizer" in capsys.readouterr().err


def test_train_on_policy_needs_policy_path(work, tmp_path, capsys):
    cfg = _write_config(tmp_path / "cfg.json",
                        _train_config(work, mode="on-policy"))
    rc = main(["train", "--config", cfg, "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "policy" in capsys.readouterr().err


def test_train_on_policy_runs_with_policy(work, tmp_path):
    pol = tmp_path / "pol.json"
    save_policy(DeterministicPolicy(np.full(8, 1, dtype=int)), pol)
    cfg = _write_config(tmp_path / "cfg.json", _train_config(
        work, mode="on-policy", policy=str(pol), total_steps=20))
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "run")]) == 0


def test_train_oracle_shape_mismatch(work, tmp_path, capsys):
    oracle = tmp_path / "oracle.csv"
    oracle.write_text("0,1\n1,0\n")
    cfg = _write_config(tmp_path / "cfg.json",
                        _train_config(work, oracle_metric=str(oracle)))
    rc = main(["train", "--config", cfg, "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "states" in capsys.readouterr().err


def test_train_noisy_config_runs(work, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", _train_config(
        work, representation={"type": "xy_noisy", "noise_sigma": 0.1,
                              "noise_clip": 0.3},
        total_steps=20))
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "run")]) == 0
    losses = (tmp_path / "run" / "training_log.csv").read_text()
    assert "nan" not in losses and "inf" not in losses


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_oracle_against_itself_is_zero(work, tmp_path):
    oracle = str(work / "small_exact/metric.csv")
    assert main(["eval", "--oracle", oracle, "--approx", oracle,
                 "--mdp", str(work / "small.json"),
                 "--out", str(tmp_path / "ev")]) == 0
    report = _read_json(tmp_path / "ev" / "error_report.json")
    assert report["absolute_error"] == 0.0
    assert report["normalized_error"] == 0.0
    assert report["diagonal_residual"] == 0.0
    assert report["asymmetry"] == 0.0
    assert (tmp_path / "ev" / "error_report.png").exists()


def test_eval_net_json_route(work, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json",
                        _train_config(work, total_steps=20))
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "run")]) == 0
    assert main(["eval", "--oracle", str(work / "small_exact/metric.csv"),
                 "--approx", str(tmp_path / "run" / "net.json"),
                 "--mdp", str(work / "small.json"),
                 "--out", str(tmp_path / "ev")]) == 0
    report = _read_json(tmp_path / "ev" / "error_report.json")
    assert report["absolute_error"] > 0.0


def test_eval_shape_mismatch_exits_2(work, tmp_path, capsys):
    small = tmp_path / "tiny.csv"
    small.write_text("0,1\n1,0\n")
    rc = main(["eval", "--oracle", str(work / "small_exact/metric.csv"),
               "--approx", str(small), "--mdp", str(work / "small.json"),
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "shape" in capsys.readouterr().err


def test_eval_net_without_metadata_exits_2(work, tmp_path, capsys):
    from bisim.approx import ApproxNet, save_net
    bare = tmp_path / "bare.json"
    save_net(ApproxNet((4, 6, 1)), bare)
    rc = main(["eval", "--oracle", str(work / "small_exact/metric.csv"),
               "--approx", str(bare), "--mdp", str(work / "small.json"),
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "metadata" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# aggregate
# ---------------------------------------------------------------------------

def test_aggregate_outputs_and_epsilon_zero_singletons(work, tmp_path):
    metric = str(work / "small_exact/metric.csv")
    assert main(["aggregate", "--metric", metric, "--epsilon", "0",
                 "--out", str(tmp_path / "agg")]) == 0
    rows = (tmp_path / "agg" / "clustering.csv").read_text().splitlines()
    assert rows[0] == "state_id,cluster_id"
    data = _read_json(tmp_path / "agg" / "clustering.json")
    # this grid has all-positive off-diagonal distances: singletons
    assert data["num_clusters"] == 8
    assert (tmp_path / "agg" / "cluster_sizes.png").exists()


def test_aggregate_requires_epsilon(work, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["aggregate", "--metric", str(work / "small_exact/metric.csv"),
              "--out", str(tmp_path / "x")])
    assert exc.value.code == 2


def test_aggregate_negative_epsilon_exits_2(work, tmp_path, capsys):
    rc = main(["aggregate", "--metric", str(work / "small_exact/metric.csv"),
               "--epsilon", "-1", "--out", str(tmp_path / "x")])
    assert rc == 2


def test_aggregate_invariant_breach_exits_3(work, tmp_path, monkeypatch,
                                            capsys):
    # force a defective clustering through to verify the output gate
    import bisim.cli as cli_mod
    from bisim.evaluation import Clustering

    def broken(metric, epsilon):
        return Clustering(labels=np.zeros(metric.shape[0], dtype=int),
                          epsilon=epsilon)

    monkeypatch.setattr(cli_mod, "aggregate", broken)
    rc = main(["aggregate", "--metric", str(work / "small_exact/metric.csv"),
               "--epsilon", "0.001", "--out", str(tmp_path / "x")])
    assert rc == 3
    assert "invariant" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# parser-level behavior
# ---------------------------------------------------------------------------

def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["solve-everything"])
    assert exc.value.code == 2


def test_no_arguments_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
