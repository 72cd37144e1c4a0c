import json
import os

import numpy as np
import pytest

from cli import EXIT_CONFIG, EXIT_FAILED, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, _failure_code, build_parser, main

SMALL = [
    "grid.radii = 0.5 0.9",
    "grid.points_per_radius = 8",
    "data.n_chunks = 1",
    "data.chunk_len = 12",
    "data.order = 2",
    "data.noise_bound = 0.5",
    "solver.max_outer = 5",
    "solver.max_inner = 3000",
    "experiment.orders = 2",
    "experiment.systems_per_order = 1",
    "experiment.eps_values = 0.5 1.0",
]


def _config(tmp_path, *extra):
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(SMALL + list(extra)) + "\n", encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def _no_env(monkeypatch):
    for name in list(os.environ):
        if name.startswith("SYSID_"):
            monkeypatch.delenv(name)


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    args = build_parser().parse_args(["experiment", "noise_sweep", "--workers", "2"])
    assert args.which == "noise_sweep" and args.workers == 2


def test_simulate_writes_dataset_and_truth(tmp_path):
    out = tmp_path / "out"
    code = main(["simulate", "--config", str(_config(tmp_path)), "--out", str(out), "--seed", "4"])
    assert code == EXIT_OK
    for name in ("dataset.csv", "grid.txt", "ground_truth.json", "series.csv", "var/sysid.log"):
        assert (out / name).exists()
    truth = json.loads((out / "ground_truth.json").read_text(encoding="utf-8"))
    assert truth["order"] == 2
    assert truth["config"]["run.seed"] == 4


def test_identify_both_modes(tmp_path):
    out = tmp_path / "out"
    code = main(["identify", "--config", str(_config(tmp_path)), "--out", str(out)])
    assert code == EXIT_OK
    for mode in ("lp", "l1"):
        body = json.loads((out / f"result_{mode}.json").read_text(encoding="utf-8"))
        assert body["mode"] == mode
        assert body["status"] in ("converged", "best_iterate")
        assert body["metrics"]["zeta_out"] == [0.0]
        assert body["config"]["solver.max_outer"] == 5
        assert (out / f"history_{mode}.csv").exists()
        assert (out / f"reconstruction_{mode}.csv").exists()
        violations = (out / f"violations_{mode}.csv").read_text(encoding="utf-8").splitlines()
        assert violations[1:] == ["constraint_id,type,violation"]


def test_same_seed_rerun_is_byte_identical(tmp_path):
    out = tmp_path / "out"
    cfg = str(_config(tmp_path))
    names = ("dataset.csv", "grid.txt", "ground_truth.json", "series.csv", "result_l1.json", "history_l1.csv")

    def run():
        assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", "3"]) == EXIT_OK
        assert main(["identify", "--config", cfg, "--out", str(out), "--seed", "3", "--mode", "l1"]) == EXIT_OK
        return {name: (out / name).read_bytes() for name in names}

    assert run() == run()


def test_identify_from_written_dataset(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(_config(tmp_path)), "--out", str(out)]) == EXIT_OK
    cfg = _config(tmp_path, "data.source = dataset_csv", f"data.path = {out / 'dataset.csv'}")
    code = main(["identify", "--config", str(cfg), "--mode", "l1", "--out", str(tmp_path / "id")])
    assert code == EXIT_OK
    body = json.loads((tmp_path / "id" / "result_l1.json").read_text(encoding="utf-8"))
    assert body["metrics"]["zeta_out"] == [0.0]


def test_series_source_and_noise_sweep(tmp_path, rng):
    series = tmp_path / "arm.dat"
    u = rng.uniform(-1, 1, 40)
    y = np.convolve(u, [0.0, 0.8, 0.4])[:40]
    series.write_text("".join(f"{a:.17g} {b:.17g}\n" for a, b in zip(u, y)), encoding="utf-8")
    cfg = _config(tmp_path, "data.source = series", f"data.path = {series}")
    out = tmp_path / "out"
    code = main(["experiment", "noise_sweep", "--config", str(cfg), "--mode", "l1", "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "noise_sweep.csv").exists()
    assert (out / "noise_sweep_cells.csv").exists()


def test_multi_system_experiment(tmp_path):
    out = tmp_path / "out"
    code = main(["experiment", "multi_system", "--config", str(_config(tmp_path)), "--mode", "l1", "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "multi_system_cells.csv").exists()
    assert (out / "multi_system_stats.csv").exists()


def test_config_error_exit(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    bad = _config(tmp_path, "solver.rho = -2")
    assert main(["identify", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_data_file_exit(tmp_path):
    cfg = _config(tmp_path, "data.source = series", f"data.path = {tmp_path / 'nope.dat'}")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_IO


def test_malformed_data_file_exit(tmp_path):
    series = tmp_path / "bad.dat"
    series.write_text("1.0\n", encoding="utf-8")
    cfg = _config(tmp_path, "data.source = series", f"data.path = {series}")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_IO


def test_bad_config_message_names_field(tmp_path, capsys):
    bad = _config(tmp_path, "solver.rho = fast")
    assert main(["identify", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "config error" in err
    assert "solver.rho" in err


def test_cell_failures_map_to_exit_codes():
    ok = {"status": "converged"}
    infeasible = {"status": "error", "error": "InfeasibleError: empty"}
    crashed = {"status": "error", "error": "LinAlgError: not positive definite"}
    assert _failure_code([ok, ok]) == EXIT_OK
    assert _failure_code([ok, infeasible]) == EXIT_INFEASIBLE
    assert _failure_code([infeasible, crashed]) == EXIT_FAILED
    assert EXIT_FAILED != EXIT_CONFIG
