import json

import pytest

from irg_ldp.app.cli import dispatch, emit_plot_data, plot_table, read_plot_data
from irg_ldp.app.experiments import ExperimentConfig, RunRecord
from irg_ldp.infrastructure.storage import TIMESTAMP_KEY


def _run(capsys, argv):
    code = dispatch(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _without_timestamp(text):
    record = json.loads(text)
    record.pop(TIMESTAMP_KEY)
    return record


@pytest.fixture
def pool_file(sim_env, capsys):
    path = sim_env / "pool.bin"
    code, _, _ = _run(
        capsys,
        ["pool", "--M", "300", "--cap", "100", "--q", "0.5", "--seed", "3", "--save", str(path)],
    )
    assert code == 0
    return path


def test_invalid_alpha_exits_with_validation_code(sim_env, capsys):
    code, out, err = _run(capsys, ["lln", "--alpha", "0.9", "--n", "10"])

    assert code == 2
    assert out == ""
    assert "alpha > 1" in err


def test_unknown_flag_exits_with_usage(sim_env, capsys):
    code, _, err = _run(capsys, ["lln", "--n", "10", "--bogus"])

    assert code == 2
    assert "usage" in err


def test_invalid_log_level_is_rejected(sim_env, capsys):
    code, _, _ = _run(capsys, ["oracle", "--n", "1", "--weights", "1", "--log-level", "loud"])

    assert code == 2


def test_oracle_prints_exact_law(sim_env, capsys):
    code, out, _ = _run(
        capsys, ["oracle", "--n", "3", "--weights", "1,1,1", "--q", "1", "--sigma", "1"]
    )

    record = json.loads(out)
    assert code == 0
    assert record["largest_component_law"]["3"] == pytest.approx(7 / 27)
    assert record["largest_component_law"]["2"] == pytest.approx(12 / 27)
    assert record["largest_component_law"]["1"] == pytest.approx(8 / 27)
    assert record["schema"] == "irg-ldp/1"
    assert record["seed"] == 7


def test_oracle_checks_weight_count(sim_env, capsys):
    code, _, err = _run(capsys, ["oracle", "--n", "4", "--weights", "1,1,1"])

    assert code == 2
    assert "--weights lists 3 weights" in err


def test_oracle_refuses_large_n(sim_env, capsys):
    code, _, err = _run(capsys, ["oracle", "--n", "7", "--weights", "1,1,1,1,1,1,1"])

    assert code == 2
    assert "at most 6 vertices" in err


def test_hubs_reads_pool(pool_file, capsys):
    code, out, _ = _run(capsys, ["hubs", "--rho", "0.8", "--pool", str(pool_file)])

    record = json.loads(out)
    assert code == 0
    assert {"hubs_value", "hubs_ceil", "theta_hat", "status"} <= set(record)
    assert record["hubs_ceil"] >= 1
    assert record["status"] in {"asymptotic", "bounds-only"}


def test_model_flags_must_match_pool(pool_file, capsys):
    code, _, err = _run(capsys, ["lln", "--n", "20", "--pool", str(pool_file), "--q", "0.9"])

    assert code == 2
    assert "differ from the pool" in err


def test_missing_pool_file(sim_env, capsys):
    code, _, err = _run(capsys, ["theta", "--pool", str(sim_env / "absent.bin")])

    assert code == 2
    assert "pool file not found" in err


def test_theta_reports_oracle_for_rank_one(pool_file, capsys):
    code, out, _ = _run(capsys, ["theta", "--pool", str(pool_file)])

    record = json.loads(out)
    assert code == 0
    assert record["M"] == 300
    assert 0.0 < record["theta_oracle"] < 1.0


def test_empty_rate_sweep_writes_header_only_csv(pool_file, capsys):
    plot = pool_file.parent / "rate.csv"

    code, out, _ = _run(capsys, ["rate", "--pool", str(pool_file), "--plot", str(plot)])

    header, rows = read_plot_data(plot)
    assert code == 0
    assert json.loads(out)["sweep"] == []
    assert header == ["rho", "hubs_value", "hubs_ceil", "rate", "theta_hat", "C"]
    assert rows == []


def test_unwritable_plot_path_is_a_runtime_failure(pool_file, capsys):
    blocker = pool_file.parent / "blocker"
    blocker.write_text("")

    code, _, err = _run(
        capsys, ["rate", "--pool", str(pool_file), "--plot", str(blocker / "rate.csv")]
    )

    assert code == 3
    assert err.startswith("Error:")


def test_lln_output_does_not_depend_on_threads(sim_env, capsys):
    base = ["lln", "--n", "300", "--reps", "4", "--seed", "11"]

    code_one, serial, _ = _run(capsys, [*base, "--threads", "1"])
    code_many, threaded, _ = _run(capsys, [*base, "--threads", "3"])

    assert code_one == code_many == 0
    assert _without_timestamp(serial) == _without_timestamp(threaded)
    assert "threads" not in serial and "workers" not in serial


def test_lln_writes_out_file_and_run_store(sim_env, capsys):
    out_path = sim_env / "lln.json"
    code, out, _ = _run(capsys, ["lln", "--n", "100", "--reps", "2", "--out", str(out_path)])

    assert code == 0
    assert json.loads(out_path.read_text()) == json.loads(out)
    lines = (sim_env / "results" / "lln.jsonl").read_text().splitlines()
    store = [json.loads(line) for line in lines]
    assert [record["index"] for record in store] == [0, 1]
    assert all(record["kind"] == "lln" for record in store)


def test_explicit_plant_writes_plot(sim_env, capsys):
    plot = sim_env / "plant.csv"
    argv = ["plant", "--n", "200", "--reps", "2", "--alpha", "2.5", "--mode", "explicit"]

    code, _, _ = _run(capsys, [*argv, "--y", "2.0", "--plot", str(plot)])

    header, rows = read_plot_data(plot)
    assert code == 0
    assert header == ["replication", "largest_fraction", "success"]
    assert [row[2] for row in rows] == [1.0, 1.0]


def test_plant_reports_threshold_check(sim_env, capsys):
    argv = ["plant", "--n", "100", "--reps", "1", "--mode", "none", "--absence-threshold", "0.5"]

    code, out, _ = _run(capsys, argv)

    comparisons = json.loads(out)["comparisons"]
    assert code == 0
    assert (comparisons["check"], comparisons["threshold"]) == ("absence", 0.5)
    assert comparisons["passed"] is True


def test_plant_rejects_threshold_above_one(sim_env, capsys):
    argv = ["plant", "--n", "100", "--mode", "none", "--sufficiency-threshold", "2"]

    code, out, err = _run(capsys, argv)

    assert code == 2
    assert out == ""
    assert "sufficiency_threshold must lie in [0, 1]" in err


def test_conditional_plot_round_trip(tmp_path, rank_one_params):
    cfg = ExperimentConfig(params=rank_one_params, n=10)
    record = RunRecord(
        "conditional",
        cfg,
        (),
        {"s": [0.6, 0.65, 0.7], "empirical_survival": [1.0, 0.5, 0.1], "C_ratio": [1.0, 0.4, 0.1]},
    )

    emit_plot_data(record, tmp_path / "conditional.csv")
    header, rows = read_plot_data(tmp_path / "conditional.csv")

    columns, expected = plot_table(record)
    assert header == ["s", "empirical_survival", "C_ratio"] == [name for name, _ in columns]
    assert rows == expected
