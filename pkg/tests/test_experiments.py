import json

import pytest

from qkd_mitm.errors import ConfigError
from qkd_mitm.experiments import (
    CSV_COLUMNS,
    ExperimentPlan,
    binomial_halfwidth,
    emit_csv,
    read_csv,
    run_trials,
)

SMALL = {"m_bits": 8, "r_bits": 4, "n_bits": 2, "num_qubits": 8}


def test_empty_sweep_single_row():
    result = run_trials(ExperimentPlan(SMALL, "fixed_message", trials=20))
    assert len(result.rows) == 1


def test_csv_round_trip_and_header(tmp_path):
    plan = ExperimentPlan(SMALL, "list:0", trials=30, sweep_parameter="list_size", sweep_values=(0, 8))
    result = run_trials(plan)
    path = emit_csv(result, tmp_path / "out.csv")
    assert path.read_text().splitlines()[0].split(",") == list(CSV_COLUMNS)
    assert read_csv(path) == result.table()


def test_identical_plans_give_identical_bytes(tmp_path):
    plan = ExperimentPlan({}, "guess_tag", trials=15, seed=4)
    a = emit_csv(run_trials(plan), tmp_path / "a.csv").read_bytes()
    b = emit_csv(run_trials(plan, jobs=2), tmp_path / "b.csv").read_bytes()
    assert a == b


def test_plan_from_file(tmp_path):
    p = tmp_path / "plan.json"
    p.write_text(json.dumps({"config": SMALL, "adversary": "list:0", "trials": 5,
                             "sweep": {"parameter": "list_size", "values": [0, 16]}}))
    plan = ExperimentPlan.from_file(p)
    rows = run_trials(plan).rows
    assert [r["adversary"] for r in rows] == ["list:0", "list:16"]
    assert rows[1]["sifting_success_rate"] == 1.0


def test_countermeasure_sweep():
    plan = ExperimentPlan({}, "absent", trials=3, sweep_parameter="countermeasures",
                          sweep_values=((), ("secret_hash_check",)))
    rows = run_trials(plan).rows
    assert [r["sweep_value"] for r in rows] == ["none", "secret_hash_check"]
    assert all(r["completion_rate"] == 1.0 for r in rows)


@pytest.mark.parametrize("plan", [
    {"config": {"m_bits": 4, "r_bits": 8}},
    {"config": {}, "adversary": "sorcery"},
    {"config": {}, "trials": 0},
    {"config": {}, "sweep": {"parameter": "moon_phase", "values": [1]}},
    {"config": {}, "colour": "red"},
])
def test_bad_plans_rejected_before_running(plan):
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict(plan)


def test_io_errors_name_the_path(tmp_path):
    missing = tmp_path / "nope" / "out.csv"
    result = run_trials(ExperimentPlan(SMALL, trials=1))
    with pytest.raises(OSError, match="nope"):
        emit_csv(result, missing)
    with pytest.raises(OSError, match="absent.json"):
        ExperimentPlan.from_file(tmp_path / "absent.json")


def test_halfwidth():
    assert binomial_halfwidth(0, 0) == 0.0
    assert binomial_halfwidth(50, 100) == pytest.approx(0.15)
