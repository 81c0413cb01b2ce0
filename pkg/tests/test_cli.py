import json

import pytest

from qkd_mitm.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def fields(text):
    return dict(line.split("=", 1) for line in text.splitlines())


def test_verify_su2(capsys):
    code, out, _ = run(capsys, "verify-su2", "--r", "3", "--n", "2")
    assert code == 0 and "expected=4 min=4 max=4" in out and out.strip().endswith("PASS")


def test_verify_guard(capsys):
    code, _, err = run(capsys, "verify-su2", "--r", "14", "--n", "2")
    assert code == 1 and err.startswith("error[E_GUARD]")


def test_headline_session(capsys):
    code, out, _ = run(capsys, "session", "--adversary", "full_mitm:full_list", "--auth", "two_step",
                       "--mode", "immediate", "--seed", "7")
    f = fields(out)
    assert code == 0 and f["status"] == "completed" and f["mitm_completed"] == "true"
    assert f["keys_agree"] == "false"


def test_wegman_carter_session(capsys):
    code, out, _ = run(capsys, "session", "--adversary", "full_mitm:full_list", "--auth", "wegman_carter",
                       "--seed", "7")
    assert code == 0 and fields(out)["status"] == "aborted_auth"


def test_session_output_is_reproducible(capsys, tmp_path):
    args = ["session", "--adversary", "full_mitm", "--seed", "3", "--transcript", str(tmp_path / "t"),
            "--forgery-log", str(tmp_path / "f")]
    first = run(capsys, *args)
    t1 = (tmp_path / "t").read_bytes()
    assert run(capsys, *args) == first and (tmp_path / "t").read_bytes() == t1
    for line in (tmp_path / "f").read_text().splitlines():
        json.loads(line)


def test_config_file_overridden_by_flags(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"auth_mode": "postponed", "num_qubits": 300}))
    code, out, _ = run(capsys, "session", "--config", str(cfg), "--mode", "immediate")
    assert code == 0 and fields(out)["status"] == "completed"


def test_experiment(capsys, tmp_path):
    plan = tmp_path / "p.json"
    plan.write_text(json.dumps({"config": {"m_bits": 8, "r_bits": 4, "n_bits": 2, "num_qubits": 8},
                                "adversary": "fixed_message", "trials": 5}))
    out_csv = tmp_path / "o.csv"
    code, _, _ = run(capsys, "experiment", "--plan", str(plan), "--out", str(out_csv), "--seed", "2")
    assert code == 0 and len(out_csv.read_text().splitlines()) == 2


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", "--m", "8", "--r", "4", "--n", "3")
    assert code == 0 and out.strip() == "eps1=0.0625 eps2=0.125 eps=0.1875"
    code, out, _ = run(capsys, "bounds", "--m", "8", "--r", "4", "--n", "2", "--eve", "list:16")
    assert "eps1=1 " in out


@pytest.mark.parametrize("argv,code,prefix", [
    (["session", "--adversary", "wizard"], 1, "error[E_CONFIG]"),
    (["session", "--countermeasure", "otp_reconciliation"], 1, "error[E_UNIMPLEMENTED]"),
    (["experiment", "--plan", "/nonexistent.json", "--out", "x.csv"], 1, "error[E_IO]"),
    (["bounds", "--eve", "psychic"], 1, "error[E_CONFIG]"),
])
def test_domain_errors(capsys, argv, code, prefix):
    got, _, err = run(capsys, *argv)
    assert got == code and err.startswith(prefix) and err.count("\n") == 1


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["session", "--seed", "-1"])
    assert exc.value.code == 2
