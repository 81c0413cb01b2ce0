"""Acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line through the ``verdict`` fixture; the
lines are repeated in the terminal summary.  Run alone with
``pytest tests/test_acceptance.py -v``.
"""
import math
import os
import time

import numpy as np
import pytest

from qkd_mitm.adversary import AdversaryStrategy
from qkd_mitm.bits import BitString
from qkd_mitm.cli import main as cli_main
from qkd_mitm.experiments import ExperimentPlan, run_trials, slope_intercept
from qkd_mitm.hash_core import PublicHashDescriptor, count_preimages
from qkd_mitm.protocol import ProtocolConfig, run_session, sift_positions

JOBS = os.cpu_count() or 1
SMALL = {"m_bits": 8, "r_bits": 4, "n_bits": 2, "num_qubits": 8}
GUESS = {"m_bits": 8, "r_bits": 6, "n_bits": 4, "num_qubits": 8}

_CACHE: dict = {}


def experiment(key, config, adversary, trials, **sweep):
    """Run (once) and remember every experiment, for the upper-bound sweep."""
    if key not in _CACHE:
        plan = ExperimentPlan(config, adversary, trials=trials, seed=0, name=key, **sweep)
        start = time.perf_counter()
        result = run_trials(plan, jobs=JOBS)
        _CACHE[key] = (result, time.perf_counter() - start)
    return _CACHE[key]


def sigma(p, n):
    return math.sqrt(p * (1 - p) / n)


def test_c1_su2_exact(capsys, verdict):
    parts, ok = [], True
    for r, n in ((2, 1), (3, 2), (4, 2)):
        start = time.perf_counter()
        code = cli_main(["verify-su2", "--r", str(r), "--n", str(n)])
        elapsed = time.perf_counter() - start
        out = capsys.readouterr().out
        fields = dict(tok.split("=") for tok in out.split() if "=" in tok)
        expected = 1 << (r - 1)
        ok &= (code == 0 and out.strip().endswith("PASS") and elapsed < 10
               and int(fields["min"]) == int(fields["max"]) == int(fields["expected"]) == expected)
        parts.append(f"(r={r},n={n}) cells {fields['min']}..{fields['max']} want {expected} in {elapsed:.2f}s")
    assert verdict(1, ok, "; ".join(parts))


def test_c2_guess_tag(verdict):
    rates, elapsed, ok = [], 0.0, True
    for scheme in ("two_step", "wegman_carter"):
        result, t = experiment(f"guess-{scheme}", dict(GUESS, scheme=scheme), "guess_tag", 10_000)
        row = result.rows[0]
        n = row["forgery_opportunities"]
        tol = 3 * sigma(1 / 16, n)
        ok &= abs(row["forgery_accept_rate"] - 1 / 16) <= tol
        rates.append(f"{scheme} {row['forgery_accept_rate']:.4f} (n={n}, tol {tol:.4f})")
        elapsed += t
    ok &= elapsed < 60
    assert verdict(2, ok, "; ".join(rates) + f"; target 0.0625; {elapsed:.1f}s")


def test_c3_fixed_message(verdict):
    f = PublicHashDescriptor.xor_fold(8, 4)
    target = count_preimages(f, f(BitString.zeros(8))) / 2 ** 8
    result, _ = experiment("fixed", SMALL, "fixed_message", 10_000)
    rate = result.rows[0]["sifting_success_rate"]
    tol = 3 * sigma(target, 10_000)
    assert verdict(3, abs(rate - target) <= tol,
                   f"settings forgery {rate:.4f} vs brute-force {target:.4f} +- {tol:.4f}")


def test_c4_list_linearity(verdict):
    sizes = (0, 4, 8, 12, 16)
    result, _ = experiment("list-sweep", SMALL, "list:0", 10_000,
                           sweep_parameter="list_size", sweep_values=sizes)
    rates = [row["sifting_success_rate"] for row in result.rows]
    slope, intercept = slope_intercept(sizes, rates)
    # intercept = sum_i w_i y_i for the OLS weights; its sd from binomial variances at L/16
    mean = sum(sizes) / len(sizes)
    sxx = sum((x - mean) ** 2 for x in sizes)
    weights = [1 / len(sizes) - mean * (x - mean) / sxx for x in sizes]
    sd = math.sqrt(sum(w * w * sigma(x / 16, 10_000) ** 2 for w, x in zip(weights, sizes)))
    ok = abs(slope - 1 / 16) <= 0.1 / 16 and abs(intercept) <= 3 * sd
    assert verdict(4, ok, f"rates {[round(r, 4) for r in rates]}; slope {slope:.5f} (1/16 +- 10%), "
                          f"intercept {intercept:.5f} (3 sd {3 * sd:.5f})")


def test_c5_headline_attack(verdict):
    result, elapsed = experiment("headline", {}, "full_mitm:full_list", 1_000)
    row = result.rows[0]
    ok = (row["completion_rate"] == 1.0 and row["mitm_completion_rate"] == 1.0
          and row["auth_abort_rate"] == 0 and row["qber_abort_rate"] == 0 and elapsed < 60)
    assert verdict(5, ok, f"completion {row['completion_rate']}, both-key agreement "
                          f"{row['mitm_completion_rate']}, aborts {row['auth_abort_rate'] + row['qber_abort_rate']}, "
                          f"{elapsed:.1f}s")


def test_c6_wegman_carter_resists(verdict):
    result, _ = experiment("wc-mitm", {"scheme": "wegman_carter"}, "full_mitm:full_list", 10_000)
    row = result.rows[0]
    per_tag, n = row["tag_accept_rate"], row["tag_forgeries"]
    tol = 3 * sigma(1 / 16, n)
    ok = abs(per_tag - 1 / 16) <= tol and row["completion_rate"] <= 3 / 16
    assert verdict(6, ok, f"per forged tag {per_tag:.4f} (n={n}, 1/16 +- {tol:.4f}); "
                          f"undetected completion {row['completion_rate']:.4f} <= {3 / 16:.4f}")


def test_c7_single_flip(verdict):
    rng = np.random.default_rng(20240601)
    failures = 0
    for _ in range(100_000):
        size = int(rng.integers(1, 65))
        own = BitString(int(rng.integers(0, 1 << 62)) & ((1 << size) - 1), size)
        peer = BitString(int(rng.integers(0, 1 << 62)) & ((1 << size) - 1), size)
        flipped = peer.flip(int(rng.integers(0, size)))
        diff = set(sift_positions(own, peer)) ^ set(sift_positions(own, flipped))
        failures += len(diff) != 1
    assert verdict(7, failures == 0, f"100000 cases, {failures} failures")


def test_c8_secret_hash_check(verdict):
    result, _ = experiment("check", {"countermeasures": ["secret_hash_check"]}, "full_mitm:full_list", 10_000)
    rate = result.rows[0]["detection_rate"]
    tol = 3 * sigma(15 / 16, 10_000)
    assert verdict(8, abs(rate - 15 / 16) <= tol, f"detection {rate:.4f} vs 0.9375 +- {tol:.4f}")


def test_c9_postponed(verdict):
    early = {"timestamp_end_quantum", "settings", "ec_maps"}
    cfg = ProtocolConfig(auth_mode="postponed")
    touched = 0
    for seed in range(200):
        out = run_session(cfg.with_seed(seed), AdversaryStrategy.parse("full_mitm", seed=seed))
        touched += sum(r.phase in early for r in out.forgery_log)
    post, _ = experiment("postponed", {"auth_mode": "postponed"}, "full_mitm:full_list", 1_000)
    imm, _ = experiment("headline", {}, "full_mitm:full_list", 1_000)
    p, i = post.rows[0]["completion_rate"], imm.rows[0]["completion_rate"]
    assert verdict(9, touched == 0 and p < i,
                   f"early-phase forgeries {touched}; completion postponed {p} < immediate {i}")


def test_c10_upper_bound(verdict):
    # runs last in file order; missing experiments are produced here
    plans = [("guess-two_step", dict(GUESS, scheme="two_step"), "guess_tag", 10_000, {}),
                  ("guess-wegman_carter", dict(GUESS, scheme="wegman_carter"), "guess_tag", 10_000, {}),
                  ("fixed", SMALL, "fixed_message", 10_000, {}),
                  ("list-sweep", SMALL, "list:0", 10_000,
                   {"sweep_parameter": "list_size", "sweep_values": (0, 4, 8, 12, 16)}),
                  ("headline", {}, "full_mitm:full_list", 1_000, {}),
                  ("wc-mitm", {"scheme": "wegman_carter"}, "full_mitm:full_list", 10_000, {}),
                  ("check", {"countermeasures": ["secret_hash_check"]}, "full_mitm:full_list", 10_000, {}),
                  ("postponed", {"auth_mode": "postponed"}, "full_mitm:full_list", 1_000, {})]
    worst = []
    ok = True
    for key, config, adversary, trials, sweep in plans:
        result, _ = experiment(key, config, adversary, trials, **sweep)
        for row in result.rows:
            n = row["forgery_opportunities"]
            slack = 3 * sigma(min(row["eps"], 1.0), n) if n else 0.0
            margin = row["eps"] + slack - row["forgery_accept_rate"]
            ok &= margin >= 0
            worst.append((margin, f"{key}[{row['sweep_value'] or '-'}]"))
    margin, where = min(worst)
    assert verdict(10, ok, f"{len(worst)} rows; tightest {where} with margin {margin:.4f}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
