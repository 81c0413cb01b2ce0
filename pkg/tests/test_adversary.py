import json

import numpy as np
import pytest

from qkd_mitm.adversary import (
    AdversaryStrategy,
    build_list,
    forge_pa,
    forge_settings,
    intercept_resend,
    make_searcher,
    min_cost_collision,
    orchestrate,
)
from qkd_mitm.bits import BitString
from qkd_mitm.errors import ConfigError
from qkd_mitm.hash_core import PublicHashDescriptor
from qkd_mitm.protocol import (
    ABORTED_AUTH,
    ABORTED_QBER,
    COMPLETED,
    PhaseMessage,
    ProtocolConfig,
    run_session,
)

F8 = PublicHashDescriptor.xor_fold(8, 4)


@pytest.mark.parametrize("text", ["absent", "guess_tag", "fixed_message", "ball_search:2", "list:5",
                                  "full_mitm:full_list", "full_mitm:ball_search:3", "full_mitm:list:7"])
def test_strategy_round_trip(text):
    assert AdversaryStrategy.parse(text).describe() == text


def test_strategy_defaults_and_errors():
    assert AdversaryStrategy.parse("full_mitm").describe() == "full_mitm:full_list"
    assert AdversaryStrategy.parse("fixed_message").effective_mode == ("ball_search", 0)
    for bad in ("list", "list:x", "ball_search:-1", "mitm", "full_mitm:list"):
        with pytest.raises(ConfigError):
            AdversaryStrategy.parse(bad)
    assert orchestrate(ProtocolConfig(), AdversaryStrategy()) is None


def test_empty_list():
    assert len(build_list(F8, BitString.zeros(8), 0)) == 0


def test_full_list_covers_everything_nearby():
    lst = build_list(F8, BitString.from_str("10100110"), 16)
    assert len(lst) == 16 and not lst.exhausted
    for z, witness in lst.entries.items():
        assert F8(witness) == z
        assert lst.distances[z] <= 4


def test_list_reports_exhaustion():
    f = PublicHashDescriptor.xor_fold(8, 4)
    allowed = [True] + [False] * 7
    assert build_list(f, BitString.zeros(8), 16, allowed=allowed).exhausted


def test_intercept_resend_matching_bases():
    bases, values = BitString.from_str("0110" * 4), BitString.from_str("1100" * 4)
    out = intercept_resend(bases, values, seed=1, eve_bases=bases)
    assert out["eve_bits"] == values


def test_intercept_resend_zero_bases_allowed():
    bases = BitString.from_str("01" * 8)
    out = intercept_resend(bases, BitString.ones(16), seed=2, eve_bases=BitString.zeros(16))
    assert out["resent_bases"] == BitString.zeros(16)


def test_intercept_resend_mismatch_rate():
    rng = np.random.default_rng(0)
    n = 4000
    a_bases = BitString.from_bits(rng.integers(0, 2, n))
    a_bits = BitString.from_bits(rng.integers(0, 2, n))
    out = intercept_resend(a_bases, a_bits, seed=3)
    mism = [i for i in range(n) if out["eve_bases"][i] != a_bases[i]]
    agree = sum(out["eve_bits"][i] == a_bits[i] for i in mism)
    p = agree / len(mism)
    assert abs(p - 0.5) <= 3 * (0.25 / len(mism)) ** 0.5


def test_forged_settings_collide_chunkwise():
    m_a = PhaseMessage.settings(BitString.from_str("1011001110001101"))
    cand = PhaseMessage.settings(BitString.from_str("0000111100001111"))
    forged = forge_settings(m_a, cand, F8, 8, make_searcher(F8, "full_list", -1))
    assert forged is not None
    for a, e in zip(m_a.to_bits().chunks(8), forged.bits.chunks(8)):
        assert F8(a) == F8(e)
    assert PhaseMessage.from_bits(forged.bits).phase == m_a.phase


def test_empty_list_gives_up_on_differing_image():
    m_a = PhaseMessage.settings(BitString.from_str("10110011"))
    cand = PhaseMessage.settings(BitString.from_str("00001111"))
    assert forge_settings(m_a, cand, F8, 8, make_searcher(F8, "list", 0)) is None


def test_min_cost_collision_prefers_free_positions():
    center = BitString.zeros(8)
    target = F8(BitString.from_str("10000000"))
    free = BitString.from_str("00001000")
    costly = BitString.from_str("11110111")
    hit = min_cost_collision(F8, center, target, free, costly)
    assert hit == BitString.from_str("00001000")


def test_pa_map_reuse_and_fallback():
    f = PublicHashDescriptor.xor_fold(64, 8)
    pa = PhaseMessage.pa_map(10, BitString.ones(10 + 40 - 1))
    search = make_searcher(f, "full_list", -1)
    forged, reused = forge_pa(pa, 40, f, 64, search)
    assert reused and forged.bits == pa.to_bits()
    forged, reused = forge_pa(pa, 41, f, 64, search)
    assert not reused and forged is not None
    assert len(PhaseMessage.from_bits(forged.bits)["seed"]) == 10 + 41 - 1
    for a, e in zip(pa.to_bits().chunks(64), forged.bits.chunks(64)):
        assert f(a) == f(e)


def test_headline_attack_session():
    out = run_session(ProtocolConfig(seed=7), AdversaryStrategy.parse("full_mitm:full_list", seed=7))
    assert out.status == COMPLETED and out.mitm_completed and out.sifting_forged
    assert out.forgeries_accepted == out.forgeries_attempted > 0
    assert out.alice_final_key != out.bob_final_key
    log = [r.to_dict() for r in out.forgery_log]
    assert {r["phase"] for r in log} >= {"settings", "ec_maps", "pa_map"}
    json.dumps(log)


def test_wegman_carter_rejects_mitm():
    cfg = ProtocolConfig.build(scheme="wegman_carter", seed=7)
    out = run_session(cfg, AdversaryStrategy.parse("full_mitm", seed=7))
    assert out.status == ABORTED_AUTH and out.forgeries_accepted < out.forgeries_attempted


def test_postponed_mode_leaves_early_phases_alone():
    cfg = ProtocolConfig(auth_mode="postponed")
    for seed in range(10):
        out = run_session(cfg.with_seed(seed), AdversaryStrategy.parse("full_mitm", seed=seed))
        assert out.status != COMPLETED or not out.mitm_completed
        assert all(r.phase not in ("timestamp_end_quantum", "settings", "ec_maps")
                   for r in out.forgery_log)


def test_intercept_resend_noise_hits_qber_without_forgery():
    out = run_session(ProtocolConfig(auth_mode="postponed", seed=2),
                      AdversaryStrategy.parse("full_mitm", seed=2))
    assert out.status == ABORTED_QBER
