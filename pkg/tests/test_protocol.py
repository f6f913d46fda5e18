import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qka_sim.cli import WORKED_EXAMPLE, run_worked_example
from qka_sim.hashmod import KeyString, xor_all
from qka_sim.protocol import (
    DISTRIBUTOR,
    ClusterRegister,
    ConfigError,
    ProtocolConfig,
    build_padded,
    chain_members,
    cyclic,
    decoy_check,
    draw_challenge,
    run_protocol,
)
from qka_sim.qcore import basis_state

REQUIRED_ABORT_FIELDS = ("phase", "check", "party", "reason")


def shadow_indices(t):
    """Classical ledger: expected frame index per position from the keys alone."""
    keys, left, right = t.extras["keys"], t.extras["left"], t.extras["right"]
    kb = xor_all(keys[j] for j in left).chunks()
    kd = xor_all(keys[j] for j in right).chunks()
    # mask f3 f4 f5 f6 -> C_{mask+1}
    return [(a << 3 | b << 2 | c << 1 | d) + 1 for (a, b), (c, d) in zip(kb, kd)]


def test_chain_indexing_is_cyclic():
    assert cyclic(1, -1, 5) == 5
    assert cyclic(5, 1, 5) == 1
    assert chain_members(3, 5) == ([2, 1], [4, 5])
    assert chain_members(1, 5) == ([5, 4], [2, 3])
    assert chain_members(2, 3) == ([1], [3])


@given(st.integers(1, 4).map(lambda k: 2 * k + 1), st.data())
def test_chains_partition_non_pivots(n, data):
    pivot = data.draw(st.integers(1, n))
    left, right = chain_members(pivot, n)
    assert len(left) == len(right) == (n - 1) // 2
    assert sorted(left + right + [pivot]) == list(range(1, n + 1))


def test_worked_example():
    t = run_worked_example()
    meas = t.extras["measurement"]
    assert t.succeeded
    assert str(meas.k_b) == WORKED_EXAMPLE["k_b"] == "10,10,11"
    assert str(meas.k_d) == WORKED_EXAMPLE["k_d"] == "11,00,10"
    assert t.key == "10,11,01"
    assert [f"C{o}" for o in meas.outcomes] == ["C12", "C9", "C15"]
    assert shadow_indices(t) == [12, 9, 15]


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 5, 7]), st.integers(1, 8))
def test_honest_runs_recover_xor_of_keys(seed, n, m):
    t = run_protocol(ProtocolConfig(n=n, m=m, seed=seed))
    assert t.succeeded, t.result
    assert t.key == str(xor_all(t.extras["keys"].values()))
    assert t.extras["measurement"].outcomes == shadow_indices(t)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 5, 7]))
def test_pivot_never_holds_qubits(seed, n):
    t = run_protocol(ProtocolConfig(n=n, m=2, seed=seed))
    pivot = f"P{t.extras['pivot']}"
    reg = t.extras["register"]
    assert pivot not in reg.holders_seen()
    assert all(h == DISTRIBUTOR for _, q, h in reg.history if q in (1, 2))
    transfers = [m for m in t.messages if m.kind == "SubsequenceTransfer"]
    assert all(pivot not in (m.sender, m.receiver) for m in transfers)
    assert all(set(m.payload["subsequences"]) <= {3, 4, 5, 6} for m in transfers)


def test_qubits_one_and_two_cannot_move():
    reg = ClusterRegister.fresh(2)
    with pytest.raises(RuntimeError):
        reg.move([(0, 1)], "P1")


def test_key_announced_once_at_the_end():
    t = run_worked_example()
    carrying = [m for m in t.messages if "key" in m.payload]
    assert len(carrying) == 1
    announce = carrying[0]
    assert announce.kind == "KeyAnnounce" and announce.sender == "TDC" and announce.receiver is None
    assert announce is t.messages[-1]
    assert announce.payload["key"] == t.key


def test_decoy_check_passes_when_untouched(rng):
    reg = ClusterRegister.fresh(3)
    padded = build_padded(3, [(i, 3) for i in range(3)], reg, 16, rng)
    assert len(padded) == 19 and len(padded.decoys) == 16
    res = decoy_check(padded, 0.0, rng)
    assert res.passed and res.errors == 0 and not res.vacuous


def test_zero_decoys_is_vacuous(rng):
    reg = ClusterRegister.fresh(1)
    res = decoy_check(build_padded(3, [(0, 3)], reg, 0, rng), 0.0, rng)
    assert res.passed and res.vacuous


def test_challenge_draw(rng):
    positions, bases = draw_challenge(10, 4, rng)
    assert len(set(positions)) == 4 and all(0 <= p < 10 for p in positions)
    assert draw_challenge(10, 4, rng, "Z")[1] == [bases[0].__class__("Z")] * 4


def test_wrong_state_aborts_in_identity_phase():
    cfg = ProtocolConfig(n=3, m=4, l_verify=4, verify_basis="Z", seed=1)

    class Zero:
        def substitute_state(self, rng):
            return basis_state([0] * 6)

        def describe(self):
            return "zero"

    # |000000> fails a Z round with probability 0; switch to X rounds to see it caught
    t = run_protocol(cfg.replace(verify_basis="X"), Zero())
    assert t.aborted and t.result["check"] == "identity-verification"
    assert t.result["party"] == DISTRIBUTOR


def test_literal_x_rounds_reject_honest_states():
    cfg = ProtocolConfig(n=3, m=1, l_verify=1, verify_basis="X", x_round="literal")
    aborted = sum(run_protocol(cfg.replace(seed=s)).aborted for s in range(400))
    assert aborted / 400 == pytest.approx(0.5, abs=0.08)


def test_corrected_x_rounds_accept_honest_states():
    cfg = ProtocolConfig(n=3, m=2, verify_basis="X")
    assert all(run_protocol(cfg.replace(seed=s)).succeeded for s in range(50))


MODEXP = {"mode": "modexp", "g": 3, "hash_modulus": 2**61 - 1}


def test_modexp_run_holds_for_carry_free_chains():
    # pivot 3: left chain P2, P1; right chain P4, P5
    cfg = ProtocolConfig(n=5, m=3, pivot=3, hash=MODEXP, seed=4)
    keys = [KeyString.parse(k) for k in ("10,00,01", "01,00,10", "11,11,11", "00,10,00", "00,01,00")]
    t = run_protocol(cfg, keys=keys)
    assert t.succeeded and t.key == str(xor_all(keys))


def test_modexp_run_fails_when_chain_keys_carry():
    cfg = ProtocolConfig(n=5, m=3, pivot=3, hash=MODEXP, seed=4)
    keys = [KeyString.parse(k) for k in ("10,00,01", "10,00,01", "11,11,11", "00,10,00", "00,01,00")]
    t = run_protocol(cfg, keys=keys)
    assert t.aborted and t.result["check"] == "eq1"


def test_aborts_carry_required_fields():
    cfg = ProtocolConfig(n=5, m=2, verify_basis="X", x_round="literal")
    aborts = [t for t in (run_protocol(cfg.replace(seed=s)) for s in range(30)) if t.aborted]
    assert aborts
    for t in aborts:
        assert all(k in t.result for k in REQUIRED_ABORT_FIELDS)
        assert "key" not in t.result
        last = t.messages[-1]
        assert last.kind == "Abort" and last.payload["check"] == t.result["check"]


def test_same_seed_same_transcript():
    cfg = ProtocolConfig(n=5, m=3, seed=77)
    assert run_protocol(cfg).to_json() == run_protocol(cfg).to_json()
    assert run_protocol(cfg).to_json() != run_protocol(cfg.replace(seed=78)).to_json()


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ProtocolConfig(n=4, m=1)
    with pytest.raises(ConfigError):
        ProtocolConfig(n=3, m=0)
    with pytest.raises(ConfigError):
        ProtocolConfig(n=3, m=1, pivot=4)
    with pytest.raises(ConfigError):
        ProtocolConfig(n=3, m=1, hash={"mode": "sha"})
    with pytest.raises(ConfigError):
        ProtocolConfig.from_dict({"n": 3, "m": 1, "colour": "red"})
    with pytest.raises(ConfigError):
        ProtocolConfig.from_dict({"n": 3})
    assert ProtocolConfig(n=3, m=5).l_verify == 5
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 5, "m": 2, "decoys": 8}))
    cfg = ProtocolConfig.load(path)
    assert (cfg.n, cfg.m, cfg.decoys, cfg.l_verify) == (5, 2, 8, 2)
    assert ProtocolConfig.from_dict(cfg.to_dict()) == cfg
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        ProtocolConfig.load(path)


def test_explicit_key_validation():
    cfg = ProtocolConfig(n=3, m=2)
    with pytest.raises(ConfigError):
        run_protocol(cfg, keys=[KeyString.parse("10,11")] * 2)
    with pytest.raises(ConfigError):
        run_protocol(cfg, keys=[KeyString.parse("10")] * 3)


def test_rng_argument_overrides_seed():
    cfg = ProtocolConfig(n=3, m=2, seed=5)
    a = run_protocol(cfg, rng=np.random.default_rng(5)).to_json()
    assert a == run_protocol(cfg).to_json()
