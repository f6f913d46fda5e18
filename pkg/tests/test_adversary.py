import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qka_sim.adversary import (
    AttackSpecError,
    DetectionEstimate,
    EndpointCollusion,
    EntangleMeasure,
    ForgedDistributorSubmission,
    ForgedPivotKey,
    InterceptResend,
    NoAttack,
    TargetTransfer,
    WrongStateDistributor,
    collusion_run,
    controlled_rotation,
    estimate_detection,
    forged_submission_run,
    mutual_information,
    parse_attack,
    wilson_interval,
    wrong_state_detection,
    wrong_state_run,
)
from qka_sim.protocol import ProtocolConfig, run_protocol
from qka_sim.qcore import basis_state, is_unitary, make_cluster_state

SMALL = ProtocolConfig(n=3, m=1, l_verify=1)


def x_decoy_error_oracle(theta):
    """Probability that |+> reads as |-> after the controlled rotation and an ancilla Z measurement."""
    U = controlled_rotation(theta)
    joint = U @ np.kron([1, 1], [1, 0]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    # project system onto |->, sum over ancilla outcomes
    amp = np.kron(minus.conj(), np.eye(2)) @ joint
    return float(np.sum(np.abs(amp) ** 2))


def test_null_attack_never_detected(rng):
    est = estimate_detection(NoAttack(), SMALL, 1000, rng)
    assert est.detected == 0 and est.aborted == 0 and est.analytic == 0.0


def test_intercept_resend_monotone_in_decoys():
    estimates = [
        estimate_detection(InterceptResend(), SMALL.replace(decoys=d), 1000, np.random.default_rng(d)).estimate
        for d in (1, 2, 4, 8, 16)
    ]
    assert estimates == sorted(estimates)
    for d, e in zip((1, 2, 4, 8, 16), estimates):
        assert e == pytest.approx(1 - 0.75**d, abs=0.05)


def test_intercept_resend_touches_every_slot():
    t = run_protocol(SMALL.replace(decoys=5), InterceptResend(TargetTransfer("right", 0, 6)))
    rec = next(r for r in t.phases if r["phase"] == "adversary")
    assert (rec["chain"], rec["hop"], rec["subsequence"]) == ("right", 0, 6)
    # m + l info qubits plus 5 decoys
    assert len(rec["bases"]) == 2 + 5


def test_report_independent_of_worker_count():
    cfg = SMALL.replace(decoys=4)
    a = estimate_detection(InterceptResend(), cfg, 1000, np.random.default_rng(9), workers=1)
    b = estimate_detection(InterceptResend(), cfg, 1000, np.random.default_rng(9), workers=2)
    assert a.to_json() == b.to_json()


def test_minimum_trials():
    with pytest.raises(ValueError):
        estimate_detection(NoAttack(), SMALL, 999, np.random.default_rng(0))


@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 4, 1.2, math.pi / 2])
def test_controlled_rotation_error_law(theta):
    assert is_unitary(controlled_rotation(theta))
    assert x_decoy_error_oracle(theta) == pytest.approx((1 - math.cos(theta)) / 2)


def test_entangle_measure_zero_angle_is_silent(rng):
    est = estimate_detection(EntangleMeasure(0.0), SMALL.replace(decoys=8), 1000, rng)
    assert est.detected == 0
    assert est.extra["ancilla_decoy_mi_bits"] < 0.01


def test_entangle_measure_full_angle_error_rate(rng):
    est = estimate_detection(EntangleMeasure(math.pi / 2), SMALL.replace(decoys=8), 1000, rng)
    errors, total = est.decoy_errors["X"]
    assert errors / total == pytest.approx(0.5, abs=0.03)
    assert est.decoy_errors["Z"][0] == 0
    assert est.estimate == pytest.approx(est.analytic, abs=0.04)


def test_entangle_measure_general_unitary(rng):
    est = estimate_detection(EntangleMeasure(unitary=tuple(map(tuple, np.eye(4)))), SMALL, 1000, rng)
    assert est.detected == 0 and est.analytic is None
    with pytest.raises(AttackSpecError):
        EntangleMeasure(unitary=tuple(map(tuple, np.ones((4, 4)))))
    with pytest.raises(AttackSpecError):
        EntangleMeasure(2.0)


@pytest.mark.parametrize(
    "attack,expected",
    [
        (ForgedPivotKey(), ["eq5"]),
        (ForgedDistributorSubmission("K_B"), ["eq3"]),
        (ForgedDistributorSubmission("K_D"), ["eq4"]),
        (ForgedDistributorSubmission("H_B"), ["eq1", "eq3"]),
        (ForgedDistributorSubmission("H_D"), ["eq2", "eq4"]),
        (ForgedDistributorSubmission("K_B", consistent=True), ["eq1"]),
        (ForgedDistributorSubmission("K_D", consistent=True), ["eq2"]),
    ],
)
def test_forgeries_identified(attack, expected):
    for seed in range(5):
        t = forged_submission_run(ProtocolConfig(n=5, m=3), attack, np.random.default_rng(seed))
        report = t.extras["report"]
        assert report.failing == expected
        assert t.aborted and t.result["check"] == expected[0] and t.key is None


def test_forged_modexp_digest():
    cfg = ProtocolConfig(n=3, m=2, hash={"mode": "modexp", "g": 3, "hash_modulus": 2**61 - 1})
    t = forged_submission_run(cfg, ForgedDistributorSubmission("H_B"), np.random.default_rng(1))
    assert t.aborted and t.result["check"] == "eq1"


def test_forged_pivot_explicit_key():
    t = forged_submission_run(SMALL, ForgedPivotKey(), np.random.default_rng(2))
    assert t.result["party"] == f"P{t.extras['pivot']}"


def test_forgery_validation():
    with pytest.raises(AttackSpecError):
        ForgedDistributorSubmission("K_X")
    with pytest.raises(AttackSpecError):
        ForgedDistributorSubmission("H_B", consistent=True)
    with pytest.raises(AttackSpecError):
        forged_submission_run(SMALL, NoAttack(), np.random.default_rng(0))


def test_wrong_state_exact_detection():
    zero = basis_state([0] * 6)
    cfg = SMALL.replace(m=3, l_verify=3)
    assert wrong_state_detection(zero, cfg.replace(verify_basis="Z")) == pytest.approx(0.0)
    assert wrong_state_detection(zero, cfg.replace(verify_basis="X")) == pytest.approx(1 - 0.5**3)
    assert wrong_state_detection(make_cluster_state(), cfg) == pytest.approx(0.0, abs=1e-12)


def test_wrong_state_monte_carlo_matches_exact(rng):
    cfg = SMALL.replace(m=3, l_verify=3)
    est = wrong_state_run(cfg, basis_state([0] * 6), 1000, rng)
    assert est.estimate == pytest.approx(est.analytic, abs=0.05)


def test_collusion_leakage_report(rng):
    report = collusion_run(ProtocolConfig(n=5, m=1), 600, rng)
    assert report.parity_accuracy == 1.0
    assert report.s_guess_accuracy == pytest.approx(0.5, abs=0.07)
    assert report.baseline_accuracy == 0.25
    assert report.detection_frequency == pytest.approx(0.75, abs=0.06)
    assert collusion_run(ProtocolConfig(n=3, m=1), 5, rng).baseline_accuracy == 1.0


@pytest.mark.parametrize(
    "attack",
    [
        NoAttack(),
        InterceptResend(TargetTransfer("right", 1, 5)),
        EntangleMeasure(0.7),
        ForgedPivotKey(),
        ForgedDistributorSubmission("H_D", perturbation=5),
        ForgedDistributorSubmission("K_B", consistent=True),
        EndpointCollusion(),
    ],
)
def test_attack_spec_round_trip(attack):
    assert parse_attack(attack.describe()) == attack


def test_attack_spec_parsing():
    assert parse_attack("entangle-measure:0.5").theta == 0.5
    assert isinstance(parse_attack("wrong-state:state=zero"), WrongStateDistributor)
    assert parse_attack("forged-pivot-key:key=1011").substitute.bits == (1, 0, 1, 1)
    for bad in ("teleport", "intercept-resend:hop=x", "entangle-measure:colour=red", "wrong-state:state=ghz"):
        with pytest.raises(AttackSpecError):
            parse_attack(bad)


def test_wilson_interval_reference_values():
    lo, hi = wilson_interval(50, 100)
    assert (lo, hi) == pytest.approx((0.4038, 0.5962), abs=1e-4)
    assert wilson_interval(0, 1000)[0] == 0.0


@given(st.integers(1, 5000), st.data())
def test_wilson_interval_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert lo <= k / n <= hi


def test_mutual_information_extremes():
    assert mutual_information([(a, 0) for a in "abcd" * 50]) == 0.0
    assert mutual_information([(b, b) for b in (0, 1) * 100]) == pytest.approx(1.0)
    assert mutual_information([]) == 0.0


def test_estimate_json_round_trip(rng):
    est = estimate_detection(InterceptResend(), SMALL.replace(decoys=2), 1000, rng)
    again = DetectionEstimate.from_json(est.to_json())
    assert again == est and again.to_json() == est.to_json()
