"""Attack strategies and Monte Carlo estimators.

An attack is an immutable value whose hook methods the protocol engine
calls at fixed points of a run:

``substitute_state(rng)``
    distributor prepares this instead of |C>.
``on_transfer(info, padded, rng)``
    a padded subsequence is on the wire; may act on it and return a record.
``before_return(chain, holder, register, positions, subsequences, rng)``
    last holder of a chain is about to send back to the distributor.
``forge_distributor(submission, params, rng)`` / ``forge_pivot(key, rng)``
    TDC submissions may be replaced.

Each attack also names the checks whose abort counts as *detecting* it,
so an intercept-resend run that slips past the decoys but trips the TDC
later is reported as aborted but not as decoy-detected.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, ClassVar, Optional, Sequence

import numpy as np

from .cluster import round_acceptance
from .hashmod import Digest, HashMode, HashParams, KeyString, hash_key, xor_all
from .protocol import ProtocolConfig, run_protocol
from .protocol.engine import ClusterRegister, PaddedSubsequence, TransferInfo
from .qcore import (
    BasisKind,
    StateVector,
    apply_two_qubit_unitary,
    basis_state,
    extend_with_ancilla,
    is_unitary,
    make_cluster_state,
    measure_qubit,
    plus_state,
    product_state,
    remove_qubit,
)

TDC_CHECKS = frozenset({"eq1", "eq2", "eq3", "eq4", "eq5"})


class AttackSpecError(ValueError):
    pass


@dataclass(frozen=True)
class TargetTransfer:
    """One padded subsequence on one hop: hop 0 leaves the distributor."""

    chain: str = "left"
    hop: int = 0
    subsequence: int = 3

    def matches(self, info: TransferInfo, padded: PaddedSubsequence) -> bool:
        return info.chain == self.chain and info.hop == self.hop and padded.k == self.subsequence

    def params(self) -> str:
        return f"chain={self.chain},hop={self.hop},subsequence={self.subsequence}"


class Attack:
    name: ClassVar[str] = "none"
    detected_by: ClassVar[frozenset] = frozenset()

    def describe(self) -> str:
        return self.name


@dataclass(frozen=True)
class NoAttack(Attack):
    name: ClassVar[str] = "none"
    detected_by: ClassVar[frozenset] = frozenset(
        {"decoy-check", "identity-verification", "cluster-frame"} | TDC_CHECKS
    )


# --------------------------------------------------------------------------
# External eavesdroppers
# --------------------------------------------------------------------------


def intercept_resend_tap(
    padded: PaddedSubsequence, rng: np.random.Generator, log: Optional[list] = None
) -> PaddedSubsequence:
    """Measure every slot in a random Z/X basis and resend the observed eigenstate.

    Decoys and info qubits look identical in flight, so all slots are hit.
    Projective measurement already leaves the eigenstate behind, which is
    exactly what a re-preparation would send.
    """
    for pos in range(len(padded)):
        basis = BasisKind.Z if rng.random() < 0.5 else BasisKind.X
        outcome = padded.measure(pos, basis, rng)
        if log is not None:
            log.append((basis.value, outcome))
    return padded


def controlled_rotation(theta: float) -> np.ndarray:
    """U_E with a = 1, b = c = 0: |0>|0> -> |0>|0>, |1>|0> -> |1>(cos t|0> + sin t|1>)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, c, -s], [0, 0, s, c]],
        dtype=complex,
    )


def entangle_measure_tap(
    padded: PaddedSubsequence,
    theta: float,
    rng: np.random.Generator,
    unitary: Optional[np.ndarray] = None,
) -> tuple[PaddedSubsequence, list[int]]:
    """Couple each slot to a fresh |0> ancilla, Z-measure the ancilla, forward the qubit."""
    U = controlled_rotation(theta) if unitary is None else np.asarray(unitary, dtype=complex)
    if not is_unitary(U) or U.shape != (4, 4):
        raise AttackSpecError("entangling operation must be a 4x4 unitary")
    ancilla = basis_state([0])
    outcomes = []
    for pos in range(len(padded)):
        state, q = padded.get(pos)
        joint = extend_with_ancilla(state, ancilla)
        anc = joint.num_qubits
        joint = apply_two_qubit_unitary(joint, q, anc, U)
        outcome, joint = measure_qubit(joint, anc, BasisKind.Z, rng)
        padded.put(pos, remove_qubit(joint, anc, BasisKind.Z, outcome))
        outcomes.append(outcome)
    return padded, outcomes


def _decoy_labels(padded: PaddedSubsequence) -> list[Optional[str]]:
    return [s.decoy.prepared if s.is_decoy else None for s in padded.slots]


@dataclass(frozen=True)
class InterceptResend(Attack):
    target: TargetTransfer = TargetTransfer()
    name: ClassVar[str] = "intercept-resend"
    detected_by: ClassVar[frozenset] = frozenset({"decoy-check"})

    def on_transfer(self, info, padded, rng):
        if not self.target.matches(info, padded):
            return None
        log: list = []
        intercept_resend_tap(padded, rng, log)
        return {"attack": self.name, "bases": [b for b, _ in log], "outcomes": [o for _, o in log]}

    def describe(self) -> str:
        return f"{self.name}:{self.target.params()}"


@dataclass(frozen=True)
class EntangleMeasure(Attack):
    theta: float = 0.0
    target: TargetTransfer = TargetTransfer()
    unitary: Optional[tuple] = None
    name: ClassVar[str] = "entangle-measure"
    detected_by: ClassVar[frozenset] = frozenset({"decoy-check"})

    def __post_init__(self) -> None:
        if self.unitary is None and not 0.0 <= self.theta <= math.pi / 2 + 1e-12:
            raise AttackSpecError(f"theta must be in [0, pi/2], got {self.theta}")
        if self.unitary is not None and not is_unitary(np.asarray(self.unitary, dtype=complex)):
            raise AttackSpecError("entangling operation must be unitary")

    def on_transfer(self, info, padded, rng):
        if not self.target.matches(info, padded):
            return None
        labels = _decoy_labels(padded)
        _, outcomes = entangle_measure_tap(padded, self.theta, rng, self.unitary)
        # the decoy labels are not Eve's knowledge; the harness pairs them up
        return {"attack": self.name, "ancilla": outcomes, "slot_decoys": labels}

    def describe(self) -> str:
        if self.unitary is not None:
            return f"{self.name}:custom"
        return f"{self.name}:theta={self.theta!r},{self.target.params()}"


# --------------------------------------------------------------------------
# Dishonest insiders
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WrongStateDistributor(Attack):
    substitute: StateVector = field(default_factory=make_cluster_state)
    label: str = "custom"
    name: ClassVar[str] = "wrong-state"
    detected_by: ClassVar[frozenset] = frozenset({"identity-verification"})

    def substitute_state(self, rng):
        return self.substitute

    def describe(self) -> str:
        return f"{self.name}:state={self.label}"


NAMED_STATES = {
    "cluster": make_cluster_state,
    "zero": lambda: basis_state([0] * 6),
    "plus": lambda: product_state([plus_state()] * 6),
}


@dataclass(frozen=True)
class ForgedPivotKey(Attack):
    """Pivot submits a key other than the one it registered."""

    substitute: Optional[KeyString] = None
    name: ClassVar[str] = "forged-pivot-key"
    detected_by: ClassVar[frozenset] = TDC_CHECKS

    def forge_pivot(self, key: KeyString, rng):
        if self.substitute is not None:
            return self.substitute
        mask = 0
        while mask == 0:
            mask = int(rng.integers(0, 2 ** len(key)))
        return key ^ KeyString.from_int(mask, len(key))

    def describe(self) -> str:
        if self.substitute is None:
            return self.name
        return f"{self.name}:key={''.join(map(str, self.substitute.bits))}"


FORGEABLE_FIELDS = ("K_B", "K_D", "H_B", "H_D")


@dataclass(frozen=True)
class ForgedDistributorSubmission(Attack):
    """Distributor alters one field of its TDC submission.

    Keys are XORed with ``perturbation`` (default: one random bit). With
    ``consistent`` the matching digest is recomputed from the forged key.
    Digests are XORed (xor-linear) or multiplied (modexp) by a random
    non-identity element.
    """

    field: str = "K_B"
    perturbation: Optional[int] = None
    consistent: bool = False
    name: ClassVar[str] = "forged-distributor"
    detected_by: ClassVar[frozenset] = TDC_CHECKS

    def __post_init__(self) -> None:
        if self.field not in FORGEABLE_FIELDS:
            raise AttackSpecError(f"field must be one of {FORGEABLE_FIELDS}, got {self.field!r}")
        if self.consistent and self.field.startswith("H"):
            raise AttackSpecError("consistent forgery applies to key fields only")
        if self.perturbation is not None and self.perturbation <= 0:
            raise AttackSpecError("perturbation must be a positive integer")

    def forge_distributor(self, sub: dict, params: HashParams, rng) -> dict:
        sub = dict(sub)
        if self.field.startswith("K"):
            key = sub[self.field]
            mask = self.perturbation
            if mask is None:
                mask = 1 << int(rng.integers(0, len(key)))
            sub[self.field] = key ^ KeyString.from_int(mask, len(key))
            if self.consistent:
                sub["H" + self.field[1:]] = hash_key(sub[self.field], params)
            return sub
        d: Digest = sub[self.field]
        if d.mode == HashMode.XOR_LINEAR:
            delta = self.perturbation or int(rng.integers(1, 2 ** min(d.group, 63)))
            sub[self.field] = Digest(d.mode, d.value ^ delta, d.group)
        else:
            factor = self.perturbation or int(rng.integers(2, d.group))
            sub[self.field] = Digest(d.mode, d.value * factor % d.group, d.group)
        return sub

    @property
    def expected_failures(self) -> set[str]:
        return {
            ("K_B", False): {"eq3"},
            ("K_D", False): {"eq4"},
            ("K_B", True): {"eq1"},
            ("K_D", True): {"eq2"},
            ("H_B", False): {"eq1", "eq3"},
            ("H_D", False): {"eq2", "eq4"},
        }[(self.field, self.consistent)]

    def describe(self) -> str:
        parts = [f"field={self.field}"]
        if self.perturbation is not None:
            parts.append(f"perturbation={self.perturbation}")
        if self.consistent:
            parts.append("consistent=1")
        return f"{self.name}:{','.join(parts)}"


@dataclass(frozen=True)
class EndpointCollusion(Attack):
    """Pivot plus both chain ends: the ends Z-measure their qubits before returning them."""

    name: ClassVar[str] = "collusion"
    detected_by: ClassVar[frozenset] = frozenset({"cluster-frame"}) | TDC_CHECKS

    def before_return(self, chain, holder, register: ClusterRegister, positions, subsequences, rng):
        outcomes = []
        for idx in positions:
            state = register.states[idx]
            pair = []
            for q in subsequences:
                o, state = measure_qubit(state, q, BasisKind.Z, rng)
                pair.append(o)
            register.states[idx] = state
            outcomes.append(pair)
        return {"attack": self.name, "subsequences": list(subsequences), "outcomes": outcomes}


# --------------------------------------------------------------------------
# Attack specs (CLI / transcript echo)
# --------------------------------------------------------------------------


def _kv(params: str) -> dict[str, str]:
    out = {}
    for item in filter(None, params.split(",")):
        if "=" not in item:
            out[""] = item
        else:
            k, v = item.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _target(kv: dict) -> TargetTransfer:
    return TargetTransfer(
        kv.pop("chain", "left"), int(kv.pop("hop", 0)), int(kv.pop("subsequence", 3))
    )


def parse_attack(spec: str) -> Attack:
    """Build an attack from ``NAME[:k=v,...]``; a bare value is the main parameter."""
    name, _, params = spec.partition(":")
    kv = _kv(params)
    try:
        if name == "none":
            attack: Attack = NoAttack()
        elif name == "intercept-resend":
            attack = InterceptResend(_target(kv))
        elif name == "entangle-measure":
            theta = float(kv.pop("theta", kv.pop("", 0.0)))
            attack = EntangleMeasure(theta, _target(kv))
        elif name == "forged-pivot-key":
            key = kv.pop("key", kv.pop("", None))
            attack = ForgedPivotKey(KeyString.parse(key) if key else None)
        elif name == "forged-distributor":
            fieldname = kv.pop("field", kv.pop("", "K_B"))
            pert = kv.pop("perturbation", None)
            attack = ForgedDistributorSubmission(
                fieldname, int(pert) if pert else None, kv.pop("consistent", "0") in ("1", "true")
            )
        elif name == "wrong-state":
            label = kv.pop("state", kv.pop("", "plus"))
            if label not in NAMED_STATES:
                raise AttackSpecError(f"unknown state {label!r}; choose from {sorted(NAMED_STATES)}")
            attack = WrongStateDistributor(NAMED_STATES[label](), label)
        elif name == "collusion":
            attack = EndpointCollusion()
        else:
            raise AttackSpecError(f"unknown attack {name!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, AttackSpecError):
            raise
        raise AttackSpecError(f"bad parameters for {name!r}: {exc}") from exc
    if kv:
        raise AttackSpecError(f"unknown parameters for {name!r}: {sorted(kv)}")
    return attack


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the bounds touch 0 and 1 exactly at the extremes; avoid rounding residue
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def mutual_information(pairs: Sequence[tuple[Any, Any]]) -> float:
    """Plug-in estimate, in bits, of I(X;Y) from samples."""
    if not pairs:
        return 0.0
    n = len(pairs)
    joint: dict = {}
    px: dict = {}
    py: dict = {}
    for x, y in pairs:
        joint[(x, y)] = joint.get((x, y), 0) + 1
        px[x] = px.get(x, 0) + 1
        py[y] = py.get(y, 0) + 1
    return sum(c / n * math.log2(c * n / (px[x] * py[y])) for (x, y), c in joint.items())


@dataclass
class DetectionEstimate:
    attack: str
    trials: int
    detected: int
    estimate: float
    analytic: Optional[float]
    interval: tuple[float, float]
    aborted: int = 0
    decoy_errors: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.detected <= self.trials:
            raise ValueError("detected must lie in 0..trials")

    def to_json(self) -> str:
        d = asdict(self)
        d["interval"] = list(self.interval)
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> DetectionEstimate:
        d = json.loads(text)
        d["interval"] = tuple(d["interval"])
        return cls(**d)


def _trial(args) -> dict:
    attack, config, root, index = args
    rng = np.random.default_rng([root, index])
    t = run_protocol(config, None if isinstance(attack, NoAttack) else attack, rng=rng)
    out = {
        "aborted": t.aborted,
        "detected": t.aborted and t.result["check"] in attack.detected_by,
        "check": t.result.get("check"),
        "decoys": {"Z": [0, 0], "X": [0, 0]},
        "ancilla": [],
    }
    target = getattr(attack, "target", None)
    if target is not None:
        for rec in t.phases:
            if (
                rec.get("check") == "decoy-check"
                and rec["chain"] == target.chain
                and rec["hop"] == target.hop
                and rec["subsequence"] == target.subsequence
            ):
                for dd in rec["detail"]:
                    b = "Z" if dd["prepared"] in ("0", "1") else "X"
                    out["decoys"][b][0] += int(dd["error"])
                    out["decoys"][b][1] += 1
            if rec["phase"] == "adversary" and "ancilla" in rec:
                out["ancilla"] = [
                    (lab, a) for lab, a in zip(rec["slot_decoys"], rec["ancilla"]) if lab is not None
                ]
    return out


def _run_trials(attack: Attack, config: ProtocolConfig, trials: int, rng, workers: int) -> list[dict]:
    root = int(rng.integers(0, 2**63))
    jobs = [(attack, config, root, i) for i in range(trials)]
    if workers <= 1:
        return [_trial(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves trial order, so results do not depend on worker count
        return list(pool.map(_trial, jobs, chunksize=max(1, trials // (4 * workers))))


def analytic_detection(attack: Attack, config: ProtocolConfig) -> Optional[float]:
    d = config.decoys
    if isinstance(attack, InterceptResend):
        return 1 - 0.75**d
    if isinstance(attack, EntangleMeasure) and attack.unitary is None:
        per_x = (1 - math.cos(attack.theta)) / 2
        # each decoy is X-type with probability 1/2
        return 1 - (1 - per_x / 2) ** d
    if isinstance(attack, (ForgedPivotKey, ForgedDistributorSubmission)):
        bits = config.hash.get("digest_bits", 64)
        if config.hash["mode"] == HashMode.XOR_LINEAR.value and 2 * config.m <= bits:
            return 1.0
        return None
    if isinstance(attack, WrongStateDistributor):
        return wrong_state_detection(attack.substitute, config)
    if isinstance(attack, NoAttack):
        return 0.0
    return None


def estimate_detection(
    attack: Attack,
    config: ProtocolConfig,
    trials: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> DetectionEstimate:
    """Run ``trials`` independently seeded protocol executions under ``attack``."""
    if trials < 1000:
        raise ValueError("detection estimates need at least 1,000 trials")
    results = _run_trials(attack, config, trials, rng, workers)
    detected = sum(r["detected"] for r in results)
    decoys = {b: [sum(r["decoys"][b][0] for r in results), sum(r["decoys"][b][1] for r in results)] for b in "ZX"}
    extra: dict = {}
    if isinstance(attack, EntangleMeasure):
        pairs = [p for r in results for p in r["ancilla"]]
        extra["ancilla_decoy_mi_bits"] = mutual_information(pairs)
        extra["ancilla_samples"] = len(pairs)
    return DetectionEstimate(
        attack=attack.describe(),
        trials=trials,
        detected=detected,
        estimate=detected / trials,
        analytic=analytic_detection(attack, config),
        interval=wilson_interval(detected, trials),
        aborted=sum(r["aborted"] for r in results),
        decoy_errors=decoys if any(v[1] for v in decoys.values()) else {},
        extra=extra,
    )


def wrong_state_detection(substitute: StateVector, config: ProtocolConfig) -> float:
    """Probability that identity verification rejects a distributor preparing ``substitute``."""
    az = round_acceptance(substitute, BasisKind.Z, config.x_round)
    ax = round_acceptance(substitute, BasisKind.X, config.x_round)
    per_round = {"Z": az, "X": ax, "random": (az + ax) / 2}[config.verify_basis]
    return 1 - per_round**config.l_verify


def wrong_state_run(
    config: ProtocolConfig,
    substitute: StateVector,
    trials: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> DetectionEstimate:
    return estimate_detection(WrongStateDistributor(substitute), config, trials, rng, workers)


def forged_submission_run(config: ProtocolConfig, variant: Attack, rng: np.random.Generator):
    if not isinstance(variant, (ForgedPivotKey, ForgedDistributorSubmission)):
        raise AttackSpecError("variant must be a forged pivot key or distributor submission")
    return run_protocol(config, variant, rng=rng)


@dataclass
class LeakageReport:
    trials: int
    completed_measurements: int
    s_guess_accuracy: float
    parity_accuracy: float
    baseline_accuracy: float
    detected: int
    detection_frequency: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def collusion_run(config: ProtocolConfig, trials: int, rng: np.random.Generator) -> LeakageReport:
    """Pivot and both chain ends pool what the ends learn by Z-measuring qubits 3-6.

    From the Z outcome the parities f4^f5 and f5^f6 of each accumulated
    chunk mask are fixed, which gives the second bit of every s chunk; the
    first bit is a coin flip. Reports how often the colluders' guess of the
    full key is right and how often the distributor/TDC catch them.
    """
    attack = EndpointCollusion()
    root = int(rng.integers(0, 2**63))
    s_hits = parity_hits = parity_total = detected = 0
    baseline = None
    for index in range(trials):
        t = run_protocol(config, attack, rng=np.random.default_rng([root, index]))
        keys = t.extras["keys"]
        pivot, left, right = t.extras["pivot"], t.extras["left"], t.extras["right"]
        if baseline is None:
            unknown = set(keys) - {pivot, left[-1], right[-1]}
            baseline = 1.0 if not unknown else 2.0 ** (-2 * config.m)
        recs = {r["chain"]: r["outcomes"] for r in t.phases if r["phase"] == "adversary"}
        k_b = xor_all(keys[j] for j in left).chunks()
        k_d = xor_all(keys[j] for j in right).chunks()
        k_i = keys[pivot].chunks()
        guess = []
        for j, ((o3, o4), (o5, o6)) in enumerate(zip(recs["left"], recs["right"])):
            guess.append((o3 ^ o5 ^ k_i[j][0], o4 ^ o6 ^ k_i[j][1]))
            f4, f5, f6 = k_b[j][1], k_d[j][0], k_d[j][1]
            parity_hits += (o4 ^ o5) == (f4 ^ f5) and (o5 ^ o6) == (f5 ^ f6)
            parity_total += 1
        truth = str(xor_all(keys.values()))
        s_hits += str(KeyString.from_chunks(guess)) == truth
        detected += t.aborted and t.result["check"] in attack.detected_by
    return LeakageReport(
        trials=trials,
        completed_measurements=parity_total,
        s_guess_accuracy=s_hits / trials,
        parity_accuracy=parity_hits / parity_total if parity_total else 0.0,
        baseline_accuracy=baseline if baseline is not None else 0.0,
        detected=detected,
        detection_frequency=detected / trials,
    )
