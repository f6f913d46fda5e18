"""Five-phase protocol engine.

Phases, in order: distributor preparation (with the first decoy checks),
distributor identity verification, the two participant X-operation chains,
cluster-basis measurement by the distributor, and TDC verification.

Cluster states are kept as independent six-qubit vectors: no step of the
protocol couples two different states, so the factorization is exact.
Qubits 1 and 2 of every state never leave the distributor; there is no
code path that puts them in a subsequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from ..cluster import (
    PairSymbolZ,
    check_x_correlation,
    check_z_correlation,
    cluster_basis_measure,
    codebook_by_index,
    mask_to_chunks,
    pair_symbol_x,
    pair_symbol_z,
)
from ..hashmod import (
    Digest,
    HashParams,
    KeyString,
    Registry,
    hash_key,
    verify_chain,
    verify_equal,
)
from ..qcore import (
    BasisKind,
    StateVector,
    apply_x,
    basis_state,
    make_cluster_state,
    measure_qubit,
    minus_state,
    plus_state,
)
from .config import ConfigError, ProtocolConfig
from .transcript import Transcript

DISTRIBUTOR = "distributor"
TDC = "TDC"

DECOY_LABELS = ("0", "1", "+", "-")

PHASE_SETUP = "setup"
PHASE_PREPARE = "distributor-preparation"
PHASE_IDENTITY = "identity-verification"
PHASE_CHAIN = "participant-operation"
PHASE_MEASURE = "measurement"
PHASE_TDC = "tdc"
PHASE_ADVERSARY = "adversary"

EQUATION_REASONS = {
    "eq1": "left-chain digest product does not match H(B)",
    "eq2": "right-chain digest product does not match H(D)",
    "eq3": "K_B does not hash to H(B)",
    "eq4": "K_D does not hash to H(D)",
    "eq5": "pivot key does not match its registered digest",
}


def party(j: int) -> str:
    return f"P{j}"


def cyclic(i: int, offset: int, n: int) -> int:
    """P_{i+offset} with identities wrapped onto 1..n."""
    return (i - 1 + offset) % n + 1


def chain_members(pivot: int, n: int) -> tuple[list[int], list[int]]:
    """Left chain P_{i-1}, P_{i-2}, ... and right chain P_{i+1}, P_{i+2}, ..."""
    half = (n - 1) // 2
    left = [cyclic(pivot, -k, n) for k in range(1, half + 1)]
    right = [cyclic(pivot, k, n) for k in range(1, half + 1)]
    return left, right


# --------------------------------------------------------------------------
# Qubit bookkeeping
# --------------------------------------------------------------------------


@dataclass
class ClusterRegister:
    """The distributor's m + l six-qubit states and who holds each qubit."""

    states: list[StateVector]
    owner: dict[tuple[int, int], str] = field(default_factory=dict)
    history: list[tuple[int, int, str]] = field(default_factory=list)

    @classmethod
    def fresh(cls, count: int, substitute: Optional[StateVector] = None) -> ClusterRegister:
        base = make_cluster_state() if substitute is None else substitute
        if base.num_qubits != 6:
            raise ValueError("distributor states must have 6 qubits")
        reg = cls([base for _ in range(count)])
        for idx in range(count):
            for q in range(1, 7):
                reg._set_owner(idx, q, DISTRIBUTOR)
        return reg

    def _set_owner(self, idx: int, qubit: int, holder: str) -> None:
        if qubit in (1, 2) and holder != DISTRIBUTOR:
            raise RuntimeError("qubits 1 and 2 never leave the distributor")
        self.owner[(idx, qubit)] = holder
        self.history.append((idx, qubit, holder))

    def move(self, entries: Sequence[tuple[int, int]], holder: str) -> None:
        for idx, q in entries:
            self._set_owner(idx, q, holder)

    def holds(self, holder: str, entries: Sequence[tuple[int, int]]) -> bool:
        return all(self.owner[e] == holder for e in entries)

    def holders_seen(self) -> set[str]:
        return {h for _, _, h in self.history}


@dataclass(frozen=True)
class DecoyRecord:
    position: int
    prepared: str

    @property
    def basis(self) -> BasisKind:
        return BasisKind.Z if self.prepared in ("0", "1") else BasisKind.X

    @property
    def expected(self) -> int:
        return 0 if self.prepared in ("0", "+") else 1


_DECOY_STATES = {
    "0": basis_state([0]),
    "1": basis_state([1]),
    "+": plus_state(),
    "-": minus_state(),
}


def decoy_state(label: str) -> StateVector:
    # states are immutable, so the shared instances are safe to hand out
    return _DECOY_STATES[label]


@dataclass
class Slot:
    """One element of a padded subsequence: an info qubit or a decoy."""

    state_index: Optional[int] = None
    qubit: Optional[int] = None
    decoy: Optional[DecoyRecord] = None
    decoy_state: Optional[StateVector] = None

    @property
    def is_decoy(self) -> bool:
        return self.decoy is not None


class PaddedSubsequence:
    """Subsequence S_k with decoys interleaved, as it travels over a channel.

    Info slots point into the shared :class:`ClusterRegister`, so anything
    done to them (by the receiver or by a tap) acts on the joint state.
    """

    def __init__(self, k: int, slots: list[Slot], register: ClusterRegister):
        self.k = k
        self.slots = slots
        self.register = register

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def decoys(self) -> list[DecoyRecord]:
        return [s.decoy for s in self.slots if s.decoy is not None]

    def info_entries(self) -> list[tuple[int, int]]:
        return [(s.state_index, s.qubit) for s in self.slots if not s.is_decoy]

    def get(self, pos: int) -> tuple[StateVector, int]:
        """The vector containing slot ``pos`` and the slot's qubit index in it."""
        slot = self.slots[pos]
        if slot.is_decoy:
            return slot.decoy_state, 1
        return self.register.states[slot.state_index], slot.qubit

    def put(self, pos: int, state: StateVector) -> None:
        slot = self.slots[pos]
        if slot.is_decoy:
            slot.decoy_state = state
        else:
            self.register.states[slot.state_index] = state

    def apply(self, pos: int, fn: Callable[[StateVector, int], StateVector]) -> None:
        state, q = self.get(pos)
        self.put(pos, fn(state, q))

    def measure(self, pos: int, basis: BasisKind, rng: np.random.Generator) -> int:
        state, q = self.get(pos)
        outcome, post = measure_qubit(state, q, basis, rng)
        self.put(pos, post)
        return outcome


def build_padded(
    k: int,
    entries: Sequence[tuple[int, int]],
    register: ClusterRegister,
    d: int,
    rng: np.random.Generator,
) -> PaddedSubsequence:
    """Insert ``d`` random decoys at random positions among ``entries``."""
    total = len(entries) + d
    positions = sorted(int(p) for p in rng.choice(total, size=d, replace=False)) if d else []
    labels = [DECOY_LABELS[int(x)] for x in rng.integers(0, 4, size=d)]
    decoy_at = dict(zip(positions, labels))
    slots: list[Slot] = []
    it = iter(entries)
    for pos in range(total):
        if pos in decoy_at:
            label = decoy_at[pos]
            slots.append(Slot(decoy=DecoyRecord(pos, label), decoy_state=decoy_state(label)))
        else:
            idx, q = next(it)
            slots.append(Slot(state_index=idx, qubit=q))
    return PaddedSubsequence(k, slots, register)


# --------------------------------------------------------------------------
# Phase operations
# --------------------------------------------------------------------------


@dataclass
class Preparation:
    register: ClusterRegister
    padded: dict[int, PaddedSubsequence]
    retained: dict[int, list[tuple[int, int]]]

    @property
    def decoys(self) -> dict[int, list[DecoyRecord]]:
        return {k: p.decoys for k, p in self.padded.items()}


def distributor_prepare(
    config: ProtocolConfig,
    rng: np.random.Generator,
    substitute: Optional[StateVector] = None,
) -> Preparation:
    """Prepare m + l states, split them into S1..S6 and pad S3..S6 with decoys."""
    count = config.m + config.l_verify
    register = ClusterRegister.fresh(count, substitute)
    padded = {
        k: build_padded(k, [(idx, k) for idx in range(count)], register, config.decoys, rng)
        for k in (3, 4, 5, 6)
    }
    retained = {k: [(idx, k) for idx in range(count)] for k in (1, 2)}
    return Preparation(register, padded, retained)


@dataclass
class DecoyCheckResult:
    decoys: int
    errors: int
    error_rate: float
    passed: bool
    detail: list[dict]

    @property
    def vacuous(self) -> bool:
        return self.decoys == 0


def decoy_check(
    padded: PaddedSubsequence, threshold: float, rng: np.random.Generator
) -> DecoyCheckResult:
    """Receiver measures each revealed decoy in its basis; sender scores it."""
    detail = []
    errors = 0
    for pos, slot in enumerate(padded.slots):
        if not slot.is_decoy:
            continue
        rec = slot.decoy
        outcome = padded.measure(pos, rec.basis, rng)
        wrong = outcome != rec.expected
        errors += wrong
        detail.append({"position": pos, "prepared": rec.prepared, "outcome": outcome, "error": wrong})
    d = len(detail)
    rate = errors / d if d else 0.0
    return DecoyCheckResult(d, errors, rate, rate <= threshold, detail)


def draw_challenge(
    count: int, l_verify: int, rng: np.random.Generator, basis_policy: str = "random"
) -> tuple[list[int], list[BasisKind]]:
    """Pick ``l_verify`` state indices (0-based) and a basis for each."""
    positions = sorted(int(p) for p in rng.choice(count, size=l_verify, replace=False))
    if basis_policy == "random":
        bases = [BasisKind.Z if b == 0 else BasisKind.X for b in rng.integers(0, 2, size=l_verify)]
    else:
        bases = [BasisKind(basis_policy)] * l_verify
    return positions, bases


@dataclass
class IdentityCheck:
    passed: bool
    positions: list[int]
    bases: list[BasisKind]
    distributor_symbols: list[str]
    left_symbols: list[str]
    right_symbols: list[str]
    per_position: list[bool]


def _pair_symbol(
    register: ClusterRegister,
    idx: int,
    qubits: tuple[int, int],
    basis: BasisKind,
    rng: np.random.Generator,
    measure_in: Optional[BasisKind] = None,
) -> str:
    """Measure a qubit pair and reduce it to its symbol (0/1 for X-type, A/B/C for Z)."""
    state = register.states[idx]
    mb = basis if measure_in is None else measure_in
    o1, state = measure_qubit(state, qubits[0], mb, rng)
    o2, state = measure_qubit(state, qubits[1], mb, rng)
    register.states[idx] = state
    if basis == BasisKind.X:
        return str(pair_symbol_x(o1, o2))
    return pair_symbol_z(o1, o2).value


def identity_verification(
    register: ClusterRegister,
    positions: Sequence[int],
    bases: Sequence[BasisKind],
    rng: np.random.Generator,
    x_round: str = "corrected",
) -> IdentityCheck:
    """Distributor measures qubits 1,2; the two first-hop participants measure 3,4 and 5,6.

    In a corrected X-type round the 3,4 pair is measured in Y, which makes
    the parity rule exact for |C>; a literal round measures it in X.
    """
    pair34 = BasisKind.Y if x_round == "corrected" else BasisKind.X
    dist, left, right, ok = [], [], [], []
    for idx, basis in zip(positions, bases):
        s12 = _pair_symbol(register, idx, (1, 2), basis, rng)
        s34 = _pair_symbol(register, idx, (3, 4), basis, rng,
                           measure_in=pair34 if basis == BasisKind.X else None)
        s56 = _pair_symbol(register, idx, (5, 6), basis, rng)
        if basis == BasisKind.X:
            good = check_x_correlation(int(s12), int(s34), int(s56))
        else:
            good = check_z_correlation(PairSymbolZ(s12), PairSymbolZ(s34), PairSymbolZ(s56))
        dist.append(s12)
        left.append(s34)
        right.append(s56)
        ok.append(good)
    return IdentityCheck(all(ok), list(positions), list(bases), dist, left, right, ok)


def participant_apply_key(
    register: ClusterRegister,
    subsequences: tuple[int, int],
    positions: Sequence[int],
    key: KeyString,
) -> None:
    """X on the j-th qubit of the lower subsequence if chunk bit 1 is set, higher if bit 2."""
    if key.m != len(positions):
        raise ValueError(f"key has {key.m} chunks for {len(positions)} positions")
    lo, hi = subsequences
    for idx, (b1, b2) in zip(positions, key.chunks()):
        if b1:
            register.states[idx] = apply_x(register.states[idx], lo)
        if b2:
            register.states[idx] = apply_x(register.states[idx], hi)


class MeasurementAnomaly(Exception):
    """A returned state was found outside the 16-state frame."""

    def __init__(self, position: int, outcomes: list[Optional[int]]):
        super().__init__(f"state at position {position} left the cluster frame")
        self.position = position
        self.outcomes = outcomes


@dataclass
class MeasurementResult:
    k_b: KeyString
    k_d: KeyString
    outcomes: list[int]


def distributor_measure(
    register: ClusterRegister, positions: Sequence[int], rng: np.random.Generator
) -> MeasurementResult:
    by_index = codebook_by_index()
    kb_chunks, kd_chunks, outcomes = [], [], []
    for idx in positions:
        outcome, post = cluster_basis_measure(register.states[idx], rng)
        register.states[idx] = post
        outcomes.append(outcome)
        if outcome is None:
            raise MeasurementAnomaly(idx, outcomes)
        kb, kd = mask_to_chunks(by_index[outcome])
        kb_chunks.append(kb)
        kd_chunks.append(kd)
    return MeasurementResult(KeyString.from_chunks(kb_chunks), KeyString.from_chunks(kd_chunks), outcomes)


@dataclass
class VerificationReport:
    eq1: bool
    eq2: bool
    eq3: bool
    eq4: bool
    eq5: bool
    key: Optional[KeyString] = None

    @property
    def failing(self) -> list[str]:
        return [name for name in ("eq1", "eq2", "eq3", "eq4", "eq5") if not getattr(self, name)]

    @property
    def passed(self) -> bool:
        return not self.failing

    def to_dict(self) -> dict:
        return {
            "eq1": self.eq1,
            "eq2": self.eq2,
            "eq3": self.eq3,
            "eq4": self.eq4,
            "eq5": self.eq5,
            "failing": self.failing,
        }


def tdc_recover(
    k_b: KeyString,
    k_d: KeyString,
    k_i: KeyString,
    h_b: Digest,
    h_d: Digest,
    registry: Registry,
    params: HashParams,
    pivot: int,
    left: Sequence[int],
    right: Sequence[int],
) -> VerificationReport:
    """Check the five digest equations; recover s = K_B ^ K_D ^ K_i only if all hold."""

    def safe_equal(claimed: Digest, key: KeyString) -> bool:
        return len(key) == params.key_bits and verify_equal(claimed, key, params)

    report = VerificationReport(
        eq1=verify_chain(registry, left, h_b),
        eq2=verify_chain(registry, right, h_d),
        eq3=safe_equal(h_b, k_b),
        eq4=safe_equal(h_d, k_d),
        eq5=safe_equal(registry[pivot], k_i),
    )
    if report.passed:
        report.key = k_b ^ k_d ^ k_i
    return report


# --------------------------------------------------------------------------
# Orchestration
# --------------------------------------------------------------------------


class _Abort(Exception):
    def __init__(self, phase: str, check: str, party: Optional[str], reason: str, detector: str):
        super().__init__(reason)
        self.phase = phase
        self.check = check
        self.party = party
        self.reason = reason
        self.detector = detector


@dataclass(frozen=True)
class TransferInfo:
    chain: str
    hop: int
    sender: str
    receiver: str
    subsequences: tuple[int, int]


class _Run:
    def __init__(self, config, attack, keys, rng):
        self.config = config
        self.attack = attack
        self.rng = rng
        n, m = config.n, config.m
        # hash matrix is fixed before any key material exists
        self.params = config.hash_params(rng)
        if keys is None:
            self.keys = {j: KeyString.random(m, rng) for j in range(1, n + 1)}
            self.explicit_keys = False
        else:
            keys = list(keys)
            if len(keys) != n:
                raise ConfigError(f"expected {n} keys, got {len(keys)}")
            self.keys = {j: keys[j - 1] for j in range(1, n + 1)}
            for j, k in self.keys.items():
                if len(k) != 2 * m:
                    raise ConfigError(f"key of P{j} has {len(k)} bits, expected {2 * m}")
            self.explicit_keys = True
        self.pivot = int(rng.integers(1, n + 1)) if config.pivot == "random" else int(config.pivot)
        self.left, self.right = chain_members(self.pivot, n)
        echo = {
            "protocol": config.to_dict(),
            "pivot": self.pivot,
            "keys": [str(self.keys[j]) for j in range(1, n + 1)] if self.explicit_keys else None,
            "adversary": attack.describe() if attack is not None else None,
        }
        self.t = Transcript(echo)
        self.t.extras.update(keys=self.keys, pivot=self.pivot, params=self.params,
                             left=self.left, right=self.right)
        self.registry = Registry(self.params)

    def _hook(self, name: str, *args):
        if self.attack is None:
            return None
        fn = getattr(self.attack, name, None)
        return fn(*args) if fn is not None else None

    def run(self) -> Transcript:
        try:
            self._setup()
            prep = self._prepare()
            positions = self._verify_identity(prep.register)
            self._chains(prep.register, positions)
            meas = self._measure(prep.register, positions)
            self._tdc(meas)
        except _Abort as ab:
            self.t.broadcast(
                "Abort",
                ab.detector,
                {"phase": ab.phase, "check": ab.check, "party": ab.party, "reason": ab.reason},
            )
            self.t.result = {
                "status": "abort",
                "phase": ab.phase,
                "check": ab.check,
                "party": ab.party,
                "reason": ab.reason,
            }
        return self.t

    def _setup(self) -> None:
        for j in range(1, self.config.n + 1):
            digest = hash_key(self.keys[j], self.params)
            self.registry.register(j, digest)
            self.t.secure("HashRegistration", party(j), TDC, {"identity": j, "digest": digest.to_str()})
        self.registry.freeze()
        self.t.extras["registry"] = self.registry
        self.t.broadcast("PivotAnnounce", "participants", {"pivot": self.pivot})
        self.t.record(PHASE_SETUP, hash=self.params.describe(), pivot=self.pivot,
                      left_chain=self.left, right_chain=self.right)

    def _prepare(self) -> Preparation:
        substitute = self._hook("substitute_state", self.rng)
        prep = distributor_prepare(self.config, self.rng, substitute)
        self.t.extras["register"] = prep.register
        count = self.config.m + self.config.l_verify
        self.t.record(PHASE_PREPARE, states=count, substituted=substitute is not None,
                      padded_lengths={str(k): len(p) for k, p in prep.padded.items()})
        self._transfer(
            TransferInfo("left", 0, DISTRIBUTOR, party(self.left[0]), (3, 4)),
            [prep.padded[3], prep.padded[4]],
            PHASE_PREPARE,
        )
        self._transfer(
            TransferInfo("right", 0, DISTRIBUTOR, party(self.right[0]), (5, 6)),
            [prep.padded[5], prep.padded[6]],
            PHASE_PREPARE,
        )
        return prep

    def _transfer(self, info: TransferInfo, padded: list[PaddedSubsequence], phase: str) -> None:
        t = self.t
        t.secure(
            "SubsequenceTransfer",
            info.sender,
            info.receiver,
            {
                "chain": info.chain,
                "hop": info.hop,
                "subsequences": list(info.subsequences),
                "lengths": [len(p) for p in padded],
            },
        )
        for p in padded:
            tap = self._hook("on_transfer", info, p, self.rng)
            if tap is not None:
                t.record(PHASE_ADVERSARY, chain=info.chain, hop=info.hop, subsequence=p.k, **tap)
        t.broadcast("ReceiptConfirm", info.receiver, {"chain": info.chain, "hop": info.hop})
        t.broadcast(
            "DecoyReveal",
            info.sender,
            {
                "reveal": [
                    {
                        "subsequence": p.k,
                        "positions": [d.position for d in p.decoys],
                        "bases": [d.basis.value for d in p.decoys],
                    }
                    for p in padded
                ]
            },
        )
        results = [decoy_check(p, self.config.error_threshold, self.rng) for p in padded]
        t.broadcast(
            "DecoyResults",
            info.receiver,
            {
                "results": [
                    {"subsequence": p.k, "outcomes": [x["outcome"] for x in r.detail]}
                    for p, r in zip(padded, results)
                ]
            },
        )
        failed = None
        for p, r in zip(padded, results):
            t.record(
                phase,
                check="decoy-check",
                chain=info.chain,
                hop=info.hop,
                **{"from": info.sender, "to": info.receiver},
                subsequence=p.k,
                decoys=r.decoys,
                errors=r.errors,
                error_rate=r.error_rate,
                passed=r.passed,
                vacuous=r.vacuous,
                detail=r.detail,
            )
            if not r.passed and failed is None:
                failed = (p, r)
        if failed is not None:
            p, r = failed
            raise _Abort(
                phase,
                "decoy-check",
                f"channel {info.sender}->{info.receiver}",
                f"decoy error rate {r.error_rate:.4f} on S{p.k} exceeds {self.config.error_threshold}",
                info.sender,
            )
        entries = [e for p in padded for e in p.info_entries()]
        self.register_of(padded).move(entries, info.receiver)

    @staticmethod
    def register_of(padded: list[PaddedSubsequence]) -> ClusterRegister:
        return padded[0].register

    def _verify_identity(self, register: ClusterRegister) -> list[int]:
        t = self.t
        a, b = party(self.left[0]), party(self.right[0])
        share_a = int(self.rng.integers(0, 2**32))
        share_b = int(self.rng.integers(0, 2**32))
        t.broadcast("ChallengeShare", a, {"share": share_a})
        t.broadcast("ChallengeShare", b, {"share": share_b})
        challenge_rng = np.random.default_rng([share_a, share_b])
        count = self.config.m + self.config.l_verify
        positions, bases = draw_challenge(count, self.config.l_verify, challenge_rng, self.config.verify_basis)
        t.broadcast(
            "VerifySpec",
            a,
            {"positions": [p + 1 for p in positions], "bases": [x.value for x in bases]},
        )
        check = identity_verification(register, positions, bases, self.rng, self.config.x_round)
        t.broadcast("VerifyAnnounce", DISTRIBUTOR, {"symbols": check.distributor_symbols})
        t.broadcast("VerifyAnnounce", a, {"symbols": check.left_symbols})
        t.broadcast("VerifyAnnounce", b, {"symbols": check.right_symbols})
        t.record(
            PHASE_IDENTITY,
            check="identity-verification",
            positions=[p + 1 for p in positions],
            bases=[x.value for x in bases],
            x_round=self.config.x_round,
            distributor=check.distributor_symbols,
            left=check.left_symbols,
            right=check.right_symbols,
            per_position=check.per_position,
            passed=check.passed,
        )
        if not check.passed:
            bad = [p + 1 for p, ok in zip(positions, check.per_position) if not ok]
            raise _Abort(
                PHASE_IDENTITY,
                "identity-verification",
                DISTRIBUTOR,
                f"cluster-state correlations violated at positions {bad}",
                a,
            )
        remaining = [idx for idx in range(count) if idx not in set(positions)]
        self.t.extras["positions"] = remaining
        return remaining

    def _chains(self, register: ClusterRegister, positions: list[int]) -> None:
        d = self.config.decoys
        for h in range(len(self.left)):
            for chain, members, subs in (("left", self.left, (3, 4)), ("right", self.right, (5, 6))):
                holder = members[h]
                entries = [(idx, k) for k in subs for idx in positions]
                if not register.holds(party(holder), entries):
                    raise RuntimeError(f"{party(holder)} does not hold S{subs[0]}, S{subs[1]}")
                participant_apply_key(register, subs, positions, self.keys[holder])
                last = h + 1 == len(members)
                if last:
                    rec = self._hook("before_return", chain, holder, register, positions, subs, self.rng)
                    if rec is not None:
                        self.t.record(PHASE_ADVERSARY, chain=chain, holder=party(holder), **rec)
                receiver = DISTRIBUTOR if last else party(members[h + 1])
                padded = [
                    build_padded(k, [(idx, k) for idx in positions], register, d, self.rng) for k in subs
                ]
                self._transfer(TransferInfo(chain, h + 1, party(holder), receiver, subs), padded, PHASE_CHAIN)

    def _measure(self, register: ClusterRegister, positions: list[int]) -> MeasurementResult:
        for idx in positions:
            if not register.holds(DISTRIBUTOR, [(idx, q) for q in range(1, 7)]):
                raise RuntimeError(f"distributor does not hold all qubits of state {idx}")
        try:
            meas = distributor_measure(register, positions, self.rng)
        except MeasurementAnomaly as exc:
            self.t.record(
                PHASE_MEASURE,
                check="cluster-frame",
                outcomes=[_label(o) for o in exc.outcomes],
                passed=False,
            )
            raise _Abort(
                PHASE_MEASURE,
                "cluster-frame",
                None,
                f"state at position {exc.position + 1} is outside the cluster frame",
                DISTRIBUTOR,
            ) from None
        self.t.record(
            PHASE_MEASURE,
            check="cluster-frame",
            outcomes=[_label(o) for o in meas.outcomes],
            passed=True,
        )
        self.t.extras["measurement"] = meas
        return meas

    def _tdc(self, meas: MeasurementResult) -> None:
        t = self.t
        sub = {
            "K_B": meas.k_b,
            "K_D": meas.k_d,
            "H_B": hash_key(meas.k_b, self.params),
            "H_D": hash_key(meas.k_d, self.params),
        }
        forged = self._hook("forge_distributor", dict(sub), self.params, self.rng)
        if forged is not None:
            sub = forged
        t.secure(
            "TDCSubmission",
            DISTRIBUTOR,
            TDC,
            {"K_B": str(sub["K_B"]), "K_D": str(sub["K_D"]), "H_B": sub["H_B"].to_str(), "H_D": sub["H_D"].to_str()},
        )
        k_i = self.keys[self.pivot]
        forged_key = self._hook("forge_pivot", k_i, self.rng)
        if forged_key is not None:
            k_i = forged_key
        t.secure("TDCSubmission", party(self.pivot), TDC, {"K_i": str(k_i)})
        report = tdc_recover(
            sub["K_B"], sub["K_D"], k_i, sub["H_B"], sub["H_D"],
            self.registry, self.params, self.pivot, self.left, self.right,
        )
        t.extras["report"] = report
        t.record(PHASE_TDC, check="tdc-verification", **report.to_dict(), passed=report.passed)
        if not report.passed:
            first = report.failing[0]
            offender = party(self.pivot) if first == "eq5" else DISTRIBUTOR
            raise _Abort(PHASE_TDC, first, offender, EQUATION_REASONS[first], TDC)
        t.broadcast("KeyAnnounce", TDC, {"key": str(report.key)})
        t.result = {"status": "success", "key": str(report.key)}


def _label(outcome: Optional[int]) -> str:
    return "outside" if outcome is None else f"C{outcome}"


def run_protocol(
    config: ProtocolConfig,
    adversary: Any = None,
    *,
    keys: Optional[Sequence[KeyString]] = None,
    rng: Optional[np.random.Generator] = None,
) -> Transcript:
    """Execute all five phases and return the transcript.

    Aborts are recorded in ``transcript.result``; they are outcomes, not
    exceptions. With ``rng`` omitted the run is seeded from ``config.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    return _Run(config, adversary, keys, rng).run()
