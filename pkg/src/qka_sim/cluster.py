"""Cluster-state codec.

Two-bit key chunks become X-flip masks on qubits 3-6 of the six-qubit
cluster state; the 16 resulting states form an orthonormal frame that the
distributor measures in. Also holds the pair-symbol rules used when the
two verifying participants check the distributor's states.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

from .qcore import (
    _TO_Z,
    TOL,
    BasisKind,
    StateVector,
    apply_x,
    inner_product,
    make_cluster_state,
)

Chunk = tuple[int, int]

# Published ket listing of the 16 transformed states: four (sign, ket) terms
# each, amplitude sign * 1/2. Kept verbatim so the mask-derived codebook can
# be checked against it.
STATE_LIST: dict[int, tuple[tuple[int, str], ...]] = {
    1: ((1, "000000"), (1, "000111"), (1, "111000"), (-1, "111111")),
    2: ((1, "000001"), (1, "000110"), (1, "111001"), (-1, "111110")),
    3: ((1, "000010"), (1, "000101"), (1, "111010"), (-1, "111101")),
    4: ((1, "000011"), (1, "000100"), (1, "111011"), (-1, "111100")),
    5: ((1, "000100"), (1, "000011"), (1, "111100"), (-1, "111011")),
    6: ((1, "000101"), (1, "000010"), (1, "111101"), (-1, "111010")),
    7: ((1, "000110"), (1, "000001"), (1, "111110"), (-1, "111001")),
    8: ((1, "000111"), (1, "000000"), (1, "111111"), (-1, "111000")),
    9: ((1, "001000"), (1, "001111"), (1, "110000"), (-1, "110111")),
    10: ((1, "001001"), (1, "001110"), (1, "110001"), (-1, "110110")),
    11: ((1, "001010"), (1, "001101"), (1, "110010"), (-1, "110101")),
    12: ((1, "001011"), (1, "001100"), (1, "110011"), (-1, "110100")),
    13: ((1, "001100"), (1, "001011"), (1, "110100"), (-1, "110011")),
    14: ((1, "001101"), (1, "001010"), (1, "110101"), (-1, "110010")),
    15: ((1, "001110"), (1, "001001"), (1, "110110"), (-1, "110001")),
    16: ((1, "001111"), (1, "001000"), (1, "110111"), (-1, "110000")),
}

# Key-chunk table as printed, including its three inconsistent K_B = 11 rows.
PUBLISHED_TABLE: dict[tuple[str, str], int] = {
    ("00", "00"): 1, ("00", "01"): 2, ("00", "10"): 3, ("00", "11"): 4,
    ("01", "00"): 5, ("01", "01"): 6, ("01", "10"): 7, ("01", "11"): 8,
    ("10", "00"): 9, ("10", "01"): 10, ("10", "10"): 11, ("10", "11"): 12,
    ("11", "01"): 13, ("11", "10"): 14, ("11", "00"): 15, ("11", "11"): 16,
}


@dataclass(frozen=True)
class FlipMask:
    """Which of qubits 3, 4, 5, 6 receive an X gate."""

    f3: int
    f4: int
    f5: int
    f6: int

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"mask bits must be 0/1, got {self.bits}")

    @property
    def bits(self) -> tuple[int, int, int, int]:
        return (self.f3, self.f4, self.f5, self.f6)

    @classmethod
    def from_int(cls, value: int) -> FlipMask:
        return cls(*((value >> s) & 1 for s in (3, 2, 1, 0)))

    def to_int(self) -> int:
        return (self.f3 << 3) | (self.f4 << 2) | (self.f5 << 1) | self.f6

    def __xor__(self, other: FlipMask) -> FlipMask:
        return FlipMask.from_int(self.to_int() ^ other.to_int())

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


class PairSymbolZ(str, Enum):
    A = "A"  # |00>
    B = "B"  # |11>
    C = "C"  # |01> or |10>


def chunks_to_mask(kb: Chunk, kd: Chunk) -> FlipMask:
    return FlipMask(kb[0], kb[1], kd[0], kd[1])


def mask_to_chunks(mask: FlipMask) -> tuple[Chunk, Chunk]:
    return (mask.f3, mask.f4), (mask.f5, mask.f6)


def apply_mask(state: StateVector, mask: FlipMask) -> StateVector:
    for qubit, bit in zip((3, 4, 5, 6), mask.bits):
        if bit:
            state = apply_x(state, qubit)
    return state


def listed_state(index: int, table: Optional[dict] = None) -> StateVector:
    """Build C_index from the verbatim ket listing."""
    table = STATE_LIST if table is None else table
    amps = np.zeros(64, dtype=complex)
    for sign, ket in table[index]:
        amps[int(ket, 2)] += 0.5 * sign
    return StateVector(6, amps)


@dataclass(frozen=True)
class CodebookEntry:
    mask: FlipMask
    index: int
    state: StateVector


class CodebookError(RuntimeError):
    pass


def derived_codebook(table: Optional[dict] = None) -> dict[FlipMask, CodebookEntry]:
    """Apply all 16 masks to |C> and identify each result in the listed states.

    Each mask's state must match exactly one listed C_i up to a global
    phase and the matching must be a bijection.
    """
    table = STATE_LIST if table is None else table
    listed = {i: listed_state(i, table) for i in table}
    base = make_cluster_state()
    out: dict[FlipMask, CodebookEntry] = {}
    used: set[int] = set()
    for value in range(16):
        mask = FlipMask.from_int(value)
        state = apply_mask(base, mask)
        hits = [i for i, c in listed.items() if abs(abs(inner_product(c, state)) - 1.0) < TOL]
        if len(hits) != 1 or hits[0] in used:
            raise CodebookError(f"mask {mask} matches listed states {hits}")
        used.add(hits[0])
        out[mask] = CodebookEntry(mask, hits[0], state)
    return out


@lru_cache(maxsize=1)
def _frame() -> tuple[tuple[int, FlipMask, np.ndarray], ...]:
    book = derived_codebook()
    return tuple(
        sorted(((e.index, e.mask, e.state.amps) for e in book.values()), key=lambda t: t[0])
    )


def codebook_by_index() -> dict[int, FlipMask]:
    return {index: mask for index, mask, _ in _frame()}


def frame_states() -> list[StateVector]:
    """C_1 .. C_16 in index order."""
    return [StateVector(6, amps) for _, _, amps in _frame()]


def cluster_basis_measure(
    state6: StateVector, rng: np.random.Generator
) -> tuple[Optional[int], StateVector]:
    """Measure in the frame {C_1..C_16} completed by its 48-dim complement.

    Returns ``(i, post_state)`` or ``(None, post_state)`` for the
    complement outcome.
    """
    if state6.num_qubits != 6:
        raise ValueError(f"cluster measurement needs 6 qubits, got {state6.num_qubits}")
    frame = _frame()
    overlaps = np.array([np.vdot(amps, state6.amps) for _, _, amps in frame])
    probs = np.abs(overlaps) ** 2
    cum = np.cumsum(probs)
    residual = 1.0 - float(cum[-1])
    if residual < TOL:
        residual = 0.0
    r = rng.random() * (float(cum[-1]) + residual)
    k = int(np.searchsorted(cum, r, side="right"))
    if k >= len(frame) and residual == 0.0:
        k = int(np.flatnonzero(probs > 0)[-1])
    if k < len(frame):
        index, _, amps = frame[k]
        post = amps * (overlaps[k] / abs(overlaps[k]))
        return index, StateVector(6, post)
    rest = state6.amps - sum(ov * amps for ov, (_, _, amps) in zip(overlaps, frame))
    return None, StateVector.from_amplitudes(rest, normalize=True)


def pair_symbol_x(o_left: int, o_right: int) -> int:
    return 0 if o_left == o_right else 1


def pair_symbol_z(o_left: int, o_right: int) -> PairSymbolZ:
    if o_left == o_right:
        return PairSymbolZ.A if o_left == 0 else PairSymbolZ.B
    return PairSymbolZ.C


def check_x_correlation(p12: int, p34: int, p56: int) -> bool:
    return p12 == (p34 ^ p56)


_Z_ACCEPT = {
    PairSymbolZ.A: {(PairSymbolZ.A, PairSymbolZ.A), (PairSymbolZ.B, PairSymbolZ.C), (PairSymbolZ.C, PairSymbolZ.B)},
    PairSymbolZ.B: {(PairSymbolZ.B, PairSymbolZ.B), (PairSymbolZ.A, PairSymbolZ.C), (PairSymbolZ.C, PairSymbolZ.A)},
}


def check_z_correlation(r12: PairSymbolZ, r34: PairSymbolZ, r56: PairSymbolZ) -> bool:
    # r12 = C never occurs for a genuine cluster state
    return (PairSymbolZ(r34), PairSymbolZ(r56)) in _Z_ACCEPT.get(PairSymbolZ(r12), set())


def round_acceptance(state: StateVector, basis: BasisKind, x_round: str = "corrected") -> float:
    """Exact probability that one verification round accepts a six-qubit ``state``.

    Enumerates all 64 outcomes. An X-type round measures qubits 3,4 in Y
    when ``x_round`` is ``"corrected"`` and in X when ``"literal"``.
    """
    if state.num_qubits != 6:
        raise ValueError(f"verification rounds act on 6 qubits, got {state.num_qubits}")
    t = state.tensor()
    if basis != BasisKind.Z:
        for q in range(1, 7):
            b = "Y" if (x_round == "corrected" and q in (3, 4)) else "X"
            t = np.moveaxis(np.tensordot(_TO_Z[b], t, axes=([1], [q - 1])), 0, q - 1)
    probs = np.abs(t.reshape(-1)) ** 2
    total = 0.0
    for idx in np.flatnonzero(probs > 1e-15):
        o = [(int(idx) >> (5 - k)) & 1 for k in range(6)]
        if basis == BasisKind.Z:
            syms = [pair_symbol_z(o[k], o[k + 1]) for k in (0, 2, 4)]
            ok = check_z_correlation(*syms)
        else:
            ok = check_x_correlation(*(pair_symbol_x(o[k], o[k + 1]) for k in (0, 2, 4)))
        total += probs[idx] * ok
    return float(total)


def table_comparison() -> list[dict]:
    """Row-by-row comparison of the derived codebook with the printed table."""
    by_chunks = {}
    for entry in derived_codebook().values():
        kb, kd = mask_to_chunks(entry.mask)
        by_chunks[(f"{kb[0]}{kb[1]}", f"{kd[0]}{kd[1]}")] = entry.index
    rows = []
    for (kb, kd), published in sorted(PUBLISHED_TABLE.items()):
        derived = by_chunks[(kb, kd)]
        rows.append(
            {
                "kb": kb,
                "kd": kd,
                "mask": kb + kd,
                "published": published,
                "derived": derived,
                "agree": published == derived,
            }
        )
    return rows
