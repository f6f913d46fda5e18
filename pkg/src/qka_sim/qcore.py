"""Minimal dense state-vector simulator.

Qubits are numbered from 1 and qubit 1 is the most significant bit of the
basis index, so ``|q1 q2 ... qk>`` reads directly as a binary number.
Every operation returns a new :class:`StateVector`; nothing is mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

MAX_QUBITS = 10
TOL = 1e-9

_SQRT_HALF = 1.0 / np.sqrt(2.0)
_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) * _SQRT_HALF
# rotations taking each basis onto Z: outcome 0 <-> |0>
_TO_Z = {
    "X": _HADAMARD,
    "Y": _HADAMARD @ np.diag([1.0, -1.0j]),
}


class BasisKind(str, Enum):
    Z = "Z"
    X = "X"
    Y = "Y"


class QuantumError(ValueError):
    """Raised for malformed states, bad qubit indices or non-unitary gates."""


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit-norm amplitude vector over ``num_qubits`` qubits."""

    num_qubits: int
    amps: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise QuantumError(f"qubit count must be in 1..{MAX_QUBITS}, got {self.num_qubits}")
        amps = np.asarray(self.amps, dtype=complex)
        if amps.shape != (1 << self.num_qubits,):
            raise QuantumError(f"expected {1 << self.num_qubits} amplitudes, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise QuantumError("amplitudes must be finite")
        if abs(norm(amps) - 1.0) > TOL:
            raise QuantumError(f"state is not normalized (norm {norm(amps)!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_amplitudes(cls, amps: Sequence[complex], normalize: bool = False) -> StateVector:
        arr = np.asarray(amps, dtype=complex)
        n = int(arr.size).bit_length() - 1
        if arr.size == 0 or 1 << n != arr.size:
            raise QuantumError(f"amplitude count {arr.size} is not a power of two")
        if normalize:
            nrm = norm(arr)
            if nrm < TOL:
                raise QuantumError("cannot normalize the zero vector")
            arr = arr / nrm
        return cls(n, arr)

    def tensor(self) -> np.ndarray:
        """View the amplitudes as a rank-``num_qubits`` tensor of shape (2, ..., 2)."""
        return self.amps.reshape((2,) * self.num_qubits)

    def probability(self, index: int) -> float:
        return float(abs(self.amps[index]) ** 2)

    def __repr__(self) -> str:
        terms = []
        for idx in np.flatnonzero(np.abs(self.amps) > TOL):
            ket = format(int(idx), f"0{self.num_qubits}b")
            terms.append(f"({self.amps[idx]:.4g})|{ket}>")
        return f"StateVector({' + '.join(terms)})"


def norm(amps: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(amps) ** 2)))


def _check_qubit(state: StateVector, qubit: int) -> None:
    if not 1 <= qubit <= state.num_qubits:
        raise QuantumError(f"qubit {qubit} out of range 1..{state.num_qubits}")


def basis_state(bits: Sequence[int]) -> StateVector:
    """Computational basis ket ``|b1 b2 ... bk>``."""
    bits = list(bits)
    if not 1 <= len(bits) <= MAX_QUBITS:
        raise QuantumError(f"basis state needs 1..{MAX_QUBITS} bits, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise QuantumError(f"bits must be 0/1, got {bits}")
    index = int("".join(str(b) for b in bits), 2)
    amps = np.zeros(1 << len(bits), dtype=complex)
    amps[index] = 1.0
    return StateVector(len(bits), amps)


def plus_state() -> StateVector:
    return StateVector(1, np.array([_SQRT_HALF, _SQRT_HALF], dtype=complex))


def minus_state() -> StateVector:
    return StateVector(1, np.array([_SQRT_HALF, -_SQRT_HALF], dtype=complex))


def product_state(states: Sequence[StateVector]) -> StateVector:
    out = states[0]
    for s in states[1:]:
        out = extend_with_ancilla(out, s)
    return out


def make_cluster_state() -> StateVector:
    """The six-qubit resource (|000000> + |000111> + |111000> - |111111>) / 2."""
    amps = np.zeros(64, dtype=complex)
    amps[0b000000] = 0.5
    amps[0b000111] = 0.5
    amps[0b111000] = 0.5
    amps[0b111111] = -0.5
    return StateVector(6, amps)


def apply_x(state: StateVector, qubit: int) -> StateVector:
    """Bit flip on ``qubit``."""
    _check_qubit(state, qubit)
    flipped = np.flip(state.tensor(), axis=qubit - 1)
    return StateVector(state.num_qubits, flipped.reshape(-1).copy())


def apply_single_qubit_unitary(state: StateVector, qubit: int, U: np.ndarray) -> StateVector:
    _check_qubit(state, qubit)
    U = np.asarray(U, dtype=complex)
    if U.shape != (2, 2) or not is_unitary(U):
        raise QuantumError("single-qubit gate must be a 2x2 unitary")
    t = np.tensordot(U, state.tensor(), axes=([1], [qubit - 1]))
    t = np.moveaxis(t, 0, qubit - 1)
    return StateVector(state.num_qubits, t.reshape(-1))


def hadamard(state: StateVector, qubit: int) -> StateVector:
    return apply_single_qubit_unitary(state, qubit, _HADAMARD)


def is_unitary(U: np.ndarray, tol: float = TOL) -> bool:
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        return False
    return bool(np.allclose(U.conj().T @ U, np.eye(U.shape[0]), atol=tol, rtol=0.0))


def _rotate(t: np.ndarray, qubit: int, U: np.ndarray) -> np.ndarray:
    return np.moveaxis(np.tensordot(U, t, axes=([1], [qubit - 1])), 0, qubit - 1)


def _trusted(num_qubits: int, amps: np.ndarray) -> StateVector:
    """Wrap amplitudes already known to be valid, skipping the checks."""
    sv = object.__new__(StateVector)
    amps.setflags(write=False)
    object.__setattr__(sv, "num_qubits", num_qubits)
    object.__setattr__(sv, "amps", amps)
    return sv


def _split(state: StateVector, qubit: int) -> np.ndarray:
    """View as (high, 2, low) with the middle axis being ``qubit``."""
    return state.amps.reshape(1 << (qubit - 1), 2, 1 << (state.num_qubits - qubit))


def _in_basis(state: StateVector, qubit: int, basis: BasisKind) -> tuple[np.ndarray, np.ndarray]:
    """Components of the state along the two eigenvectors of ``basis`` on ``qubit``."""
    t = _split(state, qubit)
    a, b = t[:, 0, :], t[:, 1, :]
    if basis == BasisKind.Z:
        return a, b
    U = _TO_Z[BasisKind(basis).value]
    return U[0, 0] * a + U[0, 1] * b, U[1, 0] * a + U[1, 1] * b


def outcome_probabilities(state: StateVector, qubit: int, basis: BasisKind) -> tuple[float, float]:
    """Born-rule probabilities of outcomes 0 and 1 for one qubit."""
    _check_qubit(state, qubit)
    c0, c1 = _in_basis(state, qubit, basis)
    p0 = float(np.vdot(c0, c0).real)
    p1 = float(np.vdot(c1, c1).real)
    total = p0 + p1
    return p0 / total, p1 / total


def _collapse(state: StateVector, qubit: int, basis: BasisKind, outcome: int, comp: np.ndarray) -> StateVector:
    nrm = float(np.sqrt(np.vdot(comp, comp).real))
    if nrm < TOL:
        raise QuantumError(f"outcome {outcome} has zero probability")
    if state.num_qubits == 1:
        # a lone qubit collapses to the eigenstate itself (up to global phase)
        return _EIGENSTATES[BasisKind(basis).value, outcome]
    comp = comp / nrm
    out = np.empty((comp.shape[0], 2, comp.shape[1]), dtype=complex)
    if basis == BasisKind.Z:
        out[:, outcome, :] = comp
        out[:, 1 - outcome, :] = 0.0
    else:
        # eigenvector = row ``outcome`` of the rotation, conjugated
        row = _TO_Z[BasisKind(basis).value][outcome].conj()
        out[:, 0, :] = row[0] * comp
        out[:, 1, :] = row[1] * comp
    return _trusted(state.num_qubits, out.reshape(-1))


_EIGENSTATES = {
    ("Z", 0): StateVector(1, np.array([1.0, 0.0], dtype=complex)),
    ("Z", 1): StateVector(1, np.array([0.0, 1.0], dtype=complex)),
    **{(b, o): StateVector(1, U[o].conj().copy()) for b, U in _TO_Z.items() for o in (0, 1)},
}


def project_qubit(state: StateVector, qubit: int, basis: BasisKind, outcome: int) -> StateVector:
    """Collapse ``qubit`` onto the given eigenstate and renormalize."""
    _check_qubit(state, qubit)
    comps = _in_basis(state, qubit, basis)
    return _collapse(state, qubit, basis, outcome, comps[outcome])


def measure_qubit(
    state: StateVector, qubit: int, basis: BasisKind, rng: np.random.Generator
) -> tuple[int, StateVector]:
    """Projective measurement of one qubit.

    Outcome 0 is ``|0>``, ``|+>`` or ``|+i>`` for the Z, X and Y bases.
    The returned state is the renormalized post-measurement state.
    """
    _check_qubit(state, qubit)
    c0, c1 = _in_basis(state, qubit, basis)
    p0 = float(np.vdot(c0, c0).real)
    p1 = float(np.vdot(c1, c1).real)
    outcome = int(rng.random() < p1 / (p0 + p1))
    return outcome, _collapse(state, qubit, basis, outcome, c1 if outcome else c0)


def remove_qubit(state: StateVector, qubit: int, basis: BasisKind, outcome: int) -> StateVector:
    """Drop a qubit already known to be in the ``outcome`` eigenstate of ``basis``.

    The caller guarantees the qubit is unentangled (it was just measured);
    the remaining register keeps the original qubit order.
    """
    if state.num_qubits < 2:
        raise QuantumError("cannot remove the only qubit")
    _check_qubit(state, qubit)
    t = state.tensor()
    if basis != BasisKind.Z:
        t = _rotate(t, qubit, _TO_Z[BasisKind(basis).value])
    rest = np.take(t, outcome, axis=qubit - 1)
    return StateVector.from_amplitudes(rest.reshape(-1), normalize=True)


def extend_with_ancilla(state: StateVector, ancilla: StateVector) -> StateVector:
    """Tensor product ``state (x) ancilla``; ancilla qubits are appended last."""
    total = state.num_qubits + ancilla.num_qubits
    if total > MAX_QUBITS:
        raise QuantumError(f"combined register of {total} qubits exceeds {MAX_QUBITS}")
    return StateVector(total, np.kron(state.amps, ancilla.amps))


def apply_two_qubit_unitary(state: StateVector, q1: int, q2: int, U: np.ndarray) -> StateVector:
    """Apply a 4x4 unitary on qubits (q1, q2); q1 is the high bit of U's index."""
    _check_qubit(state, q1)
    _check_qubit(state, q2)
    if q1 == q2:
        raise QuantumError("two-qubit gate needs distinct qubits")
    U = np.asarray(U, dtype=complex)
    if U.shape != (4, 4):
        raise QuantumError(f"expected a 4x4 matrix, got {U.shape}")
    if not is_unitary(U):
        raise QuantumError("matrix is not unitary")
    t = np.tensordot(U.reshape(2, 2, 2, 2), state.tensor(), axes=([2, 3], [q1 - 1, q2 - 1]))
    t = np.moveaxis(t, [0, 1], [q1 - 1, q2 - 1])
    return StateVector(state.num_qubits, t.reshape(-1))


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.num_qubits != b.num_qubits:
        raise QuantumError(f"size mismatch: {a.num_qubits} vs {b.num_qubits} qubits")
    return complex(np.vdot(a.amps, b.amps))
