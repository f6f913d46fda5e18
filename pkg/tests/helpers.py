"""Shared oracles for the test suite."""

from qka_sim.cluster import (
    check_x_correlation,
    check_z_correlation,
    pair_symbol_x,
    pair_symbol_z,
)
from qka_sim.qcore import BasisKind, measure_qubit


def sample_full_measurement(state, bases, rng):
    """Measure qubits 1..6 one after another; returns the six outcomes."""
    out = []
    for q, b in enumerate(bases, start=1):
        o, state = measure_qubit(state, q, b, rng)
        out.append(o)
    return out


def x_round_ok(o):
    return check_x_correlation(pair_symbol_x(o[0], o[1]), pair_symbol_x(o[2], o[3]), pair_symbol_x(o[4], o[5]))


def z_round_ok(o):
    return check_z_correlation(pair_symbol_z(o[0], o[1]), pair_symbol_z(o[2], o[3]), pair_symbol_z(o[4], o[5]))


def z_accepting_strings():
    """Brute-force the six-bit Z outcomes the pair rule accepts."""
    accept = {
        "A": {("A", "A"), ("B", "C"), ("C", "B")},
        "B": {("B", "B"), ("A", "C"), ("C", "A")},
    }

    def sym(a, b):
        return "C" if a != b else ("A" if a == 0 else "B")

    hits = []
    for v in range(64):
        o = [(v >> (5 - k)) & 1 for k in range(6)]
        s12, s34, s56 = sym(o[0], o[1]), sym(o[2], o[3]), sym(o[4], o[5])
        if (s34, s56) in accept.get(s12, set()):
            hits.append(v)
    return hits


ALL_X = [BasisKind.X] * 6
ALL_Z = [BasisKind.Z] * 6
CORRECTED_X = [BasisKind.X, BasisKind.X, BasisKind.Y, BasisKind.Y, BasisKind.X, BasisKind.X]
