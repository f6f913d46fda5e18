"""Homomorphic hash over participant keys and the TDC digest registry.

Two instantiations:

* ``xor-linear`` (default): digest = M . key over GF(2) for a random
  L x 2m binary matrix M, so ``H(x) ^ H(y) == H(x ^ y)``. This matches
  how keys actually combine in the protocol (X flips compose by XOR).
* ``modexp``: digest = g ** int(key) mod p, homomorphic over integer
  addition. Kept to reproduce the textbook construction; it only agrees
  with XOR combination when the keys share no set bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

Chunk = tuple[int, int]


class HashError(ValueError):
    pass


@dataclass(frozen=True)
class KeyString:
    """A 2m-bit key, read as m two-bit chunks."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if len(self.bits) % 2:
            raise HashError(f"key length must be even, got {len(self.bits)}")
        if any(b not in (0, 1) for b in self.bits):
            raise HashError("key bits must be 0/1")

    @classmethod
    def parse(cls, text: str) -> KeyString:
        """Parse ``"10,11,01"`` (commas and whitespace optional)."""
        digits = [c for c in text if c not in ", \t()"]
        if any(c not in "01" for c in digits):
            raise HashError(f"not a bit string: {text!r}")
        return cls(tuple(int(c) for c in digits))

    @classmethod
    def from_chunks(cls, chunks: Iterable[Chunk]) -> KeyString:
        return cls(tuple(b for chunk in chunks for b in chunk))

    @classmethod
    def from_int(cls, value: int, length: int) -> KeyString:
        if value < 0 or value >> length:
            raise HashError(f"{value} does not fit in {length} bits")
        return cls(tuple((value >> (length - 1 - i)) & 1 for i in range(length)))

    @classmethod
    def zeros(cls, m: int) -> KeyString:
        return cls((0,) * (2 * m))

    @classmethod
    def random(cls, m: int, rng: np.random.Generator) -> KeyString:
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=2 * m)))

    @property
    def m(self) -> int:
        return len(self.bits) // 2

    def __len__(self) -> int:
        return len(self.bits)

    def chunks(self) -> list[Chunk]:
        return [(self.bits[2 * j], self.bits[2 * j + 1]) for j in range(self.m)]

    def to_int(self) -> int:
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value

    def flip(self, position: int) -> KeyString:
        bits = list(self.bits)
        bits[position] ^= 1
        return KeyString(tuple(bits))

    def __xor__(self, other: KeyString) -> KeyString:
        if len(self) != len(other):
            raise HashError(f"length mismatch: {len(self)} vs {len(other)}")
        return KeyString(tuple(a ^ b for a, b in zip(self.bits, other.bits)))

    def __str__(self) -> str:
        return ",".join(f"{a}{b}" for a, b in self.chunks())


def xor_all(keys: Iterable[KeyString]) -> KeyString:
    keys = list(keys)
    out = keys[0]
    for k in keys[1:]:
        out = out ^ k
    return out


class HashMode(str, Enum):
    XOR_LINEAR = "xor-linear"
    MODEXP = "modexp"


def _pack_rows(mat: np.ndarray) -> list[int]:
    """Read each 0/1 row as a binary number, first column most significant."""
    if mat.shape[1] <= 62:
        weights = 1 << np.arange(mat.shape[1] - 1, -1, -1, dtype=np.int64)
        return [int(v) for v in mat.astype(np.int64) @ weights]
    return [int("".join(map(str, r)), 2) for r in mat]


def _gf2_rank(rows: Sequence[int]) -> int:
    pivots: dict[int, int] = {}
    for row in rows:
        while row:
            top = row.bit_length() - 1
            if top not in pivots:
                pivots[top] = row
                break
            row ^= pivots[top]
    return len(pivots)


def is_probable_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for p in small:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d, s = d // 2, s + 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class Digest:
    mode: HashMode
    value: int
    group: int  # digest width in bits (xor-linear) or modulus (modexp)

    def to_str(self) -> str:
        if self.mode == HashMode.XOR_LINEAR:
            return f"xl{self.group}:{self.value:0{(self.group + 3) // 4}x}"
        return f"me:{self.value:x}"

    @classmethod
    def parse(cls, text: str, modulus: int | None = None) -> Digest:
        prefix, _, hexpart = text.partition(":")
        if prefix.startswith("xl") and prefix[2:].isdigit():
            return cls(HashMode.XOR_LINEAR, int(hexpart, 16), int(prefix[2:]))
        if prefix == "me" and modulus is not None:
            return cls(HashMode.MODEXP, int(hexpart, 16), modulus)
        raise HashError(f"cannot parse digest {text!r}")

    def __str__(self) -> str:
        return self.to_str()


@dataclass(frozen=True)
class HashParams:
    mode: HashMode
    key_bits: int
    digest_bits: int = 64
    rows: tuple[int, ...] = ()
    g: int = 0
    hash_modulus: int = 0

    @classmethod
    def xor_linear(
        cls, key_bits: int, rng: np.random.Generator, digest_bits: int = 64
    ) -> HashParams:
        """Draw a random binary matrix of full rank ``min(digest_bits, key_bits)``.

        When ``key_bits <= digest_bits`` the map is injective, so any change
        to a key changes its digest.
        """
        if key_bits < 1 or digest_bits < 1:
            raise HashError("key_bits and digest_bits must be positive")
        target = min(digest_bits, key_bits)
        while True:
            mat = rng.integers(0, 2, size=(digest_bits, key_bits))
            rows = tuple(_pack_rows(mat))
            if _gf2_rank(rows) == target:
                return cls(HashMode.XOR_LINEAR, key_bits, digest_bits, rows)

    @classmethod
    def modexp(cls, g: int, hash_modulus: int, key_bits: int) -> HashParams:
        if not is_probable_prime(hash_modulus):
            raise HashError(f"hash_modulus {hash_modulus} is not prime")
        if not 1 < g < hash_modulus:
            raise HashError(f"generator {g} not in (1, {hash_modulus})")
        return cls(HashMode.MODEXP, key_bits, g=g, hash_modulus=hash_modulus)

    @property
    def group(self) -> int:
        return self.digest_bits if self.mode == HashMode.XOR_LINEAR else self.hash_modulus

    def identity(self) -> Digest:
        return Digest(self.mode, 0 if self.mode == HashMode.XOR_LINEAR else 1, self.group)

    def describe(self) -> dict:
        if self.mode == HashMode.XOR_LINEAR:
            return {"mode": self.mode.value, "digest_bits": self.digest_bits}
        return {"mode": self.mode.value, "g": self.g, "hash_modulus": self.hash_modulus}


def hash_key(key: KeyString, params: HashParams) -> Digest:
    if len(key) != params.key_bits:
        raise HashError(f"key has {len(key)} bits, params expect {params.key_bits}")
    if params.mode == HashMode.XOR_LINEAR:
        k = key.to_int()
        value = 0
        for row in params.rows:
            value = (value << 1) | ((row & k).bit_count() & 1)
        return Digest(params.mode, value, params.group)
    return hash_exponent(key.to_int(), params)


def hash_exponent(v: int, params: HashParams) -> Digest:
    """g ** v mod p for an arbitrary non-negative integer exponent (modexp only)."""
    if params.mode != HashMode.MODEXP:
        raise HashError("integer-exponent hashing is only defined for modexp")
    return Digest(params.mode, pow(params.g, v, params.hash_modulus), params.group)


def combine(d1: Digest, d2: Digest) -> Digest:
    if d1.mode != d2.mode or d1.group != d2.group:
        raise HashError(f"cannot combine {d1.mode.value}/{d1.group} with {d2.mode.value}/{d2.group}")
    if d1.mode == HashMode.XOR_LINEAR:
        return Digest(d1.mode, d1.value ^ d2.value, d1.group)
    return Digest(d1.mode, d1.value * d2.value % d1.group, d1.group)


@dataclass
class Registry:
    """Participant identity -> digest of that participant's key.

    Entries can be added until :meth:`freeze` is called at the end of the
    preparation phase.
    """

    params: HashParams
    _entries: dict[int, Digest] = field(default_factory=dict)
    _frozen: bool = False

    def register(self, identity: int, digest: Digest) -> None:
        if self._frozen:
            raise HashError("registry is frozen")
        if identity in self._entries:
            raise HashError(f"identity {identity} already registered")
        if digest.mode != self.params.mode:
            raise HashError("digest mode does not match registry params")
        self._entries[identity] = digest

    def freeze(self) -> None:
        self._frozen = True

    @property
    def entries(self) -> Mapping[int, Digest]:
        return MappingProxyType(self._entries)

    def __getitem__(self, identity: int) -> Digest:
        try:
            return self._entries[identity]
        except KeyError:
            raise HashError(f"unknown identity {identity}") from None

    def __contains__(self, identity: object) -> bool:
        return identity in self._entries


def verify_chain(registry: Registry, identities: Sequence[int], claimed: Digest) -> bool:
    acc = registry.params.identity()
    for ident in identities:
        acc = combine(acc, registry[ident])
    return acc == claimed


def verify_equal(claimed: Digest, key: KeyString, params: HashParams) -> bool:
    if claimed.mode != params.mode:
        raise HashError("digest mode does not match params")
    return claimed == hash_key(key, params)
