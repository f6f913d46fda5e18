from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from ..hashmod import HashMode, HashParams


class ConfigError(ValueError):
    pass


def _default_hash() -> dict:
    return {"mode": HashMode.XOR_LINEAR.value, "digest_bits": 64}


@dataclass(frozen=True)
class ProtocolConfig:
    """Run parameters.

    ``l_verify`` defaults to ``m``. ``pivot`` is a participant identity or
    ``"random"`` (drawn from the run RNG). ``verify_basis`` pins the
    identity-verification basis; ``"random"`` draws one per position.
    ``x_round`` selects how X-type verification rounds are measured:
    ``"corrected"`` has the holder of qubits 3,4 measure in Y (the state's
    actual stabilizer is X X Y Y X X), ``"literal"`` measures all six in X.
    """

    n: int
    m: int
    l_verify: Optional[int] = None
    pivot: Union[int, str] = "random"
    decoys: int = 16
    error_threshold: float = 0.0
    hash: dict = field(default_factory=_default_hash)
    verify_basis: str = "random"
    x_round: str = "corrected"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.l_verify is None:
            object.__setattr__(self, "l_verify", self.m)
        for name in ("n", "m", "l_verify", "decoys", "seed"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.n < 3 or self.n % 2 == 0:
            raise ConfigError(f"n must be odd and >= 3, got {self.n}")
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.l_verify < 1:
            raise ConfigError(f"l_verify must be >= 1, got {self.l_verify}")
        if self.decoys < 0:
            raise ConfigError(f"decoys must be >= 0, got {self.decoys}")
        if not 0.0 <= self.error_threshold < 1.0:
            raise ConfigError(f"error_threshold must be in [0, 1), got {self.error_threshold}")
        if self.pivot != "random":
            if not isinstance(self.pivot, (int, np.integer)) or not 1 <= self.pivot <= self.n:
                raise ConfigError(f"pivot must be in 1..{self.n} or 'random', got {self.pivot!r}")
        if self.verify_basis not in ("random", "X", "Z"):
            raise ConfigError(f"verify_basis must be random, X or Z, got {self.verify_basis!r}")
        if self.x_round not in ("corrected", "literal"):
            raise ConfigError(f"x_round must be corrected or literal, got {self.x_round!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        self._check_hash()

    def _check_hash(self) -> None:
        h = dict(self.hash)
        mode = h.get("mode")
        if mode == HashMode.XOR_LINEAR.value:
            allowed = {"mode", "digest_bits"}
            bits = h.get("digest_bits", 64)
            if not isinstance(bits, int) or bits < 1:
                raise ConfigError(f"digest_bits must be a positive integer, got {bits!r}")
        elif mode == HashMode.MODEXP.value:
            allowed = {"mode", "g", "hash_modulus"}
            if "g" not in h or "hash_modulus" not in h:
                raise ConfigError("modexp hash needs g and hash_modulus")
        else:
            raise ConfigError(f"unknown hash mode {mode!r}")
        extra = set(h) - allowed
        if extra:
            raise ConfigError(f"unknown hash fields: {sorted(extra)}")

    def hash_params(self, rng: np.random.Generator) -> HashParams:
        key_bits = 2 * self.m
        if self.hash["mode"] == HashMode.XOR_LINEAR.value:
            return HashParams.xor_linear(key_bits, rng, self.hash.get("digest_bits", 64))
        return HashParams.modexp(int(self.hash["g"]), int(self.hash["hash_modulus"]), key_bits)

    def replace(self, **changes: Any) -> ProtocolConfig:
        data = self.to_dict()
        data.update(changes)
        return ProtocolConfig.from_dict(data)

    def to_dict(self) -> dict:
        # flat fields only, so a shallow copy per field is enough
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["hash"] = dict(self.hash)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> ProtocolConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = {"n", "m"} - set(data)
        if missing:
            raise ConfigError(f"missing config fields: {sorted(missing)}")
        return cls(**data)

    @classmethod
    def load(cls, path: Union[str, Path]) -> ProtocolConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)
