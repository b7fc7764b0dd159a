"""Slotwise polynomial models (the provider's f and the canary function g)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import Engine, MockCiphertext

DEFAULT_RANGE = (-1.0, 1.0)


@dataclass(frozen=True, eq=False)
class SlotwiseModel:
    """Per-slot polynomial; ``coeffs[k, j]`` multiplies ``x[j] ** k``."""

    coeffs: np.ndarray
    owner: str = "provider"

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=np.float64))
        if c.shape[0] < 2:
            raise ValueError("model degree must be at least 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def width(self) -> int:
        return self.coeffs.shape[1]

    @classmethod
    def random(cls, degree: int, width: int, rng: np.random.Generator,
               coeff_range=DEFAULT_RANGE, owner: str = "provider") -> "SlotwiseModel":
        lo, hi = coeff_range
        return cls(rng.uniform(lo, hi, (degree + 1, width)), owner)

    def to_dict(self) -> dict:
        return {"degree": self.degree, "owner": self.owner,
                "coefficients": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SlotwiseModel":
        model = cls(np.asarray(data["coefficients"], dtype=np.float64), data.get("owner", "provider"))
        if "degree" in data and int(data["degree"]) != model.degree:
            raise ValueError(f"declared degree {data['degree']} but {model.degree + 1} coefficient rows")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "SlotwiseModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_degree_parity(f: SlotwiseModel, g: SlotwiseModel) -> None:
    if f.degree != g.degree:
        raise ValueError(f"f has degree {f.degree} but g has degree {g.degree}")


def horner(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    acc = np.array(coeffs[-1], dtype=np.float64)
    for row in coeffs[-2::-1]:
        acc = acc * x + row
    return acc


def eval_plain(model: SlotwiseModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.width,):
        raise ValueError(f"model governs {model.width} slots, input has shape {x.shape}")
    return horner(model.coeffs, x)


def eval_encrypted(engine: Engine, param_cts: Sequence[MockCiphertext],
                   input_ct: MockCiphertext) -> MockCiphertext:
    """Horner's rule over ciphertexts: ``degree`` mults and ``degree`` adds."""
    if len(param_cts) < 2:
        raise ValueError("need at least two coefficient ciphertexts")
    acc = param_cts[-1]
    for ct in param_cts[-2::-1]:
        acc = engine.add(engine.mult(acc, input_ct), ct)
    return acc


def gen_canaries(m: int, value_range=DEFAULT_RANGE, seed=None) -> np.ndarray:
    if m < 0:
        raise ValueError("m must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = value_range
    return rng.uniform(lo, hi, m)
