"""Masked-rotate ciphertext shuffle and the matching parameter permutation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import Engine, MockCiphertext


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on slot positions; ``forward[i]`` is where original slot i ends up."""

    forward: np.ndarray
    inverse: np.ndarray

    @classmethod
    def from_forward(cls, forward) -> "Permutation":
        fwd = np.asarray(forward, dtype=np.int64)
        n = fwd.size
        if sorted(fwd.tolist()) != list(range(n)):
            raise ValueError("not a permutation")
        inv = np.empty(n, dtype=np.int64)
        inv[fwd] = np.arange(n)
        fwd.setflags(write=False)
        inv.setflags(write=False)
        return cls(fwd, inv)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls.from_forward(np.arange(n))

    @property
    def size(self) -> int:
        return self.forward.size

    def apply(self, values) -> np.ndarray:
        """Move entry i of ``values`` (along the last axis) to position forward[i]."""
        values = np.asarray(values)
        out = np.empty_like(values)
        out[..., self.forward] = values
        return out

    def undo(self, values) -> np.ndarray:
        values = np.asarray(values)
        return values[..., self.forward]

    def __eq__(self, other):
        return isinstance(other, Permutation) and np.array_equal(self.forward, other.forward)

    __hash__ = None


@dataclass(frozen=True)
class ShufflePlan:
    d: int
    m: int
    chosen_indices: tuple
    permutation: Permutation
    seed: Optional[int] = None

    @property
    def width(self) -> int:
        return self.d + self.m

    @property
    def canary_positions(self) -> tuple:
        return self.chosen_indices

    @property
    def x_positions(self) -> np.ndarray:
        return self.permutation.forward[: self.d]


def _draw_indices(d: int, m: int, rng: np.random.Generator) -> list:
    # rejection loop, drawing uniformly from the full [0, d+m) range
    indices: set = set()
    for _ in range(m):
        index = int(rng.integers(0, d + m))
        while index in indices:
            index = int(rng.integers(0, d + m))
        indices.add(index)
    return sorted(indices)


def plan_from_indices(d: int, m: int, chosen: Sequence[int], seed=None) -> ShufflePlan:
    """Build the plan for an explicit chosen-index set by replaying the move sequence.

    Each step moves the value at ``index`` to slot ``d + i`` (which still holds a
    zero) and leaves a zero behind, i.e. it swaps the two slots. The m zero
    origins are interchangeable, so zero origin ``d + j`` is assigned to the
    j-th chosen index in ascending order.
    """
    chosen = sorted(int(c) for c in chosen)
    if d < 0 or m < 0:
        raise ValueError("d and m must be non-negative")
    if len(chosen) != m or len(set(chosen)) != m:
        raise ValueError(f"need {m} distinct indices, got {chosen}")
    if any(not 0 <= c < d + m for c in chosen):
        raise ValueError(f"indices must lie in [0, {d + m})")
    origin = list(range(d + m))  # origin[p] = original slot whose value sits at p
    for i, index in enumerate(chosen):
        dest = d + i
        origin[index], origin[dest] = origin[dest], origin[index]
    forward = np.empty(d + m, dtype=np.int64)
    for pos, src in enumerate(origin):
        if src < d:
            forward[src] = pos
    zero_slots = sorted(pos for pos, src in enumerate(origin) if src >= d)
    assert zero_slots == chosen, (zero_slots, chosen)
    forward[d:] = chosen
    return ShufflePlan(d, m, tuple(chosen), Permutation.from_forward(forward), seed)


def plan_shuffle(d: int, m: int, seed) -> ShufflePlan:
    if d < 0 or m < 1:
        raise ValueError("need d >= 0 and m >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return plan_from_indices(d, m, _draw_indices(d, m, rng),
                             None if isinstance(seed, np.random.Generator) else seed)


def identity_plan(d: int, m: int) -> ShufflePlan:
    """Plan that leaves every slot in place (canaries at d..d+m-1)."""
    return plan_from_indices(d, m, range(d, d + m))


def shuffle_ciphertext(engine: Engine, ct: MockCiphertext, plan: ShufflePlan) -> MockCiphertext:
    n = engine.slots
    if plan.width > n:
        raise ValueError(f"plan width {plan.width} exceeds {n} slots")
    ones = np.ones(n)
    for i, index in enumerate(plan.chosen_indices):
        e = np.zeros(n)
        e[index] = 1.0
        masked = engine.mult(ct, e)
        # engine rotation moves slot j to j - r, so this lands the value on d + i
        masked = engine.rotate(masked, index - (plan.d + i))
        ct = engine.mult(ct, ones - e)
        ct = engine.add(ct, masked)
    return ct


def permute_parameters(f_coeffs, g_coeffs, plan: ShufflePlan) -> np.ndarray:
    """Concatenate f and g coefficient rows and move them with the shuffle.

    ``f_coeffs`` has shape (degree+1, d) and ``g_coeffs`` (degree+1, m); row k
    holds the coefficient of x**k.
    """
    f = np.atleast_2d(np.asarray(f_coeffs, dtype=np.float64))
    g = np.atleast_2d(np.asarray(g_coeffs, dtype=np.float64))
    if plan.m == 0 and g.size == 0:
        g = np.zeros((f.shape[0], 0))
    if f.shape[0] != g.shape[0]:
        raise ValueError(f"degree mismatch: f has {f.shape[0] - 1}, g has {g.shape[0] - 1}")
    if f.shape[1] != plan.d or g.shape[1] != plan.m:
        raise ValueError("coefficient widths do not match the plan")
    return plan.permutation.apply(np.concatenate([f, g], axis=1))


def canary_vector(y, plan: ShufflePlan, slots: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (plan.m,):
        raise ValueError(f"expected {plan.m} canary values, got {y.shape}")
    v = np.zeros(slots)
    v[list(plan.chosen_indices)] = y
    return v


def insert_canaries(engine: Engine, ct: MockCiphertext, y, plan: ShufflePlan,
                    provider_key: int) -> MockCiphertext:
    return engine.add(ct, engine.encrypt(canary_vector(y, plan, engine.slots), provider_key))
