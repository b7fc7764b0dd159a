"""Semantic mock of a two-key homomorphic vector scheme.

Ciphertexts carry their true slot values (plus injected noise) together with a
key-set tag and a per-slot noise bound. Nothing here is cryptographically
hiding; privacy is enforced structurally by key custody in the protocol layer.
"""
from __future__ import annotations

import hashlib
import hmac
import itertools
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

TAG_BYTES = 16


class EngineError(Exception):
    pass


class LengthMismatch(EngineError, ValueError):
    pass


class KeyNotInKeyset(EngineError):
    pass


class CoverageError(EngineError):
    pass


class DigestMismatch(EngineError):
    pass


class DepthExceeded(EngineError):
    pass


def encode_slots(values) -> bytes:
    """Canonical encoding: u32 LE slot count, then f64 LE per slot."""
    arr = np.ascontiguousarray(values, dtype="<f8")
    return struct.pack("<I", arr.size) + arr.tobytes()


def decode_slots(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    (n,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    end = offset + 8 * n
    if end > len(buf):
        raise ValueError("truncated slot vector")
    arr = np.frombuffer(buf[offset:end], dtype="<f8").astype(np.float64)
    return arr, end


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NoiseModel:
    encrypt_noise: float = 0.0
    op_noise: float = 0.0

    def __post_init__(self):
        if self.encrypt_noise < 0 or self.op_noise < 0:
            raise ValueError("noise magnitudes must be non-negative")


@dataclass(frozen=True)
class SecretKey:
    key_id: int
    secret: bytes = field(repr=False)


@dataclass(frozen=True)
class KeyPair:
    key_id: int
    secret: SecretKey

    @property
    def public(self) -> int:
        return self.key_id


def keygen(key_id: int, seed: int) -> KeyPair:
    if not 0 <= key_id < 256:
        raise ValueError("key ids are single bytes")
    rng = np.random.default_rng([seed, key_id, 0x6B6579])
    return KeyPair(key_id, SecretKey(key_id, rng.bytes(32)))


@dataclass(frozen=True)
class OpCounts:
    adds: int = 0
    mults: int = 0
    rotations: int = 0

    def __add__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(self.adds + other.adds, self.mults + other.mults,
                        self.rotations + other.rotations)

    def merge(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(max(self.adds, other.adds), max(self.mults, other.mults),
                        max(self.rotations, other.rotations))


@dataclass(frozen=True, eq=False)
class MockCiphertext:
    payload: np.ndarray
    keyset: frozenset
    noise: np.ndarray  # per-slot bound on |payload - ideal|
    # per-kind maximum over the operand chains; shared ancestors are not double counted
    op_counts: OpCounts = OpCounts()
    depth: int = 0
    tag: bytes = b"\x00" * TAG_BYTES

    def __post_init__(self):
        if not self.keyset:
            raise EngineError("ciphertext keyset must be nonempty")
        if self.payload.shape != self.noise.shape:
            raise LengthMismatch("payload/noise shape mismatch")

    @property
    def slots(self) -> int:
        return self.payload.size

    @property
    def noise_bound(self) -> float:
        return float(self.noise.max()) if self.noise.size else 0.0

    @property
    def digest(self) -> bytes:
        h = hashlib.sha256(b"sonni/ct")
        h.update(encode_slots(self.payload))
        h.update(bytes(sorted(self.keyset)))
        h.update(self.tag)
        return h.digest()

    def __eq__(self, other):
        if not isinstance(other, MockCiphertext):
            return NotImplemented
        return (self.keyset == other.keyset and self.op_counts == other.op_counts
                and self.depth == other.depth and self.tag == other.tag
                and encode_slots(self.payload) == encode_slots(other.payload)
                and encode_slots(self.noise) == encode_slots(other.noise))

    __hash__ = None


@dataclass(frozen=True)
class PartialShare:
    ciphertext_digest: bytes
    removed_key: int
    payload: bytes = field(repr=False)


Operand = Union[MockCiphertext, np.ndarray, Iterable[float]]


class Engine:
    """Slot-vector engine with seeded noise injection.

    Every operation draws from its own stream keyed by ``(seed, call index)``,
    so two engines built with the same seed and fed the same call sequence
    produce bit-identical ciphertexts.
    """

    def __init__(self, slots: int, noise: NoiseModel = NoiseModel(), seed: int = 0,
                 max_depth: Optional[int] = None):
        if slots < 1 or slots & (slots - 1):
            raise ValueError(f"slot count must be a power of two, got {slots}")
        self.slots = slots
        self.noise = noise
        self.seed = seed
        self.max_depth = max_depth
        self._calls = itertools.count()
        self.counts = OpCounts()  # every homomorphic op this engine has issued

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, next(self._calls)])

    def _tally(self, base: OpCounts, op: OpCounts) -> OpCounts:
        self.counts = self.counts + op
        return base + op

    def _as_plain(self, v) -> np.ndarray:
        arr = np.asarray(v, dtype=np.float64)
        if arr.shape != (self.slots,):
            raise LengthMismatch(f"expected {self.slots} slots, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("slot values must be finite")
        return arr

    def _check_ct(self, ct: MockCiphertext) -> None:
        if ct.slots != self.slots:
            raise LengthMismatch(f"expected {self.slots} slots, got {ct.slots}")

    def _split(self, a: Operand):
        """Return (values, noise, keyset, counts, depth) for either operand kind."""
        if isinstance(a, MockCiphertext):
            self._check_ct(a)
            return a.payload, a.noise, a.keyset, a.op_counts, a.depth
        arr = self._as_plain(a)
        return arr, np.zeros(self.slots), frozenset(), OpCounts(), 0

    def _uniform(self, rng: np.random.Generator, bound: float) -> np.ndarray:
        if bound == 0:
            return np.zeros(self.slots)
        return rng.uniform(-bound, bound, self.slots)

    def encrypt(self, pt, key: int) -> MockCiphertext:
        arr = self._as_plain(pt)
        rng = self._rng()
        eta = self.noise.encrypt_noise
        payload = arr + self._uniform(rng, eta)
        return MockCiphertext(_frozen(payload), frozenset([key]),
                              _frozen(np.full(self.slots, eta)), tag=rng.bytes(TAG_BYTES))

    def add(self, a: Operand, b: Operand) -> MockCiphertext:
        va, na, ka, ca, da = self._split(a)
        vb, nb, kb, cb, db = self._split(b)
        if not (ka or kb):
            raise EngineError("add needs at least one ciphertext operand")
        rng = self._rng()
        return MockCiphertext(_frozen(va + vb), ka | kb, _frozen(na + nb),
                              self._tally(ca.merge(cb), OpCounts(adds=1)), max(da, db), rng.bytes(TAG_BYTES))

    def mult(self, a: Operand, b: Operand) -> MockCiphertext:
        va, na, ka, ca, da = self._split(a)
        vb, nb, kb, cb, db = self._split(b)
        if not (ka or kb):
            raise EngineError("mult needs at least one ciphertext operand")
        depth = max(da, db) + 1
        if self.max_depth is not None and depth > self.max_depth:
            raise DepthExceeded(f"multiplicative depth {depth} > {self.max_depth}")
        rng = self._rng()
        sigma = self.noise.op_noise
        payload = va * vb + self._uniform(rng, sigma)
        bound = np.abs(va) * nb + np.abs(vb) * na + na * nb + sigma
        return MockCiphertext(_frozen(payload), ka | kb, _frozen(bound),
                              self._tally(ca.merge(cb), OpCounts(mults=1)), depth, rng.bytes(TAG_BYTES))

    def rotate(self, ct: MockCiphertext, r: int) -> MockCiphertext:
        """Output slot j holds input slot (j + r) mod N."""
        self._check_ct(ct)
        rng = self._rng()
        sigma = self.noise.op_noise
        shift = -(int(r) % self.slots)
        payload = np.roll(ct.payload, shift) + self._uniform(rng, sigma)
        bound = np.roll(ct.noise, shift) + sigma
        return MockCiphertext(_frozen(payload), ct.keyset, _frozen(bound),
                              self._tally(ct.op_counts, OpCounts(rotations=1)), ct.depth,
                              rng.bytes(TAG_BYTES))

    def partial_dec(self, ct: MockCiphertext, sk: SecretKey) -> PartialShare:
        return partial_dec(ct, sk)

    def combine(self, shares: Iterable[PartialShare], ct: MockCiphertext,
                own_sk: Optional[SecretKey] = None) -> np.ndarray:
        return combine(shares, ct, own_sk)


def partial_dec(ct: MockCiphertext, sk: SecretKey) -> PartialShare:
    if sk.key_id not in ct.keyset:
        raise KeyNotInKeyset(f"key {sk.key_id} does not encrypt this ciphertext")
    digest = ct.digest
    return PartialShare(digest, sk.key_id, hmac.new(sk.secret, digest, hashlib.sha256).digest())


def combine(shares: Iterable[PartialShare], ct: MockCiphertext,
            own_sk: Optional[SecretKey] = None) -> np.ndarray:
    shares = list(shares)
    digest = ct.digest
    for share in shares:
        if share.ciphertext_digest != digest:
            raise DigestMismatch("partial decryption belongs to a different ciphertext")
    covered = [s.removed_key for s in shares]
    if own_sk is not None:
        covered.append(own_sk.key_id)
    if len(covered) != len(set(covered)) or set(covered) != set(ct.keyset):
        raise CoverageError(f"shares cover {sorted(covered)}, need {sorted(ct.keyset)}")
    return np.array(ct.payload)


def decrypt(ct: MockCiphertext, sk: SecretKey) -> np.ndarray:
    return combine((), ct, sk)
