"""Binary wire format.

Frame: u32 big-endian length of everything after it, one tag byte, payload.
Numeric payload fields are little-endian: slot vectors use the engine's
canonical encoding, keysets are a u8 count plus sorted u8 ids, digests are raw
32 bytes and index arrays are a u32 count plus u32 entries.
"""
from __future__ import annotations

import struct

import numpy as np

from .engine import TAG_BYTES, EngineError, MockCiphertext, OpCounts, PartialShare, decode_slots, encode_slots
from .messages import (TAGS, Abort, CheckRequest, CheckResponse, EvalRequest, EvalResult,
                       SubmitInput, Unmask)
from .shuffle import Permutation

DIGEST_BYTES = 32
MAX_FRAME = 1 << 28
_BY_TAG = {tag: cls for cls, tag in TAGS.items()}


class FrameError(ValueError):
    pass


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FrameError("truncated payload")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def slots(self) -> np.ndarray:
        try:
            arr, self.pos = decode_slots(self.buf, self.pos)
        except (struct.error, ValueError) as exc:
            raise FrameError(str(exc)) from None
        return arr

    def indices(self) -> tuple:
        n = self.u32()
        return tuple(struct.unpack(f"<{n}I", self.take(4 * n)))

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FrameError(f"{len(self.buf) - self.pos} trailing bytes")


def _indices(values) -> bytes:
    values = [int(v) for v in values]
    return struct.pack(f"<I{len(values)}I", len(values), *values)


def _ct(ct: MockCiphertext) -> bytes:
    keys = sorted(ct.keyset)
    c = ct.op_counts
    return b"".join([
        struct.pack("<B", len(keys)), bytes(keys),
        encode_slots(ct.payload), encode_slots(ct.noise),
        struct.pack("<IIII", c.adds, c.mults, c.rotations, ct.depth),
        ct.tag,
    ])


def _read_ct(r: _Reader) -> MockCiphertext:
    keys = frozenset(r.take(r.u8()))
    payload = r.slots()
    noise = r.slots()
    adds, mults, rotations, depth = struct.unpack("<IIII", r.take(16))
    tag = r.take(TAG_BYTES)
    payload.setflags(write=False)
    noise.setflags(write=False)
    try:
        return MockCiphertext(payload, keys, noise, OpCounts(adds, mults, rotations), depth, tag)
    except EngineError as exc:
        raise FrameError(str(exc)) from None


def _share(s: PartialShare) -> bytes:
    if len(s.ciphertext_digest) != DIGEST_BYTES or len(s.payload) != DIGEST_BYTES:
        raise FrameError("share fields must be 32 bytes")
    return s.ciphertext_digest + struct.pack("<B", s.removed_key) + s.payload


def _read_share(r: _Reader) -> PartialShare:
    digest = r.take(DIGEST_BYTES)
    key = r.u8()
    return PartialShare(digest, key, r.take(DIGEST_BYTES))


def encode_payload(msg) -> bytes:
    if isinstance(msg, SubmitInput):
        return _ct(msg.ct)
    if isinstance(msg, EvalRequest):
        return (_ct(msg.input_ct) + struct.pack("<II", msg.degree, len(msg.param_cts))
                + b"".join(_ct(c) for c in msg.param_cts))
    if isinstance(msg, EvalResult):
        return _ct(msg.result_ct)
    if isinstance(msg, CheckRequest):
        return _ct(msg.masked_ct) + _share(msg.provider_share) + _indices(msg.canary_positions)
    if isinstance(msg, CheckResponse):
        if len(msg.hash_digest) != DIGEST_BYTES:
            raise FrameError("hash digest must be 32 bytes")
        return msg.hash_digest
    if isinstance(msg, Unmask):
        return encode_slots(msg.rand) + _indices(msg.permutation.forward)
    if isinstance(msg, Abort):
        raw = msg.reason.encode("utf-8")
        return struct.pack("<I", len(raw)) + raw
    raise TypeError(f"not a protocol message: {type(msg).__name__}")


def decode_payload(tag: int, payload: bytes):
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise FrameError(f"unknown tag 0x{tag:02x}")
    r = _Reader(payload)
    if cls is SubmitInput:
        msg = SubmitInput(_read_ct(r))
    elif cls is EvalRequest:
        input_ct = _read_ct(r)
        degree, count = struct.unpack("<II", r.take(8))
        msg = EvalRequest(input_ct, tuple(_read_ct(r) for _ in range(count)), degree)
    elif cls is EvalResult:
        msg = EvalResult(_read_ct(r))
    elif cls is CheckRequest:
        msg = CheckRequest(_read_ct(r), _read_share(r), r.indices())
    elif cls is CheckResponse:
        msg = CheckResponse(r.take(DIGEST_BYTES))
    elif cls is Unmask:
        rand = r.slots()
        rand.setflags(write=False)
        try:
            perm = Permutation.from_forward(r.indices())
        except ValueError as exc:
            raise FrameError(str(exc)) from None
        msg = Unmask(rand, perm)
    else:
        try:
            msg = Abort(r.take(r.u32()).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FrameError(str(exc)) from None
    r.done()
    return msg


def encode_frame(msg) -> bytes:
    body = struct.pack("B", TAGS[type(msg)]) + encode_payload(msg)
    return struct.pack(">I", len(body)) + body


def decode_frame(frame: bytes):
    if len(frame) < 5:
        raise FrameError("frame shorter than header")
    (length,) = struct.unpack_from(">I", frame)
    if length != len(frame) - 4:
        raise FrameError(f"length field {length} does not match {len(frame) - 4} bytes")
    return decode_payload(frame[4], frame[5:])


def read_frame(recv_exact) -> bytes:
    """Read one frame using ``recv_exact(n) -> bytes`` (raises on EOF)."""
    header = recv_exact(4)
    (length,) = struct.unpack(">I", header)
    if not 1 <= length <= MAX_FRAME:
        raise FrameError(f"bad frame length {length}")
    return header + recv_exact(length)
