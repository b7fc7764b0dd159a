"""Typed protocol messages exchanged between client, provider and server."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import MockCiphertext, PartialShare
from .shuffle import Permutation

CLIENT = "client"
PROVIDER = "provider"
SERVER = "server"
PARTIES = (CLIENT, PROVIDER, SERVER)
PARTY_CODES = {CLIENT: 1, PROVIDER: 2, SERVER: 3}
CLIENT_KEY = 1
PROVIDER_KEY = 2


@dataclass(frozen=True)
class SubmitInput:
    ct: MockCiphertext


@dataclass(frozen=True)
class EvalRequest:
    input_ct: MockCiphertext
    param_cts: tuple
    degree: int


@dataclass(frozen=True)
class EvalResult:
    result_ct: MockCiphertext


@dataclass(frozen=True)
class CheckRequest:
    masked_ct: MockCiphertext
    provider_share: PartialShare
    canary_positions: tuple


@dataclass(frozen=True)
class CheckResponse:
    hash_digest: bytes


@dataclass(frozen=True, eq=False)
class Unmask:
    rand: np.ndarray
    permutation: Permutation


@dataclass(frozen=True)
class Abort:
    reason: str


TAGS = {
    SubmitInput: 0x01,
    EvalRequest: 0x02,
    EvalResult: 0x03,
    CheckRequest: 0x04,
    CheckResponse: 0x05,
    Unmask: 0x06,
    Abort: 0x07,
}

# Protocol step at which each message is sent; used to order merged transcripts.
STEPS = {
    SubmitInput: 1,
    EvalRequest: 5,
    EvalResult: 6,
    CheckRequest: 9,
    CheckResponse: 11,
    Unmask: 15,
    Abort: 14,
}
