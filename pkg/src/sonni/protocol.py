"""Client, provider and server state machines and the end-to-end protocol run.

Each party only ever touches its own key pair and the messages it receives.
Per-party plaintext views are recorded so privacy properties can be audited
after a run.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .engine import (CoverageError, DigestMismatch, Engine, KeyPair, NoiseModel,
                     combine, keygen, partial_dec)
from .messages import (CLIENT, CLIENT_KEY, PROVIDER, PROVIDER_KEY, SERVER, STEPS, Abort,
                       CheckRequest, CheckResponse, EvalRequest, EvalResult, SubmitInput, Unmask)
from .scenario import Scenario
from .shuffle import (ShufflePlan, insert_canaries, permute_parameters, plan_shuffle,
                      shuffle_ciphertext)
from .transport import MalformedFrame, Recv, Send, TransportError, get_transport
from .workload import SlotwiseModel, eval_encrypted, eval_plain, gen_canaries, horner

HASH_DOMAIN = b"\x53"


def quantize(values, step: float) -> np.ndarray:
    """Cell index floor(v/step + 1/2)."""
    return np.floor(np.asarray(values, dtype=np.float64) / step + 0.5).astype(np.int64)


def boundary_distance(values, step: float) -> np.ndarray:
    t = np.asarray(values, dtype=np.float64) / step + 0.5
    frac = t - np.floor(t)
    return np.minimum(frac, 1.0 - frac) * step


def canary_hash(values, step: float) -> bytes:
    cells = quantize(values, step)
    return hashlib.sha256(HASH_DOMAIN + cells.astype("<i8").tobytes()).digest()


def draw_mask(width: int, r_min: float, rng: np.random.Generator) -> np.ndarray:
    rand = rng.uniform(-1.0, 1.0, width)
    bad = np.abs(rand) < r_min
    while bad.any():
        rand[bad] = rng.uniform(-1.0, 1.0, int(bad.sum()))
        bad = np.abs(rand) < r_min
    return rand


class PartyView:
    """Append-only log of plaintext values a party has held."""

    def __init__(self):
        self.entries: list = []

    def add(self, label: str, value) -> None:
        self.entries.append((label, np.array(value, dtype=np.float64, copy=True).ravel()))

    def labels(self) -> list:
        return [label for label, _ in self.entries]

    def values(self) -> np.ndarray:
        if not self.entries:
            return np.zeros(0)
        return np.concatenate([v for _, v in self.entries])

    def contains_any(self, needles, rtol: float = 1e-9, atol: float = 1e-12) -> bool:
        hay = self.values()
        needles = np.asarray(needles, dtype=np.float64).ravel()
        if hay.size == 0 or needles.size == 0:
            return False
        return bool(np.isclose(hay[:, None], needles[None, :], rtol=rtol, atol=atol).any())


@dataclass(frozen=True)
class Record:
    step: int
    seq: int
    sender: str
    receiver: str
    tag: str
    size: int
    digest: str
    time: float = 0.0
    payload: Optional[str] = None

    def to_json(self, with_time: bool = True) -> str:
        d = {"step": self.step, "seq": self.seq, "sender": self.sender,
             "receiver": self.receiver, "tag": self.tag, "size": self.size,
             "digest": self.digest}
        if self.payload is not None:
            d["payload"] = self.payload
        if with_time:
            d["time"] = self.time
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Record":
        return cls(**json.loads(line))


class Transcript:
    def __init__(self, debug_payloads: bool = False):
        self.records: list = []
        self.views: dict = {}
        self.debug_payloads = debug_payloads
        self._seq: dict = {}
        self._lock = threading.Lock()

    def log(self, sender: str, receiver: str, msg, frame: bytes) -> None:
        step = STEPS[type(msg)]
        if isinstance(msg, Abort) and sender == CLIENT:
            step = STEPS[CheckResponse]
        with self._lock:
            seq = self._seq.get(sender, 0)
            self._seq[sender] = seq + 1
            self.records.append(Record(
                step, seq, sender, receiver, type(msg).__name__, len(frame),
                hashlib.sha256(frame).hexdigest(), time.time(),
                frame.hex() if self.debug_payloads else None))

    def canonical(self) -> list:
        return sorted(self.records, key=lambda r: (r.step, r.sender, r.seq))

    def tags(self) -> list:
        return [(r.sender, r.receiver, r.tag) for r in self.canonical()]

    def canonical_bytes(self) -> bytes:
        return "".join(r.to_json(with_time=False) + "\n" for r in self.canonical()).encode()

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.canonical():
                fh.write(r.to_json() + "\n")

    @classmethod
    def read(cls, *paths) -> "Transcript":
        t = cls()
        for path in paths:
            with open(path) as fh:
                t.records.extend(Record.from_json(line) for line in fh if line.strip())
        return t


@dataclass
class Delivered:
    value: np.ndarray
    kind: str = "delivered"


@dataclass
class Aborted:
    reason: str
    by: str
    kind: str = "aborted"


@dataclass
class TransportFailure:
    reason: str
    kind: str = "transport-failure"


# --- server strategies -------------------------------------------------------

def honest_server(server: "Server", req: EvalRequest) -> EvalResult:
    return EvalResult(eval_encrypted(server.engine, req.param_cts, req.input_ct))


@dataclass
class Strategies:
    """Behavior hooks. Defaults are the honest protocol."""

    server: Callable = honest_server
    # provider: plan -> positions the client is asked to hash
    check_positions: Optional[Callable] = None
    # client: (check request, honest digest) -> digest actually sent
    client_response: Optional[Callable] = None
    label: str = "honest"


# --- parties -----------------------------------------------------------------

class Client:
    def __init__(self, sc: Scenario, x, keys: KeyPair, engine: Engine,
                 respond: Optional[Callable] = None):
        self.sc = sc
        self.x = np.asarray(x, dtype=np.float64)
        self.keys = keys
        self.engine = engine
        self.respond = respond
        self.view = PartyView()
        self.view.add("x", self.x)
        self.masked: Optional[np.ndarray] = None
        self.output: Optional[np.ndarray] = None
        self.outcome = None

    def submit(self) -> SubmitInput:
        d, n = self.x.size, self.engine.slots
        if d + self.sc.m > n:
            raise ValueError(f"input of {d} values plus {self.sc.m} zeros exceeds {n} slots")
        pt = np.zeros(n)
        pt[:d] = self.x
        return SubmitInput(self.engine.encrypt(pt, CLIENT_KEY))

    def check_response(self, check: CheckRequest) -> CheckResponse:
        values = combine([check.provider_share], check.masked_ct, self.keys.secret)
        self.masked = values
        self.view.add("masked result", values[: self.sc.width])
        digest = canary_hash(values[list(check.canary_positions)], self.sc.quant_step)
        if self.respond is not None:
            digest = self.respond(check, digest)
        return CheckResponse(digest)

    def finalize(self, unmask: Unmask) -> np.ndarray:
        rand = np.asarray(unmask.rand, dtype=np.float64)
        if rand.size != self.sc.width or np.any(np.abs(rand) < self.sc.r_min):
            raise ValueError("mask entries must all satisfy |rand| >= r_min")
        self.view.add("rand", rand)
        unmasked = self.masked[: self.sc.width] / rand
        return unmask.permutation.undo(unmasked)[: self.sc.d]

    def run(self):
        yield Send(PROVIDER, self.submit())
        yield Recv(SERVER)  # unused: the client only decrypts what the provider masked
        check = yield Recv(PROVIDER)
        if isinstance(check, Abort):
            self.outcome = Aborted(check.reason, PROVIDER)
            return
        if self.sc.legacy:
            try:
                values = combine([check.provider_share], check.masked_ct, self.keys.secret)
            except (DigestMismatch, CoverageError) as exc:
                self.outcome = Aborted(str(exc), CLIENT)
                return
            self.view.add("result", values[: self.sc.d])
            self.output = values[: self.sc.d]
            self.outcome = Delivered(self.output)
            return
        try:
            resp = self.check_response(check)
        except (DigestMismatch, CoverageError) as exc:
            self.outcome = Aborted(f"client rejected check request: {exc}", CLIENT)
            yield Send(PROVIDER, Abort(self.outcome.reason))
            return
        yield Send(PROVIDER, resp)
        final = yield Recv(PROVIDER)
        if isinstance(final, Abort):
            self.outcome = Aborted(final.reason, PROVIDER)
            return
        self.output = self.finalize(final)
        self.view.add("f(x)", self.output)
        self.outcome = Delivered(self.output)


@dataclass
class ProviderState:
    f: SlotwiseModel
    g: Optional[SlotwiseModel] = None
    y: Optional[np.ndarray] = None
    plan: Optional[ShufflePlan] = None
    rand: Optional[np.ndarray] = None
    expected_hash: Optional[bytes] = None
    positions: tuple = ()


class Provider:
    def __init__(self, sc: Scenario, f: SlotwiseModel, keys: KeyPair, engine: Engine,
                 rng: np.random.Generator, check_positions: Optional[Callable] = None,
                 plan: Optional[ShufflePlan] = None, rand=None):
        if f.degree != sc.degree or f.width != sc.d:
            raise ValueError("model shape does not match the scenario")
        self.sc = sc
        self.keys = keys
        self.engine = engine
        self.rng = rng
        self.check_positions = check_positions
        self.state = ProviderState(f)
        self._plan_hook = plan
        self._rand_hook = rand
        self.view = PartyView()
        self.view.add("f", f.coeffs)
        self.received_digests: list = []
        self.outcome = None

    def _encrypt_params(self, coeffs: np.ndarray) -> tuple:
        n = self.engine.slots
        cts = []
        for row in coeffs:
            pt = np.zeros(n)
            pt[: row.size] = row
            cts.append(self.engine.encrypt(pt, PROVIDER_KEY))
        return tuple(cts)

    def _place_canary(self, coeffs: np.ndarray, scale: float, tries: int = 2_000):
        """Pick y for one canary slot; returns (y, avoids_stolen) or None."""
        step = self.sc.quant_step
        # a server copying one coefficient row into this slot must land in another cell
        c = coeffs * scale
        stolen = set(quantize(np.concatenate([c - step / 4, c + step / 4]), step).tolist())
        fallback = None
        for _ in range(tries):
            y = gen_canaries(1, self.sc.input_range, self.rng)
            v = horner(coeffs[:, None], y) * scale
            if boundary_distance(v, step)[0] >= step / 4:
                if int(quantize(v, step)[0]) not in stolen:
                    return y[0], True
                fallback = y[0] if fallback is None else fallback
        return None if fallback is None else (fallback, False)

    def _sample_canaries(self, g: SlotwiseModel, plan: ShufflePlan, rand: np.ndarray) -> tuple:
        """Draw y, redrawing g's column for a slot where no y clears the cell boundaries."""
        sc = self.sc
        if not sc.boundary_avoidance:
            return g, gen_canaries(plan.m, sc.input_range, self.rng)
        coeffs = np.array(g.coeffs)
        scale = rand[list(plan.chosen_indices)]
        y = np.empty(plan.m)
        for j in range(plan.m):
            best = None
            column = coeffs[:, j].copy()
            for _ in range(50):
                placed = self._place_canary(column, scale[j])
                if placed is not None and (placed[1] or best is None):
                    best = (placed[0], column)
                    if placed[1]:
                        break
                column = SlotwiseModel.random(sc.degree, 1, self.rng, sc.coeff_range).coeffs[:, 0]
            if best is None:
                raise RuntimeError("could not place canary away from cell boundaries")
            # coarse cells can leave every reachable cell stolen; boundary avoidance still holds
            y[j], coeffs[:, j] = best
        return SlotwiseModel(coeffs, g.owner), y

    def prepare(self, submit: SubmitInput) -> EvalRequest:
        sc, st = self.sc, self.state
        if sc.legacy:
            return EvalRequest(submit.ct, self._encrypt_params(st.f.coeffs), st.f.degree)
        plan = self._plan_hook or plan_shuffle(sc.d, sc.m, self.rng)
        g = SlotwiseModel.random(sc.degree, sc.m, self.rng, sc.coeff_range)
        rand = (np.asarray(self._rand_hook, dtype=np.float64) if self._rand_hook is not None
                else draw_mask(sc.width, sc.r_min, self.rng))
        g, y = self._sample_canaries(g, plan, rand)
        st.plan, st.g, st.y, st.rand = plan, g, y, rand
        self.view.add("g", g.coeffs)
        self.view.add("y", y)
        self.view.add("rand", rand)
        shuffled = shuffle_ciphertext(self.engine, submit.ct, plan)
        input_ct = insert_canaries(self.engine, shuffled, y, plan, PROVIDER_KEY)
        params = permute_parameters(st.f.coeffs, g.coeffs, plan)
        return EvalRequest(input_ct, self._encrypt_params(params), sc.degree)

    def expected_canaries(self) -> np.ndarray:
        st = self.state
        return eval_plain(st.g, st.y) * st.rand[list(st.plan.chosen_indices)]

    def check_request(self, result: EvalResult) -> CheckRequest:
        sc, st = self.sc, self.state
        ct = result.result_ct
        if sc.legacy:
            return CheckRequest(ct, partial_dec(ct, self.keys.secret), ())
        mask = np.ones(self.engine.slots)
        mask[: sc.width] = st.rand
        masked = self.engine.mult(ct, mask)
        positions = tuple(st.plan.chosen_indices)
        if self.check_positions is not None:
            positions = tuple(self.check_positions(st.plan))
        st.positions = positions
        expected = self.expected_canaries()
        self.view.add("g'(y)", expected)
        st.expected_hash = canary_hash(expected, sc.quant_step)
        return CheckRequest(masked, partial_dec(masked, self.keys.secret), positions)

    def verify(self, resp: CheckResponse):
        st = self.state
        self.received_digests.append(resp.hash_digest)
        if self.check_positions is not None:
            # colluding provider keeps up appearances and always releases the mask
            return Unmask(st.rand, st.plan.permutation)
        if resp.hash_digest != st.expected_hash:
            return Abort("canary hash mismatch")
        return Unmask(st.rand, st.plan.permutation)

    def run(self):
        submit = yield Recv(CLIENT)
        yield Send(SERVER, self.prepare(submit))
        result = yield Recv(SERVER)
        if result.result_ct.keyset != frozenset({CLIENT_KEY, PROVIDER_KEY}):
            self.outcome = Aborted("result ciphertext has the wrong keyset", PROVIDER)
            yield Send(CLIENT, Abort(self.outcome.reason))
            return
        yield Send(CLIENT, self.check_request(result))
        if self.sc.legacy:
            self.outcome = Delivered(np.zeros(0))
            return
        resp = yield Recv(CLIENT)
        if isinstance(resp, Abort):
            self.outcome = Aborted(resp.reason, CLIENT)
            return
        verdict = self.verify(resp)
        if isinstance(verdict, Abort):
            self.outcome = Aborted(verdict.reason, PROVIDER)
        else:
            self.outcome = Delivered(np.zeros(0))
        yield Send(CLIENT, verdict)


class Server:
    def __init__(self, sc: Scenario, engine: Engine, rng: np.random.Generator,
                 strategy: Callable = honest_server):
        self.sc = sc
        self.engine = engine
        self.rng = rng
        self.strategy = strategy
        self.view = PartyView()
        self.touched: tuple = ()

    def evaluate(self, req: EvalRequest) -> EvalResult:
        return self.strategy(self, req)

    def run(self):
        req = yield Recv(PROVIDER)
        result = self.evaluate(req)
        yield Send(CLIENT, result)
        yield Send(PROVIDER, result)


# --- assembly ----------------------------------------------------------------

def scenario_inputs(sc: Scenario) -> tuple:
    """Client input x and provider model f drawn from the scenario's seeds."""
    x = np.random.default_rng(sc.seed_for("input")).uniform(*sc.input_range, sc.d)
    f = SlotwiseModel.random(sc.degree, sc.d, np.random.default_rng(sc.seed_for("model")),
                             sc.coeff_range)
    return x, f


def _engine(sc: Scenario, seed: int) -> Engine:
    return Engine(sc.slots, NoiseModel(sc.encrypt_noise, sc.op_noise), seed)


def make_party(name: str, sc: Scenario, strategies: Optional[Strategies] = None,
               x=None, f: Optional[SlotwiseModel] = None, **hooks):
    """Build one party from the shared scenario; only that party's key is created."""
    strategies = strategies or Strategies()
    if x is None or f is None:
        x0, f0 = scenario_inputs(sc)
        x = x0 if x is None else x
        f = f0 if f is None else f
    seed = sc.seed_for(name)
    if name == CLIENT:
        return Client(sc, x, keygen(CLIENT_KEY, seed), _engine(sc, seed),
                      respond=strategies.client_response)
    if name == PROVIDER:
        return Provider(sc, f, keygen(PROVIDER_KEY, seed), _engine(sc, seed),
                        np.random.default_rng([seed, 1]),
                        check_positions=strategies.check_positions, **hooks)
    if name == SERVER:
        return Server(sc, _engine(sc, seed), np.random.default_rng([seed, 1]), strategies.server)
    raise ValueError(f"unknown party {name!r}")


@dataclass
class RunResult:
    scenario: Scenario
    outcome: object
    transcript: Transcript
    parties: dict
    x: np.ndarray
    f: SlotwiseModel
    extra: dict = field(default_factory=dict)

    @property
    def delivered(self) -> bool:
        return isinstance(self.outcome, Delivered)

    @property
    def aborted(self) -> bool:
        return isinstance(self.outcome, Aborted)

    def oracle(self) -> np.ndarray:
        return eval_plain(self.f, self.x)


def run_protocol(sc: Scenario, strategies: Optional[Strategies] = None, transport="inprocess",
                 x=None, f: Optional[SlotwiseModel] = None, validate: bool = True,
                 provider_hooks: Optional[dict] = None) -> RunResult:
    if validate:
        sc.validate()
    strategies = strategies or Strategies()
    x0, f0 = scenario_inputs(sc)
    x = x0 if x is None else np.asarray(x, dtype=np.float64)
    f = f0 if f is None else f
    parties = {
        CLIENT: make_party(CLIENT, sc, strategies, x, f),
        PROVIDER: make_party(PROVIDER, sc, strategies, x, f, **(provider_hooks or {})),
        SERVER: make_party(SERVER, sc, strategies, x, f),
    }
    transcript = Transcript(sc.debug_payloads)
    if isinstance(transport, str):
        transport = get_transport(transport)
    try:
        transport.run(parties, transcript)
        outcome = parties[CLIENT].outcome
    except MalformedFrame as exc:
        outcome = Aborted(str(exc), "transport")
    except TransportError as exc:
        outcome = TransportFailure(str(exc))
    transcript.views = {name: p.view for name, p in parties.items()}
    return RunResult(sc, outcome, transcript, parties, x, f)
