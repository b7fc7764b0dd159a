"""Drivers that move framed messages between party state machines.

A party is any object whose ``run()`` generator yields ``Send`` and ``Recv``
actions; a ``Recv`` is resumed with the decoded message.
"""
from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass

from .messages import PARTIES, PARTY_CODES
from .wire import FrameError, decode_frame, encode_frame, read_frame

log = logging.getLogger(__name__)

_PARTY_BY_CODE = {code: name for name, code in PARTY_CODES.items()}


class TransportError(RuntimeError):
    pass


class MalformedFrame(TransportError):
    pass


@dataclass(frozen=True)
class Send:
    to: str
    msg: object


@dataclass(frozen=True)
class Recv:
    frm: str


def _step(gen, value=None):
    try:
        return gen.send(value)
    except StopIteration:
        return None


class InProcessTransport:
    """Runs all parties on the calling thread in a fixed round-robin order."""

    name = "inprocess"

    def run(self, parties: dict, transcript) -> None:
        gens = {name: party.run() for name, party in parties.items()}
        pending = {name: _step(gen) for name, gen in gens.items()}
        boxes = defaultdict(deque)
        order = [p for p in PARTIES if p in parties]
        while any(pending[p] is not None for p in order):
            progressed = False
            for name in order:
                action = pending[name]
                if isinstance(action, Send):
                    frame = encode_frame(action.msg)
                    transcript.log(name, action.to, action.msg, frame)
                    boxes[(name, action.to)].append(frame)
                    pending[name] = _step(gens[name])
                    progressed = True
                elif isinstance(action, Recv) and boxes[(action.frm, name)]:
                    msg = decode_frame(boxes[(action.frm, name)].popleft())
                    pending[name] = _step(gens[name], msg)
                    progressed = True
            if not progressed:
                stuck = {p: pending[p] for p in order if pending[p] is not None}
                raise TransportError(f"deadlock, parties waiting: {stuck}")


_EOF = object()


class TcpEndpoint:
    """One party's sockets: a listener for inbound frames and lazy outbound links."""

    def __init__(self, party: str, host: str = "127.0.0.1", port: int = 0,
                 timeout: float = 30.0):
        self.party = party
        self.timeout = timeout
        self.peers: dict = {}
        self._inbox = defaultdict(queue.Queue)
        self._out: dict = {}
        self._closed = False
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.address = self._listener.getsockname()[:2]
        self._threads = [threading.Thread(target=self._accept_loop, daemon=True)]
        self._threads[0].start()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            t = threading.Thread(target=self._reader, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _reader(self, conn: socket.socket):
        conn.settimeout(None)

        def recv_exact(n: int) -> bytes:
            buf = bytearray()
            while len(buf) < n:
                chunk = conn.recv(n - len(buf))
                if not chunk:
                    raise EOFError
                buf += chunk
            return bytes(buf)

        sender = None
        try:
            sender = _PARTY_BY_CODE.get(recv_exact(1)[0])
            if sender is None:
                return
            while True:
                self._inbox[sender].put(read_frame(recv_exact))
        except (EOFError, OSError):
            pass
        except FrameError as exc:
            if sender is not None:
                self._inbox[sender].put(exc)
        finally:
            if sender is not None:
                self._inbox[sender].put(_EOF)
            conn.close()

    def _connect(self, to: str) -> socket.socket:
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                sock = socket.create_connection(self.peers[to], timeout=self.timeout)
                sock.sendall(bytes([PARTY_CODES[self.party]]))
                return sock
            except OSError:
                if time.monotonic() > deadline:
                    raise TransportError(f"{self.party}: cannot reach {to} at {self.peers[to]}")
                time.sleep(0.05)

    def send(self, to: str, frame: bytes) -> None:
        if to not in self._out:
            self._out[to] = self._connect(to)
        try:
            self._out[to].sendall(frame)
        except OSError as exc:
            raise TransportError(f"{self.party}: send to {to} failed: {exc}") from None

    def recv(self, frm: str) -> bytes:
        try:
            item = self._inbox[frm].get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"{self.party}: timed out waiting for {frm}") from None
        if item is _EOF:
            raise TransportError(f"{self.party}: connection from {frm} dropped")
        if isinstance(item, FrameError):
            raise MalformedFrame(f"{self.party}: malformed frame from {frm}: {item}")
        return item

    def peer_lost(self, frm: str) -> None:
        """Wake a pending recv from ``frm`` as if its connection had dropped."""
        self._inbox[frm].put(_EOF)

    def close(self) -> None:
        self._closed = True
        for sock in self._out.values():
            try:
                sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            sock.close()
        self._listener.close()


def drive(party, endpoint: TcpEndpoint, transcript) -> None:
    """Run one party's state machine over TCP until it finishes."""
    gen = party.run()
    action = _step(gen)
    while action is not None:
        if isinstance(action, Send):
            frame = encode_frame(action.msg)
            transcript.log(endpoint.party, action.to, action.msg, frame)
            endpoint.send(action.to, frame)
            action = _step(gen)
        else:
            raw = endpoint.recv(action.frm)
            try:
                msg = decode_frame(raw)
            except FrameError as exc:
                raise MalformedFrame(f"{endpoint.party}: malformed frame from {action.frm}: {exc}") from None
            action = _step(gen, msg)


class TcpTransport:
    """Runs each party on its own thread, talking over loopback TCP sockets."""

    name = "tcp"

    def __init__(self, host: str = "127.0.0.1", timeout: float = 30.0):
        self.host = host
        self.timeout = timeout

    def run(self, parties: dict, transcript) -> None:
        endpoints = {name: TcpEndpoint(name, self.host, 0, self.timeout) for name in parties}
        for ep in endpoints.values():
            ep.peers = {n: other.address for n, other in endpoints.items() if n != ep.party}
        errors: dict = {}

        def worker(name):
            try:
                drive(parties[name], endpoints[name], transcript)
            except Exception as exc:  # surfaced to the caller below
                errors[name] = exc
                for other in endpoints.values():
                    if other.party != name:
                        other.peer_lost(name)
            finally:
                endpoints[name].close()

        threads = [threading.Thread(target=worker, args=(n,)) for n in parties]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            # report the root cause, not the peers that saw the link drop
            root = [kv for kv in errors.items() if "dropped" not in str(kv[1])]
            name, exc = sorted(root or errors.items())[0]
            if isinstance(exc, TransportError):
                raise exc
            raise TransportError(f"{name} failed: {exc!r}") from exc


def get_transport(name: str):
    if name in ("inprocess", "in-process", "local"):
        return InProcessTransport()
    if name == "tcp":
        return TcpTransport()
    raise ValueError(f"unknown transport {name!r}")

