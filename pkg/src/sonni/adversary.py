"""Dishonest-party strategies and attack bookkeeping.

Every strategy acts only through its party's legitimate interface: a server
strategy sees the EvalRequest and public parameters, a provider strategy picks
which positions the client hashes, a client strategy picks the digest it sends.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .messages import PROVIDER, EvalRequest, EvalResult
from .protocol import Aborted, Delivered, RunResult, Server, Strategies, run_protocol
from .scenario import Scenario
from .workload import eval_encrypted


@dataclass
class AttackOutcome:
    strategy: str
    detected: bool
    aborted: bool
    parameters_leaked: int
    rounds_used: int = 1
    slots_touched: tuple = ()
    leaked_values: dict = field(default_factory=dict)  # original position -> value


# --- server ------------------------------------------------------------------

def baseline_silver_platter(row: int = 0):
    """Return an encryption of coefficient row ``row`` in place of the result."""

    def strategy(server: Server, req: EvalRequest) -> EvalResult:
        eng = server.engine
        # multiplying the client's input by zero only widens the keyset to {c, p}
        blank = eng.mult(req.input_ct, np.zeros(eng.slots))
        server.touched = tuple(range(server.sc.width))
        return EvalResult(eng.add(req.param_cts[row], blank))

    return strategy


def one_shot_theft(k: int, slots=None):
    """Compute honestly, then overwrite k slots with degree-0 coefficients."""

    def strategy(server: Server, req: EvalRequest) -> EvalResult:
        eng = server.engine
        width = server.sc.width
        if not 1 <= k <= width:
            raise ValueError(f"k must lie in [1, {width}]")
        chosen = (np.asarray(slots, dtype=np.int64) if slots is not None
                  else server.rng.choice(width, size=k, replace=False))
        server.touched = tuple(sorted(int(s) for s in chosen))
        honest = eval_encrypted(eng, req.param_cts, req.input_ct)
        mask = np.zeros(eng.slots)
        mask[list(server.touched)] = 1.0
        kept = eng.mult(honest, 1.0 - mask)
        stolen = eng.mult(req.param_cts[0], mask)
        return EvalResult(eng.add(kept, stolen))

    return strategy


# --- provider / client -------------------------------------------------------

def malicious_provider_indices(plan) -> tuple:
    """Point the client's hash at x-slots instead of canaries."""
    return tuple(sorted(int(p) for p in plan.x_positions)[: plan.m])


def lying_client(seed=None):
    rng = np.random.default_rng(seed)

    def respond(check, honest_digest: bytes) -> bytes:
        return rng.bytes(32)

    return respond


def replay_client(digest: bytes):
    def respond(check, honest_digest: bytes) -> bytes:
        return digest

    return respond


STRATEGY_NAMES = ("honest", "silver-platter", "one-shot", "per-round",
                  "malicious-indices", "lying-client")


def strategies_for(name: str, sc: Scenario, slots=None) -> Strategies:
    if name == "honest":
        return Strategies()
    if name == "silver-platter":
        return Strategies(server=baseline_silver_platter(0), label=name)
    if name == "one-shot":
        return Strategies(server=one_shot_theft(sc.k, slots), label=name)
    if name == "per-round":
        return Strategies(server=one_shot_theft(1, slots), label=name)
    if name == "malicious-indices":
        return Strategies(check_positions=malicious_provider_indices, label=name)
    if name == "lying-client":
        return Strategies(client_response=lying_client(sc.seed_for("client")), label=name)
    raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGY_NAMES)}")


# --- outcome assessment ------------------------------------------------------

def leak_tolerance(sc: Scenario) -> float:
    return max(sc.noise_bound() / sc.r_min, 1e-12)


def assess(run: RunResult, strategy: str, row: int = 0) -> AttackOutcome:
    """Count parameters the client really holds, checked against ground truth."""
    sc = run.scenario
    server = run.parties["server"]
    touched = tuple(server.touched)
    detected = isinstance(run.outcome, Aborted) and run.outcome.by == PROVIDER
    leaked: dict = {}
    if isinstance(run.outcome, Delivered) and touched:
        out = run.outcome.value
        tol = leak_tolerance(sc)
        if strategy == "silver-platter":
            truth = run.f.coeffs[row]
            leaked = {i: float(out[i]) for i in range(sc.d) if abs(out[i] - truth[i]) <= tol}
        else:
            plan = run.parties["provider"].state.plan
            truth = run.f.coeffs[0]
            for s in touched:
                orig = int(plan.permutation.inverse[s]) if plan is not None else s
                if orig < sc.d and abs(out[orig] - truth[orig]) <= tol:
                    leaked[orig] = float(out[orig])
    return AttackOutcome(strategy, detected, isinstance(run.outcome, Aborted), len(leaked),
                         1, touched, leaked)


def run_attack(sc: Scenario, strategy: str, slots=None, transport="inprocess") -> tuple:
    run = run_protocol(sc, strategies_for(strategy, sc, slots), transport)
    return run, assess(run, strategy)


def per_round_theft(sc: Scenario, rounds: int, transport="inprocess") -> AttackOutcome:
    """One stolen slot per protocol round, fresh shuffle each round; stops at first abort."""
    leaked: dict = {}
    touched = []
    for r in range(rounds):
        run, outcome = run_attack(sc.replace(round=sc.round + r), "per-round",
                                  transport=transport)
        touched.extend(outcome.slots_touched)
        if outcome.aborted:
            return AttackOutcome("per-round", outcome.detected, True, len(leaked), r + 1,
                                 tuple(touched), leaked)
        leaked.update(outcome.leaked_values)
    return AttackOutcome("per-round", False, False, len(leaked), rounds, tuple(touched), leaked)


def silver_platter_campaign(sc: Scenario) -> list:
    """Repeat the baseline attack once per coefficient row."""
    outcomes = []
    for row in range(sc.degree + 1):
        strat = Strategies(server=baseline_silver_platter(row), label="silver-platter")
        run = run_protocol(sc.replace(round=sc.round + row), strat)
        outcomes.append(assess(run, "silver-platter", row))
    return outcomes


def replay_attack(sc: Scenario) -> tuple:
    """Round r honest, round r+1 the client replays round r's digest."""
    first = run_protocol(sc)
    digest = first.parties[PROVIDER].received_digests[0]
    second = run_protocol(sc.replace(round=sc.round + 1),
                          Strategies(client_response=replay_client(digest), label="replay"))
    return first, second


def provider_gain(run: RunResult) -> list:
    """Everything a colluding provider received from the client during check."""
    return list(run.parties[PROVIDER].received_digests)

