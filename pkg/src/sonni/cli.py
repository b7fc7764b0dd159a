"""Command line: ``run``, ``attack-sim``, ``analyze`` and ``serve``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .adversary import STRATEGY_NAMES, assess, strategies_for
from .messages import CLIENT, PARTIES
from .protocol import Aborted, Delivered, Transcript, make_party, run_protocol
from .scenario import ConfigError, Scenario, load_scenario, parse_assignments
from .workload import SlotwiseModel
from .transport import MalformedFrame, TcpEndpoint, TransportError, drive

EXIT_OK, EXIT_ABORTED, EXIT_CONFIG, EXIT_TRANSPORT = 0, 2, 3, 4
OUTCOME_FIELDS = ("seed", "mode", "strategy", "transport", "d", "m", "degree", "outcome",
                  "detected", "leaked", "max_error", "reason")

log = logging.getLogger("sonni")


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI scenario file; flags override its values")
    p.add_argument("--slots", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--quant-step", type=float)
    p.add_argument("--noise", type=float, help="sets both encryption and per-op noise")
    p.add_argument("--mode", choices=("sonni", "legacy"))
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", choices=STRATEGY_NAMES)
    p.add_argument("--set", action="append", metavar="FIELD=VALUE",
                   help="override any scenario field, e.g. --set r_min=0.2 (repeatable)")


def scenario_from_args(args) -> Scenario:
    overrides = {
        "slots": args.slots, "d": args.d, "m": args.m, "k": args.k, "degree": args.degree,
        "quant_step": args.quant_step, "mode": args.mode, "seed": args.seed,
        "encrypt_noise": args.noise, "op_noise": args.noise,
    }
    if getattr(args, "strategy", None):
        overrides["server_strategy"] = args.strategy
    if args.mode == "legacy" and args.m is None:
        overrides["m"] = 0
    overrides.update(parse_assignments(args.set))
    if args.config:
        sc = load_scenario(args.config, **overrides)
    else:
        sc = Scenario(**{k: v for k, v in overrides.items() if v is not None})
    return sc.validate()


def _strategy_name(sc: Scenario) -> str:
    for name in (sc.server_strategy, sc.provider_strategy, sc.client_strategy):
        if name != "honest":
            return name
    return "honest"


def cmd_run(args) -> int:
    try:
        sc = scenario_from_args(args)
        strategy = _strategy_name(sc)
        strategies = strategies_for(strategy, sc)
        f = SlotwiseModel.load(args.model) if args.model else None
        if f is not None and (f.degree, f.width) != (sc.degree, sc.d):
            raise ConfigError(f"model has degree {f.degree} over {f.width} slots, "
                              f"scenario expects degree {sc.degree} over {sc.d}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = run_protocol(sc, strategies, args.transport, f=f)
    outcome = run.outcome
    row = {"seed": sc.seed, "mode": sc.mode, "strategy": strategy, "transport": args.transport,
           "d": sc.d, "m": sc.m, "degree": sc.degree, "outcome": outcome.kind,
           "detected": "", "leaked": "", "max_error": "", "reason": getattr(outcome, "reason", "")}
    if strategy != "honest":
        att = assess(run, strategy)
        row.update(detected=att.detected, leaked=att.parameters_leaked)
        print(f"outcome={outcome.kind} leaked={att.parameters_leaked} detected={str(att.detected).lower()}")
    if isinstance(outcome, Delivered) and strategy == "honest":
        err = float(np.max(np.abs(outcome.value - run.oracle()))) if sc.d else 0.0
        row["max_error"] = err
        print(f"delivered f(x) for d={sc.d}; max |error| vs plaintext oracle = {err:.3e}")
        if args.show:
            print("f(x) =", np.array2string(outcome.value, precision=6))
    elif isinstance(outcome, Aborted):
        print(f"aborted by {outcome.by}: {outcome.reason}")
    elif not isinstance(outcome, Delivered):
        print(f"transport failure: {outcome.reason}", file=sys.stderr)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        run.transcript.write(out / "transcript.jsonl")
        analysis.write_csv([row], out / "outcomes.csv", OUTCOME_FIELDS, append=True)
    if isinstance(outcome, Delivered):
        return EXIT_OK
    return EXIT_ABORTED if isinstance(outcome, Aborted) else EXIT_TRANSPORT


def cmd_attack_sim(args) -> int:
    formula = analysis.PER_ROUND if args.strategy == "per-round" else analysis.ONE_SHOT
    d, m, k = args.d, args.m, args.k
    try:
        exact = analysis.probability(formula, d, m, k)
        est = analysis.monte_carlo(d, m, k, formula, args.trials, args.seed, args.path,
                                   shards=args.workers, workers=args.workers)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    z = (est.p_hat - exact.p) / est.stderr if est.stderr else 0.0
    print(f"{formula} d={d} m={m} k={k}: exact={exact.p:.6g} "
          f"monte-carlo={est.p_hat:.6g} +/- {est.stderr:.2g} (z={z:+.2f}, {est.trials} trials)")
    if args.out:
        analysis.write_csv([exact.row(), analysis.estimate_row(est, formula, d, m, k)],
                           args.out, append=True)
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.what == "table1":
        rows = analysis.reproduce_table1()
        print(analysis.discrepancy_report(rows))
        if args.out:
            analysis.write_csv(rows, args.out, fields=list(rows[0]))
        return EXIT_OK
    if args.what == "fig3":
        rows = analysis.success_curves(args.slots or analysis.TABLE_SLOTS)
        out = args.out or "fig3.csv"
        analysis.write_csv(rows, out)
        print(f"wrote {len(rows)} rows to {out}")
        return EXIT_OK
    rows = analysis.published_claims()
    for r in rows:
        shown = (f"{r['computed']:.2%}" if "batching" in r["claim"] else f"{r['computed']:.3e}")
        print(f"{r['claim']:<36} computed={shown:<12} published={r['published']:g} "
              f"{'ok' if r['ok'] else 'FAIL'}")
    if args.out:
        analysis.write_csv(rows, args.out, fields=list(rows[0]))
    return EXIT_OK if all(r["ok"] for r in rows) else 1


def _addr(text: str) -> tuple:
    host, _, port = text.rpartition(":")
    return (host or "127.0.0.1", int(port))


def cmd_serve(args) -> int:
    try:
        sc = scenario_from_args(args)
        strategies = strategies_for(_strategy_name(sc), sc)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    addrs = {p: _addr(getattr(args, p)) for p in PARTIES}
    party = make_party(args.party, sc, strategies)
    endpoint = TcpEndpoint(args.party, *addrs[args.party], timeout=args.timeout)
    endpoint.peers = {p: a for p, a in addrs.items() if p != args.party}
    transcript = Transcript(sc.debug_payloads)
    code = EXIT_OK
    try:
        drive(party, endpoint, transcript)
    except MalformedFrame as exc:
        log.error("abort: %s", exc)
        code = EXIT_ABORTED
    except TransportError as exc:
        log.error("transport failure: %s", exc)
        code = EXIT_TRANSPORT
    finally:
        endpoint.close()
    if args.transcript:
        transcript.write(args.transcript)
    if code == EXIT_OK and args.party == CLIENT:
        if isinstance(party.outcome, Delivered):
            print(f"delivered {party.outcome.value.size} values")
            if args.result:
                np.savetxt(args.result, party.outcome.value, fmt="%.17g")
        else:
            print(f"aborted: {party.outcome.reason}")
            code = EXIT_ABORTED
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sonni", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one protocol session")
    _scenario_flags(p)
    p.add_argument("--transport", choices=("inprocess", "tcp"), default="inprocess")
    p.add_argument("--out", help="directory for transcript.jsonl and outcomes.csv")
    p.add_argument("--show", action="store_true", help="print the delivered vector")
    p.add_argument("--model", help="JSON model file for the provider's f")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("attack-sim", help="Monte Carlo attack success vs closed form")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--strategy", choices=("one-shot", "per-round"), default="one-shot")
    p.add_argument("--trials", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--path", choices=("fast", "plan", "protocol"), default="fast")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV file to append to")
    p.set_defaults(func=cmd_attack_sim)

    p = sub.add_parser("analyze", help="recompute published attack probabilities")
    p.add_argument("what", choices=("table1", "fig3", "paper-claims"))
    p.add_argument("--slots", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="run one party as a TCP process")
    _scenario_flags(p)
    p.add_argument("--party", choices=PARTIES, required=True)
    for name in PARTIES:
        p.add_argument(f"--{name}", required=True, metavar="HOST:PORT")
    p.add_argument("--transcript", help="write this party's sent-message records here")
    p.add_argument("--result", help="client only: write delivered f(x) here")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
