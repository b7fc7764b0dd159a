"""Run every strategy against legacy and canary-checked sessions and tabulate outcomes."""
import argparse
import csv
import sys

from sonni.adversary import STRATEGY_NAMES, per_round_theft, run_attack
from sonni.scenario import Scenario, load_scenario

FIELDS = ("mode", "strategy", "seed", "outcome", "detected", "leaked", "rounds")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="INI scenario; defaults to a 64-slot scenario")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--rounds", type=int, default=20, help="rounds for the per-round campaign")
    ap.add_argument("--out", help="CSV path (stdout if omitted)")
    args = ap.parse_args()
    base = load_scenario(args.config) if args.config else Scenario(slots=64, d=56, m=8, degree=3)
    rows = []
    for mode in ("legacy", "sonni"):
        sc = base.replace(mode=mode, m=0 if mode == "legacy" else max(base.m, 1))
        for strategy in STRATEGY_NAMES:
            if mode == "legacy" and strategy not in ("honest", "silver-platter"):
                continue
            for seed in range(args.seeds):
                run_sc = sc.replace(seed=seed)
                if strategy == "per-round":
                    out = per_round_theft(run_sc, args.rounds)
                    outcome = "aborted" if out.aborted else "delivered"
                else:
                    run, out = run_attack(run_sc, strategy)
                    outcome = run.outcome.kind
                rows.append({"mode": mode, "strategy": strategy, "seed": seed,
                             "outcome": outcome, "detected": out.detected,
                             "leaked": out.parameters_leaked, "rounds": out.rounds_used})
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=FIELDS)
    w.writeheader()
    w.writerows(rows)
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
