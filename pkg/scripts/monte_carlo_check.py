"""Compare Monte Carlo attack estimates with the closed forms on a few (m, k) points."""
import argparse

from sonni.analysis import ONE_SHOT, PER_ROUND, monte_carlo, probability


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--slots", type=int, default=1024)
    ap.add_argument("--trials", type=int, default=10**6)
    ap.add_argument("--path", choices=("fast", "plan", "protocol"), default="fast")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    for formula in (ONE_SHOT, PER_ROUND):
        for m, k in ((4, 10), (32, 10), (32, 128), (512, 10)):
            d = args.slots - m
            exact = probability(formula, d, m, k).p
            est = monte_carlo(d, m, k, formula, args.trials, seed=m * 1000 + k, path=args.path,
                              shards=max(args.workers, 1), workers=args.workers)
            z = (est.p_hat - exact) / est.stderr if est.stderr else 0.0
            print(f"{formula:>9} m={m:<4} k={k:<4} exact={exact:<12.6g} "
                  f"mc={est.p_hat:<12.6g} z={z:+.2f}")


if __name__ == "__main__":
    main()
