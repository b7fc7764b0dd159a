"""Success probability vs number of canaries m, one curve per k, as CSV."""
import argparse

from sonni.analysis import success_curves, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--slots", type=int, default=1024)
    ap.add_argument("--k", type=int, nargs="+", default=[10, 128, 256, 512])
    ap.add_argument("--max-m", type=int, default=512)
    ap.add_argument("--out", default="fig3.csv")
    args = ap.parse_args()
    rows = success_curves(args.slots, args.k, range(1, args.max_m + 1))
    write_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
