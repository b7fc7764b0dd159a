"""Recompute the published attack-success table and print where it disagrees."""
import argparse

from sonni.analysis import discrepancy_report, reproduce_table1, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--slots", type=int, default=1024)
    ap.add_argument("--out", default="table1.csv")
    args = ap.parse_args()
    rows = reproduce_table1(args.slots)
    print(discrepancy_report(rows))
    write_csv(rows, args.out, fields=list(rows[0]))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
