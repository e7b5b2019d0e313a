"""Paired SGD vs dropout comparison over several seeds (redundant student).

    python scripts/dropout_vs_sgd.py --teacher singular --steps 5000000 --N 300
"""
import argparse

from tsdrop.config import SimConfig
from tsdrop.harness import METRICS, compare
from tsdrop.learning import Dropout, Sgd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--teacher", choices=["orthogonal", "singular"], default="orthogonal")
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--N", type=int, default=300)
    ap.add_argument("--steps", type=int, default=5_000_000)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    base = SimConfig(M=2, K=args.K, N=args.N, steps=args.steps, seed=0, rule=Sgd(),
                     teacher_kind=args.teacher)
    report = compare(base, base.with_(rule=Dropout(args.p)), list(range(args.seeds)))
    for row in report.rows:
        print(row.seed, {m: (row.base[m], row.variant[m]) for m in METRICS})
    print("medians:", report.medians)


if __name__ == "__main__":
    main()
