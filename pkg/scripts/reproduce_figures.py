"""Run the five figure scenarios and write CSV/JSON/SVG outputs per figure.

Full-length runs (t = 100000 at N = 1000, 1e8 steps) take around ten minutes
each; use --scale to shorten them, e.g. --scale 0.05 for a quick look.

    python scripts/reproduce_figures.py --out runs/figures --scale 0.05
"""
import argparse
import logging
from pathlib import Path

from tsdrop.cli import write_run
from tsdrop.harness import FIGURES, run, scenario

log = logging.getLogger("reproduce")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/figures"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scale", type=float, default=1.0, help="fraction of the full 1e8-step horizon")
    ap.add_argument("--only", nargs="*", choices=sorted(FIGURES), default=sorted(FIGURES))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in args.only:
        base = scenario(name, args.seed)
        config = base.with_(steps=max(base.N, int(base.steps * args.scale)))
        records, summary = run(config)
        write_run(args.out / name, config, records, summary)
        fr = summary.final_record
        log.info("%s: t=%.0f mse_window=%.5f eps_g=%.5f dwell=%s", name, fr.t, fr.mse_window,
                 fr.eg_analytic, summary.singular_dwell)


if __name__ == "__main__":
    main()
