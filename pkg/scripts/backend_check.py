"""Compare the direct (finite-N) and thermodynamic-limit backends.

Prints the seed-averaged |Q_ii| and |R_ii| at a chosen time for both
backends, for M = K = 2 with plain SGD.

    python scripts/backend_check.py --N 2000 --t 1000 --seeds 5
"""
import argparse

import numpy as np

from tsdrop.config import Backend, SimConfig
from tsdrop.harness import run


def diag_means(backend, N, t, seeds, eta):
    qs, rs = [], []
    for s in range(seeds):
        cfg = SimConfig(M=2, K=2, N=N, eta=eta, steps=int(t * N), seed=s, backend=backend,
                        sample_every=int(t * N))
        rec = run(cfg)[0][-1]
        qs.append(np.abs(np.diag(rec.Q_matrix())).mean())
        rs.append(np.abs(np.diag(rec.R)).mean())
    return np.mean(qs), np.mean(rs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=2000)
    ap.add_argument("--t", type=float, default=1000.0)
    ap.add_argument("--eta", type=float, default=0.005)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    for backend in Backend:
        q, r = diag_means(backend, args.N, args.t, args.seeds, args.eta)
        print(f"{backend.value:8s} mean|Q_ii|={q:.4f} mean|R_ii|={r:.4f}")


if __name__ == "__main__":
    main()
