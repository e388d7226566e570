"""Apply a trained classifier to transverse-field Ising ground states (kappa = 0).

    python scripts/ising_transfer.py --model runs/scaled/birnn_s0/model.spnn
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from shadowphase.cli import crossings
from shadowphase.groundstate import AnnniParams, lanczos_ground
from shadowphase.nn import checkpoint_load, predict_proba
from shadowphase.shadows import measure_shadows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", type=Path, required=True)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--l", type=int, default=8)
    ap.add_argument("--n-s", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/ising"))
    args = ap.parse_args()

    model = checkpoint_load(args.model)
    gs = [round(0.05 * k, 2) for k in range(1, 41)]
    start = (args.N - args.l) // 2
    rng = np.random.default_rng(args.seed)
    data = np.stack([
        measure_shadows(lanczos_ground(AnnniParams(g, 0.0, N=args.N)).state,
                        start, args.l, args.n_s, rng).data for g in gs])
    probs = predict_proba(model, data)

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "ising.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["g", "p_trivial"])
        w.writerows([g, f"{p:.6f}"] for g, p in zip(gs, probs))
    for g, p in zip(gs, probs):
        print(f"g = {g:4.2f}  p = {p:.3f}  " + "#" * int(round(40 * p)))
    print("crossings:", [round(c, 3) for c in crossings(gs, probs)])


if __name__ == "__main__":
    main()
