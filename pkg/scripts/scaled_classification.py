"""BiRNN and CNN on the scaled t=1 corpus, over several training seeds.

Trains one model per (architecture, seed) jointly on all patch lengths and
reports held-out accuracy/AUC at a few shadow counts.

    python scripts/scaled_classification.py --seeds 0 1 2 --arch birnn cnn
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from shadowphase.datagen import GenConfig, concat_datasets, generate_phase_dataset
from shadowphase.metrics import classification_metrics
from shadowphase.nn import ClassifierConfig, TrainConfig, predict_proba, train


def corpus(l, seed, args):
    return concat_datasets([
        generate_phase_dataset(GenConfig(lab, N=args.N, l=l, t=1, n_s=args.n_s, n_b=args.n_b, seed=seed))
        for lab in (0, 1)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ls", type=int, nargs="+", default=[6, 8])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--arch", nargs="+", default=["birnn", "cnn"])
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--n-s", type=int, default=1000)
    ap.add_argument("--n-b", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=25)
    ap.add_argument("--ns-grid", type=int, nargs="+", default=[100, 500, 1000])
    ap.add_argument("--out", type=Path, default=Path("runs/scaled"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    train_sets = [corpus(l, 100, args) for l in args.ls]
    held = [corpus(l, 200, args) for l in args.ls]
    labels = np.concatenate([h.labels for h in held]).astype(int)

    rows = []
    for arch in args.arch:
        for seed in args.seeds:
            t0 = time.time()
            model, _ = train(train_sets, ClassifierConfig(arch=arch),
                             TrainConfig(seed=seed, max_epochs=args.epochs, patience=args.epochs),
                             out_dir=args.out / f"{arch}_s{seed}")
            minutes = (time.time() - t0) / 60
            for ns in args.ns_grid:
                p = np.concatenate([predict_proba(model, h.data[:, :ns]) for h in held])
                m = classification_metrics(p, labels)
                rows.append([arch, seed, ns, f"{m.accuracy:.4f}", f"{m.auc:.4f}", f"{minutes:.1f}"])
                print("  ".join(map(str, rows[-1])), flush=True)

    with open(args.out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arch", "seed", "n_s", "accuracy", "auc", "train_minutes"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
