"""MI and GEM baselines against the shadow count on a t=1 corpus.

GEM needs l = 4 with an odd patch start so the window lines up with the
second brick-wall layer. MI runs on the same patches (two end sites).

    python scripts/baselines.py --n-b 50
"""
import argparse
import csv
from pathlib import Path

from shadowphase.cli import main as cli_main
from shadowphase.datagen import GenConfig, concat_datasets, generate_phase_dataset, write_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--n-s", type=int, default=1000)
    ap.add_argument("--n-b", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ns-grid", default="100,300,1000")
    ap.add_argument("--out", type=Path, default=Path("runs/baselines"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    data = args.out / "data_l4.shdw"
    write_dataset(concat_datasets([
        generate_phase_dataset(GenConfig(lab, N=args.N, l=4, t=1, n_s=args.n_s, n_b=args.n_b, seed=args.seed,
                              patch_start=args.N // 2 - 1))
        for lab in (0, 1)]), data)
    rc = cli_main(["baseline", "--data", str(data), "--method", "both",
                   "--ns-grid", args.ns_grid, "--out", str(args.out)])
    if rc:
        raise SystemExit(rc)
    for method in ("mi", "gem"):
        print(method)
        with open(args.out / f"baseline_{method}.csv") as fh:
            for row in csv.DictReader(fh):
                print(f"  n_s {row['n_s']:>5}  accuracy {float(row['accuracy']):.3f}  auc {float(row['auc']):.3f}"
                      f"  undefined {row['n_undefined']}")


if __name__ == "__main__":
    main()
