"""Command line entry point: ``shadowphase <command> [options]``.

Every command writes data files only (CSV/JSON plus binary datasets and
checkpoints) together with ``resolved_config.json``. Exit codes: 0 success,
2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .datagen import (ConfigError, Dataset, DatasetFormatError, GenConfig, UNLABELLED,
                      concat_datasets, config_hash, generate_phase_dataset, read_dataset,
                      state_rng, write_dataset)
from .gem import GemConfig, gem_score, gem_window_offset
from .groundstate import AnnniParams, LanczosNotConverged, bkt_boundary, ising_boundary, lanczos_ground
from .metrics import auc, best_threshold, roc_curve
from .shadows import MomConfig, measure_shadows, renyi2_mutual_information, EstimatorUndefined

log = logging.getLogger("shadowphase")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

PAPER_LS = [6, 8, 10, 12]
PRESETS = {
    "paper-train": {"gen": {"N": 16, "t": 1, "n_s": 10000, "n_b": 2000, "seed": 0}, "ls": PAPER_LS},
    "paper-eval": {"gen": {"N": 16, "t": 1, "n_s": 10000, "n_b": 2000, "seed": 1}, "ls": PAPER_LS},
    "paper-annni": {"ground": {"N": 16, "l": 12, "n_s": 10000, "seed": 0,
                               "g": [0.05, 2.0, 0.05], "kappa": [0.0, 1.5, 0.05]}},
}


class NumericFailure(RuntimeError):
    pass


def _grid(spec) -> list[float]:
    """``[start, stop, step]`` (inclusive) or an explicit list of values."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if len(spec) == 3 and spec[2] > 0 and spec[1] >= spec[0] and spec[1] - spec[0] > spec[2] / 2:
        n = int(round((spec[1] - spec[0]) / spec[2])) + 1
        return [round(spec[0] + i * spec[2], 10) for i in range(n)]
    return [float(v) for v in spec]


def _load_config(args) -> dict:
    cfg: dict = {}
    preset = getattr(args, "preset", None)
    if preset:
        cfg = json.loads(json.dumps(PRESETS[preset]))
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        for k, v in user.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict):
                cfg[k].update(v)
            else:
                cfg[k] = v
    return cfg


def _pick(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**d)


def _write_resolved(out: Path, command: str, cfg: dict) -> str:
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash({"command": command, **cfg})
    doc = {"command": command, "config": cfg, "config_hash": h}
    (out / "resolved_config.json").write_text(json.dumps(doc, sort_keys=True, indent=2), encoding="utf-8")
    return h


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2), encoding="utf-8")


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


# ---------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    cfg = _load_config(args)
    gen = dict(cfg.get("gen", {}))
    ls = cfg.get("ls") or [gen.pop("l", 6)]
    gen.pop("l", None)
    if args.seed is not None:
        gen["seed"] = args.seed
    if args.scale != 1.0:
        gen["n_b"] = max(1, int(round(gen.get("n_b", GenConfig.n_b) * args.scale)))
    resolved = {"gen": gen, "ls": ls, "scale": args.scale}
    out = Path(args.out)
    h = _write_resolved(out, "gen", resolved)
    prefix = cfg.get("prefix", "data")
    for l in ls:
        parts = [generate_phase_dataset(_pick(GenConfig, {**gen, "phase_label": lab, "l": l}))
                 for lab in (0, 1)]
        ds = concat_datasets(parts)
        ds.manifest["run_config_hash"] = h
        path = out / f"{prefix}_l{l}.shdw"
        write_dataset(ds, path)
        log.info("wrote %s (%d states)", path, ds.n_states)
    return 0


# ---------------------------------------------------------------- ground

def cmd_ground(args) -> int:
    cfg = _load_config(args)
    g = dict(cfg.get("ground", {}))
    if args.seed is not None:
        g["seed"] = args.seed
    n, l, seed = int(g.get("N", 16)), int(g.get("l", 8)), int(g.get("seed", 0))
    n_s = int(g.get("n_s", 1000))
    if args.scale != 1.0:
        n_s = max(1, int(round(n_s * args.scale)))
    g["n_s"] = n_s
    gs, ks = _grid(g.get("g", [0.05, 2.0, 0.05])), _grid(g.get("kappa", 0.0))
    if not (1 <= l <= n):
        raise ConfigError(f"patch length {l} does not fit in N={n}")
    out = Path(args.out)
    h = _write_resolved(out, "ground", {"ground": g, "scale": args.scale})
    patch_start = (n - l) // 2
    data = np.empty((len(gs) * len(ks), n_s, l, 4), dtype=np.float32)
    rows = []
    i = 0
    for ki, kappa in enumerate(ks):
        for gi, gv in enumerate(gs):
            p = AnnniParams(g=gv, kappa=kappa, N=n)
            try:
                res, ok = lanczos_ground(p, tol=float(g.get("tol", 1e-10))), True
            except LanczosNotConverged as exc:
                log.warning("%s", exc)
                res, ok = exc.result, False
            rng = state_rng(seed, ki, gi, 0, 1)
            data[i] = measure_shadows(res.state, patch_start, l, n_s, rng).data
            rows.append([i, repr(gv), repr(kappa), repr(res.energy), f"{res.residual:.3e}",
                         res.iterations, int(ok)])
            i += 1
    if not all(r[-1] for r in rows):
        log.warning("%d grid points did not converge", sum(1 - r[-1] for r in rows))
    ds = Dataset(np.full(len(rows), UNLABELLED), data, n, 0, seed,
                 {"ground": g, "patch_start": patch_start, "run_config_hash": h})
    write_dataset(ds, out / "ground.shdw")
    _write_csv(out / "grid.csv", ["index", "g", "kappa", "energy", "residual", "iterations", "converged"],
               rows)
    return 0


# ---------------------------------------------------------------- train / eval / heatmap

def _nn():
    from . import nn  # torch is imported lazily so data-only commands stay light
    return nn


def cmd_train(args) -> int:
    nn = _nn()
    cfg = _load_config(args)
    ccfg = _pick(nn.ClassifierConfig, cfg.get("model", {}))
    tdict = dict(cfg.get("train", {}))
    if args.seed is not None:
        tdict["seed"] = args.seed
    tcfg = _pick(nn.TrainConfig, tdict)
    data = [read_dataset(p) for p in args.data]
    out = Path(args.out)
    _write_resolved(out, "train", {"model": ccfg.to_json(), "train": asdict(tcfg),
                                   "data": [str(p) for p in args.data]})
    try:
        nn.train(data, ccfg, tcfg, out)
    except nn.TrainingDiverged as exc:
        raise NumericFailure(str(exc)) from exc
    return 0


def _metrics_doc(m, h: str) -> dict:
    d = m.to_json()
    d["config_hash"] = h
    return d


def cmd_eval(args) -> int:
    nn = _nn()
    model = nn.checkpoint_load(args.model)
    ds = read_dataset(args.data[0])
    out = Path(args.out)
    h = _write_resolved(out, "eval", {"model": str(args.model), "data": str(args.data[0]),
                                      "n_s_sub": args.n_s_sub})
    m = nn.evaluate(model, ds, args.n_s_sub)
    _write_json(out / "metrics.json", _metrics_doc(m, h))
    print(f"accuracy {m.accuracy:.4f} auc {m.auc:.4f}")
    return 0


def _ns_grid(args, n_s: int) -> list[int]:
    grid = [int(v) for v in args.ns_grid.split(",")] if args.ns_grid else [n_s]
    bad = [v for v in grid if not 1 <= v <= n_s]
    if bad:
        raise ConfigError(f"n_s grid values {bad} outside [1, {n_s}]")
    return grid


def cmd_heatmap(args) -> int:
    nn = _nn()
    model = nn.checkpoint_load(args.model)
    sets = sorted((read_dataset(p) for p in args.data), key=lambda d: d.l)
    grid = _ns_grid(args, min(d.n_s for d in sets))
    out = Path(args.out)
    h = _write_resolved(out, "heatmap", {"model": str(args.model), "data": [str(p) for p in args.data],
                                         "ns_grid": grid})
    rows = []
    for ns in grid:
        row = [ns]
        for ds in sets:
            m = nn.evaluate(model, ds, ns)
            row.append(f"{m.accuracy:.6f}")
            if ns == grid[-1]:
                _write_json(out / f"roc_l{ds.l}.json", _metrics_doc(m, h))
        rows.append(row)
    _write_csv(out / "heatmap.csv", ["n_s"] + [f"l={d.l}" for d in sets], rows)
    return 0


# ---------------------------------------------------------------- phase diagram

def _read_grid(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def crossings(gs, probs, level: float = 0.5) -> list[float]:
    """Linearly interpolated points where ``probs`` crosses ``level`` along ``gs``."""
    out = []
    for i in range(len(gs) - 1):
        a, b = probs[i] - level, probs[i + 1] - level
        if a == 0:
            out.append(gs[i])
        elif a * b < 0:
            out.append(gs[i] + (gs[i + 1] - gs[i]) * a / (a - b))
    if len(probs) and probs[-1] == level:
        out.append(gs[-1])
    return out


def cmd_phase_diagram(args) -> int:
    nn = _nn()
    model = nn.checkpoint_load(args.model)
    ds = read_dataset(args.data[0])
    grid = _read_grid(Path(args.grid) if args.grid else Path(args.data[0]).with_name("grid.csv"))
    if len(grid) != ds.n_states:
        raise ConfigError(f"grid has {len(grid)} rows but dataset has {ds.n_states} states")
    out = Path(args.out)
    h = _write_resolved(out, "phase-diagram", {"model": str(args.model), "data": str(args.data[0])})
    probs = nn.predict_proba(model, ds.data)
    rows = [[r["g"], r["kappa"], f"{p:.6f}", r["converged"]] for r, p in zip(grid, probs)]
    _write_csv(out / "phase_diagram.csv", ["g", "kappa", "prob_ssb", "converged"], rows)

    ks = sorted({float(r["kappa"]) for r in grid})
    _write_csv(out / "boundary_ising.csv", ["kappa", "g"],
               [[k, repr(ising_boundary(k))] for k in ks if k <= 0.5])
    _write_csv(out / "boundary_bkt.csv", ["kappa", "g"],
               [[k, repr(bkt_boundary(k))] for k in ks if k >= 0.5])

    summary = {"config_hash": h}
    row0 = sorted((float(r["g"]), float(p)) for r, p in zip(grid, probs) if float(r["kappa"]) == 0.0)
    if row0:
        gs, ps = [g for g, _ in row0], [p for _, p in row0]
        below = [g for g, p in row0 if p < 0.5]
        summary.update({"g_first_below_half": below[0] if below else None,
                        "crossings": crossings(gs, ps), "g_theory": 1.0})
    _write_json(out / "crossing.json", summary)
    return 0


# ---------------------------------------------------------------- baselines

def _patch_start(ds: Dataset) -> int | None:
    m = ds.manifest
    parts = m.get("parts", [m])
    starts = {p.get("patch_start") for p in parts}
    return starts.pop() if len(starts) == 1 else None


def _score_mi(ds: Dataset, ns: int, mom: MomConfig) -> tuple[np.ndarray, int]:
    scores, undefined = [], 0
    for i in range(ds.n_states):
        try:
            scores.append(renyi2_mutual_information(ds.shadow_set(i, ns), cfg=mom))
        except EstimatorUndefined:
            scores.append(-math.inf)
            undefined += 1
    return np.array(scores), undefined


def _score_gem(ds: Dataset, ns: int, gcfg: GemConfig) -> tuple[np.ndarray, int]:
    start = _patch_start(ds)
    offset = 0 if start is None else gem_window_offset(start)
    if offset + 4 > ds.l:
        log.warning("patch of length %d cannot hold a brick-aligned window; using offset 0", ds.l)
        offset = 0
    res = [gem_score(ds.shadow_set(i, ns), offset, gcfg) for i in range(ds.n_states)]
    return np.array([r.value for r in res]), sum(r.undefined for r in res)


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    ds = read_dataset(args.data[0])
    labels = ds.labels.astype(int)
    if np.any(ds.labels == UNLABELLED):
        raise ConfigError("baselines need a labelled corpus")
    grid = _ns_grid(args, ds.n_s)
    mom = _pick(MomConfig, cfg.get("mom", {}))
    gcfg = _pick(GemConfig, cfg.get("gem", {}))
    methods = ["mi", "gem"] if args.method == "both" else [args.method]
    out = Path(args.out)
    h = _write_resolved(out, "baseline", {"data": str(args.data[0]), "ns_grid": grid,
                                          "mom": asdict(mom), "gem": asdict(gcfg), "methods": methods})
    for method in methods:
        rows, rocs = [], {}
        for ns in grid:
            scores, undefined = (_score_mi(ds, ns, mom) if method == "mi" else _score_gem(ds, ns, gcfg))
            finite = np.where(np.isfinite(scores), scores, np.sign(scores) * 1e300)
            thr, acc = best_threshold(finite, labels)
            fpr, tpr = roc_curve(finite, labels)
            a = auc(fpr, tpr)
            rows.append([ns, _fmt(thr), f"{acc:.6f}", f"{a:.6f}", undefined])
            rocs[str(ns)] = {"fpr": fpr.tolist(), "tpr": tpr.tolist(), "auc": a,
                             "scores": [_fmt(s) for s in scores],
                             "undefined": [bool(not np.isfinite(s)) for s in scores]}
        _write_csv(out / f"baseline_{method}.csv",
                   ["n_s", "threshold", "accuracy", "auc", "n_undefined"], rows)
        _write_json(out / f"roc_{method}.json", {"config_hash": h, "by_n_s": rocs})
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shadowphase", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", help="JSON file overriding preset/default fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--scale", type=float, default=1.0)
        p.add_argument("--out", required=True)
        p.add_argument("-v", "--verbose", action="store_true")
        if data:
            p.add_argument("--data", nargs="+", required=True)
        return p

    p = common(sub.add_parser("gen", help="generate labelled shadow corpora"))
    p.add_argument("--preset", choices=["paper-train", "paper-eval"])
    p.set_defaults(func=cmd_gen)
    p = common(sub.add_parser("ground", help="ground-state shadows over a (g, kappa) grid"))
    p.add_argument("--preset", choices=["paper-annni"])
    p.set_defaults(func=cmd_ground)
    p = common(sub.add_parser("train", help="train a classifier"), data=True)
    p.set_defaults(func=cmd_train)
    p = common(sub.add_parser("eval", help="evaluate a checkpoint"), data=True)
    p.add_argument("--model", required=True)
    p.add_argument("--n-s-sub", type=int)
    p.set_defaults(func=cmd_eval)
    p = common(sub.add_parser("heatmap", help="accuracy over (n_s, l)"), data=True)
    p.add_argument("--model", required=True)
    p.add_argument("--ns-grid", help="comma separated shadow counts")
    p.set_defaults(func=cmd_heatmap)
    p = common(sub.add_parser("phase-diagram", help="classify ground states"), data=True)
    p.add_argument("--model", required=True)
    p.add_argument("--grid", help="grid.csv written by 'ground' (default: next to the data)")
    p.set_defaults(func=cmd_phase_diagram)
    p = common(sub.add_parser("baseline", help="mutual-information and GEM baselines"), data=True)
    p.add_argument("--method", choices=["mi", "gem", "both"], default="both")
    p.add_argument("--ns-grid")
    p.set_defaults(func=cmd_baseline)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.scale > 0:
        print("error: --scale must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError, FileNotFoundError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, LanczosNotConverged, FloatingPointError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
