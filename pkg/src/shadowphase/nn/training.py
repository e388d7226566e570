"""Training loop and evaluation for the shadow classifiers."""
from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..datagen import Dataset, UNLABELLED
from ..metrics import Metrics, accuracy, classification_metrics
from ..randunit import TWO_PI, euler_from_unitary, haar_unitary, unitary_from_euler
from .models import ClassifierConfig, PhaseClassifier

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    val_fraction: float = 0.2
    seed: int = 0
    threads: int = 1
    # re-sample each training state under fresh single-site Haar rotations
    rotate_sites: bool = True
    # regression steps fitting the reconstructor to snapshot Bloch vectors (0 disables)
    pretrain_steps: int = 4000
    # "val_loss" or "val_acc"; accuracy on a small validation split is noisy
    select_on: str = "val_loss"

    def __post_init__(self):
        if self.select_on not in ("val_loss", "val_acc"):
            raise ValueError(f"select_on must be 'val_loss' or 'val_acc', got {self.select_on!r}")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def split_indices(labels: np.ndarray, val_fraction: float, rng: np.random.Generator):
    """Stratified train/validation split; keeps both splits balanced."""
    train, val = [], []
    for lab in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == lab))
        n_val = int(round(len(idx) * val_fraction))
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def _batches(n: int, size: int, rng: np.random.Generator | None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [order[i:i + size] for i in range(0, n, size)]


def _interleave(groups: list[list]) -> list:
    """Round-robin across constituents so each l gets regular updates."""
    out = []
    for i in range(max(len(g) for g in groups)):
        out.extend(g[i] for g in groups if i < len(g))
    return out


def rotate_sites(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shadows of ``W rho W^dag`` for an independent Haar ``W`` on every site of every state.

    A record ``(U, b)`` of ``rho`` has the law of a record ``(U W^dag, b)`` of the
    rotated state, and local unitaries leave the phase unchanged.
    """
    batch, n_s, l, _ = x.shape
    ang = x[..., :3].astype(np.float64)
    ang = np.stack([np.mod(ang[..., 0], TWO_PI), np.mod(ang[..., 1], TWO_PI),
                    np.mod(ang[..., 2] + TWO_PI, 2 * TWO_PI) - TWO_PI], axis=-1)
    u = unitary_from_euler(ang[..., 0], ang[..., 1], ang[..., 2])
    w = haar_unitary(2, rng, size=batch * l).reshape(batch, 1, l, 2, 2)
    new, _ = euler_from_unitary(u @ np.swapaxes(w.conj(), -1, -2))
    out = x.copy()
    out[..., :3] = new
    return out


def snapshot_bloch(x: np.ndarray) -> np.ndarray:
    """Bloch vector of ``3 U^dag |b><b| U - I`` for rows ``(theta, phi, chi, b)``."""
    x = np.asarray(x, dtype=np.float64)
    ang = np.stack([np.mod(x[:, 0], TWO_PI), np.mod(x[:, 1], TWO_PI),
                    np.mod(x[:, 2] + TWO_PI, 2 * TWO_PI) - TWO_PI], axis=-1)
    u = unitary_from_euler(ang[:, 0], ang[:, 1], ang[:, 2])
    b = x[:, 3].round().astype(int)
    v = u[np.arange(len(b)), b].conj()
    rho01 = 3 * v[:, 0] * v[:, 1].conj()
    return np.stack([2 * rho01.real, -2 * rho01.imag,
                     3 * (np.abs(v[:, 0]) ** 2 - np.abs(v[:, 1]) ** 2)], axis=-1)


def pretrain_reconstructor(model: PhaseClassifier, steps: int, seed: int = 0,
                           batch_size: int = 2048, lr: float = 3e-3) -> float:
    """Fit the per-shadow MLP to fixed linear mixes of the snapshot Bloch vector.

    The end-to-end gradient through mean pooling is too weak to discover this
    map from raw angles at small corpus sizes. Returns the final relative error.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    net = model.reconstructor
    width = net.net[-1].out_features
    q, _ = np.linalg.qr(rng.standard_normal((width, 3)))
    mix = torch.as_tensor(q * math.sqrt(width / 3), dtype=torch.float32)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, steps)

    def sample(n):
        ang, _ = euler_from_unitary(haar_unitary(2, rng, size=n))
        x = np.concatenate([ang, rng.integers(0, 2, (n, 1))], axis=1)
        return (torch.as_tensor(x, dtype=torch.float32),
                torch.as_tensor(snapshot_bloch(x), dtype=torch.float32) @ mix.T)

    for _ in range(steps):
        x, y = sample(batch_size)
        loss = ((net(x) - y) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
    x, y = sample(8192)
    with torch.no_grad():
        err = float(((net(x) - y) ** 2).mean() / (y ** 2).mean())
    log.info("reconstructor pretraining: relative error %.4f", err)
    return err


def recalibrate_batchnorm(model: PhaseClassifier, arrays: list[np.ndarray],
                          batch_size: int = 32) -> None:
    """Replace running statistics by exact averages over ``arrays``.

    The class signal is a small variation on a large offset, and momentum
    averages drift by more than that signal between evaluations. Inputs of
    every BatchNorm are pooled over the whole pass (train mode, so deeper
    layers see batch-normalised inputs as in training).
    """
    bns = [m for m in model.modules() if isinstance(m, torch.nn.modules.batchnorm._BatchNorm)]
    if not bns:
        return
    acc = {b: [0, 0.0, 0.0] for b in bns}

    def hook(b, inp, _out):
        x = inp[0].detach().double().transpose(0, 1).reshape(b.num_features, -1)
        a = acc[b]
        a[0] += x.shape[1]
        a[1] = a[1] + x.sum(1)
        a[2] = a[2] + (x * x).sum(1)

    handles = [b.register_forward_hook(hook) for b in bns]
    model.train()
    dtype = next(model.parameters()).dtype
    try:
        with torch.no_grad():
            for data in arrays:
                for lo in range(0, len(data), batch_size):
                    model.logits(torch.as_tensor(np.ascontiguousarray(data[lo:lo + batch_size]), dtype=dtype))
    finally:
        for h in handles:
            h.remove()
    with torch.no_grad():
        for b, (n, s1, s2) in acc.items():
            mean = s1 / n
            var = (s2 - n * mean * mean) / max(n - 1, 1)
            b.running_mean.copy_(mean)
            b.running_var.copy_(var.clamp_min(0))
    model.eval()


def predict_proba(model: PhaseClassifier, data: np.ndarray, batch_size: int = 32) -> np.ndarray:
    model.eval()
    dtype = next(model.parameters()).dtype
    out = []
    with torch.no_grad():
        for lo in range(0, len(data), batch_size):
            x = torch.as_tensor(np.ascontiguousarray(data[lo:lo + batch_size]), dtype=dtype)
            out.append(model(x).double().numpy())
    return np.concatenate(out) if out else np.empty(0)


def _loss_acc(model, data, labels, batch_size):
    p = np.clip(predict_proba(model, data, batch_size), 1e-12, 1 - 1e-12)
    loss = float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p)))
    return loss, accuracy(p > 0.5, labels)


def _step(model, opt, x, y, epoch) -> torch.Tensor:
    logits = model.logits(torch.from_numpy(np.ascontiguousarray(x)))
    loss = F.binary_cross_entropy_with_logits(logits, torch.from_numpy(y.astype(np.float32)))
    if not torch.isfinite(loss):
        raise TrainingDiverged(f"loss became {loss.item()} at epoch {epoch}")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return logits.detach()


def train(datasets: list[Dataset], cfg: ClassifierConfig | None = None,
          train_cfg: TrainConfig | None = None, out_dir: str | Path | None = None):
    """Fit a classifier on one or more labelled datasets (one patch length each).

    Returns ``(model, history)``. The returned model holds the weights of the
    epoch with the best validation score (``select_on``; the other metric breaks ties).
    """
    cfg = cfg or ClassifierConfig()
    tc = train_cfg or TrainConfig()
    torch.set_num_threads(tc.threads)
    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)

    parts = []
    for ds in datasets:
        if np.any(ds.labels == UNLABELLED):
            raise ValueError("training data must be labelled")
        tr, va = split_indices(ds.labels, tc.val_fraction, rng)
        parts.append((ds, tr, va))

    model = PhaseClassifier(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=tc.lr, betas=(tc.beta1, tc.beta2))
    history: list[EpochLog] = []
    best = (-math.inf, -math.inf)
    best_state = copy.deepcopy(model.state_dict())
    stale = 0

    if tc.pretrain_steps:
        pretrain_reconstructor(model, tc.pretrain_steps, tc.seed)

    for epoch in range(tc.max_epochs):
        model.train()
        groups = [[(k, b) for b in _batches(len(tr), tc.batch_size, rng)]
                  for k, (_, tr, _) in enumerate(parts)]
        total, correct, seen = 0.0, 0, 0
        for k, b in _interleave(groups):
            ds, tr, _ = parts[k]
            idx = tr[b]
            x = ds.data[idx]
            if tc.rotate_sites:
                x = rotate_sites(x, rng)
            y = ds.labels[idx]
            logits = _step(model, opt, x, y, epoch)
            p = torch.sigmoid(logits).double().clamp(1e-12, 1 - 1e-12).numpy()
            total += float(-np.sum(y * np.log(p) + (1 - y) * np.log(1 - p)))
            correct += int(np.sum((p > 0.5) == y))
            seen += len(idx)

        recalibrate_batchnorm(model, [ds.data[tr] for ds, tr, _ in parts], tc.batch_size)

        val_loss, val_acc, n_val = 0.0, 0.0, 0
        for ds, _, va in parts:
            if len(va):
                vl, vacc = _loss_acc(model, ds.data[va], ds.labels[va].astype(float), tc.batch_size)
                val_loss += vl * len(va)
                val_acc += vacc * len(va)
                n_val += len(va)
        val_loss, val_acc = (val_loss / n_val, val_acc / n_val) if n_val else (math.nan, math.nan)
        entry = EpochLog(epoch, total / seen, correct / seen, val_loss, val_acc)
        history.append(entry)
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f",
                 epoch, entry.train_loss, val_loss, val_acc)

        score = (-val_loss, val_acc) if tc.select_on == "val_loss" else (val_acc, -val_loss)
        if n_val == 0 or score > best:
            best = score
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                break

    model.load_state_dict(best_state)
    model.eval()
    if out_dir is not None:
        from .checkpoint import checkpoint_save
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_history(history, out / "train_log.csv")
        checkpoint_save(model, out / "model.spnn")
    return model, history


def write_history(history: list[EpochLog], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for h in history:
            w.writerow([h.epoch, f"{h.train_loss:.8f}", f"{h.train_acc:.6f}",
                        f"{h.val_loss:.8f}", f"{h.val_acc:.6f}"])


def evaluate(model: PhaseClassifier, dataset: Dataset, n_s_sub: int | None = None,
             batch_size: int = 32) -> Metrics:
    """Accuracy (threshold 0.5), ROC and AUC on the first ``n_s_sub`` shadows."""
    n_s_sub = dataset.n_s if n_s_sub is None else n_s_sub
    if not (1 <= n_s_sub <= dataset.n_s):
        raise ValueError(f"n_s_sub={n_s_sub} outside [1, {dataset.n_s}]")
    p = predict_proba(model, dataset.data[:, :n_s_sub], batch_size)
    return classification_metrics(p, dataset.labels.astype(int))


def train_config_json(tc: TrainConfig) -> dict:
    return asdict(tc)
