"""Labelled shadow datasets from randomly evolved representative states.

Per state: prepare |1...1> (trivial, label 0) or GHZ (SSB, label 1), apply a
Haar U(2) on every site, apply ``t`` rounds of a Haar brick-wall circuit,
then record ``n_s`` classical shadows on a patch of ``l`` sites.

Binary layout (little-endian)::

    b"SHDW"  u32 version  u32 n_states  u32 n_s  u32 l  u32 N  u32 t  u64 seed
    n_states x ( u8 label, n_s*l*4 float32 )

A JSON manifest with the generator parameters sits next to the binary.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import struct
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .qsim import Statevector, apply_1q, apply_2q, new_all_ones, new_ghz
from .randunit import haar_unitary
from .shadows import ShadowSet, measure_shadows

MAGIC = b"SHDW"
VERSION = 1
UNLABELLED = 255
_HEADER = struct.Struct("<4sIIIIIIQ")

_STREAM_CIRCUIT = 0
_STREAM_SHADOW = 1


class DatasetFormatError(ValueError):
    pass


class UnsupportedVersionError(DatasetFormatError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class GenConfig:
    phase_label: int
    N: int = 16
    l: int = 6
    t: int = 1
    n_s: int = 1000
    n_b: int = 100
    seed: int = 0
    patch_start: int | None = None
    basis: str = "haar"

    def __post_init__(self):
        if self.phase_label not in (0, 1):
            raise ConfigError(f"phase_label must be 0 or 1, got {self.phase_label}")
        if self.t < 0:
            raise ConfigError("t must be >= 0")
        if self.N % 2:
            raise ConfigError("the periodic brick-wall needs an even chain length")
        if self.l < 1 or self.l + 4 * self.t > self.N:
            raise ConfigError(f"patch length l={self.l} violates l + 4t <= N (t={self.t}, N={self.N})")
        if self.n_s < 1 or self.n_b < 1:
            raise ConfigError("n_s and n_b must be positive")
        if self.patch_start is None:
            self.patch_start = (self.N - self.l) // 2
        if not (0 <= self.patch_start <= self.N - self.l):
            raise ConfigError(f"patch_start {self.patch_start} puts the patch off the chain")


@dataclass
class Dataset:
    labels: np.ndarray
    data: np.ndarray
    N: int
    t: int
    seed: int
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4 or self.data.shape[3] != 4:
            raise DatasetFormatError(f"payload must have shape (n, n_s, l, 4), got {self.data.shape}")
        if self.labels.shape != (self.data.shape[0],):
            raise DatasetFormatError("one label per state required")

    @property
    def n_states(self) -> int:
        return self.data.shape[0]

    @property
    def n_s(self) -> int:
        return self.data.shape[1]

    @property
    def l(self) -> int:
        return self.data.shape[2]

    def shadow_set(self, i: int, n_s: int | None = None) -> ShadowSet:
        """State ``i`` restricted to its first ``n_s`` shadows."""
        lab = int(self.labels[i])
        data = self.data[i] if n_s is None else self.data[i, :n_s]
        return ShadowSet(data, None if lab == UNLABELLED else lab)

    def equals(self, other: "Dataset") -> bool:
        return (self.N == other.N and self.t == other.t and self.seed == other.seed
                and np.array_equal(self.labels, other.labels)
                and self.data.tobytes() == other.data.tobytes())


def state_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream keyed by ``(seed, *key)``; order of use is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def randomize_onsite(state: Statevector, rng: np.random.Generator) -> None:
    for site, u in enumerate(haar_unitary(2, rng, size=state.n_qubits)):
        apply_1q(state, site, u)


def brickwall_pairs(n: int) -> tuple[list[int], list[int]]:
    """First-site indices of the two layers; the second layer wraps (N-1, 0)."""
    return list(range(0, n - 1, 2)), list(range(1, n, 2))


def brickwall_fdlu(state: Statevector, t: int, rng: np.random.Generator) -> None:
    """``t`` rounds of Haar U(4) gates: pairs (0,1),(2,3),... then (1,2),...,(N-1,0)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    n = state.n_qubits
    if t and n % 2:
        raise ValueError("brick-wall with periodic wrap needs an even number of qubits")
    first, second = brickwall_pairs(n)
    for _ in range(t):
        for layer in (first, second):
            for site, u in zip(layer, haar_unitary(4, rng, size=len(layer))):
                apply_2q(state, site, u)


def representative_state(label: int, n: int) -> Statevector:
    return new_all_ones(n) if label == 0 else new_ghz(n)


def evolved_state(cfg: GenConfig, index: int) -> Statevector:
    """The ``index``-th randomly evolved state of ``cfg`` (before measurement)."""
    psi = representative_state(cfg.phase_label, cfg.N)
    rng = state_rng(cfg.seed, cfg.phase_label, cfg.l, index, _STREAM_CIRCUIT)
    randomize_onsite(psi, rng)
    brickwall_fdlu(psi, cfg.t, rng)
    return psi


def generate_phase_dataset(cfg: GenConfig, path: str | Path | None = None) -> Dataset:
    data = np.empty((cfg.n_b, cfg.n_s, cfg.l, 4), dtype=np.float32)
    for i in range(cfg.n_b):
        psi = evolved_state(cfg, i)
        rng = state_rng(cfg.seed, cfg.phase_label, cfg.l, i, _STREAM_SHADOW)
        data[i] = measure_shadows(psi, cfg.patch_start, cfg.l, cfg.n_s, rng, basis=cfg.basis).data
    manifest = asdict(cfg)
    manifest["generator_version"] = __version__
    ds = Dataset(np.full(cfg.n_b, cfg.phase_label), data, cfg.N, cfg.t, cfg.seed, manifest)
    if path is not None:
        write_dataset(ds, path)
    return ds


def concat_datasets(parts: list[Dataset]) -> Dataset:
    first = parts[0]
    if any(p.n_s != first.n_s or p.l != first.l or p.N != first.N for p in parts):
        raise DatasetFormatError("cannot concatenate datasets with different n_s, l or N")
    manifest = {"parts": [p.manifest for p in parts]}
    return Dataset(np.concatenate([p.labels for p in parts]),
                   np.concatenate([p.data for p in parts]), first.N, first.t, first.seed, manifest)


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def manifest_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_dataset(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(MAGIC, VERSION, ds.n_states, ds.n_s, ds.l, ds.N, ds.t, ds.seed)
    rec = np.dtype([("label", "u1"), ("payload", "<f4", (ds.n_s, ds.l, 4))])
    body = np.empty(ds.n_states, dtype=rec)
    body["label"] = ds.labels
    body["payload"] = ds.data
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())
    manifest = dict(ds.manifest)
    manifest["config_hash"] = config_hash(ds.manifest)
    manifest["git_describe"] = git_describe()
    manifest["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    manifest_path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8")


def read_dataset(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError("file shorter than header")
    magic, version, n_states, n_s, l, n, t, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {version}")
    if n_s < 1 or l < 1:
        raise DatasetFormatError("header declares an empty shadow record")
    rec = np.dtype([("label", "u1"), ("payload", "<f4", (n_s, l, 4))])
    expected = _HEADER.size + n_states * rec.itemsize
    if len(raw) != expected:
        raise DatasetFormatError(f"payload size {len(raw)} != expected {expected} bytes")
    body = np.frombuffer(raw, dtype=rec, offset=_HEADER.size, count=n_states)
    mpath = manifest_path(path)
    manifest = json.loads(mpath.read_text(encoding="utf-8")) if mpath.exists() else {}
    return Dataset(body["label"].copy(), body["payload"].astype(np.float32), n, t, seed, manifest)
