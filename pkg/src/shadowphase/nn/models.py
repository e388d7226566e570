"""Shadow classifiers: per-snapshot MLP, mean pool over shadows, sequence model, head.

Input tensors have shape ``(batch, n_s, l, 4)`` with features
``(theta, phi, chi, bit)``. The sequence model runs along the patch sites.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch
from torch import nn

RECONSTRUCTOR_DIMS = (4, 8, 16, 32, 64, 32, 16, 8)
BIRNN_HIDDEN_TOTAL = 512
BIRNN_FINAL_DIMS = (512, 64, 8, 1)
CNN_FINAL_DIMS = (128, 64, 8, 1)
CNN_DILATIONS = (1, 2, 4, 6)


@dataclass
class ClassifierConfig:
    arch: str = "birnn"
    reconstructor_dims: tuple[int, ...] = RECONSTRUCTOR_DIMS
    rnn_hidden_total: int = BIRNN_HIDDEN_TOTAL
    rnn_cell: str = "gru"
    final_dims: tuple[int, ...] | None = None
    cnn_dilations: tuple[int, ...] = CNN_DILATIONS
    cnn_kernel: int = 3
    cnn_channels: int = 128
    dropout: float = 0.1
    tie_directions: bool = False
    # pooled features sit on a large shared offset and carry the signal in
    # small variations; without this the head stalls at chance
    pool_norm: bool = True
    overrides: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.arch not in ("birnn", "cnn"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.rnn_cell not in ("gru", "rnn"):
            raise ValueError(f"unknown rnn cell {self.rnn_cell!r}")
        self.reconstructor_dims = tuple(self.reconstructor_dims)
        self.cnn_dilations = tuple(self.cnn_dilations)
        if self.final_dims is None:
            self.final_dims = BIRNN_FINAL_DIMS if self.arch == "birnn" else CNN_FINAL_DIMS
        self.final_dims = tuple(self.final_dims)
        if self.reconstructor_dims[0] != 4:
            raise ValueError("shadow reconstructor must take 4 input features")
        expected = self.rnn_hidden_total if self.arch == "birnn" else self.cnn_channels
        if self.final_dims[0] != expected or self.final_dims[-1] != 1:
            raise ValueError(f"final_dims must run from {expected} to 1, got {self.final_dims}")
        defaults = ClassifierConfig.__dataclass_fields__
        self.overrides = sorted(
            k for k in ("reconstructor_dims", "rnn_hidden_total", "cnn_channels", "cnn_dilations")
            if getattr(self, k) != defaults[k].default
        )

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ClassifierConfig":
        d = {k: v for k, v in d.items() if k != "overrides"}
        return cls(**d)


def _init_linear(layer: nn.Linear, relu: bool = True) -> None:
    if relu:
        nn.init.kaiming_uniform_(layer.weight, nonlinearity="relu")
    else:
        bound = 1 / math.sqrt(layer.in_features)
        nn.init.uniform_(layer.weight, -bound, bound)
    nn.init.zeros_(layer.bias)


def mlp(dims, final_activation: bool = False) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        lin = nn.Linear(a, b)
        _init_linear(lin, relu=not last or final_activation)
        layers.append(lin)
        if not last or final_activation:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class ShadowReconstructor(nn.Module):
    """The same MLP on every (state, shadow, site) slice: 4 -> ... -> 8."""

    def __init__(self, dims=RECONSTRUCTOR_DIMS):
        super().__init__()
        self.net = mlp(dims)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.net[0].in_features:
            raise ValueError(f"expected last dim {self.net[0].in_features}, got {x.shape[-1]}")
        return self.net(x)


def mean_pool_shadows(x: torch.Tensor) -> torch.Tensor:
    """Mean over the shadow axis (dim 1).

    Values are sorted before summing, so any permutation of the shadows gives
    a bit-identical result.
    """
    if x.shape[1] < 1:
        raise ValueError("need at least one shadow")
    return torch.sort(x, dim=1).values.sum(dim=1) / x.shape[1]


class GRUCell(nn.Module):
    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.hidden_size = hidden_size
        self.x2h = nn.Linear(input_size, 3 * hidden_size)
        self.h2h = nn.Linear(hidden_size, 3 * hidden_size)
        _init_linear(self.x2h, relu=False)
        nn.init.zeros_(self.h2h.bias)
        for k in range(3):
            nn.init.orthogonal_(self.h2h.weight.data[k * hidden_size:(k + 1) * hidden_size])

    def forward(self, x: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        xr, xz, xn = self.x2h(x).chunk(3, dim=-1)
        hr, hz, hn = self.h2h(h).chunk(3, dim=-1)
        r = torch.sigmoid(xr + hr)
        z = torch.sigmoid(xz + hz)
        n = torch.tanh(xn + r * hn)
        return (1 - z) * n + z * h


class RNNCell(nn.Module):
    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.hidden_size = hidden_size
        self.x2h = nn.Linear(input_size, hidden_size)
        self.h2h = nn.Linear(hidden_size, hidden_size)
        _init_linear(self.x2h, relu=False)
        nn.init.zeros_(self.h2h.bias)
        nn.init.orthogonal_(self.h2h.weight)

    def forward(self, x: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.x2h(x) + self.h2h(h))


class BiRNN(nn.Module):
    """Runs a cell forward and backward over the sites; concatenates the final states."""

    def __init__(self, input_size: int = 8, hidden_total: int = BIRNN_HIDDEN_TOTAL,
                 cell: str = "gru", tie_directions: bool = False):
        super().__init__()
        if hidden_total % 2:
            raise ValueError("hidden_total must be even")
        cls = GRUCell if cell == "gru" else RNNCell
        self.hidden = hidden_total // 2
        self.fwd = cls(input_size, self.hidden)
        self.bwd = self.fwd if tie_directions else cls(input_size, self.hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 3:
            raise ValueError(f"expected (batch, l, features), got {tuple(x.shape)}")
        batch, l, _ = x.shape
        hf = x.new_zeros(batch, self.hidden)
        hb = x.new_zeros(batch, self.hidden)
        for i in range(l):
            hf = self.fwd(x[:, i], hf)
            hb = self.bwd(x[:, l - 1 - i], hb)
        return torch.cat([hf, hb], dim=-1)


class DilatedBranch(nn.Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, dilation: int):
        super().__init__()
        pad = dilation * (kernel - 1) // 2
        self.body = nn.Sequential(
            nn.Conv1d(c_in, c_out, kernel, dilation=dilation, padding=pad),
            nn.BatchNorm1d(c_out), nn.ReLU(),
            nn.Conv1d(c_out, c_out, kernel, dilation=dilation, padding=pad),
            nn.BatchNorm1d(c_out), nn.ReLU(),
        )

    def forward(self, x):
        return self.body(x)


class DilatedCNN(nn.Module):
    """Parallel dilated conv branches, 1x1 merge, mean over sites, two-layer feed-forward."""

    def __init__(self, input_size: int = 8, channels: int = 128, kernel: int = 3,
                 dilations=CNN_DILATIONS, dropout: float = 0.1):
        super().__init__()
        self.branches = nn.ModuleList(DilatedBranch(input_size, channels, kernel, d) for d in dilations)
        self.merge = nn.Sequential(
            nn.Conv1d(channels * len(dilations), channels, 1), nn.BatchNorm1d(channels), nn.ReLU())
        self.ff = nn.Sequential(
            nn.Linear(channels, channels), nn.ReLU(), nn.Dropout(dropout), nn.Linear(channels, channels))
        for m in self.modules():
            if isinstance(m, nn.Conv1d):
                nn.init.kaiming_uniform_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)
        _init_linear(self.ff[0])
        _init_linear(self.ff[3], relu=False)

    def site_features(self, x: torch.Tensor) -> torch.Tensor:
        """``(batch, l, features)`` -> ``(batch, channels, l)`` before pooling."""
        if x.ndim != 3:
            raise ValueError(f"expected (batch, l, features), got {tuple(x.shape)}")
        x = x.transpose(1, 2)
        return self.merge(torch.cat([b(x) for b in self.branches], dim=1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.ff(self.site_features(x).mean(dim=2))


class FinalReconstructor(nn.Module):
    """MLP head returning logits; ``sigmoid`` of the output is the SSB probability."""

    def __init__(self, dims=BIRNN_FINAL_DIMS):
        super().__init__()
        self.net = mlp(dims)
        out = self.net[-1]
        nn.init.uniform_(out.weight, -0.1 / math.sqrt(out.in_features), 0.1 / math.sqrt(out.in_features))

    def logits(self, h: torch.Tensor) -> torch.Tensor:
        if h.shape[-1] != self.net[0].in_features:
            raise ValueError(f"expected width {self.net[0].in_features}, got {h.shape[-1]}")
        return self.net(h).squeeze(-1)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(h))


class PhaseClassifier(nn.Module):
    def __init__(self, cfg: ClassifierConfig | None = None):
        super().__init__()
        self.cfg = cfg or ClassifierConfig()
        c = self.cfg
        self.reconstructor = ShadowReconstructor(c.reconstructor_dims)
        width = c.reconstructor_dims[-1]
        if c.arch == "birnn":
            self.sequence = BiRNN(width, c.rnn_hidden_total, c.rnn_cell, c.tie_directions)
        else:
            self.sequence = DilatedCNN(width, c.cnn_channels, c.cnn_kernel, c.cnn_dilations, c.dropout)
        self.pool_norm = nn.BatchNorm1d(width) if c.pool_norm else None
        self.head = FinalReconstructor(c.final_dims)

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        p = mean_pool_shadows(self.reconstructor(x))
        if self.pool_norm is not None:
            p = self.pool_norm(p.transpose(1, 2)).transpose(1, 2)
        return p

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[-1] != 4:
            raise ValueError(f"expected (batch, n_s, l, 4), got {tuple(x.shape)}")
        return self.head.logits(self.sequence(self.pooled(x)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(x))
