"""The four toy-scale extractor networks.

Each network maps a per-residue input (the view matrix concatenated
with a 22-dim residue one-hot) to a 256-dim penultimate representation
plus an 8-state head, giving 264 dimensions per residue.  Networks may
be used randomly initialized, or briefly trained when labels are
available.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoding import EXTRACTOR_KINDS, ONE_HOT_DIM, one_hot

PENULTIMATE_DIM = 256
N_STATES = 8
OUTPUT_DIM = PENULTIMATE_DIM + N_STATES  # 264
KERNEL_SIZE = 9
PADDING = 4
RNN_HIDDEN = 256
DROPOUT = 0.2

LABEL_CHARS = "HGIEBTSL"


@dataclass(frozen=True)
class ExtractorSpec:
    """Architecture selector for one of the four extractor families."""

    kind: str

    def __post_init__(self):
        if self.kind not in EXTRACTOR_KINDS:
            raise ValueError(f"unknown extractor kind {self.kind!r}")


class _ConvExtractor(nn.Module):
    """Kernel-9 convolutional stack with a 256/256/8 dense head."""

    def __init__(self, in_dim: int, layers: int):
        super().__init__()
        convs = []
        width = in_dim
        for _ in range(layers):
            convs.append(nn.Conv1d(width, 256, KERNEL_SIZE, padding=PADDING))
            width = 256
        self.convs = nn.ModuleList(convs)
        self.penultimate = nn.Linear(256, PENULTIMATE_DIM)
        self.dropout = nn.Dropout(DROPOUT)
        self.head = nn.Linear(PENULTIMATE_DIM, N_STATES)

    def forward(self, x):
        # x: (1, L, in_dim) -> conv over the sequence axis
        h = x.transpose(1, 2)
        for conv in self.convs:
            h = torch.relu(conv(h))
        h = h.transpose(1, 2)
        pen = torch.relu(self.penultimate(h))
        logits = self.head(self.dropout(pen))
        return pen, logits


class _RecurrentExtractor(nn.Module):
    """Bidirectional recurrent encoder with a 512/256/8 dense head."""

    def __init__(self, in_dim: int, cell: str):
        super().__init__()
        rnn_cls = nn.LSTM if cell == "lstm" else nn.GRU
        self.rnn = rnn_cls(
            in_dim, RNN_HIDDEN, batch_first=True, bidirectional=True
        )
        self.penultimate = nn.Linear(2 * RNN_HIDDEN, PENULTIMATE_DIM)
        self.dropout = nn.Dropout(DROPOUT)
        self.head = nn.Linear(PENULTIMATE_DIM, N_STATES)

    def forward(self, x):
        h, _ = self.rnn(x)
        pen = torch.relu(self.penultimate(h))
        logits = self.head(self.dropout(pen))
        return pen, logits


def build_network(spec: ExtractorSpec, in_dim: int) -> nn.Module:
    if spec.kind == "CNN1":
        return _ConvExtractor(in_dim, layers=1)
    if spec.kind == "CNN2":
        return _ConvExtractor(in_dim, layers=2)
    if spec.kind == "RNN1":
        return _RecurrentExtractor(in_dim, "lstm")
    return _RecurrentExtractor(in_dim, "gru")


def derive_seed(seed: int, view: str, kind: str) -> int:
    """Stable per-(view, extractor) seed so features are independent."""
    return (seed * 2654435761 + zlib.crc32(f"{view}:{kind}".encode())) % 2**31


def _l2_rows(values: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(values, axis=1, keepdims=True)
    return (values / np.where(norms == 0.0, 1.0, norms)).astype(np.float32)


def extract(
    view_matrix: np.ndarray,
    spec: ExtractorSpec,
    seed: int,
    sequence: str | None = None,
    view: str = "",
    network: nn.Module | None = None,
) -> np.ndarray:
    """Run one extractor over a single protein's view matrix.

    Returns the L x 264 per-residue representation (256-dim penultimate
    concatenated with the 8-state head), row-wise L2-normalized.  When
    `network` is given (e.g. a trained one) it is used as-is; otherwise
    a deterministic randomly initialized network is built from the seed.
    """
    view_matrix = np.asarray(view_matrix, dtype=np.float32)
    if view_matrix.ndim != 2:
        raise ValueError("view matrix must be 2-D (L x Dv)")
    length = view_matrix.shape[0]
    if sequence is None:
        sequence = "X" * length
    if len(sequence) != length:
        raise ValueError(
            f"sequence length {len(sequence)} != view rows {length}"
        )
    x = np.concatenate([view_matrix, one_hot(sequence)], axis=1)
    if network is None:
        torch.manual_seed(derive_seed(seed, view, spec.kind))
        network = build_network(spec, x.shape[1])
    network.eval()
    with torch.no_grad():
        pen, logits = network(torch.from_numpy(x).unsqueeze(0))
    out = torch.cat([pen, logits], dim=2).squeeze(0).numpy()
    return _l2_rows(out)


def train_network(
    network: nn.Module,
    inputs: list[np.ndarray],
    labels: list[np.ndarray],
    epochs: int = 5,
    lr: float = 1e-3,
) -> nn.Module:
    """Briefly fit the head on labeled proteins (toy-scale training)."""
    optimizer = torch.optim.Adam(network.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    network.train()
    for _ in range(epochs):
        for x, y in zip(inputs, labels):
            optimizer.zero_grad()
            _, logits = network(torch.from_numpy(x).unsqueeze(0))
            loss = loss_fn(
                logits.squeeze(0), torch.from_numpy(y.astype(np.int64))
            )
            loss.backward()
            optimizer.step()
    network.eval()
    return network
