"""Residue one-hot encoding and the canonical view widths."""

from __future__ import annotations

import numpy as np

# 20 standard amino acids, plus one slot for unknown (X or anything
# else) and one reserved for padding: 22 dimensions total.
AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
UNKNOWN_INDEX = 20
PAD_INDEX = 21
ONE_HOT_DIM = 22

_AA_INDEX = {a: i for i, a in enumerate(AMINO_ACIDS)}

# Full-scale per-view input widths.  Toy inputs may use smaller widths;
# the extractors only require a positive column count.
CANONICAL_VIEW_WIDTHS = {"HMM": 20, "PSSM": 21, "T5": 1024, "Sa": 480}

VIEWS = ("HMM", "PSSM", "T5", "Sa")
EXTRACTOR_KINDS = ("CNN1", "CNN2", "RNN1", "RNN2")


def one_hot(sequence: str) -> np.ndarray:
    """Encode a residue string as an L x 22 one-hot matrix."""
    out = np.zeros((len(sequence), ONE_HOT_DIM), dtype=np.float32)
    for i, char in enumerate(sequence):
        out[i, _AA_INDEX.get(char, UNKNOWN_INDEX)] = 1.0
    return out
