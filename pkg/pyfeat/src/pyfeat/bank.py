"""Standalone MMFB feature-bank writer.

This module implements the MMFB container from its byte-level
description, independent of any consumer: little-endian, magic "MMFB",
u16 version, u8 normalized flag, u32 protein count; per protein a u16
id length + UTF-8 id, u32 true length, u32 padded length L, u32 feature
count; per feature u8 view code, u8 extractor code, u32 D, then L*D
float32 values row-major.  Labels go in a `<path>.labels` text sidecar,
one `id<TAB>labelstring` line per protein, with `-` marking padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .encoding import EXTRACTOR_KINDS, VIEWS

MAGIC = b"MMFB"
VERSION = 1
PAD_CHAR = "-"

FEATURE_ORDER = tuple((v, e) for v in VIEWS for e in EXTRACTOR_KINDS)


@dataclass
class ProteinFeatures:
    """One protein's 16 extracted feature matrices plus its labels."""

    id: str
    labels: str  # 8-state characters, true length (no padding)
    features: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(self.labels)

    def validate(self) -> None:
        for key in FEATURE_ORDER:
            if key not in self.features:
                raise ValueError(f"protein {self.id}: missing feature {key}")
            rows = self.features[key].shape[0]
            if rows != self.length:
                raise ValueError(
                    f"protein {self.id}: feature {key} has {rows} rows, "
                    f"expected {self.length}"
                )


def _padded(values: np.ndarray, target: int) -> np.ndarray:
    out = np.zeros((target, values.shape[1]), dtype="<f4")
    out[: values.shape[0]] = values
    return out


def export_bank(proteins: list[ProteinFeatures], path) -> None:
    """Write an MMFB container plus labels sidecar.

    All proteins are zero-padded to the longest protein's length so the
    bank presents a single common L.
    """
    if not proteins:
        raise ValueError("nothing to export: empty protein list")
    for protein in proteins:
        protein.validate()
    target = max(p.length for p in proteins)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HBI", VERSION, 1, len(proteins)))
        for protein in proteins:
            ident = protein.id.encode("utf-8")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(
                struct.pack("<III", protein.length, target, len(FEATURE_ORDER))
            )
            for view, kind in FEATURE_ORDER:
                values = _padded(protein.features[(view, kind)], target)
                fh.write(
                    struct.pack(
                        "<BBI",
                        VIEWS.index(view),
                        EXTRACTOR_KINDS.index(kind),
                        values.shape[1],
                    )
                )
                fh.write(values.tobytes())
    with open(str(path) + ".labels", "w", encoding="utf-8") as fh:
        for protein in proteins:
            padded = protein.labels + PAD_CHAR * (target - protein.length)
            fh.write(f"{protein.id}\t{padded}\n")
