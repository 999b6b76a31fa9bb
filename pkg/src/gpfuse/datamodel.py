"""Domain types, feature-bank file I/O, normalization, and synthetic data.

A feature bank holds, per protein, 16 per-residue feature matrices
(4 views x 4 extractors) plus an 8-state label string and a padding
mask.  Banks are stored in the binary MMFB container format described
in `save_feature_bank`, with labels in a text sidecar.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DataError, FormatError, IncompleteBankError, ShapeError

# Eight-state secondary structure alphabet, index = integer code.
LABEL_CHARS = "HGIEBTSL"
N_STATES = 8
PAD_CHAR = "-"

_CHAR_TO_CODE = {c: i for i, c in enumerate(LABEL_CHARS)}

VIEWS = ("HMM", "PSSM", "T5", "Sa")
EXTRACTORS = ("CNN1", "CNN2", "RNN1", "RNN2")

DEFAULT_TARGET_LENGTH = 700
DEFAULT_OVERLAP = 350

MMFB_MAGIC = b"MMFB"
MMFB_VERSION = 1


def label_to_char(code: int) -> str:
    if not 0 <= code < N_STATES:
        raise ValueError(f"invalid label code {code}")
    return LABEL_CHARS[code]


def char_to_label(char: str) -> int:
    try:
        return _CHAR_TO_CODE[char]
    except KeyError:
        raise ValueError(f"invalid label character {char!r}") from None


class FeatureId(NamedTuple):
    """One of the 16 (view, extractor) feature identities."""

    view: str
    extractor: str

    @property
    def name(self) -> str:
        return f"{self.view}_{self.extractor}"

    @classmethod
    def parse(cls, name: str) -> "FeatureId":
        view, _, extractor = name.partition("_")
        if view not in VIEWS or extractor not in EXTRACTORS:
            raise ValueError(f"unknown feature id {name!r}")
        return cls(view, extractor)


ALL_FEATURE_IDS = tuple(FeatureId(v, e) for v in VIEWS for e in EXTRACTORS)


@dataclass(frozen=True)
class ProteinRecord:
    """Labels and padding mask for one (possibly windowed) protein."""

    id: str
    length: int  # true residue count
    labels: np.ndarray  # int8, padded length
    mask: np.ndarray  # bool, padded length; True = real residue

    def __post_init__(self):
        if int(self.mask.sum()) != self.length:
            raise ValueError(
                f"protein {self.id}: mask has {int(self.mask.sum())} true "
                f"entries but true length is {self.length}"
            )

    def label_string(self) -> str:
        return "".join(
            LABEL_CHARS[l] if m else PAD_CHAR
            for l, m in zip(self.labels, self.mask)
        )


@dataclass(frozen=True)
class FeatureMatrix:
    """One feature's per-residue representation: L rows x D columns."""

    feature_id: FeatureId
    values: np.ndarray  # float32, L x D

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass
class Dataset:
    """A split's proteins plus the full 16-feature bank for each."""

    proteins: list[ProteinRecord]
    banks: dict[str, dict[FeatureId, FeatureMatrix]]
    split: str = "train"

    @property
    def padded_length(self) -> int:
        return len(self.proteins[0].labels) if self.proteins else 0

    def validate(self) -> None:
        length = self.padded_length
        for rec in self.proteins:
            bank = self.banks.get(rec.id)
            if bank is None:
                raise IncompleteBankError(f"protein {rec.id}: no feature bank")
            for fid in ALL_FEATURE_IDS:
                if fid not in bank:
                    raise IncompleteBankError(
                        f"protein {rec.id}: missing feature {fid.name}"
                    )
                fm = bank[fid]
                if fm.rows != length:
                    raise ShapeError(
                        f"protein {rec.id}, feature {fid.name}: "
                        f"L={fm.rows}, expected {length}"
                    )
                if not np.isfinite(fm.values).all():
                    raise DataError(
                        f"protein {rec.id}, feature {fid.name}: "
                        "non-finite values"
                    )


def l2_normalize_rows(m: FeatureMatrix) -> FeatureMatrix:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    return replace(m, values=_l2_rows(m.values))


def _l2_rows(values: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(values, axis=-1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return (values / safe).astype(values.dtype)


def window_starts(true_length: int, target: int, overlap: int) -> list[int]:
    """Start offsets of the overlapping slicing windows for one protein."""
    if true_length <= target:
        return [0]
    stride = target - overlap
    starts = []
    k = 0
    while k * stride + target < true_length:
        starts.append(k * stride)
        k += 1
    starts.append(true_length - target)
    return starts


def normalize_length(
    pid: str,
    labels: np.ndarray,
    features: dict[FeatureId, np.ndarray],
    target: int = DEFAULT_TARGET_LENGTH,
    overlap: int = DEFAULT_OVERLAP,
) -> list[tuple[ProteinRecord, dict[FeatureId, np.ndarray]]]:
    """Pad short proteins to `target`; slice long ones into windows.

    Window ids carry their start offset as `pid#start` so that window
    predictions can be reassembled later.
    """
    true_length = len(labels)
    if true_length < 1:
        raise ValueError("empty protein")
    out = []
    if true_length <= target:
        pad = target - true_length
        rec = ProteinRecord(
            id=pid,
            length=true_length,
            labels=np.concatenate([labels, np.zeros(pad, dtype=np.int8)]),
            mask=np.concatenate(
                [np.ones(true_length, bool), np.zeros(pad, bool)]
            ),
        )
        feats = {
            fid: np.vstack(
                [arr, np.zeros((pad, arr.shape[1]), dtype=arr.dtype)]
            )
            for fid, arr in features.items()
        }
        out.append((rec, feats))
        return out
    for start in window_starts(true_length, target, overlap):
        rec = ProteinRecord(
            id=f"{pid}#{start}",
            length=target,
            labels=np.asarray(labels[start : start + target], dtype=np.int8),
            mask=np.ones(target, bool),
        )
        feats = {
            fid: arr[start : start + target] for fid, arr in features.items()
        }
        out.append((rec, feats))
    return out


def merge_window_predictions(
    windows: list[tuple[int, np.ndarray]], true_length: int
) -> np.ndarray:
    """Reassemble per-window predictions into one per-residue sequence.

    Overlapping residues take the prediction from the window in which
    they lie farther from a window edge.
    """
    merged = np.zeros(true_length, dtype=np.int64)
    best_margin = np.full(true_length, -1, dtype=np.int64)
    for start, pred in windows:
        w = len(pred)
        offsets = np.arange(w)
        margin = np.minimum(offsets, w - 1 - offsets)
        pos = start + offsets
        take = margin > best_margin[pos]
        merged[pos[take]] = pred[offsets[take]]
        best_margin[pos[take]] = margin[take]
    if (best_margin < 0).any():
        raise ValueError("windows do not cover every residue")
    return merged


# --------------------------------------------------------------------------
# MMFB container I/O


def _labels_path(path) -> str:
    return str(path) + ".labels"


def save_feature_bank(dataset: Dataset, path) -> None:
    """Write an MMFB container plus its `.labels` text sidecar.

    Layout (little-endian): magic "MMFB", u16 version, u8 normalized
    flag, u32 protein count; per protein u16 id length + UTF-8 id,
    u32 true length, u32 L, u32 feature count; per feature u8 view
    code, u8 extractor code, u32 D, then L*D float32 row-major.
    """
    dataset.validate()
    with open(path, "wb") as fh:
        fh.write(MMFB_MAGIC)
        fh.write(struct.pack("<HBI", MMFB_VERSION, 1, len(dataset.proteins)))
        for rec in dataset.proteins:
            bank = dataset.banks[rec.id]
            ident = rec.id.encode("utf-8")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(
                struct.pack("<III", rec.length, len(rec.labels), len(bank))
            )
            for fid in ALL_FEATURE_IDS:
                fm = bank[fid]
                fh.write(
                    struct.pack(
                        "<BBI",
                        VIEWS.index(fid.view),
                        EXTRACTORS.index(fid.extractor),
                        fm.cols,
                    )
                )
                fh.write(np.ascontiguousarray(fm.values, dtype="<f4").tobytes())
    with open(_labels_path(path), "w", encoding="utf-8") as fh:
        for rec in dataset.proteins:
            fh.write(f"{rec.id}\t{rec.label_string()}\n")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated MMFB file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_feature_bank(path, split: str = "train") -> Dataset:
    """Load an MMFB container and its labels sidecar into a Dataset."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != MMFB_MAGIC:
        raise FormatError(f"{path}: bad magic, not an MMFB file")
    version, normalized, n_proteins = r.unpack("<HBI")
    if version != MMFB_VERSION:
        raise FormatError(f"{path}: unsupported MMFB version {version}")

    label_lines = {}
    with open(_labels_path(path), encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            pid, _, chars = line.partition("\t")
            label_lines[pid] = chars

    proteins = []
    banks: dict[str, dict[FeatureId, FeatureMatrix]] = {}
    for _ in range(n_proteins):
        (id_len,) = r.unpack("<H")
        pid = r.take(id_len).decode("utf-8")
        true_length, padded, n_feat = r.unpack("<III")
        bank: dict[FeatureId, FeatureMatrix] = {}
        for _ in range(n_feat):
            view_code, ext_code, cols = r.unpack("<BBI")
            try:
                fid = FeatureId(VIEWS[view_code], EXTRACTORS[ext_code])
            except IndexError:
                raise FormatError(
                    f"protein {pid}: unknown feature codes "
                    f"({view_code}, {ext_code})"
                ) from None
            raw = r.take(padded * cols * 4)
            values = np.frombuffer(raw, dtype="<f4").reshape(padded, cols)
            if not np.isfinite(values).all():
                raise DataError(
                    f"protein {pid}, feature {fid.name}: non-finite values"
                )
            if not normalized:
                values = _l2_rows(values)
            bank[fid] = FeatureMatrix(fid, values.copy())
        for fid in ALL_FEATURE_IDS:
            if fid not in bank:
                raise IncompleteBankError(
                    f"protein {pid}: missing feature {fid.name}"
                )
        if pid not in label_lines:
            raise FormatError(f"protein {pid}: no labels sidecar entry")
        chars = label_lines[pid]
        if len(chars) != padded:
            raise FormatError(
                f"protein {pid}: label string length {len(chars)} != L={padded}"
            )
        mask = np.array([c != PAD_CHAR for c in chars], dtype=bool)
        labels = np.array(
            [char_to_label(c) if c != PAD_CHAR else 0 for c in chars],
            dtype=np.int8,
        )
        proteins.append(ProteinRecord(pid, true_length, labels, mask))
        banks[pid] = bank

    dataset = Dataset(proteins=proteins, banks=banks, split=split)
    dataset.validate()
    return dataset


def load_feature_bank_csv(directory, split: str = "train") -> Dataset:
    """Fallback import: one CSV per feature per protein.

    Expects `<pid>__<VIEW>_<EXTRACTOR>.csv` files plus a `labels.tsv`
    sidecar in `directory`.
    """
    import os

    label_path = os.path.join(directory, "labels.tsv")
    if not os.path.exists(label_path):
        raise FormatError(f"{directory}: missing labels.tsv")
    proteins = []
    banks = {}
    with open(label_path, encoding="utf-8") as fh:
        entries = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    for pid, chars in entries:
        mask = np.array([c != PAD_CHAR for c in chars], dtype=bool)
        labels = np.array(
            [char_to_label(c) if c != PAD_CHAR else 0 for c in chars],
            dtype=np.int8,
        )
        proteins.append(ProteinRecord(pid, int(mask.sum()), labels, mask))
        bank = {}
        for fid in ALL_FEATURE_IDS:
            csv_path = os.path.join(directory, f"{pid}__{fid.name}.csv")
            if not os.path.exists(csv_path):
                raise IncompleteBankError(
                    f"protein {pid}: missing feature file {csv_path}"
                )
            values = np.loadtxt(csv_path, delimiter=",", ndmin=2).astype(
                np.float32
            )
            bank[fid] = FeatureMatrix(fid, values)
        banks[pid] = bank
    dataset = Dataset(proteins=proteins, banks=banks, split=split)
    dataset.validate()
    return dataset


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Exact equality on records and feature values (metadata included)."""
    if len(a.proteins) != len(b.proteins):
        return False
    for ra, rb in zip(a.proteins, b.proteins):
        if ra.id != rb.id or ra.length != rb.length:
            return False
        if not np.array_equal(ra.mask, rb.mask):
            return False
        if not np.array_equal(
            np.where(ra.mask, ra.labels, 0), np.where(rb.mask, rb.labels, 0)
        ):
            return False
        for fid in ALL_FEATURE_IDS:
            if not np.array_equal(
                a.banks[ra.id][fid].values, b.banks[rb.id][fid].values
            ):
                return False
    return True


# --------------------------------------------------------------------------
# Synthetic planted-signal data


@dataclass
class SynthConfig:
    """Configuration for the planted-signal synthetic generator."""

    n_proteins: int = 50
    length: int = 50
    dim: int = 24
    view_snr: dict = field(
        default_factory=lambda: {"HMM": 1.0, "PSSM": 0.8, "T5": 1.2, "Sa": 0.6}
    )
    extractor_scale: dict = field(
        default_factory=lambda: {"CNN1": 1.0, "CNN2": 0.9, "RNN1": 1.1, "RNN2": 0.8}
    )
    noise_scale: float = 0.3
    self_transition: float = 0.8
    split: str = "train"
    # label embeddings are shared by every split drawn from the same
    # config, so a classifier fit on train transfers to validation
    embedding_seed: int = 0

    def signal_weight(self, fid: FeatureId) -> float:
        return self.view_snr[fid.view] * self.extractor_scale.get(
            fid.extractor, 1.0
        )


def generate_synthetic(cfg: SynthConfig, seed: int) -> Dataset:
    """Generate a planted-signal dataset.

    Labels follow a first-order Markov chain over the 8 states; each
    pseudo-feature is `weight * embedding[label] + noise`, with a
    per-FeatureId random embedding, then L2-normalized per row.
    """
    if cfg.length < 1 or cfg.length > DEFAULT_TARGET_LENGTH:
        raise ValueError(f"length must be in [1, 700], got {cfg.length}")
    if cfg.dim < 2:
        raise ValueError(f"dim must be >= 2, got {cfg.dim}")
    rng = np.random.default_rng(seed)
    emb_rng = np.random.default_rng(cfg.embedding_seed)

    embeddings = {}
    for fid in ALL_FEATURE_IDS:
        emb = emb_rng.normal(size=(N_STATES, cfg.dim))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        embeddings[fid] = emb

    trans = np.full((N_STATES, N_STATES), (1 - cfg.self_transition) / 7)
    np.fill_diagonal(trans, cfg.self_transition)

    proteins = []
    banks = {}
    for i in range(cfg.n_proteins):
        pid = f"synth{i:04d}"
        labels = np.empty(cfg.length, dtype=np.int8)
        labels[0] = rng.integers(N_STATES)
        for t in range(1, cfg.length):
            labels[t] = rng.choice(N_STATES, p=trans[labels[t - 1]])
        mask = np.ones(cfg.length, bool)
        bank = {}
        for fid in ALL_FEATURE_IDS:
            w = cfg.signal_weight(fid)
            values = w * embeddings[fid][labels] + cfg.noise_scale * rng.normal(
                size=(cfg.length, cfg.dim)
            )
            bank[fid] = FeatureMatrix(
                fid, _l2_rows(values.astype(np.float32))
            )
        proteins.append(ProteinRecord(pid, cfg.length, labels, mask))
        banks[pid] = bank
    return Dataset(proteins=proteins, banks=banks, split=cfg.split)
