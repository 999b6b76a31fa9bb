"""Structure-prediction metric suite.

All metrics score masked residues only. Sov follows the SOV'99
segment-overlap definition with the segment-weighted normalizer;
the plain residue-count normalizer is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import N_STATES

METRIC_COLUMNS = ("Q8", "Precision", "Recall", "F1", "MCC", "Sov")


def confusion(
    pred: np.ndarray, truth: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """8x8 count matrix over masked residues; rows = truth, cols = pred."""
    t = np.asarray(truth)[np.asarray(mask, bool)].astype(np.int64)
    p = np.asarray(pred)[np.asarray(mask, bool)].astype(np.int64)
    cm = np.zeros((N_STATES, N_STATES), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def weighted_prf(cm: np.ndarray) -> tuple[float, float, float]:
    """Support-weighted precision, recall, and F1; 0/0 counts as 0."""
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    pred_tot = cm.sum(axis=0)
    truth_tot = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_tot > 0, tp / pred_tot, 0.0)
        recall = np.where(truth_tot > 0, tp / truth_tot, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    w = truth_tot / total
    return float(w @ precision), float(w @ recall), float(w @ f1)


def mcc(cm: np.ndarray) -> float:
    """Multiclass correlation coefficient over the full confusion matrix.

    Reduces exactly to the familiar binary TP/TN formula for 2x2 input;
    a degenerate denominator (e.g. single predicted class) yields 0.
    """
    cm = np.asarray(cm, dtype=np.float64)
    s = cm.sum()
    c = np.trace(cm)
    p = cm.sum(axis=0)  # per-class prediction counts
    t = cm.sum(axis=1)  # per-class truth counts
    num = c * s - p @ t
    den = np.sqrt(s * s - p @ p) * np.sqrt(s * s - t @ t)
    if den == 0:
        return 0.0
    return float(num / den)


@dataclass(frozen=True)
class Segment:
    """Maximal run of one class within a single protein."""

    label: int
    start: int  # inclusive
    end: int  # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def segments(labels: np.ndarray) -> list[Segment]:
    """Maximal constant runs of a label sequence."""
    labels = np.asarray(labels)
    out = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            out.append(Segment(int(labels[start]), start, i - 1))
            start = i
    return out


def _sov_terms(obs: np.ndarray, pre: np.ndarray) -> tuple[float, float]:
    """Accumulated (numerator, normalizer) for one protein, all classes."""
    obs_segments = segments(obs)
    pre_segments = segments(pre)
    num = 0.0
    norm = 0.0
    for s_o in obs_segments:
        partners = [
            s_p
            for s_p in pre_segments
            if s_p.label == s_o.label
            and s_p.start <= s_o.end
            and s_p.end >= s_o.start
        ]
        if not partners:
            norm += s_o.length
            continue
        norm += s_o.length * len(partners)
        for s_p in partners:
            minov = min(s_o.end, s_p.end) - max(s_o.start, s_p.start) + 1
            maxov = max(s_o.end, s_p.end) - min(s_o.start, s_p.start) + 1
            delta = min(
                maxov - minov, minov, s_o.length // 2, s_p.length // 2
            )
            num += s_o.length * (minov + delta) / maxov
    return num, norm


def sov(
    pred,
    truth,
    mask,
    normalizer: str = "segment",
) -> float:
    """Segment-overlap score in [0, 100] over one or many proteins.

    `pred`/`truth`/`mask` are either single sequences or lists of
    per-protein sequences. Segments are maximal runs over the masked
    residues of each protein. `normalizer="residue"` replaces the
    segment-weighted normalizer with the total residue count.
    """
    if isinstance(pred, np.ndarray) and pred.ndim == 1:
        pred, truth, mask = [pred], [truth], [mask]
    num = 0.0
    norm = 0.0
    n_residues = 0
    for p, t, m in zip(pred, truth, mask):
        m = np.asarray(m, bool)
        if not m.any():
            continue
        obs = np.asarray(t)[m]
        pre = np.asarray(p)[m]
        n_residues += len(obs)
        a, b = _sov_terms(obs, pre)
        num += a
        norm += b
    if n_residues == 0:
        raise ValueError("no masked residues to score")
    if normalizer == "residue":
        norm = float(n_residues)
    elif normalizer != "segment":
        raise ValueError(f"unknown normalizer {normalizer!r}")
    return 100.0 * num / norm


def metric_report(pred, truth, mask, normalizer: str = "segment") -> dict:
    """All six metrics for one or many proteins, in table column order."""
    if isinstance(pred, np.ndarray) and pred.ndim == 1:
        pred, truth, mask = [pred], [truth], [mask]
    flat_p = np.concatenate([np.asarray(p)[np.asarray(m, bool)] for p, m in zip(pred, mask)])
    flat_t = np.concatenate([np.asarray(t)[np.asarray(m, bool)] for t, m in zip(truth, mask)])
    cm = confusion(flat_p, flat_t, np.ones(len(flat_p), bool))
    precision, recall, f1 = weighted_prf(cm)
    return {
        "Q8": float((flat_p == flat_t).mean()),
        "Precision": precision,
        "Recall": recall,
        "F1": f1,
        "MCC": mcc(cm),
        "Sov": sov(pred, truth, mask, normalizer=normalizer),
    }
