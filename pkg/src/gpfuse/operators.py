"""Numerical kernels for the enriched operator set.

All kernels are pure functions over float arrays whose last axis is
the feature axis and whose second-to-last axis is the sequence axis,
so the same code serves a single protein (L, D) and a stacked batch
(P, L, D).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .errors import ShapeError

EXP_CLIP = 20.0

# Legal ranges for ephemeral random constants.
WEIGHT_RANGE = (1, 9)  # inclusive integers
SIGMA_RANGE = (1, 4)
FFT_MODE = 1

ERC_KINDS = ("weight_n", "sigma", "fft_mode")


@dataclass(frozen=True)
class ErcValue:
    """An ephemeral random constant attached to an operator node."""

    kind: str
    value: int

    def __post_init__(self):
        if self.kind == "weight_n":
            lo, hi = WEIGHT_RANGE
            ok = lo <= self.value <= hi
        elif self.kind == "sigma":
            lo, hi = SIGMA_RANGE
            ok = lo <= self.value <= hi
        elif self.kind == "fft_mode":
            ok = self.value == FFT_MODE
        else:
            raise ValueError(f"unknown ERC kind {self.kind!r}")
        if not ok:
            raise ValueError(f"ERC {self.kind}={self.value} out of range")


@dataclass(frozen=True)
class OperatorKind:
    """Static signature of one operator: arity and ERC slots."""

    tag: str
    arity: int
    erc_slots: tuple[str, ...] = ()


BINARY_TAGS = ("W_Add", "W_Sub", "Mul", "GRT")
UNARY_SIMPLE_TAGS = ("Sqrt", "Log", "Exp", "ReLU")
ROOT_TAGS = ("Root1", "Root2", "Root3")

OPERATORS = {
    "W_Add": OperatorKind("W_Add", 2, ("weight_n", "weight_n")),
    "W_Sub": OperatorKind("W_Sub", 2, ("weight_n", "weight_n")),
    "Mul": OperatorKind("Mul", 2),
    "GRT": OperatorKind("GRT", 2),
    "Sqrt": OperatorKind("Sqrt", 1),
    "Log": OperatorKind("Log", 1),
    "Exp": OperatorKind("Exp", 1),
    "ReLU": OperatorKind("ReLU", 1),
    "LoGF": OperatorKind("LoGF", 1, ("sigma",)),
    "FFT": OperatorKind("FFT", 1, ("fft_mode",)),
    "MaxP": OperatorKind("MaxP", 1),
    "Root1": OperatorKind("Root1", 1),
    "Root2": OperatorKind("Root2", 2),
    "Root3": OperatorKind("Root3", 3),
}

# Operators legal below the root (everything except Root1-3).
INNER_TAGS = BINARY_TAGS + UNARY_SIMPLE_TAGS + ("LoGF", "FFT", "MaxP")


def sample_erc(kind: str, rng: np.random.Generator) -> ErcValue:
    """Draw a fresh constant uniformly over the kind's legal range."""
    if kind == "weight_n":
        return ErcValue(kind, int(rng.integers(WEIGHT_RANGE[0], WEIGHT_RANGE[1] + 1)))
    if kind == "sigma":
        return ErcValue(kind, int(rng.integers(SIGMA_RANGE[0], SIGMA_RANGE[1] + 1)))
    if kind == "fft_mode":
        return ErcValue(kind, FFT_MODE)
    raise ValueError(f"unknown ERC kind {kind!r}")


def align(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad the narrower operand on the right to the wider width."""
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(
            f"sequence-shape mismatch: {a.shape[:-1]} vs {b.shape[:-1]}"
        )
    da, db = a.shape[-1], b.shape[-1]
    if da == db:
        return a, b
    width = max(da, db)

    def pad(x, d):
        if d == width:
            return x
        padding = [(0, 0)] * (x.ndim - 1) + [(0, width - d)]
        return np.pad(x, padding)

    return pad(a, da), pad(b, db)


def apply_binary(tag: str, a, b, ercs: tuple[ErcValue, ...] = ()) -> np.ndarray:
    a, b = align(a, b)
    if tag == "W_Add":
        n1, n2 = (e.value for e in ercs)
        return (n1 * a + n2 * b) / (n1 + n2)
    if tag == "W_Sub":
        n1, n2 = (e.value for e in ercs)
        return (n1 * a - n2 * b) / (n1 + n2)
    if tag == "Mul":
        return a * b
    if tag == "GRT":
        return np.maximum(a, b)
    raise ValueError(f"not a binary operator: {tag}")


def apply_unary(tag: str, a: np.ndarray) -> np.ndarray:
    """Protected elementwise transforms; total on any finite input."""
    if tag == "Sqrt":
        return np.sign(a) * np.sqrt(np.abs(a))
    if tag == "Log":
        return np.sign(a) * np.log1p(np.abs(a))
    if tag == "Exp":
        return np.exp(np.clip(a, -EXP_CLIP, EXP_CLIP))
    if tag == "ReLU":
        return np.maximum(a, 0.0)
    raise ValueError(f"not a simple unary operator: {tag}")


def log_kernel(sigma: int) -> np.ndarray:
    """Zero-sum 1-D Laplacian-of-Gaussian kernel, half-width 3*sigma."""
    if not SIGMA_RANGE[0] <= sigma <= SIGMA_RANGE[1]:
        raise ValueError(f"sigma must be in {SIGMA_RANGE}, got {sigma}")
    t = np.arange(-3 * sigma, 3 * sigma + 1, dtype=np.float64)
    k = ((t**2 - sigma**2) / sigma**4) * np.exp(-(t**2) / (2 * sigma**2))
    return k - k.mean()


def logf(a: np.ndarray, sigma: ErcValue) -> np.ndarray:
    """LoG filtering along the sequence axis, per column, zero-extended."""
    kernel = log_kernel(sigma.value)
    return convolve1d(
        np.asarray(a, dtype=np.float64), kernel, axis=-2, mode="constant", cval=0.0
    )


def fft_mag(a: np.ndarray, mode: ErcValue) -> np.ndarray:
    """Row-wise magnitude spectrum along the feature axis."""
    if mode.value != FFT_MODE:
        raise ValueError(f"FFT mode must be {FFT_MODE}")
    if a.shape[-1] < 2:
        raise ShapeError(f"FFT needs width >= 2, got {a.shape[-1]}")
    return np.abs(np.fft.rfft(a, axis=-1))


def maxp(a: np.ndarray) -> np.ndarray:
    """Max pooling along the feature axis, window 2 stride 2, odd tail kept."""
    d = a.shape[-1]
    even = 2 * (d // 2)
    pooled = a[..., :even].reshape(*a.shape[:-1], d // 2, 2).max(axis=-1)
    if d % 2:
        pooled = np.concatenate([pooled, a[..., -1:]], axis=-1)
    return pooled


def root_concat(children: list[np.ndarray]) -> np.ndarray:
    """Column-wise concatenation of 1-3 branches, in child order."""
    if not 1 <= len(children) <= 3:
        raise ValueError(f"Root takes 1-3 children, got {len(children)}")
    shapes = {c.shape[:-1] for c in children}
    if len(shapes) != 1:
        raise ShapeError(f"mismatched sequence shapes: {sorted(shapes)}")
    if len(children) == 1:
        return children[0]
    return np.concatenate(children, axis=-1)


def apply_operator(tag: str, children: list[np.ndarray], ercs) -> np.ndarray:
    """Dispatch any operator tag on already-evaluated child arrays."""
    if tag in BINARY_TAGS:
        return apply_binary(tag, children[0], children[1], tuple(ercs))
    if tag in UNARY_SIMPLE_TAGS:
        return apply_unary(tag, children[0])
    if tag == "LoGF":
        return logf(children[0], ercs[0])
    if tag == "FFT":
        return fft_mag(children[0], ercs[0])
    if tag == "MaxP":
        return maxp(children[0])
    if tag in ROOT_TAGS:
        return root_concat(children)
    raise ValueError(f"unknown operator tag {tag!r}")
