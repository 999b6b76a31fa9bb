"""Fitness evaluation: least-squares decoding and the two objectives.

A program's fused features are fit with a closed-form ridge classifier
on the training split; the accuracy objective is residue accuracy (Q8)
on the validation split, and the complexity objective comes straight
from the tree's structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import ALL_FEATURE_IDS, Dataset, N_STATES
from .errors import ShapeError
from .program import Program, complexity_terms, eval_tree

DEFAULT_RIDGE_LAMBDA = 1e-3


@dataclass(frozen=True)
class LinearClassifier:
    """Closed-form multiclass least-squares weights, last row = bias."""

    weights: np.ndarray  # (D'+1) x 8
    ridge_lambda: float


@dataclass(frozen=True, order=True)
class FitnessPair:
    """(accuracy to maximize, complexity to minimize)."""

    q_a: float
    q_c: float


@dataclass
class StackedSplit:
    """One split's bank stacked to (P, L, D) arrays for fast evaluation."""

    bank: dict  # FeatureId -> (P, L, D) float32
    labels: np.ndarray  # (P, L) int
    mask: np.ndarray  # (P, L) bool


def stack_dataset(dataset: Dataset) -> StackedSplit:
    """Stack every protein's matrices along a leading protein axis."""
    bank = {}
    for fid in ALL_FEATURE_IDS:
        bank[fid] = np.stack(
            [dataset.banks[rec.id][fid].values for rec in dataset.proteins]
        )
    labels = np.stack([rec.labels for rec in dataset.proteins])
    mask = np.stack([rec.mask for rec in dataset.proteins])
    return StackedSplit(bank=bank, labels=labels, mask=mask)


def assemble(fused: np.ndarray, split: StackedSplit) -> tuple[np.ndarray, np.ndarray]:
    """Masked residue rows (protein order, then position) and one-hot labels."""
    if fused.shape[:2] != split.mask.shape:
        raise ShapeError(
            f"fused shape {fused.shape[:2]} != mask shape {split.mask.shape}"
        )
    x = fused[split.mask]
    codes = split.labels[split.mask].astype(np.int64)
    y = np.zeros((len(codes), N_STATES))
    y[np.arange(len(codes)), codes] = 1.0
    return x, y


def ridge_fit(
    x: np.ndarray, y: np.ndarray, ridge_lambda: float = DEFAULT_RIDGE_LAMBDA
) -> LinearClassifier:
    """Solve (X'X + lambda*I) W = X'Y with an unregularized bias column."""
    if len(x) < 1:
        raise ValueError("need at least one residue row")
    xb = np.hstack([x, np.ones((len(x), 1))])
    gram = xb.T @ xb
    reg = np.eye(xb.shape[1]) * ridge_lambda
    reg[-1, -1] = 0.0  # bias unregularized
    try:
        weights = np.linalg.solve(gram + reg, xb.T @ y)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"singular least-squares system (lambda={ridge_lambda}): {exc}"
        )
    return LinearClassifier(weights=weights, ridge_lambda=ridge_lambda)


def predict(clf: LinearClassifier, x: np.ndarray) -> np.ndarray:
    """Argmax over the 8 class scores; ties go to the lower class index."""
    if x.shape[1] + 1 != clf.weights.shape[0]:
        raise ShapeError(
            f"x width {x.shape[1]} != classifier width {clf.weights.shape[0] - 1}"
        )
    scores = x @ clf.weights[:-1] + clf.weights[-1]
    return np.argmax(scores, axis=1)


def q8(pred: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of correctly predicted masked residues."""
    if pred.shape != truth.shape or pred.shape != mask.shape:
        raise ShapeError("pred/truth/mask shapes differ")
    total = int(mask.sum())
    if total == 0:
        raise ValueError("no masked residues to score")
    return float((pred[mask] == truth[mask]).sum() / total)


def evaluate_program(
    program: Program,
    train: StackedSplit,
    validation: StackedSplit,
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA,
) -> FitnessPair:
    """Fit on train, score residue accuracy on validation, read off Q_c."""
    fused_train = eval_tree(program, train.bank)
    fused_val = eval_tree(program, validation.bank)
    x_train, y_train = assemble(fused_train, train)
    clf = ridge_fit(x_train, y_train, ridge_lambda)
    x_val = fused_val[validation.mask]
    pred = predict(clf, x_val)
    truth = validation.labels[validation.mask].astype(np.int64)
    q_a = float((pred == truth).mean())
    return FitnessPair(q_a=q_a, q_c=complexity_terms(program).q_c)


class FitnessCache:
    """Per-generation memo keyed by program serialization hash."""

    def __init__(self, train, validation, ridge_lambda=DEFAULT_RIDGE_LAMBDA):
        self.train = train
        self.validation = validation
        self.ridge_lambda = ridge_lambda
        self._memo: dict[str, FitnessPair] = {}
        self.evaluations = 0

    def clear(self) -> None:
        self._memo.clear()

    def __call__(self, program: Program) -> FitnessPair:
        key = program.id
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        pair = evaluate_program(
            program, self.train, self.validation, self.ridge_lambda
        )
        self.evaluations += 1
        self._memo[key] = pair
        return pair

    def evaluate_many(self, programs, workers: int = 1) -> list[FitnessPair]:
        """Evaluate a population; worker count never affects the values."""
        unique = {}
        for p in programs:
            unique.setdefault(p.id, p)
        missing = [p for pid, p in unique.items() if pid not in self._memo]
        if workers > 1 and len(missing) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                pairs = list(
                    pool.map(
                        lambda p: evaluate_program(
                            p, self.train, self.validation, self.ridge_lambda
                        ),
                        missing,
                    )
                )
            for p, pair in zip(missing, pairs):
                self._memo[p.id] = pair
                self.evaluations += 1
        else:
            for p in missing:
                self(p)
        return [self._memo[p.id] for p in programs]
