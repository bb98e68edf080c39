"""Logistic calibration of detector confidence against detection correctness.

A logistic regression of "detection matched ground truth" on the log-odds
of the confidence is inverted to find the confidence at which a detection
is correct with a chosen probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, ROUND_HALF_UP, Decimal
from typing import Callable, Iterable, Sequence

import numpy as np

from .annotations import Annotation
from .detect import Detection, filter_by_confidence
from .errors import DegenerateData, NonMonotoneModel
from .evaluate import match_detections

CONF_EPS = 1e-6
DEFAULT_TARGETS = (0.40, 0.60, 0.80, 0.95)


def confidence_to_logit(p):
    p = np.clip(p, CONF_EPS, 1 - CONF_EPS)
    out = np.log(p / (1 - p))
    return float(out) if np.ndim(out) == 0 else out


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, 1 / (1 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1 + np.exp(-np.abs(x))))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CalibrationSample:
    confidence: float
    correct: bool

    @property
    def logit(self) -> float:
        return confidence_to_logit(self.confidence)


def samples_from_detections(
    preds: Sequence[Detection], gts: Sequence[Annotation], iou_min: float = 0.1
) -> list[CalibrationSample]:
    """One sample per detection; correct when it is matched to an annotation."""
    matched = {id(d) for d, _, _ in match_detections(preds, gts, iou_min).pairs}
    return [CalibrationSample(d.confidence, id(d) in matched) for d in preds]


@dataclass(frozen=True)
class LogisticModel:
    intercept: float
    slope: float
    n_samples: int
    converged: bool
    iterations: int = 0

    def predict(self, logit):
        return sigmoid(self.intercept + self.slope * np.asarray(logit, dtype=float))

    def as_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "slope": self.slope,
            "n": self.n_samples,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def _arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple) and len(samples) == 2:
        x, y = samples
        return np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    samples = list(samples)
    x = np.array([s.logit for s in samples], dtype=float)
    y = np.array([1.0 if s.correct else 0.0 for s in samples])
    return x, y


def _penalized_loglik(beta, X, y, ridge):
    eta = X @ beta
    ll = np.sum(y * eta - np.logaddexp(0.0, eta))
    return ll - 0.5 * ridge * float(beta @ beta)


def fit_logistic(
    samples: Iterable[CalibrationSample] | tuple[np.ndarray, np.ndarray],
    max_iter: int = 100,
    tol: float = 1e-8,
    ridge: float = 1e-6,
) -> LogisticModel:
    """Maximum-likelihood fit of correct ~ intercept + slope * logit.

    Newton/IRLS with a small ridge penalty on both coefficients so perfectly
    separable data still yields finite estimates; steps are halved until the
    penalized likelihood does not decrease. Accepts either samples or a
    ``(logits, outcomes)`` pair of arrays.
    """
    x, y = _arrays(samples)
    n = len(x)
    if n < 2:
        raise DegenerateData(f"need at least 2 samples, got {n}")
    if y.min() == y.max():
        raise DegenerateData("all samples have the same outcome")
    X = np.column_stack([np.ones(n), x])
    beta = np.zeros(2)
    ll = _penalized_loglik(beta, X, y, ridge)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(X @ beta)
        grad = X.T @ (y - p) - ridge * beta
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        w = p * (1 - p)
        hess = (X * w[:, None]).T @ X + ridge * np.eye(2)
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _penalized_loglik(cand, X, y, ridge)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t /= 2
        beta, ll = cand, ll_new
    else:
        p = sigmoid(X @ beta)
        grad = X.T @ (y - p) - ridge * beta
        converged = bool(np.max(np.abs(grad)) < tol)
    return LogisticModel(float(beta[0]), float(beta[1]), n, converged, it)


@dataclass(frozen=True)
class BootstrapBand:
    grid: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    level: float
    n_boot: int
    n_degenerate: int


def default_logit_grid(samples, n_points: int = 101) -> np.ndarray:
    x, _ = _arrays(samples)
    lo, hi = float(np.min(x)), float(np.max(x))
    if lo == hi:
        lo, hi = lo - 1, hi + 1
    return np.linspace(lo, hi, n_points)


def bootstrap_band(
    samples,
    model_fitter: Callable[..., LogisticModel] = fit_logistic,
    n_boot: int = 1000,
    level: float = 0.90,
    seed: int = 42,
    grid: np.ndarray | None = None,
) -> BootstrapBand:
    """Percentile bootstrap band for the fitted probability curve.

    Replicate ``r`` draws its resample from a generator seeded with
    ``seed + r`` so replicates are independent of evaluation order.
    Degenerate resamples (one outcome only) are skipped.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    x, y = _arrays(samples)
    n = len(x)
    if grid is None:
        grid = default_logit_grid((x, y))
    grid = np.asarray(grid, dtype=float)
    curves = []
    degenerate = 0
    for r in range(n_boot):
        idx = np.random.default_rng(seed + r).integers(0, n, n)
        try:
            model = model_fitter((x[idx], y[idx]))
        except DegenerateData:
            degenerate += 1
            continue
        curves.append(model.predict(grid))
    if degenerate * 2 > n_boot or not curves:
        raise DegenerateData(f"{degenerate} of {n_boot} bootstrap resamples were degenerate")
    curves = np.vstack(curves)
    alpha = (1 - level) / 2
    lower = np.quantile(curves, alpha, axis=0)
    upper = np.quantile(curves, 1 - alpha, axis=0)
    return BootstrapBand(grid, lower, upper, level, n_boot, degenerate)


def threshold_for_probability(model: LogisticModel, p_target: float) -> tuple[float, float]:
    """(logit, confidence) at which the model predicts ``p_target``."""
    if model.slope <= 0:
        raise NonMonotoneModel(f"slope {model.slope} <= 0; correctness does not rise with confidence")
    if not 0 < p_target < 1:
        raise ValueError("p_target must lie in (0, 1)")
    logit_star = (math.log(p_target / (1 - p_target)) - model.intercept) / model.slope
    return logit_star, sigmoid(logit_star)


def round_threshold(confidence: float, mode: str = "none", ndigits: int = 2) -> float:
    """Optional operational rounding of a confidence threshold.

    ``half-up`` rounds to nearest; ``ceil`` rounds up, which keeps the
    correctness probability at or above its target.
    """
    if mode == "none":
        return confidence
    rounding = {"half-up": ROUND_HALF_UP, "ceil": ROUND_CEILING}[mode]
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(float(confidence))).quantize(q, rounding=rounding))


@dataclass(frozen=True)
class CalibrationRow:
    probability_threshold: float
    logit_score: float
    confidence_score: float
    tp_loss_percent: float
    tp_count: int


@dataclass(frozen=True)
class CalibrationTable:
    rows: list[CalibrationRow]
    tp_baseline: int


def tp_loss_table(
    detections: Sequence[Detection],
    gts: Sequence[Annotation],
    model: LogisticModel,
    p_targets: Sequence[float] = DEFAULT_TARGETS,
    iou_min: float = 0.1,
    rounding: str = "none",
) -> CalibrationTable:
    """Share of true positives lost when thresholding at each target's confidence.

    The baseline is the TP count of the unfiltered detections; with no
    baseline TPs every loss is reported as 0.
    """
    tp0 = match_detections(detections, gts, iou_min).tp
    rows = []
    for p in sorted(p_targets):
        logit_star, conf_star = threshold_for_probability(model, p)
        conf_used = round_threshold(conf_star, rounding)
        kept = filter_by_confidence(detections, min(max(conf_used, 0.0), 1.0))
        tp = match_detections(kept, gts, iou_min).tp
        loss = (1 - tp / tp0) * 100 if tp0 else 0.0
        rows.append(CalibrationRow(p, logit_star, conf_used, loss, tp))
    return CalibrationTable(rows, tp0)
