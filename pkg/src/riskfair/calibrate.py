"""Monotone score-to-probability maps (Platt, isotonic) and reliability tables."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._backend import kernels


class CalibrationError(ValueError):
    pass


class DegenerateCalibrationWarning(UserWarning):
    """Scores carry no usable positive association with the labels."""


MIN_SLOPE = 1e-12
# Tiny ridge on (a, b): keeps Newton finite on perfectly separated scores.
PLATT_RIDGE = 1e-8


@dataclass(frozen=True)
class PlattMap:
    a: float
    b: float
    degenerate: bool = False

    kind = "platt"

    def __post_init__(self):
        if not self.a > 0:
            raise CalibrationError(f"Platt slope must be positive, got {self.a}")

    def apply(self, scores) -> np.ndarray:
        return expit(self.a * np.asarray(scores, dtype=float) + self.b)

    def to_dict(self) -> dict:
        return {"kind": "platt", "a": self.a, "b": self.b, "degenerate": self.degenerate}


@dataclass(frozen=True)
class IsotonicMap:
    """Right-continuous step function through (breakpoint, value) pairs."""

    breakpoints: np.ndarray
    values: np.ndarray

    kind = "isotonic"

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.shape != v.shape or bp.size == 0:
            raise CalibrationError("breakpoints and values must be equal-length, nonempty vectors")
        if np.any(np.diff(bp) <= 0):
            raise CalibrationError("breakpoints must be strictly ascending")
        if np.any(np.diff(v) < 0) or v.min() < 0 or v.max() > 1:
            raise CalibrationError("values must be non-decreasing and inside [0, 1]")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)

    def apply(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        idx = np.searchsorted(self.breakpoints, s, side="right") - 1
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    def to_dict(self) -> dict:
        return {"kind": "isotonic", "breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}


CalibrationMap = PlattMap | IsotonicMap


def map_from_dict(d: dict) -> CalibrationMap:
    if d["kind"] == "platt":
        return PlattMap(float(d["a"]), float(d["b"]), bool(d.get("degenerate", False)))
    if d["kind"] == "isotonic":
        return IsotonicMap(np.asarray(d["breakpoints"]), np.asarray(d["values"]))
    raise CalibrationError(f"unknown calibration kind {d['kind']!r}")


def _inputs(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if s.shape != y.shape:
        raise CalibrationError("scores and labels differ in length")
    if s.size == 0:
        raise CalibrationError("no samples")
    if not np.all(np.isfinite(s)):
        raise CalibrationError("scores contain non-finite values")
    return s, y


def fit_platt(scores, labels, max_iter: int = 100, tol: float = 1e-10) -> PlattMap:
    """Maximum-likelihood fit of ``sigmoid(a*s + b)`` by damped Newton steps.

    A fit whose slope is not positive (constant scores, or scores inversely
    related to the labels) is replaced by a near-constant map at the base
    rate, flagged ``degenerate`` and reported with a warning.
    """
    s, y = _inputs(scores, labels)
    if np.unique(y).size < 2:
        raise CalibrationError("Platt scaling needs both classes")
    base = float(y.mean())

    def degenerate(reason: str) -> PlattMap:
        warnings.warn(f"near-degenerate Platt fit: {reason}", DegenerateCalibrationWarning, stacklevel=3)
        return PlattMap(MIN_SLOPE, math.log(base / (1 - base)) - MIN_SLOPE * float(s.mean()), degenerate=True)

    if np.ptp(s) == 0.0:
        return degenerate("scores are constant")

    def nll(a, b):
        o = a * s + b
        return float(np.sum(np.maximum(o, 0) + np.log1p(np.exp(-np.abs(o))) - y * o)
                     + 0.5 * PLATT_RIDGE * (a * a + b * b))

    a, b = 1.0, 0.0
    f = nll(a, b)
    for _ in range(max_iter):
        p = expit(a * s + b)
        r = p - y
        g = np.array([np.dot(r, s) + PLATT_RIDGE * a, r.sum() + PLATT_RIDGE * b])
        w = p * (1 - p)
        H = np.array([[np.dot(w, s * s), np.dot(w, s)], [np.dot(w, s), w.sum()]]) + PLATT_RIDGE * np.eye(2)
        step = np.linalg.solve(H, g)
        t = 1.0
        while True:
            na, nb = a - t * step[0], b - t * step[1]
            nf = nll(na, nb)
            if nf <= f or t < 1e-10:
                break
            t *= 0.5
        converged = abs(f - nf) <= tol * max(1.0, abs(f))
        a, b, f = na, nb, nf
        if converged:
            break
    else:
        raise CalibrationError(f"Platt fit did not converge in {max_iter} iterations")
    if not a > MIN_SLOPE:
        return degenerate(f"fitted slope {a:.3g} is not positive")
    return PlattMap(float(a), float(b))


def fit_isotonic(scores, labels) -> IsotonicMap:
    """Least-squares non-decreasing fit by pool-adjacent-violators.

    Tied scores are pooled before the pass. Targets may be any values in
    [0, 1], so a map can be refit on its own output.
    """
    s, y = _inputs(scores, labels)
    if y.min() < 0 or y.max() > 1:
        raise CalibrationError("isotonic targets must lie in [0, 1]")
    order = np.argsort(s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    uniq, start, counts = np.unique(s_sorted, return_index=True, return_counts=True)
    means = np.add.reduceat(y_sorted, start) / counts
    fitted = kernels.pava(means, counts.astype(float))
    return IsotonicMap(uniq, np.clip(fitted, 0.0, 1.0))


def apply(cmap: CalibrationMap, scores) -> np.ndarray:
    return cmap.apply(scores)


def fit(kind: str, scores, labels) -> CalibrationMap:
    if kind == "platt":
        return fit_platt(scores, labels)
    if kind == "isotonic":
        return fit_isotonic(scores, labels)
    raise CalibrationError(f"unknown calibration kind {kind!r}")


# -- reliability ----------------------------------------------------------------


@dataclass(frozen=True)
class ReliabilityBin:
    lo: float
    hi: float
    count: int
    mean_score: float
    positive_rate: float


@dataclass(frozen=True)
class ReliabilityTable:
    bins: tuple[ReliabilityBin, ...]
    ece: float

    @property
    def n(self) -> int:
        return sum(b.count for b in self.bins)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "mean_score", "positive_rate"])
        for b in self.bins:
            w.writerow([f"{b.lo:.4f}", f"{b.hi:.4f}", b.count,
                        "" if b.count == 0 else f"{b.mean_score:.6f}",
                        "" if b.count == 0 else f"{b.positive_rate:.6f}"])
        return buf.getvalue()


def reliability(scores, targets, bin_count: int = 10) -> ReliabilityTable:
    """Equal-width reliability table on [0, 1] and its expected calibration error.

    ``targets`` are usually 0/1 labels; passing true outcome probabilities
    instead measures calibration without label noise.
    """
    if bin_count < 1:
        raise CalibrationError("bin_count must be >= 1")
    s, t = _inputs(scores, targets)
    idx = np.minimum((np.clip(s, 0.0, 1.0) * bin_count).astype(np.int64), bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    ssum = np.bincount(idx, weights=s, minlength=bin_count)
    tsum = np.bincount(idx, weights=t, minlength=bin_count)
    bins = []
    ece = 0.0
    n = s.size
    for i in range(bin_count):
        c = int(counts[i])
        ms = ssum[i] / c if c else float("nan")
        pr = tsum[i] / c if c else float("nan")
        if c:
            ece += c / n * abs(ms - pr)
        bins.append(ReliabilityBin(i / bin_count, (i + 1) / bin_count, c, ms, pr))
    return ReliabilityTable(tuple(bins), float(ece))


def ece(scores, targets, bin_count: int = 10) -> float:
    return reliability(scores, targets, bin_count).ece


# -- per-group maps -----------------------------------------------------------------


@dataclass(frozen=True)
class GroupwiseMap:
    """One calibration map per side of a binary partition."""

    first: CalibrationMap
    second: CalibrationMap

    def apply(self, scores, in_first) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        m = np.asarray(in_first, dtype=bool)
        out = np.empty_like(s)
        out[m] = self.first.apply(s[m])
        out[~m] = self.second.apply(s[~m])
        return out


def fit_groupwise(kind: str, scores, labels, in_first) -> GroupwiseMap:
    s, y = _inputs(scores, labels)
    m = np.asarray(in_first, dtype=bool)
    return GroupwiseMap(fit(kind, s[m], y[m]), fit(kind, s[~m], y[~m]))
