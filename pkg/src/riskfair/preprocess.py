"""Feature encoding and SMOTE oversampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .cohort import Cohort, OutcomeTask


class EncodingError(ValueError):
    pass


class SmoteError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryFeature:
    name: str
    attr: str
    positive: str
    negative: str


@dataclass(frozen=True)
class StandardizedFeature:
    name: str
    attr: str
    mean: float | None = None
    sd: float | None = None


FEATURES = (
    BinaryFeature("female", "gender", "female", "male"),
    BinaryFeature("foreign", "nationality", "foreign", "national"),
    StandardizedFeature("age", "age"),
    BinaryFeature("in_state", "hs_location", "in_state", "out_of_state"),
    BinaryFeature("public_hs", "hs_type", "public", "non_public"),
    StandardizedFeature("admission_grade", "admission_grade"),
)


@dataclass(frozen=True)
class EncodingSchema:
    features: tuple[BinaryFeature | StandardizedFeature, ...]

    def __post_init__(self):
        for f in self.features:
            if isinstance(f, StandardizedFeature) and not (f.sd is not None and f.sd > 0):
                raise EncodingError(f"feature {f.name!r}: standard deviation must be positive")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_dict(self) -> dict:
        out = []
        for f in self.features:
            if isinstance(f, BinaryFeature):
                out.append({"kind": "binary", "name": f.name, "attr": f.attr,
                            "positive": f.positive, "negative": f.negative})
            else:
                out.append({"kind": "standardized", "name": f.name, "attr": f.attr, "mean": f.mean, "sd": f.sd})
        return {"features": out}

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingSchema":
        feats = []
        for f in d["features"]:
            kind = f["kind"]
            args = {k: v for k, v in f.items() if k != "kind"}
            feats.append(BinaryFeature(**args) if kind == "binary" else StandardizedFeature(**args))
        return cls(tuple(feats))


@dataclass(frozen=True)
class FeatureMatrix:
    """Encoded rows and labels. Synthetic rows, if any, follow the originals."""

    X: np.ndarray
    y: np.ndarray
    encoding: EncodingSchema
    n_synthetic: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.encoding.features):
            raise EncodingError(f"matrix shape {X.shape} does not match {len(self.encoding.features)} features")
        if y.shape != (X.shape[0],):
            raise EncodingError("row and label counts differ")
        if not np.all(np.isfinite(X)):
            raise EncodingError("matrix has non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_original(self) -> int:
        return self.X.shape[0] - self.n_synthetic


def fit_schema(cohort: Cohort) -> EncodingSchema:
    """Fit standardization statistics on ``cohort`` (population sd)."""
    feats = []
    for f in FEATURES:
        if isinstance(f, StandardizedFeature):
            vals = cohort.column(f.attr).astype(float) if len(cohort) else np.array([])
            sd = float(vals.std()) if vals.size else 0.0
            if not sd > 0:
                raise EncodingError(f"feature {f.name!r} is constant on the fitting cohort (sd=0)")
            feats.append(StandardizedFeature(f.name, f.attr, float(vals.mean()), sd))
        else:
            feats.append(f)
    return EncodingSchema(tuple(feats))


def encode(cohort: Cohort, task: OutcomeTask, schema: EncodingSchema | None = None) -> FeatureMatrix:
    """Encode a cohort. ``schema=None`` fits a fresh schema on ``cohort`` itself."""
    if schema is None:
        schema = fit_schema(cohort)
    n = len(cohort)
    X = np.empty((n, len(schema.features)))
    for j, f in enumerate(schema.features):
        vals = cohort.column(f.attr) if n else np.array([])
        if isinstance(f, BinaryFeature):
            X[:, j] = vals == f.positive
        else:
            X[:, j] = (vals.astype(float) - f.mean) / f.sd
    return FeatureMatrix(X, OutcomeTask(task).labels(cohort).astype(float) if n else np.zeros(0), schema)


def decode_binary(matrix: FeatureMatrix) -> list[dict[str, str]]:
    """Recover the categorical attribute values from the binary columns."""
    cols = [(j, f) for j, f in enumerate(matrix.encoding.features) if isinstance(f, BinaryFeature)]
    return [{f.attr: (f.positive if row[j] == 1.0 else f.negative) for j, f in cols} for row in matrix.X]


# -- SMOTE --------------------------------------------------------------------


@dataclass(frozen=True)
class ByLabel:
    value: float = 1.0


@dataclass(frozen=True)
class ByColumn:
    column: int | str
    value: float = 1.0


def _interpolate(P: np.ndarray, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points on segments from random rows of ``P`` to one of their k-NN.

    Draw order is fixed: seed rows, then neighbor ranks, then the
    interpolation fractions.
    """
    if P.shape[0] <= k:
        raise SmoteError(f"need more than k={k} minority rows, have {P.shape[0]}")
    nn = kernels.knn_indices(P, k)
    seeds = rng.integers(0, P.shape[0], size=count)
    ranks = rng.integers(0, k, size=count)
    lam = rng.random(count)
    base = P[seeds]
    return base + lam[:, None] * (P[nn[seeds, ranks]] - base)


def smote(
    matrix: FeatureMatrix,
    minority: ByLabel | ByColumn = ByLabel(1.0),
    k: int = 5,
    target_ratio: float = 1.0,
    seed: int = 0,
) -> FeatureMatrix:
    """Append synthetic minority rows until minority/majority reaches ``target_ratio``.

    With ``ByColumn`` the minority is a subgroup defined by a feature value
    (e.g. female=1 to correct gender imbalance); it is oversampled separately
    within each label so the subgroup keeps its outcome rate. Synthetic rows
    copy the label of their seed row.
    """
    if k < 1:
        raise SmoteError("k must be >= 1")
    X, y = matrix.X, matrix.y
    if isinstance(minority, ByLabel):
        mask = y == minority.value
    else:
        col = minority.column if isinstance(minority.column, int) else matrix.encoding.index(minority.column)
        mask = X[:, col] == minority.value
    n_min = int(mask.sum())
    n_maj = int((~mask).sum())
    if n_min == 0:
        raise SmoteError("minority set is empty")
    if n_min <= k:
        raise SmoteError(f"minority set has {n_min} rows, needs more than k={k}")
    if n_maj == 0:
        raise SmoteError("majority set is empty")
    if target_ratio < n_min / n_maj - 1e-12:
        raise SmoteError(f"target ratio {target_ratio} is below the current ratio {n_min / n_maj:.4f}")
    n_new = int(round(target_ratio * n_maj)) - n_min
    if n_new <= 0:
        return matrix

    rng = np.random.default_rng(seed)
    if isinstance(minority, ByLabel):
        new_X = _interpolate(X[mask], k, n_new, rng)
        new_y = np.full(n_new, float(minority.value))
    else:
        labels = np.unique(y[mask])
        sizes = np.array([(y[mask] == lab).sum() for lab in labels])
        quota = n_new * sizes / sizes.sum()
        alloc = np.floor(quota).astype(int)
        short = n_new - alloc.sum()
        alloc[np.argsort(-(quota - alloc), kind="stable")[:short]] += 1
        parts_X, parts_y = [], []
        for lab, cnt in zip(labels, alloc):
            if cnt == 0:
                continue
            parts_X.append(_interpolate(X[mask & (y == lab)], k, int(cnt), rng))
            parts_y.append(np.full(int(cnt), lab))
        new_X = np.vstack(parts_X)
        new_y = np.concatenate(parts_y)
    return FeatureMatrix(
        np.vstack([X, new_X]), np.concatenate([y, new_y]), matrix.encoding, matrix.n_synthetic + n_new
    )
