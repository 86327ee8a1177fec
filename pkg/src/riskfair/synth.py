"""Synthetic cohorts matched to published per-group prevalences and risk rates.

Attributes are drawn independently. Outcomes come from two logistic heads
over ``HEAD_FEATURES``: one for dropout, one for underperformance among
students who did not drop out. Because the generative model is known, the
Bayes-optimal score of every record can be recomputed exactly.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from ._backend import kernels
from .cohort import Cohort, OutcomeTask, StudentRecord

HEAD_FEATURES = ("female", "foreign", "age_over_19", "in_state", "public_hs", "grade_z")
N_COEF = len(HEAD_FEATURES) + 1  # intercept first

# prevalence of the "1" side of each binary head feature
DEFAULT_MARGINALS = {
    "female": 0.09,
    "foreign": 0.12,
    "age_over_19": 0.45,
    "in_state": 0.76,
    "public_hs": 0.42,
}
DEFAULT_YEAR_WEIGHTS = {y: 1.0 / 8 for y in (2009, 2010, 2011, 2012, 2013, 2014, 2016, 2017)}

# Ages for students aged <= 19 at enrollment; older ages are 20 + Geometric.
YOUNG_AGES = (17, 18, 19)
YOUNG_AGE_PROBS = (0.10, 0.50, 0.40)
OLDER_AGE_GEOMETRIC_P = 0.35


class FitError(RuntimeError):
    """Coefficient fitting failed; ``report`` shows achieved vs target rates."""

    def __init__(self, message: str, report: "MarginalReport | None" = None):
        self.report = report
        if report is not None:
            message = message + "\n" + report.to_text()
        super().__init__(message)


# -- configuration ----------------------------------------------------------------


@dataclass(frozen=True)
class GradeDistribution:
    mean: float = 9.0
    sd: float = 1.5
    lo: float = 5.0
    hi: float = 14.0
    decimals: int = 2

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"grade clip bounds must satisfy lo < hi, got ({self.lo}, {self.hi})")
        if not self.sd > 0:
            raise ValueError("grade sd must be positive")


@dataclass(frozen=True)
class OutcomeCoefficients:
    """Logistic weights ``[intercept, *HEAD_FEATURES]`` for both outcome heads."""

    dropout: tuple[float, ...]
    underperform: tuple[float, ...]

    def __post_init__(self):
        for name in ("dropout", "underperform"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != N_COEF or not all(math.isfinite(x) for x in v):
                raise ValueError(f"{name} coefficients need {N_COEF} finite values")
            object.__setattr__(self, name, v)

    def to_dict(self) -> dict:
        return {"dropout": list(self.dropout), "underperform": list(self.underperform)}


# Shipped defaults: binary-attribute weights fitted to the published group
# rates, grade weights steepened until the Bayes-optimal score reaches AUC
# 0.80 for both tasks (reproduce with ``tune_for_bayes_auc``).
DEFAULT_COEFFICIENTS = OutcomeCoefficients(
    dropout=(-0.620877608961905, 0.0, 0.9313884783915682, -0.20255296326524785,
             0.23311661619970891, 0.09586603079640099, -1.3549709022045135),
    underperform=(-1.6580780425312014, 0.0, 0.9174410880183359, -0.6406224632081603,
                  0.12800653068950396, 0.5377823865836717, -0.7431465983390808),
)

# Strong binary-attribute signal with a moderate grade slope: grade groups
# land at 49%/37% dropout, and risk varies enough inside each grade group
# that the low-grade GFPR stays below the high-grade base rate. Mixing the
# high-grade group with its base rate can then close the GFPR gap.
GRADE_DRIVEN_COEFFICIENTS = OutcomeCoefficients(
    dropout=(-2.3039432542960245, 0.0, 4.0, -1.2, 1.6, 2.0, -0.5),
    underperform=DEFAULT_COEFFICIENTS.underperform,
)


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 10_000
    seed: int = 0
    marginals: dict = field(default_factory=lambda: dict(DEFAULT_MARGINALS))
    grade: GradeDistribution = GradeDistribution()
    coefficients: OutcomeCoefficients = DEFAULT_COEFFICIENTS
    year_weights: dict = field(default_factory=lambda: dict(DEFAULT_YEAR_WEIGHTS))

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        missing = set(DEFAULT_MARGINALS) - set(self.marginals)
        if missing:
            raise ValueError(f"missing marginals: {sorted(missing)}")
        for k, p in self.marginals.items():
            if k not in DEFAULT_MARGINALS:
                raise ValueError(f"unknown marginal {k!r}")
            if not 0.0 < p < 1.0:
                raise ValueError(f"marginal {k}={p} must lie in (0, 1)")
        if not self.year_weights:
            raise ValueError("year_weights is empty")
        w = np.array(list(self.year_weights.values()), dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("year_weights must be non-negative and sum to 1")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "marginals": dict(self.marginals),
            "grade": {"mean": self.grade.mean, "sd": self.grade.sd, "lo": self.grade.lo,
                      "hi": self.grade.hi, "decimals": self.grade.decimals},
            "coefficients": self.coefficients.to_dict(),
            "year_weights": {str(k): v for k, v in self.year_weights.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = {"n", "seed", "marginals", "grade", "coefficients", "year_weights"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator config keys: {sorted(unknown)}")
        kw: dict = {}
        if "n" in d:
            kw["n"] = int(d["n"])
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        if "marginals" in d:
            kw["marginals"] = {**DEFAULT_MARGINALS, **d["marginals"]}
        if "grade" in d:
            kw["grade"] = GradeDistribution(**d["grade"])
        if "year_weights" in d:
            kw["year_weights"] = {int(k): float(v) for k, v in d["year_weights"].items()}
        cfg = cls(**kw)
        coef = d.get("coefficients", "default")
        if coef == "default":
            return cfg
        if coef == "table1":
            return replace(cfg, coefficients=fit_outcome_coefficients(TABLE1_TARGETS, cfg))
        if coef == "grade_driven":
            return replace(cfg, coefficients=GRADE_DRIVEN_COEFFICIENTS)
        if isinstance(coef, dict):
            return replace(cfg, coefficients=OutcomeCoefficients(coef["dropout"], coef["underperform"]))
        raise ValueError(f"coefficients must be 'default', 'table1', 'grade_driven' or an object, got {coef!r}")

    @classmethod
    def from_json(cls, path: str | Path) -> "GeneratorConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- targets ------------------------------------------------------------------


@dataclass(frozen=True)
class RiskTarget:
    group: str
    prevalence: float | None = None
    dropout: float | None = None
    dropout_or_underperformance: float | None = None


TABLE1_TARGETS = (
    RiskTarget("female", 0.09, 0.41, 0.54),
    RiskTarget("male", 0.91, 0.43, 0.52),
    RiskTarget("national", 0.88, 0.41, 0.50),
    RiskTarget("foreign", 0.12, 0.58, 0.69),
    RiskTarget("age_le_19", 0.55, 0.44, 0.55),
    RiskTarget("age_gt_19", 0.45, 0.41, 0.48),
    RiskTarget("in_state", 0.76, 0.44, 0.53),
    RiskTarget("out_of_state", 0.24, 0.41, 0.49),
    RiskTarget("public_hs", 0.42, 0.44, 0.55),
    RiskTarget("non_public_hs", 0.58, 0.42, 0.50),
    RiskTarget("grade_low", 0.50, 0.49, 0.59),
    RiskTarget("grade_high", 0.50, 0.37, 0.45),
    RiskTarget("overall", 1.0, 0.43, 0.52),
)

# group -> (head feature column, value of that column inside the group)
_BINARY_GROUPS = {
    "female": (0, 1), "male": (0, 0),
    "foreign": (1, 1), "national": (1, 0),
    "age_gt_19": (2, 1), "age_le_19": (2, 0),
    "in_state": (3, 1), "out_of_state": (3, 0),
    "public_hs": (4, 1), "non_public_hs": (4, 0),
}
_COMPLEMENT = {"female": "male", "foreign": "national", "age_gt_19": "age_le_19",
               "in_state": "out_of_state", "public_hs": "non_public_hs", "grade_low": "grade_high"}
# coefficient index -> the group whose rate that weight is fitted against
WEIGHT_GROUPS = {1: "female", 2: "foreign", 3: "age_gt_19", 4: "in_state", 5: "public_hs", 6: "grade_low"}
GROUP_NAMES = tuple(_BINARY_GROUPS) + ("grade_low", "grade_high", "overall")


def group_mask(name: str, feats: np.ndarray, grade_z_median: float) -> np.ndarray:
    if name == "overall":
        return np.ones(feats.shape[0], dtype=bool)
    if name == "grade_low":
        return feats[:, 5] <= grade_z_median
    if name == "grade_high":
        return feats[:, 5] > grade_z_median
    try:
        col, val = _BINARY_GROUPS[name]
    except KeyError:
        raise ValueError(f"unknown target group {name!r}") from None
    return feats[:, col] == val


# -- features and the population grid -----------------------------------------


def head_features(cohort: Cohort, grade: GradeDistribution) -> np.ndarray:
    """Head-feature matrix of a cohort, columns ordered as ``HEAD_FEATURES``."""
    recs = cohort.records
    out = np.empty((len(recs), len(HEAD_FEATURES)))
    for i, r in enumerate(recs):
        out[i] = (
            r.gender == "female",
            r.nationality == "foreign",
            r.age > 19,
            r.hs_location == "in_state",
            r.hs_type == "public",
            (r.admission_grade - grade.mean) / grade.sd,
        )
    return out


@dataclass(frozen=True)
class PopulationGrid:
    """Weighted atoms reproducing the attribute distribution exactly.

    Binary combinations are enumerated; the clipped-normal grade is
    discretized by midpoint quadrature, with the clip bounds as point masses
    and the population median as a cell boundary.
    """

    feats: np.ndarray
    weights: np.ndarray
    grade_z_median: float


@functools.lru_cache(maxsize=16)
def _grid_cached(marginals: tuple, grade: GradeDistribution, cells: int) -> PopulationGrid:
    m = dict(marginals)
    mu, sd, lo, hi = grade.mean, grade.sd, grade.lo, grade.hi
    zlo, zhi = (lo - mu) / sd, (hi - mu) / sd
    # median of the clipped normal
    zmed = float(np.clip(0.0, zlo, zhi)) if zlo < 0.0 < zhi else (zlo if norm.cdf(zlo) >= 0.5 else zhi)
    edges = np.unique(np.r_[np.linspace(zlo, zmed, cells + 1), np.linspace(zmed, zhi, cells + 1)])
    mids = 0.5 * (edges[:-1] + edges[1:])
    mass = np.diff(norm.cdf(edges))
    gz = np.r_[zlo, mids, zhi]
    gw = np.r_[norm.cdf(zlo), mass, norm.sf(zhi)]
    keep = gw > 0
    gz, gw = gz[keep], gw[keep]
    # point masses at a clip bound belong to the side they sit on
    names = list(DEFAULT_MARGINALS)
    combos = np.array(np.meshgrid(*[[0.0, 1.0]] * len(names), indexing="ij")).reshape(len(names), -1).T
    cw = np.prod(np.where(combos == 1.0, [m[k] for k in names], [1 - m[k] for k in names]), axis=1)
    feats = np.empty((combos.shape[0] * gz.size, len(HEAD_FEATURES)))
    feats[:, :5] = np.repeat(combos, gz.size, axis=0)
    feats[:, 5] = np.tile(gz, combos.shape[0])
    weights = np.repeat(cw, gz.size) * np.tile(gw, combos.shape[0])
    return PopulationGrid(feats, weights, zmed)


def population_grid(config: GeneratorConfig, cells: int = 100) -> PopulationGrid:
    return _grid_cached(tuple(sorted(config.marginals.items())), config.grade, cells)


def _linear(coef: Sequence[float], feats: np.ndarray) -> np.ndarray:
    c = np.asarray(coef, dtype=float)
    return c[0] + feats @ c[1:]


def head_probabilities(coefficients: OutcomeCoefficients, feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(P(dropout), P(underperform | no dropout)) per row of head features."""
    return expit(_linear(coefficients.dropout, feats)), expit(_linear(coefficients.underperform, feats))


def task_probability(coefficients: OutcomeCoefficients, feats: np.ndarray, task: OutcomeTask) -> np.ndarray:
    pd, pu = head_probabilities(coefficients, feats)
    if OutcomeTask(task) is OutcomeTask.DROPOUT:
        return pd
    return pd + (1.0 - pd) * pu


def bayes_scores(cohort: Cohort, config: GeneratorConfig, task: OutcomeTask) -> np.ndarray:
    """True conditional outcome probability of every record under ``config``."""
    return task_probability(config.coefficients, head_features(cohort, config.grade), task)


def bayes_auc(config: GeneratorConfig, task: OutcomeTask, cells: int = 100) -> float:
    """Population AUC of the Bayes-optimal score, by quadrature over the grid."""
    grid = population_grid(config, cells)
    p = task_probability(config.coefficients, grid.feats, task)
    return float(kernels.weighted_auc(p, grid.weights * p, grid.weights * (1.0 - p)))


# -- generation ---------------------------------------------------------------


def generate(config: GeneratorConfig) -> Cohort:
    """Draw a cohort; identical ``config`` (including seed) gives an identical cohort."""
    n = config.n
    rng = np.random.default_rng(config.seed)
    m = config.marginals
    female = rng.random(n) < m["female"]
    foreign = rng.random(n) < m["foreign"]
    older = rng.random(n) < m["age_over_19"]
    in_state = rng.random(n) < m["in_state"]
    public = rng.random(n) < m["public_hs"]
    young_age = rng.choice(np.array(YOUNG_AGES), size=n, p=YOUNG_AGE_PROBS)
    older_age = 19 + rng.geometric(OLDER_AGE_GEOMETRIC_P, size=n)
    age = np.where(older, older_age, young_age)
    g = config.grade
    grade = np.clip(np.round(rng.normal(g.mean, g.sd, size=n), g.decimals), g.lo, g.hi)
    years_list = sorted(config.year_weights)
    year = rng.choice(np.array(years_list), size=n, p=[config.year_weights[y] for y in years_list])
    feats = np.column_stack([female, foreign, older, in_state, public, (grade - g.mean) / g.sd]).astype(float)
    pd, pu = head_probabilities(config.coefficients, feats)
    dropout = rng.random(n) < pd
    underperform = (rng.random(n) < pu) & ~dropout
    records = tuple(
        StudentRecord(
            id=f"S{i:06d}",
            year=int(year[i]),
            gender="female" if female[i] else "male",
            age=int(age[i]),
            nationality="foreign" if foreign[i] else "national",
            hs_location="in_state" if in_state[i] else "out_of_state",
            hs_type="public" if public[i] else "non_public",
            admission_grade=float(grade[i]),
            dropout=int(dropout[i]),
            underperform=int(underperform[i]),
        )
        for i in range(n)
    )
    return Cohort(records, (g.lo, g.hi))


# -- fitting ------------------------------------------------------------------


def _bisect(f, lo: float, hi: float, iters: int = 45) -> float:
    """Root of a monotone ``f`` on [lo, hi]; clamps to the nearer end if none."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        return lo if abs(flo) < abs(fhi) else hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _check_consistency(targets: Sequence[RiskTarget], tol: float = 0.02) -> None:
    by = {t.group: t for t in targets}
    overall = by.get("overall")
    if overall is None:
        return
    for a, b in _COMPLEMENT.items():
        ta, tb = by.get(a), by.get(b)
        if ta is None or tb is None or ta.prevalence is None:
            continue
        p = ta.prevalence
        for q in ("dropout", "dropout_or_underperformance"):
            ra, rb, ro = getattr(ta, q), getattr(tb, q), getattr(overall, q)
            if None in (ra, rb, ro):
                continue
            mix = p * ra + (1 - p) * rb
            if abs(mix - ro) > tol:
                raise FitError(f"targets inconsistent: {a}/{b} {q} rates mix to {mix:.3f}, overall is {ro:.3f}")


def _fit_head(rate_of, coef0: np.ndarray, goals: dict[int, float], overall: float | None,
              bound: float, tol: float, max_sweeps: int) -> tuple[np.ndarray, bool]:
    """Coordinate-wise moment matching for one head.

    ``rate_of(coef, group)`` is the expected rate of a group; ``goals`` maps
    coefficient index -> target rate of its paired group.
    """
    coef = coef0.copy()

    def set_and_rate(k, group, target):
        def f(v):
            coef[k] = v
            return rate_of(coef, group) - target
        return f

    for _ in range(max_sweeps):
        for k, target in goals.items():
            coef[k] = _bisect(set_and_rate(k, WEIGHT_GROUPS[k], target), -bound, bound)
        if overall is not None:
            coef[0] = _bisect(set_and_rate(0, "overall", overall), -bound, bound)
        devs = [abs(rate_of(coef, WEIGHT_GROUPS[k]) - t) for k, t in goals.items()]
        if overall is not None:
            devs.append(abs(rate_of(coef, "overall") - overall))
        if max(devs, default=0.0) <= tol:
            return coef, True
    return coef, False


def fit_outcome_coefficients(
    targets: Sequence[RiskTarget],
    config: GeneratorConfig = GeneratorConfig(),
    fit_gender: bool = False,
    pinned: dict[tuple[str, int], float] | None = None,
    tol: float = 1e-5,
    max_sweeps: int = 200,
    bound: float = 20.0,
) -> OutcomeCoefficients:
    """Fit both outcome heads so group rates match ``targets``.

    Each non-intercept weight is bisected against the rate of its paired group
    (``WEIGHT_GROUPS``), then the intercept against the overall rate; sweeps
    repeat until every fitted rate is within ``tol``. Rates are exact
    expectations over the population grid, so the fit is noise free.

    Gender weights stay at zero unless ``fit_gender``: the female group is
    small and its published rates sit within noise of the male ones.
    ``pinned`` fixes individual weights, keyed by (head, coefficient index).

    Raises
    ------
    FitError
        If targets are inconsistent or the sweeps do not converge.
    """
    _check_consistency(targets)
    grid = population_grid(config)
    by = {t.group: t for t in targets}
    pinned = dict(pinned or {})
    masks = {name: group_mask(name, grid.feats, grid.grade_z_median) for name in GROUP_NAMES}
    sub_f = {name: np.ascontiguousarray(grid.feats[mk]) for name, mk in masks.items()}
    sub_w = {name: grid.weights[mk] / grid.weights[mk].sum() for name, mk in masks.items()}

    def goals_for(head: str, attr: str) -> tuple[dict[int, float], np.ndarray]:
        goals: dict[int, float] = {}
        start = np.zeros(N_COEF)
        for k, grp in WEIGHT_GROUPS.items():
            if (head, k) in pinned:
                start[k] = pinned[(head, k)]
                continue
            if grp == "female" and not fit_gender:
                continue
            t = by.get(grp)
            if t is not None and getattr(t, attr) is not None:
                goals[k] = getattr(t, attr)
        return goals, start

    overall = by.get("overall")
    d_overall = overall.dropout if overall is not None else None
    u_overall = overall.dropout_or_underperformance if overall is not None else None

    def rate_d(coef, grp):
        return float(np.dot(sub_w[grp], expit(_linear(coef, sub_f[grp]))))

    goals, start = goals_for("dropout", "dropout")
    if d_overall is not None:
        start[0] = float(logit(d_overall))
    d_coef, ok_d = _fit_head(rate_d, start, goals, d_overall, bound, tol, max_sweeps)
    sub_pd = {name: expit(_linear(d_coef, f)) for name, f in sub_f.items()}

    def rate_u(coef, grp):
        p = sub_pd[grp]
        return float(np.dot(sub_w[grp], p + (1 - p) * expit(_linear(coef, sub_f[grp]))))

    goals, start = goals_for("underperform", "dropout_or_underperformance")
    if u_overall is not None and d_overall is not None and u_overall > d_overall:
        start[0] = float(logit((u_overall - d_overall) / (1 - d_overall)))
    u_coef, ok_u = _fit_head(rate_u, start, goals, u_overall, bound, tol, max_sweeps)

    coefs = OutcomeCoefficients(tuple(d_coef), tuple(u_coef))
    if not (ok_d and ok_u):
        report = expected_marginals(replace(config, coefficients=coefs), targets)
        raise FitError(f"coefficient fit did not converge in {max_sweeps} sweeps", report)
    return coefs


def tune_for_bayes_auc(
    targets: Sequence[RiskTarget] = TABLE1_TARGETS,
    config: GeneratorConfig = GeneratorConfig(),
    auc_target: float = 0.80,
    grade_bound: float = 6.0,
    iters: int = 40,
) -> OutcomeCoefficients:
    """Steepen the grade weights until both Bayes AUCs equal ``auc_target``.

    The remaining weights and intercepts are refit to ``targets`` at each
    step, leaving out the grade-group targets (the steeper grade weight is
    what moves them). Higher grades lower the risk, so grade weights are
    searched on [-grade_bound, 0].
    """
    no_grade = [t for t in targets if t.group not in ("grade_low", "grade_high")]

    def fit_with(d_grade: float, u_grade: float | None) -> OutcomeCoefficients:
        pins = {("dropout", 6): d_grade}
        if u_grade is not None:
            pins[("underperform", 6)] = u_grade
        else:
            pins[("underperform", 6)] = 0.0
        return fit_outcome_coefficients(no_grade, config, pinned=pins)

    def auc_gap(task, coefs):
        return bayes_auc(replace(config, coefficients=coefs), task) - auc_target

    d_grade = _bisect(lambda g: auc_gap(OutcomeTask.DROPOUT, fit_with(g, None)), -grade_bound, 0.0, iters)
    u_grade = _bisect(lambda g: auc_gap(OutcomeTask.DROPOUT_OR_UNDERPERFORMANCE, fit_with(d_grade, g)),
                      -grade_bound, grade_bound, iters)
    return fit_with(d_grade, u_grade)


# -- validation report ------------------------------------------------------------


@dataclass(frozen=True)
class MarginalEntry:
    group: str
    quantity: str
    target: float
    achieved: float

    @property
    def deviation(self) -> float:
        return abs(self.achieved - self.target)


@dataclass(frozen=True)
class MarginalReport:
    entries: tuple[MarginalEntry, ...]

    @property
    def max_deviation(self) -> float:
        return max((e.deviation for e in self.entries), default=0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "quantity", "target", "achieved", "deviation"])
        for e in self.entries:
            w.writerow([e.group, e.quantity, f"{e.target:.4f}", f"{e.achieved:.4f}", f"{e.deviation:.4f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'group':<14} {'quantity':<28} {'target':>7} {'achieved':>9} {'dev (pp)':>9}"]
        for e in self.entries:
            lines.append(f"{e.group:<14} {e.quantity:<28} {e.target:>7.3f} {e.achieved:>9.3f} "
                         f"{100 * e.deviation:>9.2f}")
        lines.append(f"max deviation: {100 * self.max_deviation:.2f} pp")
        return "\n".join(lines)


_QUANTITIES = ("prevalence", "dropout", "dropout_or_underperformance")


def _report(targets: Iterable[RiskTarget], achieved) -> MarginalReport:
    entries = []
    for t in targets:
        for q in _QUANTITIES:
            goal = getattr(t, q)
            if goal is not None:
                entries.append(MarginalEntry(t.group, q, goal, achieved(t.group, q)))
    return MarginalReport(tuple(entries))


def validate_marginals(cohort: Cohort, targets: Sequence[RiskTarget], grade: GradeDistribution | None = None) -> MarginalReport:
    """Achieved prevalence and risk rates of ``cohort`` next to ``targets``.

    The grade groups split at the cohort's own median grade.
    """
    if not targets:
        return MarginalReport(())
    if len(cohort) == 0:
        raise ValueError("cannot validate marginals of an empty cohort")
    feats = head_features(cohort, grade or GradeDistribution())
    zmed = float(np.median(feats[:, 5]))
    d = OutcomeTask.DROPOUT.labels(cohort).astype(float)
    du = OutcomeTask.DROPOUT_OR_UNDERPERFORMANCE.labels(cohort).astype(float)

    def achieved(group, q):
        mk = group_mask(group, feats, zmed)
        if q == "prevalence":
            return float(mk.mean())
        if not mk.any():
            return float("nan")
        return float((d if q == "dropout" else du)[mk].mean())

    return _report(targets, achieved)


def expected_marginals(config: GeneratorConfig, targets: Sequence[RiskTarget]) -> MarginalReport:
    """Population (infinite-n) version of ``validate_marginals``."""
    grid = population_grid(config)
    pd = task_probability(config.coefficients, grid.feats, OutcomeTask.DROPOUT)
    pdu = task_probability(config.coefficients, grid.feats, OutcomeTask.DROPOUT_OR_UNDERPERFORMANCE)

    def achieved(group, q):
        mk = group_mask(group, grid.feats, grid.grade_z_median)
        w = grid.weights[mk]
        if q == "prevalence":
            return float(w.sum())
        return float(np.dot(w, (pd if q == "dropout" else pdu)[mk]) / w.sum())

    return _report(targets, achieved)
