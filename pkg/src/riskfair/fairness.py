"""Group audit metrics: AUC, generalized error rates, F-score and disparity ratios.

Undefined metrics (a group without positives or negatives) are carried as
``None`` and rendered as absent cells, never as zeros.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._backend import kernels

METRICS = ("auc", "gfnr", "gfpr", "f_score")
DEFAULT_EQUITY_THRESHOLD = 0.2


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredGroup:
    name: str
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).ravel()
        y = np.asarray(self.labels, dtype=float).ravel()
        if s.shape != y.shape:
            raise MetricError(f"group {self.name!r}: {s.size} scores but {y.size} labels")
        if s.size and (s.min() < 0 or s.max() > 1 or not np.all(np.isfinite(s))):
            raise MetricError(f"group {self.name!r}: scores must lie in [0, 1]")
        if not np.isin(y, (0.0, 1.0)).all():
            raise MetricError(f"group {self.name!r}: labels must be 0/1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.scores.size

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    def subset(self, mask, name: str | None = None) -> "ScoredGroup":
        return ScoredGroup(name or self.name, self.scores[mask], self.labels[mask])

    def with_scores(self, scores) -> "ScoredGroup":
        return ScoredGroup(self.name, scores, self.labels)


def auc(group: ScoredGroup) -> float:
    """Mann-Whitney probability that a positive outscores a negative (ties 1/2)."""
    if group.n_pos == 0 or group.n_neg == 0:
        raise MetricError(f"AUC undefined for {group.name!r}: needs both classes")
    return float(kernels.weighted_auc(group.scores, group.labels, 1.0 - group.labels))


def gfpr(group: ScoredGroup) -> float:
    """Mean score among negatives."""
    if group.n_neg == 0:
        raise MetricError(f"GFPR undefined for {group.name!r}: no negatives")
    return float(group.scores[group.labels == 0].mean())


def gfnr(group: ScoredGroup) -> float:
    """Mean of one minus the score among positives."""
    if group.n_pos == 0:
        raise MetricError(f"GFNR undefined for {group.name!r}: no positives")
    return float((1.0 - group.scores[group.labels == 1]).mean())


def f1_at(group: ScoredGroup, threshold: float) -> float:
    pred = group.scores >= threshold
    pos = group.labels == 1
    tp = np.sum(pred & pos)
    fp = np.sum(pred & ~pos)
    fn = np.sum(~pred & pos)
    return float(2 * tp / (2 * tp + fp + fn))


def optimal_threshold(reference: ScoredGroup) -> float:
    """Cutoff among the distinct reference scores maximizing F1 (lowest on ties)."""
    if reference.n_pos == 0:
        raise MetricError("threshold selection needs positives in the reference")
    order = np.argsort(-reference.scores, kind="stable")
    s = reference.scores[order]
    y = reference.labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    last = np.r_[s[1:] != s[:-1], True]  # end of each tie block, descending
    cand = s[last]
    f1 = 2 * tp[last] / (tp[last] + fp[last] + reference.n_pos)
    best = f1.max()
    return float(cand[f1 == best].min())


def f_score(group: ScoredGroup, threshold: float | None = None,
            reference: ScoredGroup | None = None) -> tuple[float, float]:
    """F1 with rule ``score >= threshold``; returns ``(f1, threshold)``.

    With no threshold given, the F1-optimal cutoff is chosen on ``reference``
    (default: the group itself).
    """
    if group.n_pos == 0:
        raise MetricError(f"F-score undefined for {group.name!r}: no positives")
    if threshold is None:
        threshold = optimal_threshold(reference if reference is not None else group)
    return f1_at(group, threshold), float(threshold)


# -- reports --------------------------------------------------------------------


@dataclass(frozen=True)
class GroupMetricRow:
    group: str
    n: int
    n_pos: int
    n_neg: int
    auc: float | None
    gfnr: float | None
    gfpr: float | None
    f_score: float | None

    def get(self, metric: str) -> float | None:
        return getattr(self, metric)


def _maybe(fn, *args):
    try:
        return fn(*args)
    except MetricError:
        return None


def metric_row(group: ScoredGroup, threshold: float) -> GroupMetricRow:
    f = _maybe(f_score, group, threshold)
    return GroupMetricRow(group.name, group.n, group.n_pos, group.n_neg,
                          _maybe(auc, group), _maybe(gfnr, group), _maybe(gfpr, group),
                          None if f is None else f[0])


def _ratio(a: float | None, b: float | None) -> float | None:
    if a is None or b is None or b == 0:
        return None
    return a / b


@dataclass(frozen=True)
class SpecResult:
    """Rows for the two sides of one partition, and first/second ratios."""

    spec: str
    first: GroupMetricRow
    second: GroupMetricRow
    ratios: dict
    flags: dict

    @classmethod
    def build(cls, spec: str, first: GroupMetricRow, second: GroupMetricRow, equity_threshold: float):
        ratios = {m: _ratio(first.get(m), second.get(m)) for m in METRICS}
        flags = {m: (r is not None and abs(1.0 - r) > equity_threshold) for m, r in ratios.items()}
        return cls(spec, first, second, ratios, flags)


@dataclass(frozen=True)
class FairnessReport:
    task: str
    model_tag: str
    overall: GroupMetricRow
    specs: tuple[SpecResult, ...]
    threshold: float
    equity_threshold: float = DEFAULT_EQUITY_THRESHOLD
    meta: dict = field(default_factory=dict, compare=False)

    def spec(self, name: str) -> SpecResult:
        for s in self.specs:
            if s.spec == name:
                return s
        raise KeyError(name)


def audit(
    scored: Sequence[tuple[str, ScoredGroup, ScoredGroup]],
    overall: ScoredGroup,
    threshold: float,
    equity_threshold: float = DEFAULT_EQUITY_THRESHOLD,
    task: str = "",
    model_tag: str = "",
) -> FairnessReport:
    """Per-group metrics and ratios for each ``(spec name, first, second)``.

    ``threshold`` is the frozen F-score cutoff (normally selected on
    training data with ``optimal_threshold``).
    """
    results = []
    for spec_name, a, b in scored:
        if a.n == 0 or b.n == 0:
            raise MetricError(f"spec {spec_name!r}: one side of the partition is empty")
        results.append(SpecResult.build(spec_name, metric_row(a, threshold), metric_row(b, threshold),
                                        equity_threshold))
    return FairnessReport(task, model_tag, metric_row(overall, threshold), tuple(results),
                          float(threshold), equity_threshold)


def _fmt(v: float | None, digits: int = 4) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.{digits}f}"


CSV_HEADER = ["task", "model", "spec", "row", "group", "n", "n_pos", "n_neg", *METRICS, "flags"]


def report_rows(report: FairnessReport) -> list[list[str]]:
    """Overall row, then per spec: first group, second group, ratio row."""
    base = [report.task, report.model_tag]
    rows = []

    def grow(spec, r: GroupMetricRow):
        return base + [spec, "group", r.group, str(r.n), str(r.n_pos), str(r.n_neg)] + \
            [_fmt(r.get(m)) for m in METRICS] + [""]

    rows.append(grow("overall", report.overall))
    for s in report.specs:
        rows.append(grow(s.spec, s.first))
        rows.append(grow(s.spec, s.second))
        flagged = ";".join(m for m in METRICS if s.flags[m])
        rows.append(base + [s.spec, "ratio", f"{s.first.group}/{s.second.group}", "", "", ""] +
                    [_fmt(s.ratios[m]) for m in METRICS] + [flagged])
    return rows


def report_to_csv(reports: Sequence[FairnessReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rep in reports:
        w.writerows(report_rows(rep))
    return buf.getvalue()


def _md(v: float | None, flag: bool = False) -> str:
    if v is None:
        return "n/a"
    return f"**{v:.2f}**" if flag else f"{v:.2f}"


def report_to_markdown(reports: Sequence[FairnessReport], title: str = "Fairness audit") -> str:
    """Overall effectiveness table, then groups and ratios interleaved per model.

    Ratio cells outside the equity band are bold.
    """
    out = [f"# {title}", ""]
    meta = reports[0].meta if reports else {}
    for k in sorted(meta):
        out.append(f"- {k}: `{meta[k]}`")
    if meta:
        out.append("")
    out += ["## Overall", "", "| Task | Model | AUC | GFNR | GFPR | F-score | threshold |", "|---|---|---|---|---|---|---|"]
    for r in reports:
        o = r.overall
        out.append(f"| {r.task} | {r.model_tag} | {_md(o.auc)} | {_md(o.gfnr)} | {_md(o.gfpr)} | "
                   f"{_md(o.f_score)} | {r.threshold:.4f} |")
    for r in reports:
        out += ["", f"## {r.task} / {r.model_tag}", "",
                f"Equity band: ratios within 1 +/- {r.equity_threshold:g}.", "",
                "| Group | n | n_pos | n_neg | AUC | GFNR | GFPR |", "|---|---|---|---|---|---|---|"]
        for s in r.specs:
            for g in (s.first, s.second):
                out.append(f"| {g.group} | {g.n} | {g.n_pos} | {g.n_neg} | {_md(g.auc)} | {_md(g.gfnr)} | "
                           f"{_md(g.gfpr)} |")
            out.append(f"| {s.first.group}/{s.second.group} (ratio) | | | | "
                       f"{_md(s.ratios['auc'], s.flags['auc'])} | {_md(s.ratios['gfnr'], s.flags['gfnr'])} | "
                       f"{_md(s.ratios['gfpr'], s.flags['gfpr'])} |")
    return "\n".join(out) + "\n"
