"""Equalize one generalized error rate across two groups without breaking calibration.

The better-off group's calibrated scores are mixed with its trivial
predictor, the constant base rate. That constant is calibrated by
construction, and both generalized rates are linear in the scores, so the
mixing weight has a closed form.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .calibrate import ece
from .fairness import MetricError, ScoredGroup, auc, gfnr, gfpr

TARGET_METRICS = ("gfpr", "gfnr")
MODES = ("randomized", "expected_score")


class InfeasiblePolicyError(ValueError):
    """The target rate cannot be reached by mixing with the trivial predictor."""

    def __init__(self, message: str, achievable: float):
        self.achievable = achievable
        super().__init__(f"{message} (achievable extreme {achievable:.4f})")


@dataclass(frozen=True)
class MitigationPolicy:
    target_metric: str
    degraded_group: str
    alpha: float
    trivial_rate: float
    target_value: float
    mode: str = "randomized"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.target_metric not in TARGET_METRICS:
            raise ValueError(f"target_metric must be one of {TARGET_METRICS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha={self.alpha} outside [0, 1]")
        if not 0.0 <= self.trivial_rate <= 1.0:
            raise ValueError(f"trivial_rate={self.trivial_rate} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MitigationPolicy":
        return cls(**d)

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _metric(name: str):
    return gfpr if name == "gfpr" else gfnr


def fit_policy(group_a: ScoredGroup, group_b: ScoredGroup, target_metric: str = "gfpr",
               mode: str = "randomized", bin_count: int = 10) -> MitigationPolicy:
    """Solve for the mixing weight that lifts the lower rate to the higher one.

    Mixing a fraction ``alpha`` of the degraded group's scores with its base
    rate ``mu`` moves its GFPR linearly toward ``mu`` (GFNR toward
    ``1 - mu``), so ``alpha = (target - m) / (effect - m)``.

    Raises
    ------
    InfeasiblePolicyError
        If the other group's rate lies beyond what mixing can reach.
    MetricError
        If either group lacks one of the classes.
    """
    if target_metric not in TARGET_METRICS:
        raise ValueError(f"target_metric must be one of {TARGET_METRICS}")
    for g in (group_a, group_b):
        if g.n_pos == 0 or g.n_neg == 0:
            raise MetricError(f"group {g.name!r} needs both classes to fit a policy")
    metric = _metric(target_metric)
    ma, mb = metric(group_a), metric(group_b)
    degraded, other = (group_a, group_b) if ma <= mb else (group_b, group_a)
    m_deg, target = min(ma, mb), max(ma, mb)
    mu = float(degraded.labels.mean())
    effect = mu if target_metric == "gfpr" else 1.0 - mu
    meta = {
        "pre_metric": {group_a.name: ma, group_b.name: mb},
        "pre_ece": {g.name: ece(g.scores, g.labels, bin_count) for g in (group_a, group_b)},
    }
    if target == m_deg:
        alpha = 0.0
    elif target > effect:
        raise InfeasiblePolicyError(
            f"{target_metric} of {degraded.name!r} can rise from {m_deg:.4f} only to {effect:.4f}, "
            f"not to {target:.4f}", achievable=effect)
    else:
        alpha = (target - m_deg) / (effect - m_deg)
    return MitigationPolicy(target_metric, degraded.name, float(alpha), mu, float(target), mode, meta)


def apply_policy(policy: MitigationPolicy, scores, seed: int = 0) -> np.ndarray:
    """Mitigated scores for the degraded group.

    ``randomized`` replaces each score by the trivial rate with probability
    alpha; ``expected_score`` returns the mixture's expectation.
    """
    s = np.asarray(scores, dtype=float)
    a, mu = policy.alpha, policy.trivial_rate
    if a == 0.0:
        return s.copy()
    if policy.mode == "expected_score":
        return (1.0 - a) * s + a * mu
    swap = np.random.default_rng(seed).random(s.shape) < a
    return np.where(swap, mu, s)


def apply_to_groups(policy: MitigationPolicy, group_a: ScoredGroup, group_b: ScoredGroup,
                    seed: int = 0) -> tuple[ScoredGroup, ScoredGroup]:
    """Apply to whichever group is degraded; the other passes through untouched."""
    out = []
    for g in (group_a, group_b):
        out.append(g.with_scores(apply_policy(policy, g.scores, seed)) if g.name == policy.degraded_group else g)
    return out[0], out[1]


@dataclass(frozen=True)
class PolicyVerification:
    target_metric: str
    target_values: dict
    target_ratio: float | None
    gap: float
    other_metric: str
    other_values: dict
    auc_after: dict
    ece_before: dict
    ece_after: dict

    def to_dict(self) -> dict:
        return asdict(self)


def verify_policy(policy: MitigationPolicy, group_a_after: ScoredGroup, group_b_after: ScoredGroup,
                  bin_count: int = 10) -> PolicyVerification:
    """Post-mitigation rates, their ratio (first over second) and ECE before/after."""
    metric = _metric(policy.target_metric)
    other_name = "gfnr" if policy.target_metric == "gfpr" else "gfpr"
    other = _metric(other_name)
    ta, tb = metric(group_a_after), metric(group_b_after)

    def safe(fn, g):
        try:
            return fn(g)
        except MetricError:
            return None

    return PolicyVerification(
        target_metric=policy.target_metric,
        target_values={group_a_after.name: ta, group_b_after.name: tb},
        target_ratio=ta / tb if tb else None,
        gap=abs(ta - tb),
        other_metric=other_name,
        other_values={g.name: safe(other, g) for g in (group_a_after, group_b_after)},
        auc_after={g.name: safe(auc, g) for g in (group_a_after, group_b_after)},
        ece_before=dict(policy.meta.get("pre_ece", {})),
        ece_after={g.name: ece(g.scores, g.labels, bin_count) for g in (group_a_after, group_b_after)},
    )
