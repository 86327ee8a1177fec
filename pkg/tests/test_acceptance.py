"""Acceptance gate: nine criteria, each printed as one PASS/FAIL line.

Under pytest the lines are collected and shown in the terminal summary;
``python tests/test_acceptance.py`` prints them directly.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from riskfair import cli
from riskfair._backend import available_backends
from riskfair.calibrate import ece, fit_isotonic
from riskfair.cohort import OutcomeTask, partition
from riskfair.fairness import ScoredGroup, auc, gfnr, gfpr
from riskfair.mitigate import apply_to_groups, fit_policy, verify_policy
from riskfair.models import logistic_loss_grad
from riskfair.pipeline import RunConfig, run_audit, run_mitigation
from riskfair.synth import (TABLE1_TARGETS, GeneratorConfig, bayes_auc, bayes_scores, fit_outcome_coefficients,
                            generate, validate_marginals)

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from tests.oracles import brute_isotonic, central_differences, pairwise_auc, rel_error  # noqa: E402

RESULTS: list[str] = []


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} | {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _pipeline(cohort, seed=7, **over):
    cfg = RunConfig.from_dict({"seed": seed, **over})
    return run_audit(cfg, cohort)


# -- 1 ----------------------------------------------------------------------------


def test_criterion_1_metric_oracles():
    t0 = time.perf_counter()
    hand = [
        ([0.8, 0.3, 0.6, 0.1], [1, 0, 1, 0]),
        ([0.05, 0.95, 0.5, 0.5, 0.2], [0, 1, 1, 0, 0]),
        ([0.0, 1.0, 0.25], [0, 1, 1]),
    ]
    worst = 0.0
    for s, y in hand:
        s, y = np.array(s), np.array(y)
        g = ScoredGroup("h", s, y)
        want_fp = s[y == 0].sum() / (y == 0).sum()
        want_fn = (1 - s[y == 1]).sum() / (y == 1).sum()
        worst = max(worst, abs(gfpr(g) - want_fp), abs(gfnr(g) - want_fn))
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(2, 201))
        s = np.round(rng.random(n), int(rng.integers(1, 4)))
        y = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(float)
        y[:2] = (0, 1)
        mismatches += auc(ScoredGroup("r", s, y)) != pairwise_auc(s, y)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and mismatches == 0 and dt < 5
    record(1, "metric oracles", ok,
           f"max GFPR/GFNR error {worst:.1e} (<=1e-12); AUC mismatches {mismatches}/100; {dt:.2f}s (<5s)")


# -- 2 ----------------------------------------------------------------------------


def test_criterion_2_pava_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 9))
        s = rng.choice(np.round(rng.random(6), 2), size=n)  # ties on purpose
        y = (rng.random(n) < 0.5).astype(float)
        got = fit_isotonic(s, y).apply(s)
        worst = max(worst, float(np.max(np.abs(got - brute_isotonic(s, y)))))
    dt = time.perf_counter() - t0
    record(2, "PAVA oracle", worst <= 2e-3 and dt < 30,
           f"max deviation {worst:.1e} over 200 trials (<=2e-3); {dt:.2f}s (<30s)")


# -- 3 ----------------------------------------------------------------------------


def _kink_free_mlp(rng, X, hidden, margin=1e-3):
    """Parameters with every hidden pre-activation at least ``margin`` from 0."""
    while True:
        W1 = rng.normal(size=(X.shape[1], hidden))
        b1 = rng.normal(size=hidden)
        if np.min(np.abs(X @ W1 + b1)) > margin:
            return W1, b1


def test_criterion_3_gradient_checks():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst_lr = 0.0
    for _ in range(50):
        X = rng.normal(size=(200, 6))
        y = (rng.random(200) < 0.5).astype(float)
        w, b = rng.normal(size=6), np.array([rng.normal()])
        l2 = float(rng.choice([0.0, 1e-4, 1e-2]))
        _, gw, gb = logistic_loss_grad(w, b[0], X, y, l2)
        num = central_differences(lambda: logistic_loss_grad(w, b[0], X, y, l2)[0], [w, b], h=1e-5)
        worst_lr = max(worst_lr, rel_error([gw, [gb]], num))
    worst_mlp = {}
    for k in available_backends():
        worst = 0.0
        for _ in range(50):
            X = rng.normal(size=(100, 6))
            y = (rng.random(100) < 0.5).astype(float)
            W1, b1 = _kink_free_mlp(rng, X, 8)
            w2, b2 = rng.normal(size=8), np.array([rng.normal()])
            l2 = float(rng.choice([0.0, 1e-4, 1e-2]))
            _, *grads = k.mlp_loss_grad(W1, b1, w2, b2[0], X, y, l2)
            num = central_differences(lambda: k.mlp_loss_grad(W1, b1, w2, b2[0], X, y, l2)[0],
                                      [W1, b1, w2, b2])
            worst = max(worst, rel_error(grads, num))
        worst_mlp[k.NAME] = worst
    dt = time.perf_counter() - t0
    ok = worst_lr <= 1e-5 and all(v <= 1e-5 for v in worst_mlp.values()) and dt < 30
    mlp = ", ".join(f"MLP[{k}] {v:.1e}" for k, v in worst_mlp.items())
    record(3, "gradient checks", ok, f"logistic {worst_lr:.1e}, {mlp} (<=1e-5, 50 each); {dt:.2f}s (<30s)")


# -- 4 ----------------------------------------------------------------------------

IN_SCOPE = {
    ("female", "prevalence"), ("foreign", "prevalence"), ("in_state", "prevalence"), ("public_hs", "prevalence"),
    ("foreign", "dropout"), ("foreign", "dropout_or_underperformance"),
    ("national", "dropout"), ("national", "dropout_or_underperformance"),
    ("grade_low", "dropout"), ("grade_low", "dropout_or_underperformance"),
    ("grade_high", "dropout"), ("grade_high", "dropout_or_underperformance"),
    ("overall", "dropout"), ("overall", "dropout_or_underperformance"),
}


def test_criterion_4_generator_fidelity():
    t0 = time.perf_counter()
    base = GeneratorConfig(n=100_000, seed=4)
    cfg = replace(base, coefficients=fit_outcome_coefficients(TABLE1_TARGETS, base))
    report = validate_marginals(generate(cfg), TABLE1_TARGETS, cfg.grade)
    entries = [e for e in report.entries if (e.group, e.quantity) in IN_SCOPE]
    worst = max(entries, key=lambda e: e.deviation)
    dt = time.perf_counter() - t0
    ok = len(entries) == len(IN_SCOPE) and worst.deviation <= 0.02 and dt < 60
    record(4, "generator fidelity", ok,
           f"{len(entries)} in-scope targets, worst {worst.group}/{worst.quantity} "
           f"{100 * worst.deviation:.2f}pp (<=2pp); {dt:.1f}s (<60s)")


# -- 5 ----------------------------------------------------------------------------


def test_criterion_5_calibration_mechanism():
    gen = GeneratorConfig(n=10_000, seed=7)
    cohort = generate(gen)
    # SMOTE interpolation on gender shifts female scores, which no global map undoes;
    # this criterion isolates the calibration step
    iso = _pipeline(cohort, calibration={"kind": "isotonic"}, preprocess={"smote": "none"})
    truth = bayes_scores(iso.test, gen, OutcomeTask.DROPOUT)
    cal = iso.variants[1]
    worst_ece, worst_name = 0.0, ""
    for spec in iso.specs:
        for idx, name in zip(partition(iso.test, spec, cutoff=iso.cutoffs[spec.name]), spec.labels):
            e = ece(cal.test_scores[idx], truth[idx])
            if e > worst_ece:
                worst_ece, worst_name = e, name
    platt = _pipeline(cohort, calibration={"kind": "platt"})
    raw, pc = platt.variants
    y = platt.test_labels
    gaps = [abs(auc(ScoredGroup("all", pc.test_scores, y)) - auc(ScoredGroup("all", raw.test_scores, y)))]
    for spec in platt.specs:
        for idx in partition(platt.test, spec, cutoff=platt.cutoffs[spec.name]):
            gaps.append(abs(auc(ScoredGroup("g", pc.test_scores[idx], y[idx]))
                            - auc(ScoredGroup("g", raw.test_scores[idx], y[idx]))))
    ok = worst_ece <= 0.03 and max(gaps) <= 1e-9
    record(5, "calibration mechanism", ok,
           f"isotonic (no SMOTE) worst per-group ECE vs true probabilities {worst_ece:.4f} "
           f"({worst_name}, <=0.03); "
           f"Platt AUC shift {max(gaps):.1e} over overall + 10 groups (<=1e-9)")


# -- 6 ----------------------------------------------------------------------------


def test_criterion_6_mitigation_exactness():
    gen = GeneratorConfig.from_dict({"n": 20_000, "seed": 6, "coefficients": "grade_driven"})
    cohort = generate(gen)
    s = bayes_scores(cohort, gen, OutcomeTask.DROPOUT)  # calibrated by construction
    y = OutcomeTask.DROPOUT.labels(cohort)
    spec = [sp for sp in RunConfig.from_dict({"seed": 0}).group_specs() if sp.name == "admission_grade"][0]
    ia, ib = partition(cohort, spec, training_reference=cohort)
    a, b = ScoredGroup(spec.labels[0], s[ia], y[ia]), ScoredGroup(spec.labels[1], s[ib], y[ib])

    gaps = {}
    for metric in ("gfpr", "gfnr"):
        pol = fit_policy(a, b, metric, mode="expected_score")
        gaps[metric] = verify_policy(pol, *apply_to_groups(pol, a, b)).gap
    pol = fit_policy(a, b, "gfpr", mode="randomized")
    v = verify_policy(pol, *apply_to_groups(pol, a, b, seed=6))
    ece_rise = max(v.ece_after[g] - v.ece_before[g] for g in v.ece_after)
    ok = max(gaps.values()) <= 1e-9 and 0.95 <= v.target_ratio <= 1.05 and ece_rise <= 0.02
    record(6, "mitigation exactness", ok,
           f"expected_score gap gfpr {gaps['gfpr']:.1e}, gfnr {gaps['gfnr']:.1e} (<=1e-9); "
           f"randomized ratio {v.target_ratio:.4f} (in [0.95,1.05]) at n={a.n}/{b.n}; "
           f"max ECE rise {ece_rise:+.4f} (<=0.02)")


# -- 7 ----------------------------------------------------------------------------


def test_criterion_7_direction_check():
    gen = GeneratorConfig.from_dict({"n": 10_000, "seed": 7, "coefficients": "grade_driven"})
    res = _pipeline(generate(gen), mitigation={"mode": "expected_score"})
    items = [it for it in run_mitigation(res) if it.spec == "admission_grade"]
    parts, ok = [], True
    for it in items:
        pre = it.before.ratios["gfpr"]
        post = it.after.ratios["gfpr"] if it.after else float("nan")
        ok &= pre > 1.2 and 0.9 <= post <= 1.1
        parts.append(f"{it.variant}: {pre:.3f} -> {post:.3f}")
    record(7, "direction check", ok and len(items) == 2,
           "low/high GFPR ratio " + "; ".join(parts) + " (pre >1.2, post in [0.9,1.1])")


# -- 8 ----------------------------------------------------------------------------


def test_criterion_8_end_to_end_plausibility():
    gen = GeneratorConfig(n=10_000, seed=7)
    cohort = generate(gen)
    parts, ok = [], True
    for task in OutcomeTask:
        exact = bayes_auc(gen, task)
        res = _pipeline(cohort, task=task.value)
        y = res.test_labels
        model_auc = auc(ScoredGroup("test", res.variants[0].test_scores, y))
        sample_bayes = auc(ScoredGroup("test", bayes_scores(res.test, gen, task), y))
        ok &= abs(exact - 0.80) <= 0.01 and model_auc >= 0.72 and model_auc <= sample_bayes + 0.01
        parts.append(f"{task.value}: Bayes {exact:.4f} (test-split {sample_bayes:.4f}), MLP {model_auc:.4f}")
    record(8, "end-to-end plausibility", ok, "; ".join(parts) + " (Bayes 0.80+-0.01, MLP >=0.72, <=Bayes+0.01)")


# -- 9 ----------------------------------------------------------------------------


def _full_run(root: Path) -> dict[str, bytes]:
    root.mkdir(parents=True)
    (root / "run.json").write_text(json.dumps({"seed": 7, "paths": {"cohort": "cohort.csv",
                                                                     "report_dir": "reports"}}))
    codes = [cli.main(["synth", "--out", str(root / "cohort.csv"), "--seed", "7", "-n", "10000"]),
             cli.main(["train", "--config", str(root / "run.json"), "--out", str(root / "model.json")]),
             cli.main(["mitigate", "--config", str(root / "run.json")])]
    assert codes == [0, 0, 0], codes
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_determinism_and_speed(tmp_path, capsys):
    t0 = time.perf_counter()
    first = _full_run(tmp_path / "a")
    dt = time.perf_counter() - t0
    second = _full_run(tmp_path / "b")
    capsys.readouterr()
    diff = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    ok = dt < 60 and not diff
    record(9, "pipeline determinism and speed", ok,
           f"synth->train->calibrate->audit->mitigate {dt:.1f}s (<60s); {len(first)} files, "
           f"{len(diff)} differ across reruns")


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted((k, v) for k, v in dict(globals()).items() if k.startswith("test_criterion_")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    class _Cap:
                        def readouterr(self):
                            return None
                    fn(Path(d), _Cap())
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
