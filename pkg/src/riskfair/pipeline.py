"""End-to-end run: cohort -> split -> encode/SMOTE -> train -> calibrate -> audit -> mitigate."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import calibrate as cal
from .cohort import (Cohort, GroupSpec, LoadFilters, OutcomeTask, default_group_specs, load_cohort, partition,
                     temporal_split)
from .fairness import (METRICS, FairnessReport, ScoredGroup, SpecResult, audit, metric_row, optimal_threshold,
                       report_to_csv, report_to_markdown)
from .mitigate import InfeasiblePolicyError, MitigationPolicy, apply_to_groups, fit_policy, verify_policy
from .models import TrainConfig, load_model, model_from_dict, predict_proba, save_model, train_logistic, train_mlp
from .preprocess import ByColumn, ByLabel, EncodingSchema, FeatureMatrix, encode, smote

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


DEFAULT_RUN_CONFIG = {
    "seed": 0,
    "paths": {"cohort": "cohort.csv", "schema": None, "report_dir": "reports", "model": None},
    "task": "dropout",
    "train_years": [2009, 2010, 2011, 2012, 2013],
    "test_years": [2014, 2016, 2017],
    "filters": {"drop_missing_grade": False, "drop_missing_outcome": False, "drop_no_first_trimester": False},
    "group_specs": "default",
    "preprocess": {"smote": "by-column", "smote_column": "female", "smote_value": 1.0, "k": 5,
                   "target_ratio": 1.0},
    "model": {"family": "mlp", "train": {}},
    "calibration": {"kind": "platt", "per_group": None, "bins": 10},
    "mitigation": {"target_metric": "gfpr", "mode": "randomized", "fit_on": "train"},
    "equity_threshold": 0.2,
}


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where}{k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("train",):
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "RunConfig":
        if "seed" not in d:
            raise ConfigError("config must set 'seed'")
        cfg = cls(_merge(DEFAULT_RUN_CONFIG, d), Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d, path.parent)

    def validate(self) -> None:
        r = self.raw
        try:
            OutcomeTask(r["task"])
        except ValueError:
            raise ConfigError(f"unknown task {r['task']!r}") from None
        if set(r["train_years"]) & set(r["test_years"]):
            raise ConfigError("train_years and test_years overlap")
        if r["preprocess"]["smote"] not in ("none", "by-label", "by-column"):
            raise ConfigError("preprocess.smote must be none, by-label or by-column")
        if r["model"]["family"] not in ("mlp", "logistic"):
            raise ConfigError("model.family must be mlp or logistic")
        if r["calibration"]["kind"] not in ("platt", "isotonic"):
            raise ConfigError("calibration.kind must be platt or isotonic")
        if r["mitigation"]["target_metric"] not in ("gfpr", "gfnr"):
            raise ConfigError("mitigation.target_metric must be gfpr or gfnr")
        if r["mitigation"]["mode"] not in ("randomized", "expected_score"):
            raise ConfigError("mitigation.mode must be randomized or expected_score")
        if r["mitigation"]["fit_on"] not in ("train", "test"):
            raise ConfigError("mitigation.fit_on must be train or test")
        try:
            self.train_config()
            self.group_specs()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None

    def path(self, key: str) -> Path | None:
        p = self.raw["paths"].get(key)
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def task(self) -> OutcomeTask:
        return OutcomeTask(self.raw["task"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{"seed": self.seed, **self.raw["model"]["train"]})

    def group_specs(self) -> list[GroupSpec]:
        gs = self.raw["group_specs"]
        if gs == "default":
            return default_group_specs()
        return [GroupSpec.from_dict(d) for d in gs]

    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# -- audit --------------------------------------------------------------------


@dataclass
class Variant:
    """One scoring of the cohort: raw model output or a calibrated version."""

    tag: str
    train_scores: np.ndarray
    test_scores: np.ndarray
    threshold: float


@dataclass
class AuditResult:
    config: RunConfig
    train: Cohort
    test: Cohort
    train_labels: np.ndarray
    test_labels: np.ndarray
    specs: list[GroupSpec]
    cutoffs: dict
    variants: list[Variant]
    reports: list[FairnessReport]
    model_doc: dict = field(default_factory=dict)

    def split_groups(self, spec: GroupSpec, variant: Variant, side: str) -> tuple[ScoredGroup, ScoredGroup]:
        cohort = self.train if side == "train" else self.test
        scores = variant.train_scores if side == "train" else variant.test_scores
        labels = self.train_labels if side == "train" else self.test_labels
        ia, ib = partition(cohort, spec, cutoff=self.cutoffs[spec.name])
        a, b = spec.labels
        return ScoredGroup(a, scores[ia], labels[ia]), ScoredGroup(b, scores[ib], labels[ib])


def _oversample(m: FeatureMatrix, cfg: RunConfig) -> FeatureMatrix:
    p = cfg.raw["preprocess"]
    if p["smote"] == "none":
        return m
    sel = ByLabel(1.0) if p["smote"] == "by-label" else ByColumn(p["smote_column"], float(p["smote_value"]))
    return smote(m, sel, int(p["k"]), float(p["target_ratio"]), cfg.seed)


def _train(m: FeatureMatrix, cfg: RunConfig):
    tc = cfg.train_config()
    return train_mlp(m, tc) if cfg.raw["model"]["family"] == "mlp" else train_logistic(m, tc)


def run_audit(cfg: RunConfig, cohort: Cohort | None = None) -> AuditResult:
    """Train (or load), calibrate, and audit the raw and calibrated scores on the test years."""
    if cohort is None:
        cohort_path = cfg.path("cohort")
        if cohort_path is None or not cohort_path.exists():
            raise FileNotFoundError(f"cohort file not found: {cohort_path}")
        schema_path = cfg.path("schema")
        cohort = load_cohort(cohort_path, schema_path, LoadFilters(**cfg.raw["filters"]))
    task = cfg.task
    train, test = temporal_split(cohort, cfg.raw["train_years"], cfg.raw["test_years"])
    m_train = encode(train, task)
    m_test = encode(test, task, m_train.encoding)

    model_path = cfg.path("model")
    if model_path is not None and model_path.exists():
        model, doc = load_model(model_path)
        schema = EncodingSchema.from_dict(doc["encoding"])
        if schema != m_train.encoding:
            logger.warning("loaded model was encoded with different statistics; re-encoding with them")
            m_train = encode(train, task, schema)
            m_test = encode(test, task, schema)
        logger.info("loaded model from %s", model_path)
    else:
        aug = _oversample(m_train, cfg)
        logger.info("training %s on %d rows (%d synthetic)", cfg.raw["model"]["family"], len(aug), aug.n_synthetic)
        model = _train(aug, cfg)

    raw_train = predict_proba(model, m_train)
    raw_test = predict_proba(model, m_test)

    specs = cfg.group_specs()
    cutoffs = {s.name: s.resolve_cutoff(train) for s in specs}

    ccfg = cfg.raw["calibration"]
    per_group = ccfg.get("per_group")
    if per_group:
        spec = next((s for s in specs if s.name == per_group), None)
        if spec is None:
            raise ConfigError(f"calibration.per_group names unknown spec {per_group!r}")
        in_tr = np.zeros(len(train), bool)
        in_tr[partition(train, spec, cutoff=cutoffs[spec.name])[0]] = True
        in_te = np.zeros(len(test), bool)
        in_te[partition(test, spec, cutoff=cutoffs[spec.name])[0]] = True
        gmap = cal.fit_groupwise(ccfg["kind"], raw_train, m_train.y, in_tr)
        cal_train, cal_test = gmap.apply(raw_train, in_tr), gmap.apply(raw_test, in_te)
        cal_doc = {"per_group": per_group, "first": gmap.first.to_dict(), "second": gmap.second.to_dict()}
    else:
        cmap = cal.fit(ccfg["kind"], raw_train, m_train.y)
        cal_train, cal_test = cmap.apply(raw_train), cmap.apply(raw_test)
        cal_doc = cmap.to_dict()

    family = cfg.raw["model"]["family"].upper()
    variants = []
    for tag, s_tr, s_te in ((family, raw_train, raw_test), (f"{family} calibrated", cal_train, cal_test)):
        thr = optimal_threshold(ScoredGroup("train", s_tr, m_train.y))
        variants.append(Variant(tag, s_tr, s_te, thr))

    res = AuditResult(cfg, train, test, m_train.y, m_test.y, specs, cutoffs, variants, [])
    meta = {"config_sha256": cfg.digest(), "seed": cfg.seed, "n_train": len(train), "n_test": len(test)}
    for v in variants:
        scored = [(s.name, *res.split_groups(s, v, "test")) for s in specs]
        rep = audit(scored, ScoredGroup("Overall", v.test_scores, m_test.y), v.threshold,
                    cfg.raw["equity_threshold"], task.value, v.tag)
        rep.meta.update(meta)
        res.reports.append(rep)
    res.model_doc = {
        "task": task.value,
        "calibration": cal_doc,
        "thresholds": {v.tag: v.threshold for v in variants},
        "cutoffs": cutoffs,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
    }
    res.model_doc["_model"] = model
    res.model_doc["_encoding"] = m_train.encoding
    return res


def write_audit(res: AuditResult, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "audit.csv", out_dir / "audit.md", out_dir / "model.json"]
    paths[0].write_text(report_to_csv(res.reports))
    paths[1].write_text(report_to_markdown(res.reports, "Fairness audit"))
    extra = {k: v for k, v in res.model_doc.items() if not k.startswith("_")}
    save_model(paths[2], res.model_doc["_model"], res.model_doc["_encoding"], **extra)
    return paths


# -- mitigation -----------------------------------------------------------------


@dataclass
class SpecMitigation:
    variant: str
    spec: str
    before: SpecResult
    after: SpecResult | None
    policy: MitigationPolicy | None
    verification: dict | None
    error: str | None = None


def _policy_seed(seed: int, vi: int, si: int) -> int:
    return int(np.random.SeedSequence((seed, vi, si)).generate_state(1)[0])


def run_mitigation(res: AuditResult) -> list[SpecMitigation]:
    """Fit, apply and verify one policy per (variant, spec), each independently."""
    cfg = res.config
    mc = cfg.raw["mitigation"]
    out = []
    for vi, (variant, report) in enumerate(zip(res.variants, res.reports)):
        for si, spec in enumerate(res.specs):
            before = report.spec(spec.name)
            test_a, test_b = res.split_groups(spec, variant, "test")
            fit_a, fit_b = res.split_groups(spec, variant, mc["fit_on"])
            try:
                policy = fit_policy(fit_a, fit_b, mc["target_metric"], mc["mode"], cfg.raw["calibration"]["bins"])
            except (InfeasiblePolicyError, ValueError) as exc:
                logger.warning("%s / %s: %s", variant.tag, spec.name, exc)
                out.append(SpecMitigation(variant.tag, spec.name, before, None, None, None, str(exc)))
                continue
            after_a, after_b = apply_to_groups(policy, test_a, test_b, _policy_seed(cfg.seed, vi, si))
            ver = verify_policy(policy, after_a, after_b, cfg.raw["calibration"]["bins"]).to_dict()
            after = SpecResult.build(spec.name, metric_row(after_a, variant.threshold),
                                     metric_row(after_b, variant.threshold), cfg.raw["equity_threshold"])
            out.append(SpecMitigation(variant.tag, spec.name, before, after, policy, ver))
    return out


def _f(v, d=4):
    return "" if v is None else f"{v:.{d}f}"


def mitigation_to_csv(res: AuditResult, items: list[SpecMitigation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "model", "spec", "row", "group", "stage", *METRICS, "alpha", "degraded_group", "status"])
    task = res.config.task.value
    for it in items:
        for stage, sr in (("before", it.before), ("after", it.after)):
            if sr is None:
                continue
            alpha = _f(it.policy.alpha) if it.policy and stage == "after" else ""
            deg = it.policy.degraded_group if it.policy and stage == "after" else ""
            for g in (sr.first, sr.second):
                w.writerow([task, it.variant, it.spec, "group", g.group, stage, *[_f(g.get(m)) for m in METRICS],
                            alpha, deg, "ok"])
            w.writerow([task, it.variant, it.spec, "ratio", f"{sr.first.group}/{sr.second.group}", stage,
                        *[_f(sr.ratios[m]) for m in METRICS], alpha, deg, "ok"])
        if it.error:
            w.writerow([task, it.variant, it.spec, "status", "", "after", "", "", "", "", "", "",
                        "infeasible: " + it.error])
    return buf.getvalue()


def mitigation_to_markdown(res: AuditResult, items: list[SpecMitigation]) -> str:
    cfg = res.config
    mc = cfg.raw["mitigation"]
    eq = cfg.raw["equity_threshold"]
    lines = ["# Mitigation report", "",
             f"- config_sha256: `{cfg.digest()}`", f"- seed: `{cfg.seed}`",
             f"- target metric: `{mc['target_metric']}`, mode: `{mc['mode']}`, policies fit on: `{mc['fit_on']}`",
             "- each group spec is mitigated independently; effects of overlapping specs are not combined", ""]

    def cell(v, flag=False):
        if v is None:
            return "n/a"
        return f"**{v:.2f}**" if flag else f"{v:.2f}"

    variants = list(dict.fromkeys(it.variant for it in items))
    for var in variants:
        lines += [f"## {cfg.task.value} / {var}", "",
                  "| Group | AUC before | GFNR before | GFPR before | AUC after | GFNR after | GFPR after | alpha |",
                  "|---|---|---|---|---|---|---|---|"]
        for it in (i for i in items if i.variant == var):
            b, a = it.before, it.after
            alpha = f"{it.policy.alpha:.3f}" if it.policy else "infeasible"
            for gb, ga in ((b.first, a.first if a else None), (b.second, a.second if a else None)):
                mark = " (degraded)" if it.policy and it.policy.degraded_group == gb.group and it.policy.alpha > 0 else ""
                lines.append(f"| {gb.group}{mark} | {cell(gb.auc)} | {cell(gb.gfnr)} | {cell(gb.gfpr)} | "
                             f"{cell(ga.auc if ga else None)} | {cell(ga.gfnr if ga else None)} | "
                             f"{cell(ga.gfpr if ga else None)} | |")
            rb = b.ratios
            ra = a.ratios if a else {m: None for m in METRICS}
            fa = a.flags if a else {m: False for m in METRICS}
            lines.append(f"| {b.first.group}/{b.second.group} (ratio) | {cell(rb['auc'], b.flags['auc'])} | "
                         f"{cell(rb['gfnr'], b.flags['gfnr'])} | {cell(rb['gfpr'], b.flags['gfpr'])} | "
                         f"{cell(ra['auc'], fa['auc'])} | {cell(ra['gfnr'], fa['gfnr'])} | "
                         f"{cell(ra['gfpr'], fa['gfpr'])} | {alpha} |")
        errs = [i for i in items if i.variant == var and i.error]
        if errs:
            lines.append("")
            for i in errs:
                lines.append(f"- {i.spec}: {i.error}")
        lines.append("")
    lines.append(f"Ratios outside 1 +/- {eq:g} are bold.")
    return "\n".join(lines) + "\n"


def write_mitigation(res: AuditResult, items: list[SpecMitigation], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    pol_dir = out_dir / "policies"
    pol_dir.mkdir(exist_ok=True)
    paths = [out_dir / "mitigation.csv", out_dir / "mitigation.md"]
    paths[0].write_text(mitigation_to_csv(res, items))
    paths[1].write_text(mitigation_to_markdown(res, items))
    for it in items:
        if it.policy is None:
            continue
        slug = it.variant.lower().replace(" ", "_")
        doc = {"policy": it.policy.to_dict(), "verification": it.verification, "spec": it.spec,
               "model": it.variant, "config_sha256": res.config.digest(), "seed": res.config.seed}
        p = pol_dir / f"{slug}__{it.spec}.json"
        p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        paths.append(p)
    return paths
