"""``riskfair`` command line: synth, train, audit, mitigate.

Exit codes: 0 success, 1 usage or config error, 2 data validation error,
3 mitigation infeasible for every spec. ``RISKFAIR_LOG_LEVEL`` sets verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .cohort import CohortError, write_cohort
from .fairness import MetricError
from .models import TrainingError, save_model
from .pipeline import ConfigError, RunConfig, run_audit, run_mitigation, write_audit, write_mitigation
from .preprocess import EncodingError, SmoteError
from .synth import TABLE1_TARGETS, GeneratorConfig, generate, validate_marginals

logger = logging.getLogger("riskfair")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3
DATA_ERRORS = (CohortError, EncodingError, SmoteError, TrainingError, MetricError, FileNotFoundError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return d


def _run_config(args) -> RunConfig:
    d = _read_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    paths = dict(d.get("paths", {}))
    for key in ("cohort", "model", "report_dir"):
        v = getattr(args, key, None)
        if v is not None:
            # CLI paths are relative to the working directory, not the config
            paths[key] = str(Path(v).resolve())
    if paths:
        d["paths"] = paths
    return RunConfig.from_dict(d, Path(args.config).parent)


def cmd_synth(args) -> int:
    d = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        d["seed"] = args.seed
    if args.n is not None:
        d["n"] = args.n
    try:
        cfg = GeneratorConfig.from_dict(d)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"generator config: {exc}") from None
    cohort = generate(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_cohort(cohort, out)
    report = validate_marginals(cohort, TABLE1_TARGETS, cfg.grade)
    stem = out.with_suffix("")
    Path(f"{stem}_marginals.csv").write_text(report.to_csv())
    Path(f"{stem}_marginals.txt").write_text(report.to_text())
    print(report.to_text())
    logger.info("wrote %d records to %s", len(cohort), out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    res = run_audit(cfg)
    out = Path(args.out) if args.out else (cfg.path("model") or cfg.path("report_dir") / "model.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    extra = {k: v for k, v in res.model_doc.items() if not k.startswith("_")}
    save_model(out, res.model_doc["_model"], res.model_doc["_encoding"], **extra)
    print(f"model written to {out}")
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _run_config(args)
    res = run_audit(cfg)
    for p in write_audit(res, cfg.path("report_dir")):
        print(p)
    return EXIT_OK


def cmd_mitigate(args) -> int:
    cfg = _run_config(args)
    res = run_audit(cfg)
    out_dir = cfg.path("report_dir")
    write_audit(res, out_dir)
    items = run_mitigation(res)
    for p in write_mitigation(res, items, out_dir):
        print(p)
    if items and all(it.policy is None for it in items):
        print("mitigation infeasible for every group spec", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="riskfair", description="Fairness audit of dropout risk models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic cohort CSV and its marginal report")
    s.add_argument("--config", help="generator config JSON (defaults if omitted)")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--seed", type=int)
    s.add_argument("-n", type=int, help="number of records")
    s.set_defaults(func=cmd_synth)

    for name, func, hlp in (("train", cmd_train, "train and calibrate, write model JSON"),
                            ("audit", cmd_audit, "write the fairness audit (CSV + Markdown)"),
                            ("mitigate", cmd_mitigate, "audit, fit per-spec policies, write before/after")):
        c = sub.add_parser(name, help=hlp)
        c.add_argument("--config", required=True, help="run config JSON")
        c.add_argument("--seed", type=int, help="override the config seed")
        c.add_argument("--cohort", help="override paths.cohort")
        c.add_argument("--report-dir", dest="report_dir", help="override paths.report_dir")
        if name == "train":
            c.add_argument("--out", help="model JSON path (default paths.model)")
        else:
            c.add_argument("--model", help="override paths.model (loaded if it exists)")
        c.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    level = os.environ.get("RISKFAIR_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        for line in getattr(exc, "diagnostics", ())[:20]:
            print(f"  {line}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
