"""Command-line entry point: ingest, synth, extract, evaluate, ablate, report.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .ablation import correlation_table, group_ablation, leave_one_out, single_feature, write_ablation_csv
from .cache import FeatureCache
from .dataset import TASKS, Dataset, compute_stats, load_csv, load_jsonl, load_mapping
from .errors import HalomisError, RecordError
from .evaluation.cv import CSV_FIELDS, PIPELINES, run_cv, write_results_csv
from .llm import BackendConfig, make_backend
from .ml import FAMILIES, ClassifierSpec
from .pipeline import build_feature_table, extract_dataset
from .prompts import TEMPLATE_VERSION

log = logging.getLogger("halomis")

CACHE_FILE = "features.jsonl"
RESULTS_FILE = "results.csv"
REPORT_FILE = "report.md"
DEFAULTS = {
    "task": "both",
    "pipeline": ["judge_only", "features_ml"],
    "families": ["logistic"],
    "k": 5,
    "seed": 42,
    "cache_dir": "cache",
    "out_dir": "results",
    "few_shot_k": 0,
    "workers": 1,
    "multi_backend": [],
    "binary_logit": False,
    "kind": "leave_one_out",
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _resolve(args) -> argparse.Namespace:
    """Flags override the run file, which overrides built-in defaults."""
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read run config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("run config must be a JSON object")
        base = Path(args.config).parent
        for key in ("dataset", "backend", "cache_dir", "out_dir", "exemplars"):
            if isinstance(file_cfg.get(key), str):
                file_cfg[key] = str(base / file_cfg[key])
        if "multi_backend" in file_cfg:
            file_cfg["multi_backend"] = [str(base / p) for p in file_cfg["multi_backend"]]
    for key, value in vars(args).items():
        if value is None:
            value = file_cfg.get(key, DEFAULTS.get(key))
        setattr(args, key, value)
    for key in ("pipeline", "families"):
        if isinstance(getattr(args, key, None), str):
            setattr(args, key, [getattr(args, key)])
    bad = [p for p in getattr(args, "pipeline", None) or () if p not in PIPELINES]
    if bad:
        raise UsageError(f"unknown pipeline(s) {bad}; choose from {list(PIPELINES)}")
    bad = [f for f in getattr(args, "families", None) or () if f not in FAMILIES]
    if bad:
        raise UsageError(f"unknown famil(ies) {bad}; choose from {list(FAMILIES)}")
    if getattr(args, "task", None) is not None and args.task not in TASKS + ("both",):
        raise UsageError(f"task must be one of hal, omis, both; got {args.task!r}")
    if getattr(args, "k", None) is not None and args.k < 2:
        raise UsageError("k must be >= 2")
    return args


def _tasks(args):
    return TASKS if args.task == "both" else (args.task,)


def _require(args, *names):
    for name in names:
        if not getattr(args, name, None):
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _read_dataset(path) -> Dataset:
    if not Path(path).exists():
        raise UsageError(f"dataset {path} does not exist")
    ds = load_jsonl(path)
    if ds.issues:
        for issue in ds.issues:
            print(f"{path}: {issue}", file=sys.stderr)
        raise UsageError(f"{len(ds.issues)} invalid records in {path}; run `halomis ingest` to diagnose")
    return ds


def load_backend(path):
    """Backend from a JSON config; mock configs may name a ``planted`` values file."""
    if not Path(path).exists():
        raise UsageError(f"backend config {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    planted_path = doc.pop("planted", None)
    try:
        config = BackendConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    kwargs = {}
    if planted_path is not None:
        if config.kind != "mock":
            raise UsageError(f"{path}: 'planted' is only valid for mock backends")
        with open(Path(path).parent / planted_path, encoding="utf-8") as fh:
            kwargs["planted"] = json.load(fh)
    return make_backend(config, **kwargs)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _provenance(args, backend, multi) -> dict:
    """Resolved run settings embedded in every report (no paths, no clock)."""
    return {
        "dataset_sha256": _file_digest(args.dataset),
        "backend": backend.config.to_dict(),
        "multi_backends": [b.config.to_dict() for b in multi],
        "task": args.task,
        "k": args.k,
        "seed": args.seed,
        "few_shot_k": args.few_shot_k,
        "binary_logit": bool(args.binary_logit),
        "template_version": TEMPLATE_VERSION,
        "halomis_version": __version__,
    }


def _features(args, dataset):
    _require(args, "backend")
    backend = load_backend(args.backend)
    multi = [load_backend(p) for p in args.multi_backend]
    cache = FeatureCache(Path(args.cache_dir) / CACHE_FILE)
    table = build_feature_table(dataset, cache, backend.backend_id, [b.backend_id for b in multi],
                                args.binary_logit, args.few_shot_k)
    return table, backend, multi


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args) -> int:
    _require(args, "dataset")
    path = Path(args.dataset)
    if not path.exists():
        raise UsageError(f"dataset {path} does not exist")
    if path.suffix.lower() == ".csv":
        mapping = load_mapping(args.mapping) if args.mapping else {}
        ds = load_csv(path, mapping, source=args.source or "kaggle")
    else:
        ds = load_jsonl(path)
    for issue in ds.issues:
        print(f"{path}: {issue}", file=sys.stderr)
    if ds.issues:
        print(f"{len(ds.issues)} invalid records; nothing written", file=sys.stderr)
        return 2
    print(compute_stats(ds).format())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        ds.write_jsonl(args.out)
        print(f"wrote {len(ds)} records to {args.out}")
    return 0


def cmd_synth(args) -> int:
    from .synthetic import make_planted

    _require(args, "out")
    data = make_planted(n=args.n, pos_rate=args.pos_rate, margin=args.margin, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.dataset.write_jsonl(out / "dataset.jsonl")
    with open(out / "planted.json", "w", encoding="utf-8") as fh:
        json.dump(data.planted, fh, sort_keys=True)
    with open(out / "backend.json", "w", encoding="utf-8") as fh:
        json.dump({"kind": "mock", "mock_seed": args.seed, "planted": "planted.json"}, fh, sort_keys=True)
    print(compute_stats(data.dataset).format())
    print(f"wrote dataset.jsonl, planted.json and backend.json to {out}")
    return 0


def cmd_extract(args) -> int:
    _require(args, "dataset", "backend")
    dataset = _read_dataset(args.dataset)
    # construct every backend before any work so missing credentials fail fast
    backend = load_backend(args.backend)
    multi = [load_backend(p) for p in args.multi_backend]
    exemplars = ()
    if args.few_shot_k:
        _require(args, "exemplars")
        exemplars = list(_read_dataset(args.exemplars))
    cache = FeatureCache(Path(args.cache_dir) / CACHE_FILE)
    if cache.stale:
        print(f"ignoring {cache.stale} cache records from another template version", file=sys.stderr)
    step = max(1, len(dataset) // 10)

    def progress(done, total):
        if done % step == 0 or done == total:
            print(f"extract: {done}/{total}", file=sys.stderr)

    summary = extract_dataset(dataset, backend, cache, workers=args.workers, multi_backends=multi,
                              binary_logit=args.binary_logit, exemplars=exemplars,
                              few_shot_k=args.few_shot_k, progress=progress)
    print(f"extracted {summary.n_samples} samples with {summary.n_calls} backend calls")
    if summary.failed:
        print(f"{len(summary.failed)} samples failed permanently:", file=sys.stderr)
        for sid, errors in summary.failed.items():
            print(f"  {sid}: {'; '.join(errors)}", file=sys.stderr)
        return 1
    return 0


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n")


def cmd_evaluate(args) -> int:
    _require(args, "dataset")
    dataset = _read_dataset(args.dataset)
    table, backend, multi = _features(args, dataset)
    out = Path(args.out_dir)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    prov = _provenance(args, backend, multi)
    reports = []
    for task in _tasks(args):
        for pipeline in args.pipeline:
            families = [None] if pipeline == "judge_only" else args.families
            for family in families:
                spec = ClassifierSpec(family, seed=args.seed) if family else None
                report = run_cv(dataset, task, pipeline, spec, k=args.k, seed=args.seed, features=table)
                report.config.update(prov)
                name = f"{pipeline}__{family or 'none'}__{task}.json"
                _write_json(out / "reports" / name, report.to_dict())
                print(f"{report.label}: F1 {report.mean['f1']:.4f} ± {report.std['f1']:.4f}  "
                      f"ROC-AUC {report.mean['roc_auc']:.4f}")
                reports.append(report)
    write_results_csv(reports, out / RESULTS_FILE)
    _write_json(out / "run_config.json", prov)
    print(f"wrote {len(reports)} reports and {out / RESULTS_FILE}")
    return 0


def _best_families(path) -> dict:
    """Best features_ml family per task from an earlier evaluate run, if any."""
    if not Path(path).exists():
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r.get("pipeline") == "features_ml" and r.get("family")]
    best = {}
    for r in rows:
        key = (_num(r["f1_mean"]), _num(r["roc_auc_mean"]))
        if r["task"] not in best or key > best[r["task"]][0]:
            best[r["task"]] = (key, r["family"])
    return {task: fam for task, (_, fam) in best.items()}


def cmd_ablate(args) -> int:
    _require(args, "dataset")
    dataset = _read_dataset(args.dataset)
    table, backend, multi = _features(args, dataset)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    winners = _best_families(out / RESULTS_FILE)
    for task in _tasks(args):
        family = winners.get(task, args.families[0])
        spec = ClassifierSpec(family, seed=args.seed)
        print(f"{task}: ablating with family {family}")
        if args.kind == "group":
            results = group_ablation(dataset, task, table, spec, k=args.k, seed=args.seed)
        elif args.kind == "single":
            results = single_feature(dataset, task, table, spec, k=args.k, seed=args.seed)
        elif args.kind == "leave_one_out":
            results = leave_one_out(dataset, task, table, spec, k=args.k, seed=args.seed)
        else:
            corr = correlation_table(table.loc[dataset.ids])
            path = out / f"correlation_{task}.csv"
            corr.to_csv(path, float_format="%.6f")
            print(f"wrote {path}")
            continue
        path = out / f"ablation_{args.kind}_{task}.csv"
        write_ablation_csv(results, path)
        for r in results[:5]:
            print(f"{task} {r.target}: {r.metric} {r.metric_ablated:.4f} (delta {r.delta:+.4f})")
        print(f"wrote {path}")
    return 0


def _fmt(value) -> str:
    try:
        return f"{float(value):.4f}"
    except (TypeError, ValueError):
        return str(value)


def _num(value) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        return float("-inf")
    return float("-inf") if x != x else x


def render_report(rows) -> str:
    """Markdown summary of merged result rows with the best model per task."""
    rows = sorted(rows, key=lambda r: (r["task"], r["pipeline"], r["family"]))
    lines = ["# Detection results", ""]
    best = {}
    for r in rows:
        key = (_num(r["f1_mean"]), _num(r["roc_auc_mean"]))
        if r["task"] not in best or key > best[r["task"]][0]:
            best[r["task"]] = (key, r)
    lines += ["## Best configuration per task", "", "| task | pipeline | family | F1 | ROC-AUC |",
              "|---|---|---|---|---|"]
    for task in sorted(best):
        r = best[task][1]
        lines.append(f"| {task} | {r['pipeline']} | {r['family'] or '-'} | "
                     f"{_fmt(r['f1_mean'])} ± {_fmt(r['f1_std'])} | {_fmt(r['roc_auc_mean'])} |")
    lines += ["", "## All runs", "",
              "| task | pipeline | family | accuracy | precision | recall | F1 | PR-AUC | ROC-AUC |",
              "|---|---|---|---|---|---|---|---|---|"]
    for r in rows:
        cells = [r["task"], r["pipeline"], r["family"] or "-"] + [
            f"{_fmt(r[f'{m}_mean'])} ± {_fmt(r[f'{m}_std'])}"
            for m in ("accuracy", "precision", "recall", "f1", "pr_auc", "roc_auc")
        ]
        lines.append("| " + " | ".join(cells) + " |")
    lines += ["", "Standard deviations are population deviations across folds.", ""]
    return "\n".join(lines)


def cmd_report(args) -> int:
    out = Path(args.out_dir)
    files = sorted(out.glob(f"**/{RESULTS_FILE}")) if out.exists() else []
    rows = []
    for path in files:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_FIELDS:
                print(f"skipping {path}: unexpected columns", file=sys.stderr)
                continue
            rows.extend(reader)
    if not rows:
        print(f"no runs found in {out}")
        return 0
    text = render_report(rows)
    (out / REPORT_FILE).write_text(text, encoding="utf-8")
    print(text)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halomis", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"halomis {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, backend=True, cache=True, evaluate=False):
        p.add_argument("--config", help="JSON run file; flags override its keys")
        p.add_argument("--dataset", help="canonical JSONL dataset")
        p.add_argument("--task", choices=["hal", "omis", "both"])
        p.add_argument("--seed", type=int)
        if backend:
            p.add_argument("--backend", help="backend config JSON")
            p.add_argument("--multi-backend", action="append", dest="multi_backend",
                           help="additional backend config for multi-LLM scoring (repeatable)")
            p.add_argument("--binary-logit", action="store_true", default=None, dest="binary_logit")
            p.add_argument("--few-shot-k", type=int, choices=[0, 2, 4, 6, 8], dest="few_shot_k")
        if cache:
            p.add_argument("--cache-dir", dest="cache_dir")
        if evaluate:
            p.add_argument("--pipeline", nargs="+", choices=PIPELINES)
            p.add_argument("--families", nargs="+", choices=FAMILIES)
            p.add_argument("--k", type=int)
            p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("ingest", help="validate and convert a CSV or JSONL dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mapping", help="JSON column mapping for CSV input")
    p.add_argument("--source", help="source tag for CSV input (default kaggle)")
    p.add_argument("--out", help="write canonical JSONL here")
    p.set_defaults(func=cmd_ingest, resolve=False)

    p = sub.add_parser("synth", help="write a planted-rule dataset and matching mock backend config")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--pos-rate", type=float, default=0.03, dest="pos_rate")
    p.add_argument("--margin", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth, resolve=False)

    p = sub.add_parser("extract", help="populate the feature cache")
    common(p)
    p.add_argument("--exemplars", help="labeled JSONL used for few-shot judge prompts")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_extract, resolve=True)

    p = sub.add_parser("evaluate", help="cross-validate pipelines and write reports")
    common(p, evaluate=True)
    p.set_defaults(func=cmd_evaluate, resolve=True)

    p = sub.add_parser("ablate", help="feature ablation tables")
    common(p, evaluate=True)
    p.add_argument("--kind", choices=["group", "single", "leave_one_out", "correlation"])
    p.set_defaults(func=cmd_ablate, resolve=True)

    p = sub.add_parser("report", help="render merged results as markdown")
    p.add_argument("--config")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--task")
    p.set_defaults(func=cmd_report, resolve=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.resolve:
            _resolve(args)
        return args.func(args)
    except (UsageError, RecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HalomisError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
