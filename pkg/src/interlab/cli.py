"""interlab command line: train / attack / measure / report / verify.

Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path
from typing import Optional, Sequence

from interlab import pipeline
from interlab.analysis import write_json
from interlab.errors import (
    ConfigError,
    ConsistencyError,
    DependencyError,
    IngestionError,
    InterlabError,
    ModelFormatError,
)
from interlab.manifest import ExperimentManifest, default_manifest
from interlab.verify import SUITES, run_suites

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="interlab", description="Interaction analysis of adversarial perturbations.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment manifest (JSON); the default toy setup if omitted")
        sp.add_argument("--out", help="output directory (overrides the manifest)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")

    for name, helptext in [("train", "train the source and target models"),
                           ("attack", "attack the manifest's examples on the source model"),
                           ("measure", "measure interactions of stored attack traces"),
                           ("report", "run the analysis sweeps and write JSON/CSV reports")]:
        common(sub.add_parser(name, help=helptext))
    sp = sub.add_parser("verify", help="run the oracle self-check battery")
    sp.add_argument("--suite", action="append", choices=sorted(SUITES),
                    help="run only this suite (repeatable)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--json", dest="json_out", help="also write the summary to this file")
    sub.add_parser("manifest", help="print the default manifest as JSON")
    return p


def _manifest(args) -> tuple[ExperimentManifest, Path, str]:
    m = ExperimentManifest.load(args.config) if args.config else default_manifest()
    m = m.with_env_seed()
    out = Path(args.out or m.out)
    return m, out, m.digest()


def _guard(path: Path, force: bool) -> None:
    """Refuse to reuse a non-empty output location unless forced."""
    if path.exists() and any(path.iterdir()):
        if not force:
            raise UsageError(f"{path} already exists; pass --force to overwrite")
        shutil.rmtree(path)


def _config_hint(args) -> str:
    return args.config or "<manifest>"


def cmd_train(args) -> int:
    m, out, digest = _manifest(args)
    _guard(out / "models", args.force)
    data = pipeline.load_data(m)
    models, accs = pipeline.train_zoo(m, data, args.jobs)
    paths = pipeline.save_zoo(models, out, digest)
    write_json(out / "models" / "train_report.json", {"accuracy": accs, "models": [p.name for p in paths]}, digest)
    for name, a in accs.items():
        print(f"{name}: train {a['train']:.3f} test {a['test']:.3f}")
    return EXIT_OK


def cmd_attack(args) -> int:
    m, out, digest = _manifest(args)
    cfg = m.attack_config()
    cfg.validate(m.dataset.dim)  # infeasible configs fail before any work
    models = pipeline.load_zoo(m, out, _config_hint(args))
    target = pipeline.trace_dir(out, cfg.method)
    _guard(target, args.force)
    data = pipeline.load_data(m)
    X, y = pipeline.examples(m, data)
    traces = pipeline.run_attacks(m, models[m.source.name], X, y, args.jobs)
    pipeline.save_traces(traces, target, digest)
    rate = sum(t.success for t in traces) / len(traces)
    print(f"{cfg.method}: {len(traces)} traces in {target}, source success {rate:.3f}")
    return EXIT_OK


def cmd_measure(args) -> int:
    m, out, digest = _manifest(args)
    cfg = m.attack_config()
    models = pipeline.load_zoo(m, out, _config_hint(args))
    tdir = pipeline.trace_dir(out, cfg.method)
    traces = pipeline.load_traces(tdir) if tdir.exists() else []
    if not traces:
        raise DependencyError(f"no traces in {tdir}; run `interlab attack --config {_config_hint(args)}` first")
    data = pipeline.load_data(m)
    X, y = pipeline.examples(m, data, len(traces))
    result = pipeline.measure_traces(m, models[m.source.name], X, y, traces)
    mdir = out / "measure"
    mdir.mkdir(parents=True, exist_ok=True)
    path = mdir / f"interactions_{cfg.method}.json"
    if path.exists() and not args.force:
        raise UsageError(f"{path} already exists; pass --force to overwrite")
    write_json(path, result, digest)
    print(f"estimator {result['estimator']}: mean interaction {result['mean_interaction']:.6g} "
          f"over {len(traces)} traces")
    return EXIT_OK


def cmd_report(args) -> int:
    m, out, digest = _manifest(args)
    models = pipeline.load_zoo(m, out, _config_hint(args))
    traces = None
    if {"loo", "heatmap"} & set(m.report_sections):
        tdir = pipeline.trace_dir(out, m.attack.method)
        traces = pipeline.load_traces(tdir) if tdir.exists() else []
        if not traces:
            raise DependencyError(f"report sections loo/heatmap need traces in {tdir}; "
                                  f"run `interlab attack --config {_config_hint(args)}` first")
    _guard(out / "report", args.force)
    data = pipeline.load_data(m)
    summary = pipeline.report(m, models, data, out, digest, traces, args.jobs)
    print(json.dumps(summary, indent=1, sort_keys=True, default=str))
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suites(args.suite, seed=args.seed)
    summary = {"passed": all(r.passed for r in results), "suites": [r.to_dict() for r in results]}
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.suite}")
        for c in r.checks:
            if not c.passed:
                print(f"  {c.name}: max error {c.max_error:.3g} >= tolerance {c.tolerance:g} ({c.cases} cases)")
    print(json.dumps(summary, sort_keys=True))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return EXIT_OK if summary["passed"] else EXIT_VERIFY


def cmd_manifest(args) -> int:
    print(json.dumps(default_manifest().to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "attack": cmd_attack, "measure": cmd_measure, "report": cmd_report,
            "verify": cmd_verify, "manifest": cmd_manifest}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"interlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"interlab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestionError, ModelFormatError, ConsistencyError, DependencyError) as exc:
        print(f"interlab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InterlabError as exc:
        print(f"interlab: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
