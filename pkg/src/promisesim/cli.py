"""Command-line driver: validate, run, analyze, report.

Scenario paths resolve against the working directory first, then the
``PROMISESIM_CORPUS`` environment variable, then the packaged golden
corpus.  Exit codes: 0 success, 1 diagnostics (parse/validation/file
errors), 2 failed scenario expectations.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .analysis import evaluate
from .core import dump_graph
from .engine import read_log, write_log
from .scenario import ScenarioError, load_scenario, parse_scenario, run_scenario


def resolve_scenario_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    root = os.environ.get("PROMISESIM_CORPUS")
    if root:
        candidate = Path(root) / name
        if candidate.exists():
            return candidate
    packaged = resources.files("promisesim") / "corpus" / name
    if packaged.is_file():
        return Path(str(packaged))
    raise FileNotFoundError(f"scenario not found: {name}")


def _load(name: str):
    path = resolve_scenario_path(name)
    return load_scenario(path), path


def cmd_validate(args) -> int:
    try:
        scenario, _ = _load(args.scenario)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(d.render(), file=sys.stderr)
        return 1
    sys.stdout.write(dump_graph(scenario.graph))
    print(f"ok: {scenario.name} ({len(scenario.graph.promises)} promises)")
    return 0


def cmd_run(args) -> int:
    try:
        scenario, path = _load(args.scenario)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(d.render(), file=sys.stderr)
        return 1
    log = run_scenario(scenario, seed=args.seed, ticks=args.ticks)
    out = Path(args.out) if args.out else Path(path.stem + ".log")
    write_log(log, out)
    print(f"wrote {out} ({len(log.records)} records, seed {log.seed})")
    return 0


def _report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "check", "params", "expected", "actual", "passed"])
    for v in report["verdicts"]:
        params = ";".join(f"{k}={val}" for k, val in v["params"].items())
        w.writerow(["verdict", v["check"], params, v["expected"], v["actual"], v["passed"]])
    w.writerow([])
    w.writerow(["section", "pair", "pairing", "estimator", "n",
                "entropy_source_bits", "entropy_receiver_bits",
                "mutual_information_bits", "trust_flags"])
    for r in report["info_reports"]:
        w.writerow(["info_report", "->".join(r["pair"]), r["pairing"], r["estimator"],
                    r["n_samples"], r["entropy_source_bits"], r["entropy_receiver_bits"],
                    r["mutual_information_bits"], "|".join(r["trust_flags"])])
    return buf.getvalue()


def cmd_analyze(args) -> int:
    try:
        log = read_log(args.log)
    except (OSError, ValueError) as exc:
        print(f"error reading log: {exc}", file=sys.stderr)
        return 1
    try:
        scenario, _ = _load(args.scenario)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(d.render(), file=sys.stderr)
        return 1
    if log.scenario_hash and log.scenario_hash != scenario.content_hash:
        print("error: log was produced by a different scenario "
              f"(log {log.scenario_hash[:12]}.. vs {scenario.content_hash[:12]}..)",
              file=sys.stderr)
        return 1

    result = evaluate(scenario, log)
    out = Path(args.out) if args.out else Path(Path(args.log).stem + ".report.json")
    text = json.dumps(result.report, indent=2) + "\n"
    out.write_text(text, encoding="utf-8")
    written = [str(out)]
    if args.format == "csv":
        csv_path = out.with_suffix(".csv")
        csv_path.write_text(_report_csv(result.report), encoding="utf-8")
        written.append(str(csv_path))
    print(f"wrote {', '.join(written)}")
    for v in result.report["verdicts"]:
        mark = "PASS" if v["passed"] else "FAIL"
        print(f"{mark} {v['check']} expected={v['expected']} actual={v['actual']}")
    return 0 if result.ok else 2


def cmd_report(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        print(f"error reading report: {exc}", file=sys.stderr)
        return 1
    print(f"scenario {report['scenario']} seed={report['seed']} ticks={report['ticks']}")
    print(f"hash {report['scenario_hash'][:16]}.. tool {report['tool_version']}")
    failed = 0
    for v in report["verdicts"]:
        mark = "PASS" if v["passed"] else "FAIL"
        failed += 0 if v["passed"] else 1
        params = " ".join(f"{k}={val}" for k, val in v["params"].items())
        print(f"  {mark} {v['check']} {params} expected={v['expected']} actual={v['actual']}")
    for r in report["info_reports"]:
        flags = (" [" + ",".join(r["trust_flags"]) + "]") if r["trust_flags"] else ""
        print(f"  I({'->'.join(r['pair'])}) = {r['mutual_information_bits']:.6f} bits"
              f" ({r['estimator']}, n={r['n_samples']}){flags}")
    print(f"{len(report['verdicts']) - failed} passed, {failed} failed")
    return 2 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="promisesim",
        description="Deterministic promise-graph simulator and information-flow analyzer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a scenario and dump its promise graph")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute a scenario and write the event log")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ticks", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="evaluate a scenario's analysis against a log")
    p.add_argument("log")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="render a report file as text")
    p.add_argument("report")
    p.add_argument("--format", choices=("text",), default="text")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
