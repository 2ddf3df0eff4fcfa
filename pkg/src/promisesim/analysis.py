"""Evaluate a scenario's requested reports against an event log.

Each analysis line in a scenario names a check, its parameters and an
expected verdict; evaluation produces the JSON report document consumed by
the CLI.  Verdicts never raise: a computation error becomes a failed (or,
for ``expect=error:Name``, a passed) verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import __version__
from .core import (
    AgentId,
    Polarity,
    PromiseGraph,
    detect_chains,
)
from .engine import (
    AGENT,
    CORR,
    EMIT,
    EventLog,
    IncompletePattern,
    KIND,
    ObserverConfig,
    PTYPE,
    SYMBOL,
    TICK,
    check_clock_ordering,
)
from .assessment import (
    MissingObservability,
    NoStanding,
    dump_dist,
    dump_joint,
    empirical_distribution,
    joint_distribution,
    nyquist_check,
    observer_correlation,
)
from .metrics import (
    BIAS_CORRECTED,
    PLUG_IN,
    PatternAbsent,
    UndefinedOnEmpty,
    calibration_check,
    chain_analysis,
    independence_test,
    mutual_information,
)
from .scenario import AnalysisSpec, Scenario, run_scenario

_ERRORS = (MissingObservability, NoStanding, PatternAbsent, UndefinedOnEmpty,
           IncompletePattern, ValueError, KeyError)

_ESTIMATORS = {"plugin": PLUG_IN, "plug-in": PLUG_IN,
               "mm": BIAS_CORRECTED, "bias-corrected": BIAS_CORRECTED}


@dataclass
class AnalysisResult:
    report: dict

    @property
    def ok(self) -> bool:
        return all(v["passed"] for v in self.report["verdicts"])


def unconditional_emissions(log: EventLog, graph: PromiseGraph,
                            agent: AgentId) -> list[tuple]:
    """(tick, ptype, symbol, correlation) of the agent's unconditional EMITs.

    Local clocks and global sequence are deliberately excluded: inbound
    traffic shifts them without touching the emitted behavior itself.
    """
    taus = {p.tau for p in graph.offers_by(agent) if not p.conditions}
    return [
        (r[TICK], r[PTYPE], r[SYMBOL], r[CORR])
        for r in log.records
        if r[KIND] == EMIT and r[AGENT] == agent and r[PTYPE] in taus
    ]


def _resolve_observer(scenario: Scenario, spec: AnalysisSpec) -> ObserverConfig:
    observer = spec.get("observer")
    pair_spec = spec.get("pair")
    pair = tuple(pair_spec.split(",")) if pair_spec else None
    pairing = spec.get("pairing")
    period = spec.get("period")
    base = None
    for cfg in scenario.observers:
        if observer and cfg.observer != observer:
            continue
        if pair and cfg.targets != pair:
            continue
        base = cfg
        break
    if base is not None:
        return ObserverConfig(
            base.observer,
            pair or base.targets,
            int(period) if period else base.sampling_period,
            pairing or base.pairing,
        )
    if observer is None or pair is None:
        raise ValueError("joint check needs observer= and pair= (no matching observer line)")
    return ObserverConfig(observer, (pair[0], pair[1]),
                          int(period) if period else 1, pairing or "snapshot")


def _find_promise(graph: PromiseGraph, spec: str, promisee: Optional[str]):
    for sign in ("+", "-"):
        if sign in spec[1:]:
            giver, _, tau = spec.partition(sign)
            break
    else:
        raise ValueError(f"promise spec {spec!r} needs GIVER+tau or GIVER-tau")
    pol = Polarity.OFFER if sign == "+" else Polarity.ACCEPT
    candidates = sorted(
        (p for p in graph.promises
         if p.giver == giver and p.polarity is pol and p.tau == tau
         and (promisee is None or p.promisee == promisee)),
        key=lambda p: p.promisee,
    )
    if not candidates:
        raise ValueError(f"no promise matches {spec!r}")
    return candidates[0]


def _mi_expectation(expect: str, value: float) -> tuple[bool, str]:
    actual = f"mi={value:.6f}"
    if expect.startswith("mi:"):
        target, _, tol = expect[3:].partition("+-")
        ok = abs(value - float(target)) <= float(tol or 0.0)
        return ok, actual
    if expect.startswith("mi<="):
        return value <= float(expect[4:]), actual
    if expect.startswith("mi>="):
        return value >= float(expect[4:]), actual
    raise ValueError(f"unknown MI expectation {expect!r}")


def evaluate(scenario: Scenario, log: EventLog) -> AnalysisResult:
    """Run every analysis line and assemble the report document."""
    report = {
        "scenario": scenario.name,
        "seed": log.seed,
        "ticks": log.ticks,
        "scenario_hash": scenario.content_hash,
        "tool_version": __version__,
        "distributions": [],
        "joints": [],
        "info_reports": [],
        "verdicts": [],
    }
    graph = scenario.graph

    for spec in scenario.analysis:
        expect = spec.get("expect", "")
        verdict = {
            "check": spec.check,
            "params": dict(spec.params),
            "expected": expect,
            "actual": "",
            "passed": False,
        }
        try:
            passed, actual = _run_check(scenario, log, graph, spec, expect, report)
            verdict["passed"] = passed
            verdict["actual"] = actual
        except _ERRORS as exc:
            name = type(exc).__name__
            verdict["actual"] = f"error:{name} ({exc})"
            verdict["passed"] = expect == f"error:{name}"
        report["verdicts"].append(verdict)
    return AnalysisResult(report)


def _run_check(scenario: Scenario, log: EventLog, graph: PromiseGraph,
               spec: AnalysisSpec, expect: str, report: dict) -> tuple[bool, str]:
    check = spec.check

    if check == "joint":
        cfg = _resolve_observer(scenario, spec)
        joint = joint_distribution(log, cfg, graph,
                                   row_tau=spec.get("row_tau"),
                                   col_tau=spec.get("col_tau"))
        estimator = _ESTIMATORS[spec.get("estimator", "plugin")]
        info = mutual_information(joint, estimator) if joint.total else None
        report["joints"].append({
            "pair": list(joint.pair),
            "pairing": joint.pairing,
            "assessor": joint.assessor,
            "n": joint.total,
            "trust_flags": list(joint.trust_flags),
            "table": dump_joint(joint),
        })
        if info is not None:
            entry = {"pair": list(joint.pair), "pairing": joint.pairing}
            entry.update(info.as_dict())
            report["info_reports"].append(entry)
        if expect == "diagonal":
            off = joint.off_diagonal_total()
            return off == 0, f"off_diagonal={off}"
        if expect in ("independent", "dependent"):
            tol = float(spec.get("tol", "0.01"))
            res = independence_test(joint, tol)
            return (res.verdict.lower() == expect,
                    f"{res.verdict} mi={res.mi_bits:.6f} n={res.n_samples}")
        if expect.startswith("mi"):
            if info is None:
                raise UndefinedOnEmpty("no samples in joint")
            return _mi_expectation(expect, info.mutual_information)
        if expect.startswith("error:"):
            return False, "no error"
        raise ValueError(f"unknown joint expectation {expect!r}")

    if check == "dist":
        assessor = spec.get("assessor")
        promise = _find_promise(graph, spec.get("promise", ""), spec.get("to"))
        dist = empirical_distribution(log, assessor, promise, graph)
        report["distributions"].append({
            "assessor": assessor,
            "promise": promise.render(),
            "n": dist.total,
            "table": dump_dist(dist, assessor),
        })
        if expect.startswith("support:"):
            want = frozenset(s for s in expect[8:].strip("{}").split(",") if s)
            got = dist.support()
            return got == want, "support={%s}" % ",".join(sorted(got))
        if expect == "empty":
            return dist.total == 0, f"n={dist.total}"
        if expect.startswith("error:"):
            return False, "no error"
        raise ValueError(f"unknown dist expectation {expect!r}")

    if check == "chain":
        cfg = _resolve_observer(scenario, spec) if spec.get("observer") else None
        if cfg is None:
            raise ValueError("chain check needs observer=")
        path_spec = spec.get("path")
        if path_spec:
            path = tuple(path_spec.split(","))
        else:
            chains = detect_chains(graph)
            if not chains:
                raise ValueError("no chain detected and no path= given")
            path = chains[0].agents
        estimator = _ESTIMATORS[spec.get("estimator", "plugin")]
        res = chain_analysis(log, path, graph, cfg, estimator)
        for hop in (*res.hops, res.end_to_end):
            entry = {"pair": list(hop.pair), "pairing": hop.joint.pairing}
            entry.update(hop.info.as_dict())
            report["info_reports"].append(entry)
        mi_end = res.end_to_end.info.mutual_information
        if expect == "attenuation":
            hops = ",".join(f"{v:.4f}" for v in res.hop_mi())
            return res.attenuation_ok, f"mi_end={mi_end:.6f} hops=[{hops}] eps={res.epsilon:.2e}"
        if expect.startswith("mi_end<="):
            return mi_end <= float(expect[8:]), f"mi_end={mi_end:.6f}"
        if expect.startswith("mi_end>="):
            return mi_end >= float(expect[8:]), f"mi_end={mi_end:.6f}"
        raise ValueError(f"unknown chain expectation {expect!r}")

    if check == "calibration":
        res = calibration_check(log, graph, spec.get("source", ""))
        actual = res.verdict.lower()
        if res.uncalibrated:
            actual += " uncalibrated={%s}" % ",".join(res.uncalibrated)
        return actual.split()[0] == expect, actual

    if check == "nyquist":
        cfg = _resolve_observer(scenario, spec)
        res = nyquist_check(cfg, log)
        actual = (f"{res.status.lower()} min_interval={res.min_interval} "
                  f"period={res.sampling_period}")
        return res.status.lower() == expect, actual

    if check == "correlation":
        cfg = _resolve_observer(scenario, spec)
        max_lag = int(spec.get("max_lag", "8"))
        table = observer_correlation(log, cfg, graph, max_lag)
        peak = table.peak_lag()
        if expect.startswith("peak:"):
            return peak == int(expect[5:]), f"peak={peak}"
        if expect == "zero":
            return all(v == 0.0 for v in table.values), f"peak={peak}"
        raise ValueError(f"unknown correlation expectation {expect!r}")

    if check == "clocks":
        violations = check_clock_ordering(log)
        if expect != "clean":
            raise ValueError(f"unknown clocks expectation {expect!r}")
        return not violations, f"violations={len(violations)}"

    if check == "autonomy":
        agent = spec.get("agent", "")
        base = unconditional_emissions(log, graph, agent)
        stripped = scenario.without_acceptances(agent)
        other_log = run_scenario(stripped, seed=log.seed, ticks=log.ticks)
        other = unconditional_emissions(other_log, stripped.graph, agent)
        if expect != "invariant":
            raise ValueError(f"unknown autonomy expectation {expect!r}")
        return base == other, f"emissions={len(base)} vs {len(other)}"

    raise ValueError(f"unknown check {spec.check!r}")
