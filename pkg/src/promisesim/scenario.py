"""Declarative scenario files: parse, validate, render.

A scenario is a line-oriented text format with a small header and sections::

    name: case2_partial_overlap
    ticks: 3000
    seed: 11

    [agents]
    S
    R

    [promises]
    S +color{B,G,R} -> R
    R -color{G} -> S

    [policies]
    S color generate dist=uniform period=1

    [links]
    S -> R delay=1

    [observers]
    T watches S,R period=1 pairing=snapshot

    [analysis]
    dist assessor=S promise=R-color expect=support:{G}

Promises use arrow notation: ``GIVER +tau{A,B} -> PROMISEE`` with optional
``| cond:tau2{A},tau3`` (conjunctive), ``scope:{T}`` and ``map:A=x,B=y``
(acceptance-side symbol correspondence).  Parsing is total: malformed input
produces diagnostics with line numbers, never a crash.  ``render_scenario``
is the exact inverse used for hashing and the round-trip guarantee.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional

from .core import (
    AgentId,
    Alphabet,
    Body,
    Polarity,
    Promise,
    PromiseGraph,
    PromiseType,
    Symbol,
    valid_agent_id,
    valid_tau,
    validate_graph,
)
from .engine import (
    BehaviorPolicy,
    EventLog,
    GENERATE,
    LinkModel,
    ObserverConfig,
    RELAY,
    Simulation,
)

UNSATISFIABLE = "__unsatisfiable__"

_BODY_RE = re.compile(r"([+-])([A-Za-z0-9_][A-Za-z0-9_.:-]*)\{([^}]*)\}\Z")
_COND_RE = re.compile(r"([A-Za-z0-9_][A-Za-z0-9_.:-]*)(\{[^}]*\})?\Z")


@dataclass(frozen=True)
class Diagnostic:
    line: Optional[int]
    message: str

    def render(self) -> str:
        where = f"line {self.line}" if self.line is not None else "scenario"
        return f"{where}: {self.message}"


class ScenarioError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(d.render() for d in self.diagnostics))


class ParseError(ScenarioError):
    """Malformed scenario syntax."""


class ValidationError(ScenarioError):
    """Well-formed text, but the scenario breaks a graph or reference law."""


@dataclass(frozen=True)
class AnalysisSpec:
    """One requested report: a check name plus ordered key=value params."""

    check: str
    params: tuple[tuple[str, str], ...] = ()

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.params:
            if k == key:
                return v
        return default

    def render(self) -> str:
        return " ".join([self.check] + [f"{k}={v}" for k, v in self.params])


@dataclass(frozen=True)
class Scenario:
    """A fully resolved, validated run description."""

    name: str
    graph: PromiseGraph
    policies: tuple[BehaviorPolicy, ...]
    links_table: tuple[tuple[tuple[AgentId, AgentId], LinkModel], ...]
    default_link: Optional[LinkModel]
    observers: tuple[ObserverConfig, ...]
    ticks: int
    seed: int
    analysis: tuple[AnalysisSpec, ...] = ()

    @property
    def links(self) -> dict[tuple[AgentId, AgentId], LinkModel]:
        return dict(self.links_table)

    @cached_property
    def content_hash(self) -> str:
        return hashlib.sha256(render_scenario(self).encode()).hexdigest()

    def with_overrides(self, seed: Optional[int] = None,
                       ticks: Optional[int] = None) -> "Scenario":
        return Scenario(self.name, self.graph, self.policies, self.links_table,
                        self.default_link, self.observers,
                        self.ticks if ticks is None else ticks,
                        self.seed if seed is None else seed, self.analysis)

    def without_acceptances(self, agent: AgentId) -> "Scenario":
        """The same scenario with every (-) promise held by ``agent`` removed."""
        kept = tuple(p for p in self.graph.promises
                     if not (p.polarity is Polarity.ACCEPT and p.giver == agent))
        graph = PromiseGraph(self.graph.agents, kept)
        return Scenario(self.name, graph, self.policies, self.links_table,
                        self.default_link, self.observers, self.ticks, self.seed,
                        self.analysis)


def run_scenario(scenario: Scenario, seed: Optional[int] = None,
                 ticks: Optional[int] = None) -> EventLog:
    """Execute a scenario deterministically; overrides beat file defaults."""
    sim = Simulation(
        scenario.graph, scenario.policies, links=scenario.links,
        observers=scenario.observers,
        seed=scenario.seed if seed is None else seed,
        ticks=scenario.ticks if ticks is None else ticks,
        scenario_hash=scenario.content_hash,
        default_link=scenario.default_link,
    )
    return sim.run()


# -- parsing -----------------------------------------------------------------

_SECTIONS = ("agents", "promises", "policies", "links", "observers", "analysis")


def _split_items(text: str) -> list[str]:
    """Split on commas that are not inside braces."""
    out = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append(text[start:i])
            start = i + 1
    out.append(text[start:])
    return [item for item in out if item]


def _parse_alphabet(text: str, line: int, errs: list[Diagnostic]) -> Optional[Alphabet]:
    try:
        return Alphabet([s for s in text.split(",") if s])
    except ValueError as exc:
        errs.append(Diagnostic(line, str(exc)))
        return None


def _parse_kv(tokens: list[str], line: int, errs: list[Diagnostic]) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        if "=" not in tok:
            errs.append(Diagnostic(line, f"expected key=value, got {tok!r}"))
            continue
        k, _, v = tok.partition("=")
        out[k] = v
    return out


def _parse_float(value: str, name: str, line: int, errs: list[Diagnostic]) -> float:
    try:
        return float(value)
    except ValueError:
        errs.append(Diagnostic(line, f"bad {name} value {value!r}"))
        return 0.0


def _parse_int(value: str, name: str, line: int, errs: list[Diagnostic]) -> int:
    try:
        return int(value)
    except ValueError:
        errs.append(Diagnostic(line, f"bad {name} value {value!r}"))
        return 0


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.errs: list[Diagnostic] = []
        self.header: dict[str, str] = {}
        self.agents: list[AgentId] = []
        self.raw_promises: list[tuple[int, dict]] = []
        self.raw_policies: list[tuple[int, dict]] = []
        self.raw_links: list[tuple[int, dict]] = []
        self.raw_observers: list[tuple[int, ObserverConfig]] = []
        self.analysis: list[AnalysisSpec] = []

    def fail(self, line: Optional[int], message: str):
        self.errs.append(Diagnostic(line, message))

    # each _line_* consumes one content line of its section

    def _line_agents(self, line_no: int, line: str):
        for name in line.split():
            if not valid_agent_id(name):
                self.fail(line_no, f"invalid agent identifier {name!r}")
            elif name in self.agents:
                self.fail(line_no, f"duplicate agent {name!r}")
            else:
                self.agents.append(name)

    def _line_promises(self, line_no: int, line: str):
        tokens = line.split()
        if len(tokens) < 4 or tokens[2] != "->":
            self.fail(line_no, f"expected 'GIVER +tau{{...}} -> PROMISEE ...', got {line!r}")
            return
        giver, body_tok, _, promisee = tokens[:4]
        m = _BODY_RE.match(body_tok)
        if m is None:
            self.fail(line_no, f"malformed promise body {body_tok!r}")
            return
        pol = Polarity.OFFER if m.group(1) == "+" else Polarity.ACCEPT
        alpha = _parse_alphabet(m.group(3), line_no, self.errs)
        if alpha is None:
            return
        rest = tokens[4:]
        conds: list[tuple[str, Optional[Alphabet]]] = []
        scope: list[str] = []
        corr: Optional[tuple[tuple[str, str], ...]] = None
        i = 0
        while i < len(rest):
            tok = rest[i]
            if tok == "|":
                i += 1
                continue
            if tok.startswith("|"):
                tok = tok[1:]
            if tok.startswith("cond:"):
                for item in _split_items(tok[5:]):
                    cm = _COND_RE.match(item)
                    if cm is None:
                        self.fail(line_no, f"malformed condition {item!r}")
                        continue
                    calpha = None
                    if cm.group(2):
                        calpha = _parse_alphabet(cm.group(2)[1:-1], line_no, self.errs)
                    conds.append((cm.group(1), calpha))
            elif tok.startswith("scope:"):
                body = tok[6:]
                if not (body.startswith("{") and body.endswith("}")):
                    self.fail(line_no, f"malformed scope {tok!r}")
                else:
                    scope = [a for a in body[1:-1].split(",") if a]
            elif tok.startswith("map:"):
                pairs = []
                for item in tok[4:].split(","):
                    if "=" not in item:
                        self.fail(line_no, f"malformed correspondence {item!r}")
                        continue
                    a, _, b = item.partition("=")
                    pairs.append((a, b))
                corr = tuple(pairs)
            else:
                self.fail(line_no, f"unexpected token {tok!r} in promise")
            i += 1
        self.raw_promises.append((line_no, {
            "giver": giver, "promisee": promisee, "polarity": pol,
            "tau": m.group(2), "alphabet": alpha, "conds": conds,
            "scope": scope, "corr": corr,
        }))

    def _line_policies(self, line_no: int, line: str):
        tokens = line.split()
        if len(tokens) < 3:
            self.fail(line_no, f"expected 'AGENT TAU MODE ...', got {line!r}")
            return
        agent, tau, mode = tokens[:3]
        if mode not in (GENERATE, RELAY):
            self.fail(line_no, f"unknown policy mode {mode!r}")
            return
        kv = _parse_kv(tokens[3:], line_no, self.errs)
        self.raw_policies.append((line_no, {"agent": agent, "tau": tau,
                                            "mode": mode, "kv": kv}))

    def _line_links(self, line_no: int, line: str):
        tokens = line.split()
        if len(tokens) < 3 or tokens[1] != "->":
            self.fail(line_no, f"expected 'SRC -> DST ...', got {line!r}")
            return
        src, _, dst = tokens[:3]
        kv = _parse_kv(tokens[3:], line_no, self.errs)
        self.raw_links.append((line_no, {"src": src, "dst": dst, "kv": kv}))

    def _line_observers(self, line_no: int, line: str):
        tokens = line.split()
        if len(tokens) < 3 or tokens[1] != "watches":
            self.fail(line_no, f"expected 'AGENT watches A,B ...', got {line!r}")
            return
        observer = tokens[0]
        targets = tokens[2].split(",")
        if len(targets) != 2:
            self.fail(line_no, f"observer watches exactly two targets, got {tokens[2]!r}")
            return
        kv = _parse_kv(tokens[3:], line_no, self.errs)
        period = _parse_int(kv.get("period", "1"), "period", line_no, self.errs)
        pairing = kv.get("pairing", "snapshot")
        try:
            cfg = ObserverConfig(observer, (targets[0], targets[1]),
                                 max(period, 1), pairing)
        except ValueError as exc:
            self.fail(line_no, str(exc))
            return
        self.raw_observers.append((line_no, cfg))

    def _line_analysis(self, line_no: int, line: str):
        tokens = line.split()
        params = []
        for tok in tokens[1:]:
            if "=" not in tok:
                self.fail(line_no, f"expected key=value, got {tok!r}")
                continue
            k, _, v = tok.partition("=")
            params.append((k, v))
        self.analysis.append(AnalysisSpec(tokens[0], tuple(params)))

    def read(self):
        section = None
        handlers = {
            "agents": self._line_agents,
            "promises": self._line_promises,
            "policies": self._line_policies,
            "links": self._line_links,
            "observers": self._line_observers,
            "analysis": self._line_analysis,
        }
        saw_anything = False
        for line_no, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            saw_anything = True
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip()
                if name not in _SECTIONS:
                    self.fail(line_no, f"unknown section [{name}]")
                    section = None
                else:
                    section = name
                continue
            if section is None:
                if ":" in line:
                    key, _, value = line.partition(":")
                    self.header[key.strip()] = value.strip()
                else:
                    self.fail(line_no, f"header line needs 'key: value', got {line!r}")
                continue
            handlers[section](line_no, line)
        if not saw_anything:
            self.fail(None, "empty scenario file")

    # -- resolution ----------------------------------------------------------

    def finalize(self) -> Scenario:
        if self.errs:
            raise ParseError(self.errs)

        name = self.header.get("name", "scenario")
        ticks = _parse_int(self.header.get("ticks", "1"), "ticks", None, self.errs)
        seed = _parse_int(self.header.get("seed", "0"), "seed", None, self.errs)
        if ticks < 1:
            self.fail(None, f"ticks must be >= 1, got {ticks}")

        promises: list[Promise] = []
        offers_to: dict[tuple[AgentId, PromiseType], set[Symbol]] = {}
        for _, p in self.raw_promises:
            if p["polarity"] is Polarity.OFFER:
                offers_to.setdefault((p["promisee"], p["tau"]), set()).update(p["alphabet"])
        for line_no, p in self.raw_promises:
            conds = []
            for tau, alpha in p["conds"]:
                if alpha is None:
                    union = offers_to.get((p["giver"], tau))
                    alpha = Alphabet(sorted(union)) if union else Alphabet((UNSATISFIABLE,))
                conds.append(Body(tau, alpha))
            try:
                promises.append(Promise(
                    p["giver"], p["promisee"], p["polarity"],
                    Body(p["tau"], p["alphabet"]), tuple(conds),
                    frozenset(p["scope"]), p["corr"]))
            except ValueError as exc:
                self.fail(line_no, str(exc))
        graph = PromiseGraph(frozenset(self.agents), tuple(promises))

        offer_index: dict[tuple[AgentId, PromiseType], Promise] = {}
        by_tau: dict[PromiseType, Promise] = {}
        for p in promises:
            if p.polarity is Polarity.OFFER:
                offer_index.setdefault((p.giver, p.tau), p)
                by_tau.setdefault(p.tau, p)

        policies: list[BehaviorPolicy] = []
        behaviors: list[tuple[AgentId, Promise]] = []
        for line_no, raw in self.raw_policies:
            agent, tau, mode, kv = raw["agent"], raw["tau"], raw["mode"], raw["kv"]
            offer = offer_index.get((agent, tau))
            if offer is None:
                other = by_tau.get(tau)
                if other is None:
                    self.fail(line_no, f"policy references unknown promise type {tau!r}")
                    continue
                behaviors.append((agent, other))
                continue
            behaviors.append((agent, offer))
            period = _parse_int(kv.get("period", "1"), "period", line_no, self.errs)
            phase = _parse_int(kv.get("phase", "0"), "phase", line_no, self.errs)
            dist: tuple[tuple[Symbol, float], ...] = ()
            sources: tuple[tuple[PromiseType, float], ...] = ()
            if mode == GENERATE:
                spec = kv.get("dist", "uniform")
                if spec == "uniform":
                    syms = offer.body.alphabet.symbols
                    dist = tuple((s, 1.0 / len(syms)) for s in syms)
                else:
                    pairs = []
                    for item in spec.split(","):
                        sym, _, w = item.partition(":")
                        pairs.append((sym, _parse_float(w, "weight", line_no, self.errs)))
                    dist = tuple(pairs)
            else:
                spec = kv.get("sources", "")
                if spec:
                    pairs = []
                    for item in spec.split(","):
                        t, _, w = item.partition(":")
                        pairs.append((t, _parse_float(w, "weight", line_no, self.errs)))
                    sources = tuple(pairs)
            flip = _parse_float(kv.get("fidelity", "0.0"), "fidelity", line_no, self.errs)
            try:
                policies.append(BehaviorPolicy(agent, tau, mode, dist,
                                               max(period, 1), max(phase, 0),
                                               sources, flip))
            except ValueError as exc:
                self.fail(line_no, str(exc))

        links: list[tuple[tuple[AgentId, AgentId], LinkModel]] = []
        default_link: Optional[LinkModel] = None
        for line_no, raw in self.raw_links:
            src, dst, kv = raw["src"], raw["dst"], raw["kv"]
            delay_spec = kv.get("delay", "1")
            if ".." in delay_spec:
                lo, _, hi = delay_spec.partition("..")
                delay: int | tuple[int, int] = (
                    _parse_int(lo, "delay", line_no, self.errs),
                    _parse_int(hi, "delay", line_no, self.errs))
            else:
                delay = _parse_int(delay_spec, "delay", line_no, self.errs)
            loss = _parse_float(kv.get("loss", "0.0"), "loss", line_no, self.errs)
            corruption = None
            corrupt_spec = kv.get("corrupt")
            if corrupt_spec:
                corruption = self._corruption(corrupt_spec, src, dst, offers_to_pair(promises, src, dst), line_no)
            try:
                model = LinkModel(delay, loss, corruption)
            except ValueError as exc:
                self.fail(line_no, str(exc))
                continue
            if src == "*" and dst == "*":
                default_link = model
            elif src == "*" or dst == "*":
                self.fail(line_no, "only the '* -> *' wildcard link is supported")
            else:
                links.append(((src, dst), model))
        links.sort(key=lambda kv: kv[0])

        for line_no, cfg in self.raw_observers:
            for a in (cfg.observer, *cfg.targets):
                if a not in graph.agents:
                    self.fail(line_no, f"observer line names unknown agent {a!r}")

        if self.errs:
            raise ParseError(self.errs)

        report = validate_graph(graph, behaviors=behaviors)
        if not report.ok:
            raise ValidationError([Diagnostic(None, f"{v.code}: {v.message}")
                                   for v in report.violations])

        return Scenario(
            name, graph, tuple(policies), tuple(links), default_link,
            tuple(cfg for _, cfg in self.raw_observers), ticks, seed,
            tuple(self.analysis))

    def _corruption(self, spec: str, src: str, dst: str,
                    union: set[Symbol], line_no: int):
        if spec.startswith("flip:"):
            p = _parse_float(spec[5:], "flip probability", line_no, self.errs)
            syms = sorted(union)
            if len(syms) < 2:
                self.fail(line_no,
                          f"flip corruption needs >= 2 offered symbols on {src}->{dst}")
                return None
            rows = []
            share = p / (len(syms) - 1)
            for s in syms:
                row = tuple((t, 1.0 - p if t == s else share) for t in syms)
                rows.append((s, row))
            return tuple(rows)
        # explicit matrix: SYM:SUB=W;SUB=W,SYM:...
        rows = []
        for row_spec in spec.split(","):
            sym, _, rest = row_spec.partition(":")
            if not rest:
                self.fail(line_no, f"malformed corruption row {row_spec!r}")
                continue
            row = []
            for item in rest.split(";"):
                sub, _, w = item.partition("=")
                row.append((sub, _parse_float(w, "corruption weight", line_no, self.errs)))
            rows.append((sym, tuple(row)))
        return tuple(rows)


def offers_to_pair(promises: Iterable[Promise], src: AgentId, dst: AgentId) -> set[Symbol]:
    """Union of symbols offered from src to dst (the wire's symbol domain)."""
    out: set[Symbol] = set()
    for p in promises:
        if p.polarity is Polarity.OFFER and p.giver == src and p.promisee == dst:
            out.update(p.body.alphabet)
    return out


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario text.

    Raises ParseError for malformed syntax and ValidationError for graph or
    reference violations; both carry diagnostics with line numbers.
    """
    parser = _Parser(text)
    parser.read()
    return parser.finalize()


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# -- rendering ---------------------------------------------------------------


def _render_float(x: float) -> str:
    return repr(x)


def _render_policy(p: BehaviorPolicy) -> str:
    parts = [p.agent, p.tau, p.mode]
    if p.mode == GENERATE:
        parts.append("dist=" + ",".join(f"{s}:{_render_float(w)}" for s, w in p.distribution))
    elif p.sources:
        parts.append("sources=" + ",".join(f"{t}:{_render_float(w)}" for t, w in p.sources))
    if p.period != 1:
        parts.append(f"period={p.period}")
    if p.phase != 0:
        parts.append(f"phase={p.phase}")
    if p.fidelity_flip:
        parts.append(f"fidelity={_render_float(p.fidelity_flip)}")
    return " ".join(parts)


def _render_link(src: str, dst: str, link: LinkModel) -> str:
    parts = [f"{src} -> {dst}"]
    if isinstance(link.delay, tuple):
        parts.append(f"delay={link.delay[0]}..{link.delay[1]}")
    else:
        parts.append(f"delay={link.delay}")
    if link.loss_probability:
        parts.append(f"loss={_render_float(link.loss_probability)}")
    if link.corruption is not None:
        rows = ",".join(
            sym + ":" + ";".join(f"{sub}={_render_float(w)}" for sub, w in row)
            for sym, row in link.corruption
        )
        parts.append(f"corrupt={rows}")
    return " ".join(parts)


def _render_observer(cfg: ObserverConfig) -> str:
    return (f"{cfg.observer} watches {cfg.targets[0]},{cfg.targets[1]} "
            f"period={cfg.sampling_period} pairing={cfg.pairing}")


def render_scenario(s: Scenario) -> str:
    """Canonical text for a scenario; parse(render(s)) == s."""
    out = [f"name: {s.name}", f"ticks: {s.ticks}", f"seed: {s.seed}", ""]
    out.append("[agents]")
    out.extend(sorted(s.graph.agents))
    out.append("")
    out.append("[promises]")
    out.extend(p.render() for p in s.graph.promises)
    if s.policies:
        out.append("")
        out.append("[policies]")
        out.extend(_render_policy(p) for p in s.policies)
    if s.links_table or s.default_link is not None:
        out.append("")
        out.append("[links]")
        if s.default_link is not None:
            out.append(_render_link("*", "*", s.default_link))
        out.extend(_render_link(src, dst, link) for (src, dst), link in s.links_table)
    if s.observers:
        out.append("")
        out.append("[observers]")
        out.extend(_render_observer(cfg) for cfg in s.observers)
    if s.analysis:
        out.append("")
        out.append("[analysis]")
        out.extend(spec.render() for spec in s.analysis)
    return "\n".join(out) + "\n"
