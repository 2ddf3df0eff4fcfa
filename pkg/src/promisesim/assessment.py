"""Assessments and probability structures over event logs.

Everything here is a pure function of an immutable log plus the promise
graph.  The central rule: no joint distribution exists without accepted
observability promises for every interior the assessor reads, and no
assessment at all without standing (scope).

Two pairing disciplines are provided for joints.  ``ack`` pairs each
originating emission with the correlated acceptance at the far end
(transactional; depends only on the log).  ``snapshot`` pairs the
observer's delayed views of the two interiors at each sampling instant
(the simultaneous picture; correct only for a sufficiently fast observer,
which :func:`nyquist_check` polices).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .core import (
    AgentId,
    Alphabet,
    Polarity,
    Promise,
    PromiseGraph,
    PromiseType,
    Symbol,
    channel_overlap,
    detect_chains,
    parse_sigma_tau,
    resolve_scope,
)
from .engine import (
    ACCEPT,
    AGENT,
    BY_ACKNOWLEDGMENT,
    CORR,
    EMIT,
    EventLog,
    IncompletePattern,
    KIND,
    LOCAL_TIME,
    OBSERVE,
    ObserverConfig,
    PEER,
    PTYPE,
    REASON,
    SNAPSHOT,
    SYMBOL,
    TICK,
    ack_transaction,
)

__all__ = [
    "AssessmentOutcome", "REFUSED", "Refusal", "EmpiricalDist", "JointDist",
    "ObserverConfig", "SamplingReport", "CorrelationTable",
    "NoStanding", "MissingObservability",
    "assess_event", "empirical_distribution", "joint_distribution",
    "nyquist_check", "observer_correlation",
    "dump_dist", "load_dist", "dump_joint", "load_joint",
    "UNDERSAMPLED_OBSERVER", "SNAPSHOT_FALLBACK",
]

UNDERSAMPLED_OBSERVER = "UNDERSAMPLED-OBSERVER"
SNAPSHOT_FALLBACK = "SNAPSHOT-FALLBACK"


class AssessmentOutcome(Enum):
    KEPT = "KEPT"
    NOT_KEPT = "NOT-KEPT"


class Refusal:
    """Lack of standing to assess; a value, not an error."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "REFUSED"


REFUSED = Refusal()


class NoStanding(Exception):
    """The assessor is outside the promise's scope."""


class MissingObservability(Exception):
    """A required observability (or linkage) promise is absent."""

    def __init__(self, missing: str):
        self.missing = missing
        super().__init__(missing)


@dataclass(frozen=True)
class EmpiricalDist:
    """Counted symbol frequencies for one promise type."""

    ptype: PromiseType
    counts: tuple[tuple[Symbol, int], ...]
    total: int

    @classmethod
    def from_counts(cls, ptype: PromiseType, counts: dict) -> "EmpiricalDist":
        items = tuple(sorted(counts.items()))
        return cls(ptype, items, sum(counts.values()))

    @property
    def empty(self) -> bool:
        return self.total == 0

    def count(self, symbol: Symbol) -> int:
        for s, c in self.counts:
            if s == symbol:
                return c
        return 0

    def support(self) -> frozenset[Symbol]:
        return frozenset(s for s, c in self.counts if c > 0)

    def probabilities(self, smoothing: float = 0.0) -> dict[Symbol, float]:
        if self.total == 0 and smoothing == 0.0:
            return {}
        k = len(self.counts)
        denom = self.total + smoothing * k
        return {s: (c + smoothing) / denom for s, c in self.counts}


@dataclass(frozen=True)
class JointDist:
    """Joint symbol counts over a pair of ends, owned by one assessor.

    ``counts[i][j]`` counts row symbol i against column symbol j; rows index
    ``row_alphabet.symbols`` and columns ``col_alphabet.symbols``.
    """

    row_alphabet: Alphabet
    col_alphabet: Alphabet
    counts: tuple[tuple[int, ...], ...]
    total: int
    assessor: AgentId
    pair: tuple[AgentId, AgentId] = ("", "")
    row_tau: PromiseType = ""
    col_tau: PromiseType = ""
    pairing: str = BY_ACKNOWLEDGMENT
    trust_flags: tuple[str, ...] = ()

    @classmethod
    def from_pairs(cls, rows: Alphabet, cols: Alphabet, pairs, assessor: AgentId,
                   **meta) -> "JointDist":
        ri = {s: i for i, s in enumerate(rows.symbols)}
        ci = {s: i for i, s in enumerate(cols.symbols)}
        grid = [[0] * len(cols) for _ in rows.symbols]
        total = 0
        for r, c in pairs:
            grid[ri[r]][ci[c]] += 1
            total += 1
        return cls(rows, cols, tuple(tuple(row) for row in grid), total, assessor, **meta)

    @property
    def empty(self) -> bool:
        return self.total == 0

    def off_diagonal_total(self) -> int:
        out = 0
        for i, row in enumerate(self.counts):
            for j, c in enumerate(row):
                if self.row_alphabet.symbols[i] != self.col_alphabet.symbols[j]:
                    out += c
        return out

    def row_marginal(self) -> EmpiricalDist:
        counts = {s: sum(self.counts[i]) for i, s in enumerate(self.row_alphabet.symbols)}
        return EmpiricalDist.from_counts(self.row_tau or "row", counts)

    def col_marginal(self) -> EmpiricalDist:
        counts = {
            s: sum(row[j] for row in self.counts)
            for j, s in enumerate(self.col_alphabet.symbols)
        }
        return EmpiricalDist.from_counts(self.col_tau or "col", counts)

    def transposed(self) -> "JointDist":
        grid = tuple(tuple(self.counts[i][j] for i in range(len(self.row_alphabet)))
                     for j in range(len(self.col_alphabet)))
        return JointDist(self.col_alphabet, self.row_alphabet, grid, self.total,
                         self.assessor, (self.pair[1], self.pair[0]),
                         self.col_tau, self.row_tau, self.pairing, self.trust_flags)


def assess_event(assessor: AgentId, promise: Promise, event, graph: PromiseGraph):
    """KEPT/NOT-KEPT for one event, or REFUSED without standing.

    KEPT requires the event to exhibit the promised behavior: right giver,
    right type, kind matching the polarity (EMIT for offers, ACCEPT for
    acceptances) and a symbol inside the promised alphabet.
    """
    if assessor not in resolve_scope(graph, promise):
        return REFUSED
    wanted = EMIT if promise.polarity is Polarity.OFFER else ACCEPT
    if (event[KIND] == wanted
            and event[AGENT] == promise.giver
            and event[PTYPE] == promise.tau
            and event[SYMBOL] in promise.body.alphabet):
        return AssessmentOutcome.KEPT
    return AssessmentOutcome.NOT_KEPT


def empirical_distribution(log: EventLog, assessor: AgentId, promise: Promise,
                           graph: PromiseGraph) -> EmpiricalDist:
    """Frequencies of the promise's qualifying events, as seen by ``assessor``.

    Raises NoStanding outside the promise's scope.  With zero qualifying
    events the empty distribution (total 0) is returned, never an error.
    """
    if assessor not in resolve_scope(graph, promise):
        raise NoStanding(f"{assessor} has no standing for {promise.render()}")
    wanted = EMIT if promise.polarity is Polarity.OFFER else ACCEPT
    giver = promise.giver
    tau = promise.tau
    counts: dict[Symbol, int] = {}
    for rec in log.records:
        if rec[KIND] == wanted and rec[AGENT] == giver and rec[PTYPE] == tau:
            sym = rec[SYMBOL]
            counts[sym] = counts.get(sym, 0) + 1
    return EmpiricalDist.from_counts(tau, counts)


# -- observability gates -----------------------------------------------------


def _sigma_binding(graph: PromiseGraph, target: AgentId, observer: AgentId,
                   data_tau: Optional[PromiseType] = None):
    """The usable observability binding exposing target's interior, or None."""
    for p in graph.promises:
        if p.polarity is not Polarity.OFFER or p.giver != target or p.promisee != observer:
            continue
        parsed = parse_sigma_tau(p.tau)
        if parsed is None or parsed[0] != target:
            continue
        if data_tau is not None and parsed[1] != data_tau:
            continue
        acc = graph.acceptance_of(observer, target, p.tau)
        if acc is None:
            continue
        corr = dict(acc.correspondence) if acc.correspondence else None
        overlap = channel_overlap(p.body.alphabet, acc.body.alphabet, corr)
        if overlap:
            return p, acc, overlap, parsed[1]
    return None


def _require_observability(graph: PromiseGraph, observer: AgentId,
                           targets: Sequence[AgentId],
                           taus: Sequence[Optional[PromiseType]]):
    found = []
    for target, tau in zip(targets, taus):
        if target == observer:
            found.append(None)  # self-knowledge needs no promise
            continue
        binding = _sigma_binding(graph, target, observer, tau)
        if binding is None:
            label = f"sigma:{target}:{tau or '<tau>'}"
            raise MissingObservability(
                f"{target} +{label} -> {observer} (offered and accepted)")
        found.append(binding)
    return found


def _on_chain(graph: PromiseGraph, first: AgentId, second: AgentId) -> bool:
    for chain in detect_chains(graph):
        agents = chain.agents
        if first in agents and second in agents:
            if agents.index(first) < agents.index(second):
                return True
    return False


def _require_linkage(graph: PromiseGraph, sender: AgentId, receiver: AgentId):
    try:
        ack_transaction(sender, receiver, graph)
        return
    except IncompletePattern as exc:
        if _on_chain(graph, sender, receiver):
            return
        raise MissingObservability(
            f"no acknowledgment pattern or conditional relay path "
            f"{sender} -> {receiver}; pattern missing: {', '.join(exc.missing)}")


def _infer_row_tau(graph: PromiseGraph, agent: AgentId) -> PromiseType:
    taus = sorted({p.tau for p in graph.offers_by(agent) if parse_sigma_tau(p.tau) is None})
    if len(taus) != 1:
        raise ValueError(
            f"cannot infer the emitted type for {agent} (candidates: {taus}); pass row_tau")
    return taus[0]


def _infer_col_tau(graph: PromiseGraph, agent: AgentId) -> PromiseType:
    taus = sorted({
        p.tau for p in graph.promises
        if p.polarity is Polarity.ACCEPT and p.giver == agent
        and parse_sigma_tau(p.tau) is None
    })
    if len(taus) != 1:
        raise ValueError(
            f"cannot infer the accepted type for {agent} (candidates: {taus}); pass col_tau")
    return taus[0]


def joint_distribution(
    log: EventLog,
    config: ObserverConfig,
    graph: PromiseGraph,
    pair: Optional[tuple[AgentId, AgentId]] = None,
    row_tau: Optional[PromiseType] = None,
    col_tau: Optional[PromiseType] = None,
    require_linkage: bool = True,
) -> JointDist:
    """The assessor's joint matrix over a pair of ends.

    Raises MissingObservability when the graph lacks the observability (or,
    for ``ack`` pairing, transactional linkage) promises the assessor needs.
    Raises ValueError when the end types are ambiguous and not given.
    """
    x, y = pair if pair is not None else config.targets
    observer = config.observer

    if config.pairing == BY_ACKNOWLEDGMENT:
        if row_tau is None:
            row_tau = _infer_row_tau(graph, x)
        if col_tau is None:
            col_tau = _infer_col_tau(graph, y)
        _require_observability(graph, observer, (x, y), (row_tau, col_tau))
        if require_linkage:
            _require_linkage(graph, x, y)

        row_offers = [p for p in graph.offers_by(x) if p.tau == row_tau]
        if not row_offers:
            raise ValueError(f"{x} offers nothing of type {row_tau!r}")
        row_alpha = row_offers[0].body.alphabet
        col_syms: set[Symbol] = set()
        for p in graph.promises:
            if p.polarity is Polarity.ACCEPT and p.giver == y and p.tau == col_tau:
                col_syms.update(p.body.alphabet)
        if not col_syms:
            raise ValueError(f"{y} accepts nothing of type {col_tau!r}")
        col_alpha = Alphabet(sorted(col_syms))

        sent: dict[int, Symbol] = {}
        got: dict[int, Symbol] = {}
        for rec in [r for r in log.records
                    if r[KIND] == EMIT and r[AGENT] == x and r[PTYPE] == row_tau]:
            sent.setdefault(rec[CORR], rec[SYMBOL])
        for rec in [r for r in log.records
                    if r[KIND] == ACCEPT and r[AGENT] == y and r[PTYPE] == col_tau]:
            got.setdefault(rec[CORR], rec[SYMBOL])
        pairs = [(sym, got[corr]) for corr, sym in sent.items() if corr in got]
        return JointDist.from_pairs(
            row_alpha, col_alpha, pairs, observer,
            pair=(x, y), row_tau=row_tau, col_tau=col_tau,
            pairing=BY_ACKNOWLEDGMENT)

    # snapshot pairing
    bindings = _require_observability(graph, observer, (x, y), (row_tau, col_tau))
    alphas = []
    taus = []
    for end, binding, tau in zip((x, y), bindings, (row_tau, col_tau)):
        if binding is None:  # self-observation: fall back to own offer
            tau = tau or _infer_row_tau(graph, end)
            offers = [p for p in graph.offers_by(end) if p.tau == tau]
            alphas.append(offers[0].body.alphabet)
            taus.append(tau)
        else:
            alphas.append(binding[2])
            taus.append(binding[3])
    row_alpha, col_alpha = alphas
    row_tau, col_tau = taus

    period = config.sampling_period
    samples = [r for r in log.records if r[KIND] == OBSERVE and r[AGENT] == observer]
    row_at = {r[TICK]: r[SYMBOL] for r in samples
              if r[PEER] == x and r[PTYPE] == row_tau
              and r[SYMBOL] is not None and not r[TICK] % period}
    col_at = {r[TICK]: r[SYMBOL] for r in samples
              if r[PEER] == y and r[PTYPE] == col_tau
              and r[SYMBOL] is not None and not r[TICK] % period}
    pairs = [(sym, col_at[t]) for t, sym in row_at.items() if t in col_at]

    flags = ()
    sampling = nyquist_check(config, log, pair=(x, y), taus=(row_tau, col_tau))
    if sampling.status == "UNDERSAMPLED":
        flags = (UNDERSAMPLED_OBSERVER,)
    return JointDist.from_pairs(
        row_alpha, col_alpha, pairs, observer,
        pair=(x, y), row_tau=row_tau, col_tau=col_tau,
        pairing=SNAPSHOT, trust_flags=flags)


@dataclass(frozen=True)
class SamplingReport:
    """Nyquist audit of an observer against the channel it watches."""

    observer: AgentId
    sampling_period: int
    min_interval: Optional[int]
    status: str  # OK | UNDERSAMPLED | NO-TRAFFIC
    n_events: int = 0

    @property
    def undersampled(self) -> bool:
        return self.status == "UNDERSAMPLED"


def nyquist_check(config: ObserverConfig, log: EventLog,
                  pair: Optional[tuple[AgentId, AgentId]] = None,
                  taus: Optional[Sequence[Optional[PromiseType]]] = None) -> SamplingReport:
    """UNDERSAMPLED when the sampling period exceeds half the channel's
    minimum inter-event interval (in scheduler ticks)."""
    x, y = pair if pair is not None else config.targets
    tx, ty = taus if taus is not None else (None, None)
    intervals: list[int] = []
    n_events = 0
    for end, tau in ((x, tx), (y, ty)):
        last = None
        for rec in log.records:
            if rec[AGENT] != end or rec[KIND] not in (EMIT, ACCEPT):
                continue
            if tau is not None and rec[PTYPE] != tau:
                continue
            n_events += 1
            t = rec[TICK]
            if last is not None and t > last:
                intervals.append(t - last)
            if last is None or t > last:
                last = t
    if not intervals:
        return SamplingReport(config.observer, config.sampling_period, None,
                              "NO-TRAFFIC", n_events)
    min_interval = min(intervals)
    status = "UNDERSAMPLED" if config.sampling_period > min_interval / 2 else "OK"
    return SamplingReport(config.observer, config.sampling_period, min_interval,
                          status, n_events)


@dataclass(frozen=True)
class CorrelationTable:
    """Empirical kept-kept coincidence probability per lag (scheduler ticks).

    Discretizes the observer-correlation convolution; the run horizon
    truncates the lag integral, so tail mass beyond the horizon is absent
    by construction.
    """

    lags: tuple[int, ...]
    values: tuple[float, ...]

    def peak_lag(self) -> Optional[int]:
        if not self.values or max(self.values) == 0.0:
            return None
        best = max(self.values)
        return self.lags[self.values.index(best)]


def observer_correlation(log: EventLog, config: ObserverConfig, graph: PromiseGraph,
                         max_lag: int,
                         pair: Optional[tuple[AgentId, AgentId]] = None,
                         row_tau: Optional[PromiseType] = None,
                         col_tau: Optional[PromiseType] = None) -> CorrelationTable:
    """P(offer kept at tick t AND acceptance kept at tick t+s) per lag s.

    The first peak exposes the channel delay.  Requires the same
    observability standing as a joint distribution.
    """
    x, y = pair if pair is not None else config.targets
    if row_tau is None:
        row_tau = _infer_row_tau(graph, x)
    if col_tau is None:
        try:
            col_tau = _infer_col_tau(graph, y)
        except ValueError:
            col_tau = row_tau  # unbound receiver: nothing will match anyway
    _require_observability(graph, config.observer, (x, y), (row_tau, col_tau))

    offer = next((p for p in graph.offers_by(x) if p.tau == row_tau), None)
    offer_alpha = offer.body.alphabet if offer else None
    emit_ticks = set()
    accept_ticks = set()
    for rec in log.records:
        if rec[KIND] == EMIT and rec[AGENT] == x and rec[PTYPE] == row_tau:
            if offer_alpha is None or rec[SYMBOL] in offer_alpha:
                emit_ticks.add(rec[TICK])
        elif rec[KIND] == ACCEPT and rec[AGENT] == y and rec[PTYPE] == col_tau:
            accept_ticks.add(rec[TICK])

    horizon = log.ticks
    lags = tuple(range(max_lag + 1))
    values = []
    for s in lags:
        window = horizon - s
        if window <= 0:
            values.append(0.0)
            continue
        hits = sum(1 for t in emit_ticks if t < window and (t + s) in accept_ticks)
        values.append(hits / window)
    return CorrelationTable(lags, tuple(values))


# -- tabular serialization ---------------------------------------------------


def dump_dist(dist: EmpiricalDist, assessor: AgentId = "") -> str:
    lines = [f"dist\t{dist.ptype}\tassessor={assessor}\tN={dist.total}"]
    for sym, count in dist.counts:
        lines.append(f"{sym}\t{count}")
    return "\n".join(lines) + "\n"


def load_dist(text: str) -> tuple[EmpiricalDist, AgentId]:
    lines = [ln for ln in text.splitlines() if ln]
    head = lines[0].split("\t")
    if head[0] != "dist":
        raise ValueError("not a distribution table")
    assessor = head[2].split("=", 1)[1]
    counts = {}
    for ln in lines[1:]:
        sym, count = ln.split("\t")
        counts[sym] = int(count)
    return EmpiricalDist.from_counts(head[1], counts), assessor


def dump_joint(joint: JointDist) -> str:
    head = (
        f"joint\trows={joint.row_tau}:{joint.row_alphabet.render()}"
        f"\tcols={joint.col_tau}:{joint.col_alphabet.render()}"
        f"\tassessor={joint.assessor}\tN={joint.total}\tpairing={joint.pairing}"
    )
    lines = [head, "\t".join([""] + list(joint.col_alphabet.symbols))]
    for sym, row in zip(joint.row_alphabet.symbols, joint.counts):
        lines.append("\t".join([sym] + [str(c) for c in row]))
    return "\n".join(lines) + "\n"


def load_joint(text: str) -> JointDist:
    lines = [ln for ln in text.splitlines() if ln]
    head = lines[0].split("\t")
    if head[0] != "joint":
        raise ValueError("not a joint table")
    def _end(tok):
        tau, _, alpha = tok.split("=", 1)[1].partition(":")
        return tau, Alphabet(alpha.strip("{}").split(","))
    row_tau, rows = _end(head[1])
    col_tau, cols = _end(head[2])
    assessor = head[3].split("=", 1)[1]
    pairing = head[5].split("=", 1)[1]
    grid = []
    order = lines[1].split("\t")[1:]
    ci = [order.index(s) for s in cols.symbols]
    row_of = {}
    for ln in lines[2:]:
        parts = ln.split("\t")
        row_of[parts[0]] = [int(v) for v in parts[1:]]
    for sym in rows.symbols:
        raw = row_of[sym]
        grid.append(tuple(raw[i] for i in ci))
    total = sum(sum(r) for r in grid)
    return JointDist(rows, cols, tuple(grid), total, assessor,
                     row_tau=row_tau, col_tau=col_tau, pairing=pairing)
