"""Deterministic, seeded discrete-event execution of a promise graph.

A run turns a scenario (graph + behavior policies + link models + observer
configs) into an event log.  The log is the single source of truth for all
downstream assessment: every emission, delivery, acceptance, rejection,
condition satisfaction and observer sample is a record.

Records are plain tuples for speed (large runs produce millions of them);
the field layout is fixed and indexed by the ``SEQ`` .. ``PEER`` constants:

    (global_seq, agent, local_time, kind, ptype, symbol, correlation,
     reason, tick, peer)

``global_seq`` and ``tick`` are scheduler plumbing (reproducibility and
wire-time units); every paper-visible ordering assertion uses only
``local_time`` (the agent's own event counter) and ``correlation``.

Time discipline: within a tick, arrivals are processed first, then policy
emissions, then observer samples.  Per-agent clocks increment once per
local event; a lost message is logged for link accounting but touches no
clock (the addressee never saw it).
"""

from __future__ import annotations

import hashlib
import random
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .core import (
    AgentId,
    Alphabet,
    Polarity,
    Promise,
    PromiseGraph,
    PromiseType,
    Symbol,
    channel_overlap,
    parse_sigma_tau,
    validate_graph,
)

# Record field indexes.
SEQ, AGENT, LOCAL_TIME, KIND, PTYPE, SYMBOL, CORR, REASON, TICK, PEER = range(10)

EVENT_FIELDS = (
    "global_seq", "agent", "local_time", "kind", "ptype",
    "symbol", "correlation", "reason", "tick", "peer",
)

# Event kinds.
EMIT = "EMIT"
DELIVER = "DELIVER"
ACCEPT = "ACCEPT"
REJECT = "REJECT"
CONDITION_SATISFIED = "CONDITION-SATISFIED"
OBSERVE = "OBSERVE"

# Rejection reasons.
NO_ACCEPTANCE_PROMISE = "no-acceptance-promise"
SYMBOL_OUTSIDE_ALPHABET = "symbol-outside-alphabet"
LOST_IN_LINK = "lost-in-link"

# Correlation ids: emissions mint (policy_id+1) * _CORR_STRIDE + n, observer
# samples use the bare tick; the ranges never collide.
_CORR_STRIDE = 1 << 40

GENERATE = "generate"
RELAY = "relay"

SNAPSHOT = "snapshot"
BY_ACKNOWLEDGMENT = "ack"


class InvalidScenario(Exception):
    """The scenario failed graph validation; nothing partial is produced."""


class ConditionUnsatisfied(Exception):
    """A conditional offer was forced to emit; signals a scheduler bug."""


class IncompletePattern(Exception):
    """The four-promise acknowledgment pattern is not fully present."""

    def __init__(self, missing: Sequence[str]):
        self.missing = tuple(missing)
        super().__init__("missing: " + ", ".join(self.missing))


def derive_rng(seed: int, label: str) -> random.Random:
    """A dedicated RNG stream, stable under scenario composition.

    Streams are keyed by (master seed, stable label) so adding an observer
    or deleting another agent's promises never perturbs existing draws.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class BehaviorPolicy:
    """Generative side of an agent's offered behavior.

    ``generate`` mode draws from a fixed distribution every ``period``
    ticks (gated on latched conditions when the offer is conditional).
    ``relay`` mode re-emits an accepted upstream symbol, consuming one
    queued instance of every condition per emission; ``sources`` weights
    the choice of condition feed when there are several, ``fidelity_flip``
    replaces the symbol with a uniformly chosen other symbol at that rate.
    """

    agent: AgentId
    tau: PromiseType
    mode: str = GENERATE
    distribution: tuple[tuple[Symbol, float], ...] = ()
    period: int = 1
    phase: int = 0
    sources: tuple[tuple[PromiseType, float], ...] = ()
    fidelity_flip: float = 0.0

    def __post_init__(self):
        if self.mode not in (GENERATE, RELAY):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.period < 1 or self.phase < 0:
            raise ValueError("period must be >= 1 and phase >= 0")
        if self.mode == GENERATE:
            if not self.distribution:
                raise ValueError("generate policy needs a distribution")
            total = 0.0
            for sym, w in self.distribution:
                if w < 0:
                    raise ValueError(f"negative weight for {sym!r}")
                total += w
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"weights sum to {total!r}, expected 1")
        if self.sources:
            total = sum(w for _, w in self.sources)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"source weights sum to {total!r}, expected 1")
        if not 0.0 <= self.fidelity_flip <= 1.0:
            raise ValueError("fidelity_flip must be in [0,1]")

    @classmethod
    def uniform(cls, agent: AgentId, tau: PromiseType, alphabet: Iterable[Symbol],
                period: int = 1, phase: int = 0) -> "BehaviorPolicy":
        syms = tuple(alphabet)
        w = 1.0 / len(syms)
        return cls(agent, tau, GENERATE, tuple((s, w) for s in syms), period, phase)


@dataclass(frozen=True)
class LinkModel:
    """Wire model for one directed agent pair.

    ``delay`` is a fixed tick count or an inclusive (lo, hi) range drawn
    per message; ``corruption`` maps each symbol to substitute weights
    (rows must sum to 1).  Corruption happens on the wire, before the
    receiver's acceptance filtering.
    """

    delay: int | tuple[int, int] = 1
    loss_probability: float = 0.0
    corruption: Optional[tuple[tuple[Symbol, tuple[tuple[Symbol, float], ...]], ...]] = None

    def __post_init__(self):
        if isinstance(self.delay, tuple):
            lo, hi = self.delay
            if not (1 <= lo <= hi):
                raise ValueError(f"bad delay range {self.delay!r}")
        elif self.delay < 1:
            raise ValueError("delay must be >= 1 tick")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss probability must be in [0,1]")
        if self.corruption is not None:
            for sym, row in self.corruption:
                total = sum(w for _, w in row)
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(f"corruption row for {sym!r} sums to {total!r}")

    @property
    def randomized(self) -> bool:
        return (self.loss_probability > 0.0 or self.corruption is not None
                or isinstance(self.delay, tuple))


@dataclass(frozen=True)
class ObserverConfig:
    """A third party sampling interior states via observability channels."""

    observer: AgentId
    targets: tuple[AgentId, AgentId]
    sampling_period: int = 1
    pairing: str = SNAPSHOT

    def __post_init__(self):
        if self.sampling_period < 1:
            raise ValueError("sampling_period must be >= 1")
        if self.pairing not in (SNAPSHOT, BY_ACKNOWLEDGMENT):
            raise ValueError(f"unknown pairing {self.pairing!r}")


@dataclass
class AgentState:
    """Mutable per-agent runtime state; owned by one Simulation."""

    id: AgentId
    clock: int = 0
    interior: dict[PromiseType, Symbol] = field(default_factory=dict)


@dataclass(frozen=True)
class EventLog:
    """Complete, immutable history of one run."""

    records: tuple
    seed: int
    ticks: int
    scenario_hash: str = ""
    undelivered: tuple[tuple[AgentId, AgentId, PromiseType, int], ...] = ()

    def by_agent(self, agent: AgentId) -> list:
        return [r for r in self.records if r[AGENT] == agent]

    def of_kind(self, kind: str) -> list:
        return [r for r in self.records if r[KIND] == kind]


@dataclass(frozen=True)
class TransactionTemplate:
    """The four promises of the acknowledgment pattern between a pair."""

    offer: Promise
    acceptance: Promise
    ack_offer: Promise
    ack_acceptance: Promise

    @property
    def data_tau(self) -> PromiseType:
        return self.offer.tau

    @property
    def ack_tau(self) -> PromiseType:
        return self.ack_offer.tau


PATTERN_PARTS = ("offer", "acceptance", "conditional-ack-offer", "ack-acceptance")


def ack_transaction(sender: AgentId, receiver: AgentId, graph: PromiseGraph) -> TransactionTemplate:
    """Resolve the four-promise acknowledgment pattern for a pair.

    Raises IncompletePattern naming the absent parts when the pattern is
    not fully present; candidates are tried in sorted type order and the
    most complete one is reported.
    """
    offers = sorted(
        (p for p in graph.promises
         if p.polarity is Polarity.OFFER and p.giver == sender and p.promisee == receiver
         and parse_sigma_tau(p.tau) is None),
        key=lambda p: p.tau,
    )
    best_missing: Optional[tuple[str, ...]] = None
    for offer in offers:
        missing = []
        acceptance = graph.acceptance_of(receiver, sender, offer.tau)
        if acceptance is None:
            missing.append("acceptance")
        ack_offer = None
        for q in sorted(graph.offers_by(receiver), key=lambda p: p.tau):
            if q.promisee == sender and any(c.ptype == offer.tau for c in q.conditions):
                ack_offer = q
                break
        if ack_offer is None:
            missing.append("conditional-ack-offer")
            missing.append("ack-acceptance")
        else:
            ack_acceptance = graph.acceptance_of(sender, receiver, ack_offer.tau)
            if ack_acceptance is None:
                missing.append("ack-acceptance")
        if not missing:
            return TransactionTemplate(offer, acceptance, ack_offer,
                                       graph.acceptance_of(sender, receiver, ack_offer.tau))
        if best_missing is None or len(missing) < len(best_missing):
            best_missing = tuple(missing)
    if best_missing is None:
        best_missing = PATTERN_PARTS
    raise IncompletePattern(best_missing)


class _PolicyRuntime:
    """Per-policy scheduler state: RNG stream, counters, condition feeds."""

    __slots__ = ("policy", "pid", "offers", "conditions", "rng", "emitted",
                 "queues", "latched", "support", "cum", "src_taus", "src_cum",
                 "offer_set", "state", "targets")

    def __init__(self, policy: BehaviorPolicy, pid: int, offers: list[Promise], seed: int):
        self.state = None   # bound by the Simulation
        self.targets = ()   # (promisee, LinkModel, rng-or-None) per offer
        self.policy = policy
        self.pid = pid
        self.offers = offers
        self.conditions = offers[0].conditions
        self.rng = derive_rng(seed, f"policy:{policy.agent}:{policy.tau}")
        self.emitted = 0
        self.offer_set = frozenset(offers[0].body.alphabet)
        if policy.mode == GENERATE:
            self.support = tuple(s for s, _ in policy.distribution)
            acc = 0.0
            cum = []
            for _, w in policy.distribution:
                acc += w
                cum.append(acc)
            cum[-1] = 1.0 + 1e-12  # guard the top bucket against float dust
            self.cum = cum
            self.queues = None
            self.latched = set()
        else:
            self.support = ()
            self.cum = ()
            self.queues = tuple(deque() for _ in self.conditions)
            self.latched = None
            if policy.sources:
                self.src_taus = tuple(t for t, _ in policy.sources)
                acc = 0.0
                cum = []
                for _, w in policy.sources:
                    acc += w
                    cum.append(acc)
                cum[-1] = 1.0 + 1e-12
                self.src_cum = cum
            else:
                self.src_taus = tuple(c.ptype for c in self.conditions[:1])
                self.src_cum = (1.0 + 1e-12,)

    def active(self) -> bool:
        if not self.conditions:
            return True
        if self.policy.mode == GENERATE:
            return len(self.latched) == len(self.conditions)
        return all(self.queues)


class _ViewRuntime:
    """Delayed, overlap-filtered view of one target interior for an observer."""

    __slots__ = ("observer", "target", "data_tau", "delay", "overlap",
                 "history", "ptr", "value", "periods", "state")

    def __init__(self, observer, target, data_tau, delay, overlap, history, period):
        self.observer = observer
        self.target = target
        self.data_tau = data_tau
        self.delay = delay
        self.overlap = overlap
        self.history = history
        self.ptr = 0
        self.value = None
        self.periods = (period,)
        self.state = None  # observer AgentState, bound by the Simulation

    def due(self, tick: int) -> bool:
        for p in self.periods:
            if tick % p == 0:
                return True
        return False

    def sample(self, tick: int) -> Optional[Symbol]:
        horizon = tick - self.delay
        hist = self.history
        ptr = self.ptr
        n = len(hist)
        while ptr < n and hist[ptr][0] <= horizon:
            sym = hist[ptr][1]
            if sym in self.overlap:
                self.value = sym
            ptr += 1
        self.ptr = ptr
        return self.value


class Simulation:
    """One deterministic run over a static promise graph.

    Construct with the scenario pieces, call :meth:`run` once.  The public
    :meth:`emit_now` hook exists so the emission contract (including the
    ConditionUnsatisfied guard) can be exercised directly in tests.
    """

    def __init__(
        self,
        graph: PromiseGraph,
        policies: Sequence[BehaviorPolicy],
        links: Optional[dict[tuple[AgentId, AgentId], LinkModel]] = None,
        observers: Sequence[ObserverConfig] = (),
        seed: int = 0,
        ticks: int = 1,
        scenario_hash: str = "",
        default_link: Optional[LinkModel] = None,
        validate: bool = True,
    ):
        if ticks < 1:
            raise InvalidScenario("ticks must be >= 1")
        self.graph = graph
        self.seed = seed
        self.ticks = ticks
        self.scenario_hash = scenario_hash
        self.links = dict(links or {})
        self.default_link = default_link or LinkModel(delay=1)

        offers_by_key: dict[tuple[AgentId, PromiseType], list[Promise]] = {}
        for p in graph.promises:
            if p.polarity is Polarity.OFFER:
                offers_by_key.setdefault((p.giver, p.tau), []).append(p)
        for lst in offers_by_key.values():
            lst.sort(key=lambda p: p.promisee)

        self.policies: list[_PolicyRuntime] = []
        bound: list[tuple[AgentId, Promise]] = []
        for i, pol in enumerate(sorted(policies, key=lambda p: (p.agent, p.tau))):
            offers = offers_by_key.get((pol.agent, pol.tau))
            if not offers:
                raise InvalidScenario(
                    f"policy for {pol.agent}/{pol.tau} references no (+) promise")
            conds = offers[0].conditions
            if any(o.conditions != conds for o in offers):
                raise InvalidScenario(
                    f"offers for {pol.agent}/{pol.tau} disagree on conditions")
            if pol.mode == GENERATE:
                bad = [s for s, _ in pol.distribution if s not in offers[0].body.alphabet]
                if bad:
                    raise InvalidScenario(
                        f"policy distribution for {pol.agent}/{pol.tau} leaves the offered alphabet: {bad}")
            if pol.mode == RELAY:
                if not conds:
                    raise InvalidScenario(
                        f"relay policy for {pol.agent}/{pol.tau} needs a conditional offer")
                cond_taus = {c.ptype for c in conds}
                stray = [t for t, _ in pol.sources if t not in cond_taus]
                if stray:
                    raise InvalidScenario(
                        f"relay sources for {pol.agent}/{pol.tau} name non-condition types: {stray}")
            self.policies.append(_PolicyRuntime(pol, i, offers, seed))
            for o in offers:
                bound.append((pol.agent, o))

        if validate:
            report = validate_graph(graph, behaviors=bound)
            if not report.ok:
                raise InvalidScenario("; ".join(v.message for v in report.violations))

        self.states = {a: AgentState(a) for a in graph.agents}

        # Map (receiver, cond tau) -> feeds into policy condition slots.
        self.feeds: dict[tuple[AgentId, PromiseType], list[tuple[_PolicyRuntime, int]]] = {}
        for ps in self.policies:
            for idx, cond in enumerate(ps.conditions):
                self.feeds.setdefault((ps.policy.agent, cond.ptype), []).append((ps, idx))

        self._link_rngs: dict[tuple[AgentId, AgentId], random.Random] = {}
        self.records: list = []
        self._seq = 0
        self._wheel: dict[int, list] = {}

        for ps in self.policies:
            ps.state = self.states[ps.policy.agent]
            ps.targets = tuple(
                (o.promisee, self.link_for(ps.policy.agent, o.promisee),
                 self._link_rng(ps.policy.agent, o.promisee)
                 if self.link_for(ps.policy.agent, o.promisee).randomized else None)
                for o in ps.offers
            )

        self._views = self._build_views(observers)
        for view in self._views:
            view.state = self.states[view.observer]
        self._histories_setup()

    # -- observer plumbing -------------------------------------------------

    def _build_views(self, observers: Sequence[ObserverConfig]) -> list[_ViewRuntime]:
        plan: dict[tuple[AgentId, AgentId, PromiseType], _ViewRuntime] = {}
        self._history: dict[tuple[AgentId, PromiseType], list] = {}
        for cfg in observers:
            if cfg.pairing != SNAPSHOT:
                continue
            for target in cfg.targets:
                if target == cfg.observer:
                    continue
                for p in self.graph.promises:
                    if p.polarity is not Polarity.OFFER or p.giver != target:
                        continue
                    if p.promisee != cfg.observer:
                        continue
                    parsed = parse_sigma_tau(p.tau)
                    if parsed is None or parsed[0] != target:
                        continue
                    acc = self.graph.acceptance_of(cfg.observer, target, p.tau)
                    if acc is None:
                        continue
                    corr = dict(acc.correspondence) if acc.correspondence else None
                    overlap = channel_overlap(p.body.alphabet, acc.body.alphabet, corr)
                    if not overlap:
                        continue
                    data_tau = parsed[1]
                    key = (cfg.observer, target, data_tau)
                    link = self.link_for(target, cfg.observer)
                    delay = link.delay if isinstance(link.delay, int) else link.delay[0]
                    hist = self._history.setdefault((target, data_tau), [])
                    old = plan.get(key)
                    if old is None:
                        plan[key] = _ViewRuntime(cfg.observer, target, data_tau, delay,
                                                 frozenset(overlap), hist,
                                                 cfg.sampling_period)
                    elif cfg.sampling_period not in old.periods:
                        old.periods = tuple(sorted(old.periods + (cfg.sampling_period,)))
        return [plan[k] for k in sorted(plan)]

    def _histories_setup(self):
        self._watched = frozenset(self._history)

    def link_for(self, src: AgentId, dst: AgentId) -> LinkModel:
        return self.links.get((src, dst), self.default_link)

    def _link_rng(self, src: AgentId, dst: AgentId) -> random.Random:
        key = (src, dst)
        rng = self._link_rngs.get(key)
        if rng is None:
            rng = derive_rng(self.seed, f"link:{src}->{dst}")
            self._link_rngs[key] = rng
        return rng

    # -- the operations ----------------------------------------------------

    def emit_now(self, agent: AgentId, tau: PromiseType, tick: int = 0):
        """Emit once for the (agent, tau) policy; contract-checking entry.

        Raises ConditionUnsatisfied when a conditional offer is forced
        before its conditions are met.
        """
        for ps in self.policies:
            if ps.policy.agent == agent and ps.policy.tau == tau:
                if not ps.active():
                    raise ConditionUnsatisfied(f"{agent}/{tau} has unsatisfied conditions")
                return self._emit(ps, tick)
        raise KeyError(f"no policy for {agent}/{tau}")

    def _emit(self, ps: _PolicyRuntime, tick: int):
        pol = ps.policy
        if pol.mode == GENERATE:
            r = ps.rng.random()
            symbol = ps.support[bisect_right(ps.cum, r)]
            corr = (ps.pid + 1) * _CORR_STRIDE + ps.emitted
        else:
            instances = [q.popleft() for q in ps.queues]
            if len(ps.src_taus) == 1:
                chosen = 0
            else:
                r = ps.rng.random()
                chosen = bisect_right(ps.src_cum, r)
            tau_choice = ps.src_taus[chosen]
            pick = 0
            for idx, cond in enumerate(ps.conditions):
                if cond.ptype == tau_choice:
                    pick = idx
                    break
            symbol = instances[pick][1]
            corr = instances[0][0]  # primary condition carries the transaction id
            if pol.fidelity_flip > 0.0 and len(ps.offer_set) > 1:
                if ps.rng.random() < pol.fidelity_flip:
                    others = [s for s in ps.offers[0].body.alphabet if s != symbol]
                    symbol = others[ps.rng.randrange(len(others))]
            if symbol not in ps.offer_set:
                return None  # absorbed: upstream symbol has no name in this offer
        ps.emitted += 1

        agent = pol.agent
        tau = pol.tau
        state = ps.state
        state.clock += 1
        self._seq += 1
        rec = (self._seq, agent, state.clock, EMIT, tau, symbol, corr, None, tick, None)
        self.records.append(rec)
        state.interior[tau] = symbol
        if (agent, tau) in self._watched:
            self._history[(agent, tau)].append((tick, symbol))

        wheel = self._wheel
        for dst, link, rng in ps.targets:
            if rng is None:
                due = tick + link.delay
                msg = (dst, agent, tau, symbol, corr, False)
            else:
                lost = False
                wire = symbol
                if link.loss_probability > 0.0 and rng.random() < link.loss_probability:
                    lost = True
                if not lost and link.corruption is not None:
                    for s, row in link.corruption:
                        if s == symbol:
                            r = rng.random()
                            acc = 0.0
                            for sub, w in row:
                                acc += w
                                if r < acc:
                                    wire = sub
                                    break
                            break
                if isinstance(link.delay, tuple):
                    delay = rng.randint(link.delay[0], link.delay[1])
                else:
                    delay = link.delay
                due = tick + delay
                msg = (dst, agent, tau, wire, corr, lost)
            slot = wheel.get(due)
            if slot is None:
                wheel[due] = [msg]
            else:
                slot.append(msg)
        return rec

    def _arrive(self, msg, tick: int):
        dst, src, tau, wire, corr, lost = msg
        if lost:
            # Link event only: the addressee never saw it, no clock change.
            self._seq += 1
            self.records.append(
                (self._seq, dst, None, REJECT, tau, wire, corr, LOST_IN_LINK, tick, src))
            return
        state = self.states[dst]
        state.clock += 1
        self._seq += 1
        self.records.append(
            (self._seq, dst, state.clock, DELIVER, tau, wire, corr, None, tick, src))

        acceptance = self.graph.acceptance_of(dst, src, tau)
        if acceptance is None:
            state.clock += 1
            self._seq += 1
            self.records.append(
                (self._seq, dst, state.clock, REJECT, tau, wire, corr,
                 NO_ACCEPTANCE_PROMISE, tick, src))
            return
        mine = acceptance.translate(wire)
        if mine not in acceptance.body.alphabet:
            state.clock += 1
            self._seq += 1
            self.records.append(
                (self._seq, dst, state.clock, REJECT, tau, wire, corr,
                 SYMBOL_OUTSIDE_ALPHABET, tick, src))
            return

        state.clock += 1
        self._seq += 1
        self.records.append(
            (self._seq, dst, state.clock, ACCEPT, tau, mine, corr, None, tick, src))
        state.interior[tau] = mine
        if (dst, tau) in self._watched:
            self._history[(dst, tau)].append((tick, mine))

        feeds = self.feeds.get((dst, tau))
        if feeds:
            for ps, idx in feeds:
                cond = ps.conditions[idx]
                if mine not in cond.alphabet:
                    continue
                if ps.policy.mode == RELAY:
                    ps.queues[idx].append((corr, mine))
                elif idx not in ps.latched:
                    ps.latched.add(idx)
                    state.clock += 1
                    self._seq += 1
                    self.records.append(
                        (self._seq, dst, state.clock, CONDITION_SATISFIED,
                         cond.ptype, mine, corr, None, tick, src))

    def run(self) -> EventLog:
        """Execute the full horizon and freeze the log."""
        wheel = self._wheel
        policies = self.policies
        views = self._views
        arrive = self._arrive
        emit = self._emit
        append = self.records.append

        for tick in range(self.ticks):
            arrivals = wheel.pop(tick, None)
            if arrivals:
                for msg in arrivals:
                    arrive(msg, tick)
            for ps in policies:
                pol = ps.policy
                if pol.mode == GENERATE:
                    if tick < pol.phase or (tick - pol.phase) % pol.period:
                        continue
                    if ps.conditions and len(ps.latched) != len(ps.conditions):
                        continue
                    emit(ps, tick)
                else:
                    while all(ps.queues):
                        emit(ps, tick)
            for view in views:
                if tick % view.periods[0] and not view.due(tick):
                    continue
                # pointer-advance the delayed, overlap-filtered interior view
                hist = view.history
                ptr = view.ptr
                n = len(hist)
                if ptr < n:
                    horizon = tick - view.delay
                    overlap = view.overlap
                    while ptr < n and hist[ptr][0] <= horizon:
                        sym = hist[ptr][1]
                        if sym in overlap:
                            view.value = sym
                        ptr += 1
                    view.ptr = ptr
                state = view.state
                state.clock = clock = state.clock + 1
                self._seq = seq = self._seq + 1
                append((seq, view.observer, clock, OBSERVE, view.data_tau,
                        view.value, tick, None, tick, view.target))

        undelivered: dict[tuple[AgentId, AgentId, PromiseType], int] = {}
        for due in sorted(self._wheel):
            for dst, src, tau, _, _, lost in self._wheel[due]:
                if not lost:
                    undelivered[(src, dst, tau)] = undelivered.get((src, dst, tau), 0) + 1
        pending = tuple(sorted((s, d, t, n) for (s, d, t), n in undelivered.items()))
        return EventLog(tuple(self.records), self.seed, self.ticks,
                        self.scenario_hash, pending)


def run(scenario, seed: Optional[int] = None, ticks: Optional[int] = None) -> EventLog:
    """Run a scenario (any object with graph/policies/links/observers/...).

    ``seed`` and ``ticks`` override the scenario's defaults.  Raises
    InvalidScenario if the graph does not validate.
    """
    sim = Simulation(
        scenario.graph,
        scenario.policies,
        links=scenario.links,
        observers=scenario.observers,
        seed=scenario.seed if seed is None else seed,
        ticks=scenario.ticks if ticks is None else ticks,
        scenario_hash=getattr(scenario, "content_hash", ""),
        default_link=getattr(scenario, "default_link", None),
    )
    return sim.run()


# -- log auditing ----------------------------------------------------------

@dataclass(frozen=True)
class ClockViolation:
    rule: str
    agent: AgentId
    correlation: object
    detail: str


def check_clock_ordering(log: EventLog) -> list[ClockViolation]:
    """Audit the per-agent happened-before laws over a log.

    Checks, using local clocks and correlation ids only:

    * each agent's local_time is strictly monotone in log order;
    * an ACCEPT/REJECT follows a DELIVER of the same correlation at that
      agent, strictly later on its clock;
    * the minting agent's EMIT precedes its own receipt of any correlated
      acknowledgment (send before receipt-of-ack);
    * a relayed EMIT (same correlation, different agent) follows that
      agent's own correlated ACCEPT.

    Loss records carry no local time and are skipped.
    """
    out: list[ClockViolation] = []
    last_clock: dict[AgentId, int] = {}
    minted: dict[object, AgentId] = {}
    emit_time: dict[tuple[object, AgentId], int] = {}
    deliver_time: dict[tuple[object, AgentId], int] = {}
    accept_time: dict[tuple[object, AgentId], int] = {}

    for rec in log.records:
        agent = rec[AGENT]
        lt = rec[LOCAL_TIME]
        kind = rec[KIND]
        corr = rec[CORR]
        if lt is None:
            continue
        prev = last_clock.get(agent)
        if prev is not None and lt <= prev:
            out.append(ClockViolation(
                "monotone-clock", agent, corr,
                f"local_time {lt} after {prev} at seq {rec[SEQ]}"))
        last_clock[agent] = lt

        if kind == EMIT:
            owner = minted.setdefault(corr, agent)
            if owner != agent:
                acc = accept_time.get((corr, agent))
                if acc is None or acc >= lt:
                    out.append(ClockViolation(
                        "relay-after-accept", agent, corr,
                        "relayed EMIT without a prior correlated ACCEPT"))
            emit_time.setdefault((corr, agent), lt)
        elif kind == DELIVER:
            deliver_time.setdefault((corr, agent), lt)
        elif kind in (ACCEPT, REJECT):
            dv = deliver_time.get((corr, agent))
            if dv is None or dv >= lt:
                out.append(ClockViolation(
                    "receipt-after-delivery", agent, corr,
                    f"{kind} at local_time {lt} without earlier DELIVER"))
            if kind == ACCEPT:
                accept_time.setdefault((corr, agent), lt)
                owner = minted.get(corr)
                if owner == agent:
                    sent = emit_time.get((corr, agent))
                    if sent is not None and sent >= lt:
                        out.append(ClockViolation(
                            "send-before-ack", agent, corr,
                            f"ACCEPT of own transaction at {lt} not after EMIT at {sent}"))
    return out


def loss_accounting(log: EventLog) -> dict[tuple[AgentId, AgentId, PromiseType], tuple[int, int, int]]:
    """Per (sender, receiver, tau): (delivered, lost, undelivered-at-horizon)."""
    acc: dict[tuple[AgentId, AgentId, PromiseType], list[int]] = {}
    for rec in log.records:
        if rec[KIND] == DELIVER:
            key = (rec[PEER], rec[AGENT], rec[PTYPE])
            acc.setdefault(key, [0, 0, 0])[0] += 1
        elif rec[KIND] == REJECT and rec[REASON] == LOST_IN_LINK:
            key = (rec[PEER], rec[AGENT], rec[PTYPE])
            acc.setdefault(key, [0, 0, 0])[1] += 1
    for src, dst, tau, n in log.undelivered:
        acc.setdefault((src, dst, tau), [0, 0, 0])[2] += n
    return {k: tuple(v) for k, v in acc.items()}


# -- serialization ----------------------------------------------------------

_LOG_MAGIC = "#promisesim-log v1"


def dumps_log(log: EventLog) -> str:
    """Newline-delimited records with a provenance header; '-' is None."""
    out = [
        _LOG_MAGIC,
        f"#scenario_hash={log.scenario_hash}",
        f"#seed={log.seed}",
        f"#ticks={log.ticks}",
    ]
    for src, dst, tau, n in log.undelivered:
        out.append(f"#undelivered={src},{dst},{tau},{n}")
    append = out.append
    for r in log.records:
        append("\t".join("-" if v is None else str(v) for v in r))
    return "\n".join(out) + "\n"


def loads_log(text: str) -> EventLog:
    lines = text.splitlines()
    if not lines or lines[0] != _LOG_MAGIC:
        raise ValueError("not a promisesim event log")
    header = {"scenario_hash": "", "seed": "0", "ticks": "0"}
    undelivered = []
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        body_start = i + 1
        if "=" in line:
            key, _, val = line[1:].partition("=")
            if key == "undelivered":
                src, dst, tau, n = val.split(",")
                undelivered.append((src, dst, tau, int(n)))
            elif key in header:
                header[key] = val
    records = []
    for line in lines[body_start:]:
        if not line:
            continue
        f = line.split("\t")
        records.append((
            int(f[0]), f[1], None if f[2] == "-" else int(f[2]), f[3], f[4],
            None if f[5] == "-" else f[5],
            None if f[6] == "-" else int(f[6]),
            None if f[7] == "-" else f[7],
            int(f[8]),
            None if f[9] == "-" else f[9],
        ))
    return EventLog(tuple(records), int(header["seed"]), int(header["ticks"]),
                    header["scenario_hash"], tuple(undelivered))


def write_log(log: EventLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_log(log))


def read_log(path) -> EventLog:
    with open(path, encoding="utf-8") as fh:
        return loads_log(fh.read())
