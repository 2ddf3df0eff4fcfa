"""Static algebra of promises.

Agents, promise bodies, polarities, bindings, scope and causal closure over
a promise graph.  Everything here is immutable after construction and every
operation is a pure function whose output is canonically ordered, so results
are identical across runs and safe to share between threads.

Conventions used throughout the package:

* agents, type labels and symbols are opaque identifier strings;
* an offer (``+``) constrains only its giver, an acceptance (``-``)
  constrains only what its giver is willing to receive;
* observability promises expose one agent's interior state for one type
  and are named ``sigma:<agent>:<type>`` (see :func:`sigma_tau`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Optional

AgentId = str
PromiseType = str
Symbol = str

# Agent and symbol identifiers: no colon (reserved for structured type
# labels), no whitespace, never a bare "-" (the serialization placeholder).
_AGENT_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.-]*\Z")
_TAU_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.:-]*\Z")


class Polarity(Enum):
    """Promise polarity: an offer (+) or an acceptance (-)."""

    OFFER = "+"
    ACCEPT = "-"


def valid_agent_id(name: str) -> bool:
    return bool(_AGENT_RE.match(name))


def valid_tau(tau: str) -> bool:
    return bool(_TAU_RE.match(tau))


@dataclass(frozen=True, init=False)
class Alphabet:
    """A finite, canonically sorted set of symbols.

    Alphabets attached to promise bodies are non-empty by construction;
    the empty alphabet exists only as the result of an overlap computation
    (see :func:`channel_overlap`).
    """

    symbols: tuple[Symbol, ...]

    def __init__(self, symbols: Iterable[Symbol]):
        sym = tuple(symbols)
        if not sym:
            raise ValueError("alphabet must contain at least one symbol")
        if len(set(sym)) != len(sym):
            raise ValueError(f"duplicate symbols in alphabet: {sym!r}")
        for s in sym:
            if not _AGENT_RE.match(s):
                raise ValueError(f"invalid symbol identifier: {s!r}")
        object.__setattr__(self, "symbols", tuple(sorted(sym)))

    @classmethod
    def _raw(cls, ordered: tuple[Symbol, ...]) -> "Alphabet":
        inst = object.__new__(cls)
        object.__setattr__(inst, "symbols", ordered)
        return inst

    @classmethod
    def empty(cls) -> "Alphabet":
        return cls._raw(())

    def __contains__(self, symbol: object) -> bool:
        return symbol in self.symbols

    def __iter__(self):
        return iter(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def __bool__(self) -> bool:
        return bool(self.symbols)

    def render(self) -> str:
        return "{%s}" % ",".join(self.symbols)


@dataclass(frozen=True)
class Body:
    """A promise body: a type label tau plus an alphabet-valued measure."""

    ptype: PromiseType
    alphabet: Alphabet

    def __post_init__(self):
        if not valid_tau(self.ptype):
            raise ValueError(f"invalid type label: {self.ptype!r}")

    def render(self) -> str:
        return f"{self.ptype}{self.alphabet.render()}"


@dataclass(frozen=True)
class Promise:
    """A directed promise from giver to promisee.

    ``conditions`` make an offer inactive until each condition body has been
    accepted by the giver (conjunctive).  ``scope`` is the extra set of
    agents granted standing to assess this promise, on top of the promisee.
    ``correspondence`` optionally maps offered symbols to the acceptor's
    private names on an acceptance promise; identity when absent.
    """

    giver: AgentId
    promisee: AgentId
    polarity: Polarity
    body: Body
    conditions: tuple[Body, ...] = ()
    scope: frozenset[AgentId] = frozenset()
    correspondence: Optional[tuple[tuple[Symbol, Symbol], ...]] = None

    @property
    def tau(self) -> PromiseType:
        return self.body.ptype

    @property
    def key(self) -> tuple:
        # Identity for duplicate detection: one promise per
        # (giver, promisee, polarity, tau).
        return (self.giver, self.promisee, self.polarity.value, self.tau)

    def translate(self, symbol: Symbol) -> Symbol:
        """Map an offered symbol into this acceptor's private namespace."""
        if self.correspondence is None:
            return symbol
        for theirs, mine in self.correspondence:
            if theirs == symbol:
                return mine
        return symbol

    def render(self) -> str:
        text = f"{self.giver} {self.polarity.value}{self.body.render()} -> {self.promisee}"
        if self.conditions:
            text += " | cond:" + ",".join(c.render() for c in self.conditions)
        if self.scope:
            text += " scope:{%s}" % ",".join(sorted(self.scope))
        if self.correspondence is not None:
            text += " map:" + ",".join(f"{a}={b}" for a, b in self.correspondence)
        return text


@dataclass(frozen=True)
class Binding:
    """A complementary offer/acceptance pair of equal type.

    The binding is a usable channel only when the alphabet overlap is
    non-empty; unusable bindings are kept so their traffic can be assessed
    NOT-KEPT rather than silently dropped.
    """

    offer: Promise
    acceptance: Promise
    overlap: Alphabet

    @property
    def usable(self) -> bool:
        return bool(self.overlap)

    @property
    def tau(self) -> PromiseType:
        return self.offer.tau

    @property
    def sender(self) -> AgentId:
        return self.offer.giver

    @property
    def receiver(self) -> AgentId:
        return self.acceptance.giver


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


@dataclass(frozen=True)
class Chain:
    """A maximal conditional-relay path through a promise graph.

    ``agents`` lists the nodes in order; ``hops`` the usable bindings
    between consecutive nodes; ``environment_sources`` the extra accepted
    condition feeds per intermediary as (intermediary, source, tau).
    """

    agents: tuple[AgentId, ...]
    hops: tuple[Binding, ...]
    environment_sources: tuple[tuple[AgentId, AgentId, PromiseType], ...] = ()


@dataclass(frozen=True)
class PromiseGraph:
    agents: frozenset[AgentId]
    promises: tuple[Promise, ...]

    @classmethod
    def build(cls, agents: Iterable[AgentId], promises: Iterable[Promise]) -> "PromiseGraph":
        return cls(frozenset(agents), tuple(promises))

    @cached_property
    def _acceptances(self) -> dict[tuple[AgentId, AgentId, PromiseType], Promise]:
        # (receiver, sender, tau) -> the receiver's acceptance toward sender.
        index: dict[tuple[AgentId, AgentId, PromiseType], Promise] = {}
        for p in self.promises:
            if p.polarity is Polarity.ACCEPT:
                index.setdefault((p.giver, p.promisee, p.tau), p)
        return index

    def acceptance_of(self, receiver: AgentId, sender: AgentId, tau: PromiseType) -> Optional[Promise]:
        return self._acceptances.get((receiver, sender, tau))

    def offers(self) -> list[Promise]:
        return [p for p in self.promises if p.polarity is Polarity.OFFER]

    def offers_by(self, agent: AgentId) -> list[Promise]:
        return [p for p in self.promises if p.polarity is Polarity.OFFER and p.giver == agent]

    def promises_by(self, agent: AgentId) -> list[Promise]:
        return [p for p in self.promises if p.giver == agent]


def channel_overlap(
    offer_alphabet: Alphabet,
    accept_alphabet: Alphabet,
    correspondence: Optional[Mapping[Symbol, Symbol]] = None,
) -> Alphabet:
    """Intersection of offered and accepted alphabets, possibly empty.

    Expressed in the offer's namespace; ``correspondence`` translates
    offered symbols into the acceptor's private names before membership is
    tested (identity by default).
    """
    if correspondence is None:
        common = tuple(s for s in offer_alphabet.symbols if s in accept_alphabet)
    else:
        common = tuple(
            s for s in offer_alphabet.symbols
            if correspondence.get(s, s) in accept_alphabet
        )
    return Alphabet._raw(common)


def _binding_overlap(offer: Promise, acceptance: Promise) -> Alphabet:
    corr = dict(acceptance.correspondence) if acceptance.correspondence else None
    return channel_overlap(offer.body.alphabet, acceptance.body.alphabet, corr)


def validate_graph(
    graph: PromiseGraph,
    behaviors: Optional[Iterable[tuple[AgentId, Promise]]] = None,
) -> ValidationReport:
    """Check the promise-graph laws; problems are report entries, never errors.

    ``behaviors`` are the (agent, promise) assignments a scenario binds to
    emitting policies; an assignment whose agent is not the promise's giver
    violates the agents-promise-only-for-themselves law.
    """
    out: list[Violation] = []

    for name in sorted(graph.agents):
        if not valid_agent_id(name):
            out.append(Violation("invalid-agent-id", f"bad agent identifier {name!r}"))

    seen: set[tuple] = set()
    for p in graph.promises:
        label = p.render()
        if p.giver not in graph.agents:
            out.append(Violation("unknown-agent", f"giver {p.giver!r} not in graph: {label}"))
        if p.promisee not in graph.agents:
            out.append(Violation("unknown-agent", f"promisee {p.promisee!r} not in graph: {label}"))
        if p.giver == p.promisee:
            out.append(Violation("self-promise", f"self-promise not allowed as a graph edge: {label}"))
        if p.key in seen:
            out.append(Violation("duplicate-promise", f"duplicate promise: {label}"))
        seen.add(p.key)
        for a in sorted(p.scope):
            if a not in graph.agents:
                out.append(Violation("unknown-scope-agent", f"scope names unknown agent {a!r}: {label}"))
        for cond in p.conditions:
            offered = any(
                q.polarity is Polarity.OFFER
                and q.promisee == p.giver
                and q.giver != p.giver
                and q.tau == cond.ptype
                for q in graph.promises
            )
            if not offered:
                out.append(Violation(
                    "unsatisfiable-condition",
                    f"condition type {cond.ptype!r} is never offered to {p.giver!r}: {label}",
                ))

    if behaviors is not None:
        for agent, promise in behaviors:
            if agent != promise.giver:
                out.append(Violation(
                    "behavior-giver-mismatch",
                    f"behavior bound to {agent!r} but promise giver is {promise.giver!r}: {promise.render()}",
                ))

    return ValidationReport(tuple(out))


def find_bindings(graph: PromiseGraph) -> list[Binding]:
    """Every complementary (offer, acceptance) pair of equal type.

    Pairs with empty overlap are included (``usable`` is False).  Output is
    ordered by (giver, promisee, tau).
    """
    offers = sorted(graph.offers(), key=lambda p: (p.giver, p.promisee, p.tau))
    out: list[Binding] = []
    for offer in offers:
        acc = graph.acceptance_of(offer.promisee, offer.giver, offer.tau)
        if acc is not None:
            out.append(Binding(offer, acc, _binding_overlap(offer, acc)))
    return out


def usable_bindings(graph: PromiseGraph) -> list[Binding]:
    return [b for b in find_bindings(graph) if b.usable]


def resolve_scope(graph: PromiseGraph, promise: Promise) -> frozenset[AgentId]:
    """Agents permitted to assess this promise: the promisee plus scope."""
    return frozenset({promise.promisee}) | promise.scope


def causal_closure(graph: PromiseGraph, agent: AgentId) -> frozenset[AgentId]:
    """The set of agents able to influence ``agent``.

    Influence edges X -> Y exist only where Y holds a usable acceptance
    toward X; closure is the transitive ancestry over those receptor edges.
    An agent with no usable acceptances has empty closure.
    """
    inbound: dict[AgentId, set[AgentId]] = {}
    for b in usable_bindings(graph):
        inbound.setdefault(b.receiver, set()).add(b.sender)
    reached: set[AgentId] = set()
    frontier = [agent]
    while frontier:
        node = frontier.pop()
        for src in inbound.get(node, ()):
            if src not in reached:
                reached.add(src)
                frontier.append(src)
    return frozenset(reached)


def detect_chains(graph: PromiseGraph) -> list[Chain]:
    """Maximal conditional-relay paths S -> I1 -> ... -> R.

    Each hop is a usable binding, and each intermediate node's outgoing
    offer is conditioned on the type it accepts upstream.  Per intermediary,
    extra accepted condition feeds (environment channels) are reported.
    """
    usable = usable_bindings(graph)
    by_sender: dict[AgentId, list[Binding]] = {}
    for b in usable:
        by_sender.setdefault(b.sender, []).append(b)
    for lst in by_sender.values():
        lst.sort(key=lambda b: (b.receiver, b.tau))

    def continuations(prev: Binding) -> list[Binding]:
        node = prev.receiver
        return [
            nxt for nxt in by_sender.get(node, ())
            if any(c.ptype == prev.tau for c in nxt.offer.conditions)
        ]

    def is_continuation(b: Binding) -> bool:
        return any(
            up.receiver == b.sender and any(c.ptype == up.tau for c in b.offer.conditions)
            for up in usable
        )

    def env_sources(node: AgentId, hop_out: Binding, upstream_tau: PromiseType):
        found = []
        for cond in hop_out.offer.conditions:
            if cond.ptype == upstream_tau:
                continue
            for up in usable:
                if up.receiver == node and up.tau == cond.ptype:
                    found.append((node, up.sender, up.tau))
        return found

    chains: list[Chain] = []

    def extend(path: list[Binding], envs: list[tuple[AgentId, AgentId, PromiseType]]):
        nexts = [
            n for n in continuations(path[-1])
            if n.receiver not in {h.sender for h in path}  # no cycles
        ]
        if not nexts:
            if len(path) >= 2:
                agents = tuple([path[0].sender] + [h.receiver for h in path])
                chains.append(Chain(agents, tuple(path), tuple(sorted(envs))))
            return
        for nxt in nexts:
            extend(path + [nxt], envs + env_sources(nxt.sender, nxt, path[-1].tau))

    starts = sorted(
        (b for b in usable if not is_continuation(b)),
        key=lambda b: (b.sender, b.receiver, b.tau),
    )
    for start in starts:
        extend([start], [])
    return chains


def remove_acceptances(graph: PromiseGraph, agent: AgentId) -> PromiseGraph:
    """The same graph with every acceptance held by ``agent`` deleted."""
    kept = tuple(
        p for p in graph.promises
        if not (p.polarity is Polarity.ACCEPT and p.giver == agent)
    )
    return PromiseGraph(graph.agents, kept)


def dump_graph(graph: PromiseGraph) -> str:
    """One tab-separated record per promise, for the validate subcommand."""
    lines = []
    for p in sorted(graph.promises, key=lambda p: (p.giver, p.promisee, p.polarity.value, p.tau)):
        conds = ",".join(c.render() for c in p.conditions) or "-"
        scope = ("{%s}" % ",".join(sorted(p.scope))) if p.scope else "-"
        lines.append("\t".join([
            p.giver, p.polarity.value, p.tau,
            ",".join(p.body.alphabet.symbols), p.promisee, conds, scope,
        ]))
    return "\n".join(lines) + ("\n" if lines else "")


def sigma_tau(agent: AgentId, data_tau: PromiseType) -> PromiseType:
    """Type label of the observability promise exposing an interior state."""
    return f"sigma:{agent}:{data_tau}"


def parse_sigma_tau(tau: PromiseType) -> Optional[tuple[AgentId, PromiseType]]:
    """Invert :func:`sigma_tau`; None for ordinary type labels."""
    if not tau.startswith("sigma:"):
        return None
    parts = tau.split(":", 2)
    if len(parts) != 3 or not parts[1] or not parts[2]:
        return None
    return parts[1], parts[2]
