"""Information-theoretic computations over empirical structures.

Entropies and mutual information are in bits (base-2 throughout).  The
plug-in estimator is the raw frequency formula; the bias-corrected one
subtracts the Miller-Madow term and is floored at zero, which is what the
independence test uses to defeat the finite-sample MI > 0 artifact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .core import AgentId, Chain, PromiseGraph, PromiseType
from .engine import ACCEPT, AGENT, EventLog, KIND, LOCAL_TIME, PTYPE, SYMBOL
from .assessment import (
    EmpiricalDist,
    JointDist,
    ObserverConfig,
    SNAPSHOT,
    SNAPSHOT_FALLBACK,
    joint_distribution,
)

PLUG_IN = "plug-in"
BIAS_CORRECTED = "bias-corrected"

LN2 = math.log(2.0)


class UndefinedOnEmpty(Exception):
    """The distribution has no samples; the quantity is undefined, not 0."""


class PatternAbsent(Exception):
    """The common-source calibration promises are missing from the graph."""


def entropy(dist: EmpiricalDist, smoothing: float = 0.0) -> float:
    """Shannon entropy in bits, with 0*log(0) = 0."""
    if dist.total == 0:
        raise UndefinedOnEmpty(f"empty distribution for {dist.ptype!r}")
    h = 0.0
    for p in dist.probabilities(smoothing).values():
        if p > 0.0:
            h -= p * math.log2(p)
    return h


@dataclass(frozen=True)
class IndependenceVerdict:
    verdict: str  # INDEPENDENT | DEPENDENT
    mi_bits: float
    tolerance: float
    n_samples: int

    @property
    def independent(self) -> bool:
        return self.verdict == "INDEPENDENT"


@dataclass(frozen=True)
class InfoReport:
    """Flat record of one channel's information content."""

    entropy_source: float
    entropy_receiver: float
    mutual_information: float
    estimator: str
    n_samples: int
    trust_flags: tuple[str, ...] = ()
    independence: Optional[IndependenceVerdict] = None

    def as_dict(self) -> dict:
        out = {
            "entropy_source_bits": self.entropy_source,
            "entropy_receiver_bits": self.entropy_receiver,
            "mutual_information_bits": self.mutual_information,
            "estimator": self.estimator,
            "n_samples": self.n_samples,
            "trust_flags": list(self.trust_flags),
        }
        if self.independence is not None:
            out["independence"] = self.independence.verdict
            out["independence_tolerance_bits"] = self.independence.tolerance
        return out


def _plug_in_mi(joint: JointDist, smoothing: float) -> tuple[float, float, float]:
    # Additive smoothing adds alpha to every cell, so a row marginal gains
    # nc*alpha and the grand total nr*nc*alpha; zero-count cells contribute 0.
    n = joint.total
    rows = joint.counts
    nr = len(joint.row_alphabet)
    nc = len(joint.col_alphabet)
    row_sums = [sum(r) for r in rows]
    col_sums = [sum(rows[i][j] for i in range(nr)) for j in range(nc)]
    denom = n + smoothing * nr * nc
    row_p = [(c + smoothing * nc) / denom for c in row_sums]
    col_p = [(c + smoothing * nr) / denom for c in col_sums]

    h_row = -sum(p * math.log2(p) for p in row_p if p > 0.0)
    h_col = -sum(p * math.log2(p) for p in col_p if p > 0.0)

    mi = 0.0
    log2 = math.log2
    for i in range(nr):
        pr = row_p[i]
        if pr == 0.0:
            continue
        row = rows[i]
        for j in range(nc):
            p = (row[j] + smoothing) / denom
            if p > 0.0:
                mi += p * log2(p / (pr * col_p[j]))
    return mi, h_row, h_col


def miller_madow_term(joint: JointDist) -> float:
    """(K_rows-1)(K_cols-1) / (2 N ln 2): the first-order MI bias."""
    rows = joint.counts
    k_rows = sum(1 for r in rows if any(r))
    k_cols = sum(1 for j in range(len(joint.col_alphabet)) if any(r[j] for r in rows))
    return (k_rows - 1) * (k_cols - 1) / (2.0 * joint.total * LN2)


def mutual_information(joint: JointDist, estimator: str = PLUG_IN,
                       smoothing: float = 0.0) -> InfoReport:
    """MI of a joint in bits, with the chosen estimator.

    The report inherits the joint's trust flags (e.g. an undersampled
    snapshot observer).  Raises UndefinedOnEmpty for total 0.
    """
    if joint.total == 0:
        raise UndefinedOnEmpty("empty joint distribution")
    if estimator not in (PLUG_IN, BIAS_CORRECTED):
        raise ValueError(f"unknown estimator {estimator!r}")
    mi, h_row, h_col = _plug_in_mi(joint, smoothing)
    if mi < 0.0:
        mi = 0.0  # float dust; plug-in MI is non-negative analytically
    if estimator == BIAS_CORRECTED:
        mi = max(0.0, mi - miller_madow_term(joint))
    return InfoReport(h_row, h_col, mi, estimator, joint.total, joint.trust_flags)


def independence_test(joint: JointDist, tolerance: float = 0.01) -> IndependenceVerdict:
    """INDEPENDENT iff bias-corrected MI is within tolerance of zero."""
    report = mutual_information(joint, BIAS_CORRECTED)
    verdict = "INDEPENDENT" if report.mutual_information <= tolerance else "DEPENDENT"
    return IndependenceVerdict(verdict, report.mutual_information, tolerance, joint.total)


@dataclass(frozen=True)
class HopReport:
    pair: tuple[AgentId, AgentId]
    joint: JointDist
    info: InfoReport


@dataclass(frozen=True)
class ChainReport:
    """Per-hop and end-to-end information flow along a relay path."""

    path: tuple[AgentId, ...]
    hops: tuple[HopReport, ...]
    end_to_end: HopReport
    epsilon: float
    attenuation_ok: bool

    def hop_mi(self) -> tuple[float, ...]:
        return tuple(h.info.mutual_information for h in self.hops)


def _pair_joint(log, graph, observer_cfg, x, y) -> JointDist:
    """Transactional joint when correlated traffic exists, else snapshot."""
    ack_cfg = ObserverConfig(observer_cfg.observer, (x, y),
                             observer_cfg.sampling_period, "ack")
    joint = joint_distribution(log, ack_cfg, graph, pair=(x, y), require_linkage=False)
    if joint.total > 0:
        return joint
    snap_cfg = ObserverConfig(observer_cfg.observer, (x, y),
                              observer_cfg.sampling_period, SNAPSHOT)
    joint = joint_distribution(log, snap_cfg, graph, pair=(x, y))
    flags = joint.trust_flags + (SNAPSHOT_FALLBACK,)
    return JointDist(joint.row_alphabet, joint.col_alphabet, joint.counts,
                     joint.total, joint.assessor, joint.pair, joint.row_tau,
                     joint.col_tau, joint.pairing, flags)


def chain_analysis(log: EventLog, chain: Union[Chain, Sequence[AgentId]],
                   graph: PromiseGraph, observer: ObserverConfig,
                   estimator: str = PLUG_IN) -> ChainReport:
    """I(hop) for every hop plus end-to-end, with the attenuation check.

    The end-to-end estimate must not exceed any hop estimate by more than
    the estimator slack epsilon = (K-1)^2 / (N ln 2).  Pairs with no
    correlated traffic (a barrier intermediary) fall back to the observer's
    snapshot joint, flagged SNAPSHOT-FALLBACK.
    """
    path = tuple(chain.agents) if isinstance(chain, Chain) else tuple(chain)
    if len(path) < 3:
        raise ValueError("a chain needs at least one intermediary")

    hops = []
    for x, y in zip(path, path[1:]):
        joint = _pair_joint(log, graph, observer, x, y)
        hops.append(HopReport((x, y), joint, mutual_information(joint, estimator)))
    end_joint = _pair_joint(log, graph, observer, path[0], path[-1])
    end = HopReport((path[0], path[-1]), end_joint,
                    mutual_information(end_joint, estimator))

    k = max(len(end_joint.row_alphabet), len(end_joint.col_alphabet))
    epsilon = (k - 1) ** 2 / (end_joint.total * LN2)
    floor = min(h.info.mutual_information for h in hops)
    ok = end.info.mutual_information <= floor + epsilon
    return ChainReport(path, tuple(hops), end, epsilon, ok)


@dataclass(frozen=True)
class CalibrationReport:
    verdict: str  # CALIBRATED | NOT-CALIBRATED
    source: AgentId
    calibration_tau: PromiseType
    participants: tuple[AgentId, ...]
    uncalibrated: tuple[AgentId, ...]
    offers_equal: bool
    completed_at: tuple[tuple[AgentId, int], ...]  # (agent, local_time of accept)

    @property
    def calibrated(self) -> bool:
        return self.verdict == "CALIBRATED"


def calibration_check(log: EventLog, graph: PromiseGraph,
                      source: AgentId) -> CalibrationReport:
    """Verify the common-source calibration pattern around ``source``.

    Participants are agents whose offers are conditioned on a type the
    source broadcasts.  CALIBRATED requires every participant to hold the
    acceptance, to have actually accepted in the log, and all calibrated
    offer bodies to be equal (same type, same alphabet).  Raises
    PatternAbsent when fewer than two participants exist.
    """
    source_taus = sorted({p.tau for p in graph.offers_by(source)})
    participants: dict[AgentId, list] = {}
    cal_tau = None
    for tau in source_taus:
        conditioned = [
            p for p in graph.promises
            if p.polarity.value == "+" and p.giver != source
            and any(c.ptype == tau for c in p.conditions)
        ]
        agents = sorted({p.giver for p in conditioned})
        if len(agents) >= 2:
            cal_tau = tau
            for a in agents:
                participants[a] = [p for p in conditioned if p.giver == a]
            break
    if cal_tau is None:
        raise PatternAbsent(
            f"no type broadcast by {source!r} gates offers of two or more agents")

    uncalibrated = []
    completed = []
    for agent in sorted(participants):
        if graph.acceptance_of(agent, source, cal_tau) is None:
            uncalibrated.append(agent)
            continue
        accepted_at = None
        for rec in log.records:
            if (rec[KIND] == ACCEPT and rec[AGENT] == agent
                    and rec[PTYPE] == cal_tau):
                accepted_at = rec[LOCAL_TIME]
                break
        if accepted_at is None:
            uncalibrated.append(agent)
        else:
            completed.append((agent, accepted_at))

    bodies = {p.body for plist in participants.values() for p in plist}
    offers_equal = len(bodies) == 1
    verdict = "CALIBRATED" if not uncalibrated and offers_equal else "NOT-CALIBRATED"
    return CalibrationReport(verdict, source, cal_tau, tuple(sorted(participants)),
                             tuple(uncalibrated), offers_equal, tuple(completed))
