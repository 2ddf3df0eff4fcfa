"""Deterministic promise-graph simulation and information-flow analysis."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    Alphabet,
    Binding,
    Body,
    Chain,
    Polarity,
    Promise,
    PromiseGraph,
    causal_closure,
    channel_overlap,
    detect_chains,
    find_bindings,
    resolve_scope,
    validate_graph,
)
from .engine import (  # noqa: F401
    BehaviorPolicy,
    EventLog,
    LinkModel,
    ObserverConfig,
    Simulation,
    ack_transaction,
    check_clock_ordering,
    read_log,
    write_log,
)
from .assessment import (  # noqa: F401
    AssessmentOutcome,
    EmpiricalDist,
    JointDist,
    MissingObservability,
    NoStanding,
    REFUSED,
    assess_event,
    empirical_distribution,
    joint_distribution,
    nyquist_check,
    observer_correlation,
)
from .metrics import (  # noqa: F401
    InfoReport,
    UndefinedOnEmpty,
    calibration_check,
    chain_analysis,
    entropy,
    independence_test,
    mutual_information,
)
from .scenario import (  # noqa: F401
    Scenario,
    load_scenario,
    parse_scenario,
    render_scenario,
    run_scenario,
)
