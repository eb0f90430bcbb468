"""traceplay: compile abstract protocol attack traces into executable
intruder scenarios and play them against implementations over real channels.
"""

from .terms import (
    Apply,
    Atom,
    Crypt,
    Fresh,
    Hash,
    Inv,
    Pair,
    SCrypt,
    Sort,
    SortTable,
    Term,
    TermError,
    parse_term,
    render_term,
    subterms,
)
from .model import (
    ModelError,
    MutationError,
    MutationPoint,
    ProtocolModel,
    Role,
    Transition,
    apply_mutation,
    list_mutation_points,
    parse_model,
    render_model,
)
from .derivation import (
    Derivable,
    KnowledgeBase,
    Recipe,
    Underivable,
    derive,
    is_derivable,
    saturate,
)
from .compiler import (
    AttackTrace,
    CompileError,
    Scenario,
    ScenarioStep,
    compile_trace,
    parse_scenario,
    parse_trace,
    render_scenario,
)
from .engine import DataStore, ExecutionReport, execute
from .suites import CryptoSuite, RealSuite, TransparentSuite, make_suite, primitive
from .simulator import (
    EnvironmentConfig,
    ErrorPattern,
    TrafficLog,
    Verdict,
    load_config,
    open_channels,
    spawn_agent,
    validate,
)
from .agents import RoleState, probe_point, run_role, run_tls_server

__version__ = "0.1.0"

__all__ = [
    "Apply",
    "Atom",
    "AttackTrace",
    "CompileError",
    "Crypt",
    "CryptoSuite",
    "DataStore",
    "Derivable",
    "EnvironmentConfig",
    "ErrorPattern",
    "ExecutionReport",
    "Fresh",
    "Hash",
    "Inv",
    "KnowledgeBase",
    "ModelError",
    "MutationError",
    "MutationPoint",
    "Pair",
    "ProtocolModel",
    "RealSuite",
    "Recipe",
    "Role",
    "RoleState",
    "SCrypt",
    "Scenario",
    "ScenarioStep",
    "Sort",
    "SortTable",
    "Term",
    "TermError",
    "TrafficLog",
    "Transition",
    "TransparentSuite",
    "Underivable",
    "Verdict",
    "apply_mutation",
    "compile_trace",
    "derive",
    "execute",
    "is_derivable",
    "list_mutation_points",
    "load_config",
    "make_suite",
    "open_channels",
    "parse_model",
    "parse_scenario",
    "parse_term",
    "parse_trace",
    "primitive",
    "probe_point",
    "render_model",
    "render_scenario",
    "render_term",
    "saturate",
    "spawn_agent",
    "run_role",
    "run_tls_server",
    "subterms",
    "validate",
]
