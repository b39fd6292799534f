"""Design-time selection of multi-DNN deployments under SLOs, plus a runtime
manager that switches between the selected designs as resources fluctuate."""

__version__ = "0.1.0"

from .errors import (
    EmptySpaceError,
    InfeasibleError,
    MissingDataError,
    ParseError,
    PolicyIncompleteError,
    SchemaError,
    SemanticError,
    SlodeployError,
    UnknownEngineError,
)
from .profiles import (
    HardwareConfig,
    MeasurementRecord,
    ModelVariant,
    ProfileDB,
    SynthSpec,
    load_profiles,
    loads_profiles,
    dumps_profiles,
    synth_profiles,
    validate_profiles,
)
from .problem import (
    ContentionParams,
    MOOProblem,
    SLOSpec,
    compile_problem,
    evaluate_metric,
    parse_slo_spec,
)
from .rass import (
    DesignSet,
    Solution,
    SwitchingPolicy,
    compute_optimality,
    dumps_solution,
    generate_switching_policy,
    loads_solution,
    solve,
    solve_full,
)
from .runtime import EnvState, RuntimeEvent, Timeline, loads_trace, rm_step, simulate
from .baselines import Baseline, compare, run_baseline

__all__ = [name for name in dir() if not name.startswith("_")]
