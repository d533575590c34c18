"""Multi-stage distributed average tracking over lossy, delayed networks.

Simulation engine and analysis toolkit: agents run a cascaded consensus
protocol against noisy reference signals, with Bernoulli link drops and a
fixed input delay compensated by one-step predictors and per-agent scalar
Kalman filters.  The analysis side predicts stationary states and the
geometric tracking-error bound from the expected network alone.
"""

from .analysis import (
    BoundReport,
    ParamReport,
    SteadyStatePrediction,
    TrackingError,
    convergence_matrix_spectrum,
    spectral_radius,
    stages_for_target,
    steady_state,
    theorem_bound,
    tracking_error,
    validate_params,
)
from .controller import (
    AgentState,
    ControlGains,
    LinkRealization,
    RunOutput,
    World,
    control_input,
    sample_links,
)
from .graphs import (
    ConfigurationError,
    DropModel,
    Graph,
    WeightedLaplacian,
    expected_laplacian,
    is_connected,
    jacobi_eigh,
    laplacian,
    load_graph_file,
    parse_graph_text,
    symmetric_eigen,
)
from .montecarlo import (
    EnsembleResult,
    analysis_summary,
    build_world,
    emit_outputs,
    run_monte_carlo,
)
from .prediction import (
    DelayLine,
    PredictorState,
    predictor_filter_update,
    push_input,
    reference_filter_update,
    roll_forward,
    roll_forward_reference,
)
from .reference import (
    InputProfile,
    ReferenceParams,
    ReferenceState,
    estimate_bias,
    initial_reference_state,
    kalman_step,
    reference_step,
)
from .scenario import InitSpec, Scenario, load_scenario, parse_scenario_text

__version__ = "0.1.0"
