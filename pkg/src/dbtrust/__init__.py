"""Pay crowd workers by accuracy estimated transitively from a gold seed."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    AnswerSpace,
    InvalidInput,
    WorkerStrategy,
    apply_strategy,
    compose_trust,
    prior_vector,
    reward_score,
    stochastic_matrix,
)
from .solver import (  # noqa: E402
    CoefficientMatrix,
    EmpiricalDistributions,
    JointCounts,
    NotWellDefined,
    SolverFailure,
    build_coefficients,
    distributions,
    estimate_trust,
    is_informative,
    project_stochastic,
    solve_trust,
    tally_joint,
)
from .mechanism import (  # noqa: E402
    Batch,
    Evaluation,
    EvaluationAborted,
    Ledger,
    MechanismConfig,
    Pool,
    PoolEntry,
    PoolStarved,
    TaskSupply,
    admit_to_pool,
    draft_batch,
    evaluate_submission,
    init_pool,
    run_mechanism,
)
from .agents import (  # noqa: E402
    ProficiencySpec,
    WorkerSpec,
    sample_ground_truths,
    sample_proficiency,
    simulate_submission,
)
from .config import ExperimentConfig, load_config  # noqa: E402
