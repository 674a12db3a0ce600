"""Decentralized proximal gradient methods in a unified primal-dual form.

Modules
-------
netgraph : graphs, combination matrices, consensus triples, assumptions
costs    : per-agent smooth costs (quadratic, logistic) and data handling
prox     : proximal operators, incl. the pairwise-difference counterexample
engine   : synchronous multi-agent iterations and equivalence forms
analysis : rate theory, fixed-point residuals, decay classification
cli      : JSON-config experiment runner (`decprox` console script)
"""

from .netgraph import (
    AlgorithmId,
    ConsensusTriple,
    Graph,
    SpectralReport,
    build_graph,
    laplacian_matrix,
    load_edge_list,
    metropolis_matrix,
    save_edge_list,
    shift_positive,
    table1_matrices,
    validate_assumptions,
)
from .costs import (
    Dataset,
    SmoothCostSet,
    estimate_constants,
    logistic_cost,
    partition_data,
    quadratic_cost,
    random_quadratic_cost,
    read_libsvm,
    synthetic_classification,
)
from .prox import (
    ChainSumProx,
    CounterexamplePair,
    CounterexampleProx,
    L1Prox,
    OracleFailure,
    ProxOperator,
    ZeroProx,
    brute_force_prox,
    build_counterexample,
    prox_counterexample,
    prox_l1,
)
from .engine import (
    AlgorithmSpec,
    BlockIterate,
    DivergenceError,
    RunRecord,
    initial_state,
    rel_sq_error,
    run,
)
from .analysis import (
    FitVerdict,
    RateReport,
    centralized_reference,
    classify_decay,
    fixed_point_residuals,
    theoretical_rate,
)

__version__ = "0.1.0"
