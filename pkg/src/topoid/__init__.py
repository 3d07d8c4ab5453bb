"""Topology identifiability and identification for networks of LTI systems."""

from .errors import *  # noqa: F401,F403
from .graph import (
    Topology,
    compare,
    extract_topology,
    make_example12,
    make_integrator_network,
    make_oscillator_ring,
)
from .identifiability import (
    IdentifiabilityVerdict,
    KernelTestReport,
    check_homogeneous_siso,
    check_identifiability_full_excitation,
    check_identifiability_general,
    constant_kernel,
    construct_indistinguishable,
    kron_markov,
    output_controllability,
)
from .lti import (
    MarkovSequence,
    Network,
    StateSpaceSystem,
    assemble_network,
    closed_loop,
    markov_exact,
    markov_recursion,
    simulate,
    transfer_eval,
)
from .markov import DataSet, design_pe_input, estimate_markov, hankel, is_persistently_exciting
from .sylvester import (
    SolveReport,
    SylvesterSystem,
    build_node_systems,
    build_system,
    robustness_bound,
    solve_blockwise,
    solve_least_squares,
    solve_vectorized,
    threshold_topology,
)

__version__ = "0.1.0"
