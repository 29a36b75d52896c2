"""Stability and H2 analysis of multi-agent networks with lossy links."""

from .analysis import (
    FAILS,
    HOLDS,
    INCONCLUSIVE,
    AnalysisReport,
    ProbabilityInterval,
    SpectralInterval,
    check_convexity_p,
    h2_decomposed,
    h2_enumerated,
    h2_fixed_point_oracle,
    mss_decomposed,
    mss_enumerated,
    mss_spectral_oracle,
    necessary_lti,
    robust_p_interval,
    robust_spectral,
)
from .consensus import ConsensusConfig, SweepResult, build_consensus, sweep_p, sweep_scaling
from .graph import (
    DirectedGraph,
    GraphError,
    build_graph,
    expected_laplacians,
    expected_laplacians_oracle,
    laplacian,
    make_family,
    parse_graph,
    spectrum,
)
from .jump import DecomposableJumpSystem, enumerate_modes, load_system, mean_system, realize_mode
from .lmi import LmiProgram

__version__ = "0.1.0"
