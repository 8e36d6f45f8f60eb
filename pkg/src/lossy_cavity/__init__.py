"""Atom in a lossy cavity: no-jump dynamics, quantum trajectories and pulse shapes."""

from .model import (
    BasisState,
    DensityMatrix3,
    NoJumpAmplitudes,
    SystemParams,
    compute_omega,
    hamiltonian_matrix,
    jump_rates,
)
from .analytic import (
    ProbabilityBundle,
    TruncatedScenario,
    amplitudes,
    p_ext_bar,
    p_ext_bar_infinity,
    p_ext_infinity,
    p_in,
    populations_and_cumulative,
    resonant_limit_populations,
)
from .lindblad import LindbladGenerator, integrate, lindblad_rhs
from .trajectory import (
    EnsembleEstimate,
    JumpChannel,
    TrajectoryRecord,
    click_histogram,
    run_ensemble,
    sample_channel,
    sample_jump_time,
)
from .pulse import (
    OutputFieldState,
    PulseEnvelope,
    detector_response,
    envelope_at_z,
    envelope_continuous,
    envelope_truncated,
    output_state,
)

__version__ = "0.1.0"
