"""Symmetric device-independent QKD: Bell-diagonal states, CHSH analysis,
collective-attack key-rate bounds and a Monte Carlo protocol simulator."""

from .chsh import (
    TSIRELSON,
    AsymmetricState,
    BasisConfig,
    ChshReport,
    check_symmetry_equations,
    chsh_value,
    correlator_closed_form,
    maximize_chsh,
    qber,
    solve_symmetric_angles,
)
from .protocol import (
    EmptyCell,
    PerturbationModel,
    ProtocolConfig,
    ProtocolStats,
    RoundRecord,
    estimate_chsh,
    estimate_qber,
    run_protocol,
    shuffle_records,
    sift,
)
from .quantum_core import BellDiagonalState, bell_state, to_density, von_neumann_entropy
from .security import (
    EveOptimum,
    KeyRateResult,
    holevo_bound,
    key_rate,
    optimal_eve_state,
    optimize_eve_numeric,
    q_from_s,
    zero_rate_threshold,
)

__version__ = "0.1.0"
