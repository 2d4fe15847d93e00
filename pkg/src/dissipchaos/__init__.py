"""Spectral and dynamical diagnostics of dissipative quantum chaos.

Lindblad models, Liouvillian eigendecomposition, complex-spectrum level
statistics, quantum trajectories and their spectral statistics (SSQT),
mean-field and truncated-Wigner chaos indicators, and closed-system
Hamiltonian level statistics.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BiorthogonalityError,
    BlowUpError,
    ConvergenceError,
    DegenerateStateError,
    DimensionError,
    DissipChaosError,
    MultipleSteadyStatesError,
    NumericalError,
    ResourceGuardError,
    StepSizeError,
)
from .models import (  # noqa: E402
    BoseHubbardParams,
    ModelSpec,
    RandomLiouvillianParams,
    SpinChainParams,
    build_bose_hubbard,
    build_kerr_resonator,
    build_random_liouvillian,
    build_spin_chain,
)
from .liouvillian import assemble, diagonalize, propagate, steady_state  # noqa: E402
