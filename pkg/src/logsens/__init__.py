"""Time-domain log-sensitivity analysis of error signals.

Computes e(t) = c @ expm(A0 t) @ v, its derivative with respect to a
structured uncertain parameter, and the log-sensitivity
s(xi0, t) = xi0 * (de/dxi) / e, then classifies how |s| diverges as the
error decays.  Ships builders for classical step-tracking loops
(spring-mass, RLC) and quantum Bloch-space models (open two-qubit system,
perfect-state-transfer spin chains), plus a scenario CLI.
"""

__version__ = "0.1.0"

from .matexp import (
    Couplings,
    Spectrum,
    couplings,
    dderiv_diag,
    dderiv_jordan,
    dderiv_oracle_blockaug,
    dderiv_oracle_fd,
    dderiv_oracle_quadrature,
    eig_decompose,
    phi_matrix,
)
from .sensan import (
    DivergenceClassification,
    ErrorSystem,
    SensitivityTrace,
    classify,
    detect_spikes,
    error_derivative,
    error_signal,
    fit_polynomial_degree,
    fit_slope,
    log_sensitivity,
    spike_schedule,
    trace,
)
from .classical import (
    ClosedLoop,
    OpenLoopPlant,
    close_loop,
    place_poles,
    rlc_scenario,
    spring_mass_scenario,
)
from .quantum import (
    BlochModel,
    HermitianBasis,
    bloch_coherent,
    bloch_dissipator,
    bloch_state,
    gellmann_basis,
    spin_chain_scenario,
    steady_state,
    two_qubit_scenario,
)

__all__ = [
    "Couplings", "Spectrum", "couplings", "dderiv_diag", "dderiv_jordan",
    "dderiv_oracle_blockaug", "dderiv_oracle_fd", "dderiv_oracle_quadrature",
    "eig_decompose", "phi_matrix",
    "DivergenceClassification", "ErrorSystem", "SensitivityTrace", "classify",
    "detect_spikes", "error_derivative", "error_signal",
    "fit_polynomial_degree", "fit_slope", "log_sensitivity", "spike_schedule",
    "trace",
    "ClosedLoop", "OpenLoopPlant", "close_loop", "place_poles", "rlc_scenario",
    "spring_mass_scenario",
    "BlochModel", "HermitianBasis", "bloch_coherent", "bloch_dissipator",
    "bloch_state", "gellmann_basis", "spin_chain_scenario", "steady_state",
    "two_qubit_scenario",
]
