"""Spin-polarized drift-diffusion simulator for layered semiconductor devices.

Set ``SPINDD_DISABLE_NUMBA=1`` before import (or call :func:`set_backend`)
to run the pure-numpy kernels instead of the compiled ones.
"""

from ._accel import get_backend, set_backend
from .device import DeviceConfig, DeviceModel, Layer, build_model, paper_device, small_device, three_layer_device
from .diagnostics import DiagnosticsRecord, EntropyReference, entropy_H0, entropy_HQ, monitor, remark3_terms
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    HermiticityError,
    LinearSolverError,
    SingularPolarizationError,
    SpinDDError,
    StepFailure,
)
from .formulations import PotentialField, StateField, UpDownField, decompose, from_updown, to_updown
from .grid_solver import SolverSettings, gummel_step, run_reduced_updown, run_transient, solve_steady

__version__ = "0.1.0"
