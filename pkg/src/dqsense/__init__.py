"""Simulation and bound calculations for distributed quantum sensing networks."""

__version__ = "0.1.0"

from .gaussian import (  # noqa: E402
    GaussianState,
    HomodyneRecord,
    LossMap,
    NumericalError,
    SymplecticTransform,
    distribution_array,
    fidelity,
    homodyne_x,
    pure_loss,
    squeezed_vacuum,
    vacuum,
)
from .fisher import FisherMatrix, FisherReport, Method, fisher_fd  # noqa: E402
from .protocols import (  # noqa: E402
    Kind,
    SensorNetworkSpec,
    SpecError,
    Task,
    analytic_precision,
    build_plan,
    optimize_allocation,
)
from .experiments import (  # noqa: E402
    EstimationResult,
    SweepTable,
    bound_comparison,
    entanglement_sweep,
    phase_mc,
    run_estimation,
    scaling_sweep,
)

__all__ = [
    "GaussianState", "HomodyneRecord", "LossMap", "NumericalError", "SymplecticTransform",
    "distribution_array", "fidelity", "homodyne_x", "pure_loss", "squeezed_vacuum", "vacuum",
    "FisherMatrix", "FisherReport", "Method", "fisher_fd",
    "Kind", "SensorNetworkSpec", "SpecError", "Task", "analytic_precision", "build_plan",
    "optimize_allocation",
    "EstimationResult", "SweepTable", "bound_comparison", "entanglement_sweep", "phase_mc",
    "run_estimation", "scaling_sweep",
]
