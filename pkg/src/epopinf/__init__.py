"""Energy-preserving Operator Inference for quadratic reduced-order models."""

__version__ = "0.1.0"

from .tensor_ops import (
    kron_square,
    vech_square,
    vech_index,
    h_to_f,
    f_to_h,
    eval_quadratic,
    ep_violation,
    is_energy_preserving,
    build_constraint_matrix,
    extract_submodel,
    ConstraintSystem,
)
from .pde import (
    Grid1D,
    QuadraticModel,
    SnapshotSet,
    assemble_burgers,
    assemble_kse,
    burgers_ic,
    kse_ic,
    simulate,
    simulate_batch,
)
from .pod import PODBasis, ReducedData, compute_pod, energy_lost, energy_retained, project
from .opinf import (
    LsqSystem,
    ReducedModel,
    assemble_lsq,
    intrusive_reduce,
    standard_opinf,
    ep_opinf,
    kkt_diagnostics,
)
from .metrics import (
    AutocorrSeries,
    TrajectoryPair,
    relative_state_error,
    sample_autocorrelation,
    field_autocorrelation,
    nace,
)
