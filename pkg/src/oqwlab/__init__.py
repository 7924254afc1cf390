"""Open quantum walks on Z^d with several vertex classes."""
from oqwlab.analysis import (
    analytic_sigma, class_drift, invariant_state, kernel_image_split, mean_vector, mixed_mean,
    poisson_identity_check, solve_poisson,
)
from oqwlab.core import (
    DensityOperator, TransitionRule, VertexClass, apply_channel, apply_conjugate, superop_matrix,
    validate_class,
)
from oqwlab.errors import (
    NonUniqueInvariantError, OQWError, ProbabilityError, ValidationError, WindowOverflowError,
)
from oqwlab.lattice import ClassField
from oqwlab.reduction import compose_paths, equivalence_check, is_reducible, reduced_drift

__version__ = "0.1.0"
