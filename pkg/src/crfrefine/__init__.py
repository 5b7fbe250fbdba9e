"""Label-map refinement with a fully connected CRF and a 4-connected grid baseline."""

__version__ = "0.1.0"

from .core import (
    BUILTIN_PALETTES,
    ClassPalette,
    CrfParams,
    ImageTensor,
    LabelMap,
    MarginalField,
    ParamError,
    UnaryField,
    builtin_palette,
    validate_params,
)
from .evaluation import EvalReport, evaluate, sweep_report
from .filtering import (
    FeatureField,
    PermutohedralLattice,
    SizeGuardError,
    brute_force_filter,
    fast_filter,
    make_bilateral_features,
    make_spatial_features,
    normalized_filter,
)
from .fixtures import gen_fixture
from .inference import (
    InferenceTrace,
    NumericalError,
    dense_energy,
    dense_mean_field_step,
    grid_mean_field_step,
    init_marginals,
    run_inference,
)
from .unary import unary_from_labels, unary_from_probabilities
