"""Few-step flow-map generative models on Riemannian manifolds."""

from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    CutLocusError,
    DomainError,
    GFMError,
    InvalidTangentError,
    NearSingularError,
    ParseError,
    TrainingDivergedError,
    UnsupportedError,
    UnsupportedPriorError,
)
from .manifolds import (
    SO3,
    FlatTorus,
    ManifoldPoint,
    ManifoldSpec,
    PoincareBall,
    Sphere2,
    TangentVector,
    exp_map,
    geodesic_distance,
    get_manifold,
    log_map,
    metric_inner,
    sample_uniform,
    tangent_frame,
    tangent_project,
)
from .model import AffineField, Arch, FieldModel, VelocityField

__version__ = "0.1.0"
