"""freegeo: a numerical laboratory for matrix-tuple information geometry."""

__version__ = "0.1.0"

from .matcore import (  # noqa: F401
    MatrixTuple,
    Seed,
    operator_norm,
    sa_embedding,
    sample_ginibre,
    sample_gue,
    tensor_embed,
    trace_inner_product,
    tracial_norm,
)
