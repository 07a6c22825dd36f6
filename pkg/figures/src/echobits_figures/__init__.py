"""Publication-style figures rendered from echobits CSV outputs."""

__version__ = "0.1.0"

from .render import (
    ScalingSpec,
    SchemaError,
    SignaturesSpec,
    render_scaling,
    render_signatures,
    signatures_spec_from_dir,
)

__all__ = [
    "ScalingSpec",
    "SchemaError",
    "SignaturesSpec",
    "render_scaling",
    "render_signatures",
    "signatures_spec_from_dir",
]
