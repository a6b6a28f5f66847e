"""Tests and confidence intervals for one fixed effect of a high-dimensional
linear mixed model, plus the simulation designs used to calibrate them."""

from ._lmminfer import (
    LmmInferError,
    ci_halfwidth,
    confidence_interval,
    generate,
    p_value,
    power,
    simulate,
    test,
)

__all__ = [
    "LmmInferError",
    "ci_halfwidth",
    "confidence_interval",
    "generate",
    "p_value",
    "power",
    "simulate",
    "test",
]
