"""Names and validation for fusion integration points."""

from __future__ import annotations

from scenefuse.errors import ConfigurationError

VISION = "vision"
CONTEXTUAL = "contextual"
DECODER = "decoder"
INTEGRATION_POINTS = (VISION, CONTEXTUAL, DECODER)


def parse_point(text: str) -> str:
    point = str(text).strip().lower()
    if point not in INTEGRATION_POINTS:
        raise ConfigurationError(
            f"unknown integration point {text!r}; expected one of {INTEGRATION_POINTS}"
        )
    return point
