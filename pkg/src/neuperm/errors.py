"""Exception types shared across the toolkit.

The CLI maps these onto its exit codes, so raising the right class matters:
parse problems (1), verification failures (2), capacity violations (3),
inapplicable or undefined bounds (4).
"""

from __future__ import annotations


class ParseError(ValueError):
    """Malformed archive bytes. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class DescriptorError(ValueError):
    """Descriptor JSON violates the schema or does not fit its archive."""


class VerificationError(RuntimeError):
    """Post-condition check failed (e.g. outputs diverged after a rewrite)."""


class CapacityError(ValueError):
    """Payload does not fit the host under the stated embedding rule."""


class BoundInapplicableError(ValueError):
    """Closed-form bound hypothesis violated (d >= 1 - delta)."""


class IneffectiveRegimeError(ValueError):
    """Too few covered bits: L <= 0 means permutation cannot constrain the payload."""
