"""
errors — Exception hierarchy shared by every module.

Verdicts (pass / fail / indeterminate) are values, not exceptions.
Exceptions signal that a computation could not produce a verdict.

The CLI maps the two families onto exit codes:
  • usage / config family  → exit 2
  • ``NumericalFailure``   → exit 3
"""

from __future__ import annotations

from typing import Any


class BlayerVerifyError(Exception):
    """Root of every error raised by the toolkit."""

    def __init__(self, message: str, **diagnostics: Any) -> None:
        super().__init__(message)
        self.diagnostics: dict[str, Any] = diagnostics


# ─── Usage / configuration ────────────────────────────────────

class ConfigSchemaError(BlayerVerifyError):
    """Run configuration violates the schema (unknown key, wrong type, bad value)."""


class UnknownSystemError(ConfigSchemaError, KeyError):
    """Catalog lookup for a name that is not registered."""

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0] if self.args else ""


class MissingArtifactError(BlayerVerifyError):
    """A stage needs an upstream artifact that is absent or stale."""


class RejectedInputError(BlayerVerifyError, ValueError):
    """Input outside the domain of an evaluator (e.g. nonpositive density)."""


# ─── Numerical failures ───────────────────────────────────────

class NumericalFailure(BlayerVerifyError):
    """A numerical method failed to deliver a certified result."""


class SingularProfileError(NumericalFailure):
    """First-integral elimination is not locally solvable."""


class NoProfileFoundError(NumericalFailure):
    """Collocation / continuation did not converge to a layer profile."""


class CoefficientDegeneracyError(NumericalFailure):
    """b₂¹¹ or the first-order change of variables is singular on the grid."""


class ConjugationFailure(NumericalFailure):
    """The conjugating matrix grew beyond its admissible bound."""


class NonHyperbolicFrequencyError(NumericalFailure):
    """Consistent splitting fails at the requested frequency."""


class EigenvalueProximityError(NumericalFailure):
    """Resolvent solve is singular: the frequency sits on (or next to) spectrum."""


class SplittingFailure(NumericalFailure):
    """Slow/fast spectral gap of G₊ is below threshold."""


class IntegrationFailure(NumericalFailure):
    """ODE integrator stopped (stiffness overflow after rescaled retry)."""


class QuadratureNonConvergence(NumericalFailure):
    """Quadrature did not converge under refinement."""


class CFLViolation(NumericalFailure):
    """Requested time step violates the convection CFL bound."""


class DomainReflectionError(NumericalFailure):
    """Artificial boundaries feed energy back into the domain; enlarge it."""


__all__ = [
    "BlayerVerifyError",
    "ConfigSchemaError",
    "UnknownSystemError",
    "MissingArtifactError",
    "RejectedInputError",
    "NumericalFailure",
    "SingularProfileError",
    "NoProfileFoundError",
    "CoefficientDegeneracyError",
    "ConjugationFailure",
    "NonHyperbolicFrequencyError",
    "EigenvalueProximityError",
    "SplittingFailure",
    "IntegrationFailure",
    "QuadratureNonConvergence",
    "CFLViolation",
    "DomainReflectionError",
]
