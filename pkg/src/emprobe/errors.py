"""Error taxonomy shared by all pipeline stages.

Every failure mode the pipeline can diagnose gets its own exception class so
batch drivers can map a failure to a machine-readable code without parsing
messages.  `code` is the stable identifier emitted by the CLI.
"""


class EnclosureError(Exception):
    """Base class for all diagnosable pipeline failures."""

    code = "error"

    def __init__(self, message="", **context):
        super().__init__(message)
        self.context = context


class AmbiguousProjection(EnclosureError):
    """Nearest boundary point is not unique within tolerance."""
    code = "ambiguous_projection"


class ContinuumReflector(EnclosureError):
    """The set of nearest boundary points is not finite."""
    code = "continuum_reflector"


class OutsideCollar(EnclosureError):
    """Point lies outside the unique-projection collar of the boundary."""
    code = "outside_collar"


class OutOfWindow(EnclosureError):
    """Time argument outside the recording window [0, T]."""
    code = "out_of_window"


class Overlap(EnclosureError):
    """Source ball intersects the obstacle closure."""
    code = "overlap"


class InsideBall(EnclosureError):
    """Evaluation point inside the source ball where the exterior closed
    form does not apply."""
    code = "inside_ball"


class DomainTooSmall(EnclosureError):
    """Grid extent does not contain the scene with the required padding."""
    code = "domain_too_small"


class ResolutionTooCoarse(EnclosureError):
    """Grid spacing cannot resolve the source ball or the boundary
    curvature at the required rate."""
    code = "resolution_too_coarse"


class NumericBlowup(EnclosureError):
    """Field amplitude exploded; symptomatic of a time-step violation."""
    code = "numeric_blowup"


class DegenerateQuadrature(EnclosureError):
    """Quadrature weights fail their exactness audit."""
    code = "degenerate_quadrature"


class NoPositiveWindow(EnclosureError):
    """Indicator never stabilizes positive; no distance window found."""
    code = "no_positive_window"


class Divergent(EnclosureError):
    """Normalized indicator sequence fails the Cauchy drift test."""
    code = "divergent"


class SingularSystem(EnclosureError):
    """The curvature recovery system is singular (equal offsets)."""
    code = "singular_system"


class QuadratureNotConverged(EnclosureError):
    """Adaptive quadrature exhausted refinement without agreement."""
    code = "quadrature_not_converged"


class DegenerateHessian(EnclosureError):
    """Curvature-difference determinant at a reflector is not positive."""
    code = "degenerate_hessian"


class HypothesisViolated(EnclosureError):
    """An asymptotic prediction was requested outside its hypotheses."""
    code = "hypothesis_violated"


class StepTooLarge(EnclosureError):
    """Finite-difference step too large for the collar geometry."""
    code = "step_too_large"


class MissingArtifact(EnclosureError):
    """A pipeline stage input file is absent."""
    code = "missing_artifact"


class InvalidConfig(EnclosureError):
    """Experiment config failed schema validation."""
    code = "invalid_config"


class NegativeDiscriminant(UserWarning):
    """Recovered (H, K) violate H^2 >= K; quadrature noise, not fatal."""
