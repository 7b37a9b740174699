"""Exception hierarchy shared across the package."""


class EgoPoseError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(EgoPoseError):
    """Invalid input data or configuration (exit code 2 at the CLI)."""


class OutsideFov(EgoPoseError):
    """A point or pixel falls outside the camera's field of view."""


class DegeneratePoint(ValidationError):
    """A 3D point coincides with the camera center."""


class NoConvergence(EgoPoseError):
    """An iterative numeric routine failed to converge (exit code 3)."""


class NonFiniteEnergy(EgoPoseError):
    """The objective evaluated to NaN or infinity (exit code 3)."""


class DimensionMismatch(ValidationError):
    """Array shapes or parameter counts do not line up."""


class UnknownJointLabel(ValidationError):
    """A detection refers to a joint label the skeleton does not define."""


class HeightOutOfRange(ValidationError):
    """Requested subject height outside the supported range."""


class BackgroundTooSmall(ValidationError):
    """Background image smaller than the foreground it should replace."""


class LabelMismatch(ValidationError):
    """Predicted and ground-truth joint label sets differ."""


class LengthMismatch(ValidationError):
    """Two sequences that must be equal-length are not."""


class MissingImage(ValidationError):
    """A frame observation lacks the image required by the color term."""
