"""Errors raised by the pseudogroup library, the CLI and the HTTP layer."""


class PseudodynError(Exception):
    """Base class for every error this package raises on purpose."""

    status_code = 400


class SpaceMismatch(PseudodynError):
    """A generator was applied to a point of another phase space."""


class UnsupportedRegion(PseudodynError):
    """A region operation is not available for this region shape."""

    status_code = 422


class CompatibilityError(PseudodynError):
    """Two partial maps disagree on the overlap of their domains."""

    status_code = 422

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class PointOutsideU(PseudodynError):
    """A restricted-orbit computation started outside the restricting set."""


class OverlappingIntervals(PseudodynError):
    """Twist intervals of one direction share more than an endpoint."""


class RadiusSearchExhausted(PseudodynError):
    """No dyadic radius up to the configured cap satisfied the radius conditions."""

    status_code = 500


class UnknownSystem(PseudodynError):
    status_code = 404


class BadParams(PseudodynError):
    pass


class VerificationFailed(PseudodynError):
    """An exact verification did not come out Established."""

    status_code = 409

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class SearchFailed(PseudodynError):
    """A bounded search ran out of budget without producing a witness."""

    status_code = 422
