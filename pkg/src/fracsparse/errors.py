"""Error taxonomy shared across the package."""


class FracsparseError(ValueError):
    """Base class for all package errors."""


class ParameterError(FracsparseError):
    """An argument is outside its documented range."""


class LeafError(ParameterError):
    """Subdivision was requested on a finest-level cube."""


class DegenerateWeightError(FracsparseError):
    """A weight has zero mass where positive mass is required."""


class EllipticityError(ParameterError):
    """A diffusion coefficient is not bounded away from zero."""


class SpectrumError(FracsparseError):
    """An operator's spectrum is incompatible with the request."""


class SupportError(FracsparseError):
    """A function's support escapes the cube it must live in."""


class BloomUndefinedError(ParameterError):
    """The Bloom weight (mu/lambda)^(1/m) has no meaning at m = 0."""


class TrivialityWarning(UserWarning):
    """A requested two-weight class is trivial (empty or everything)."""


class FormatError(FracsparseError):
    """A text artifact (matrix file, family file, config) is malformed."""


class EmptySampleError(FracsparseError):
    """Every sample in a batch was skipped as degenerate."""
