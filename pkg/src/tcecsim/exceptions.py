"""Exception and warning types raised across the package."""


class ShapeMismatch(ValueError):
    """Operand shapes do not conform for the requested product."""


class ZeroReference(ValueError):
    """Reference matrix has zero Frobenius norm."""


class ScaleOverflow(OverflowError):
    """Power-of-two scaling pushed a component out of single-precision range."""


class InvalidPermutation(ValueError):
    pass


class ExtentMismatch(ValueError):
    """A label shared by two tensors has different extents on each side."""


class InvalidPath(ValueError):
    pass


class DisconnectedNetwork(ValueError):
    pass


class InfeasibleDegrees(ValueError):
    pass


class TooManyQubits(ValueError):
    pass


class ConversionOverflowWarning(RuntimeWarning):
    """A value exceeded the target format's largest finite value and was saturated.

    Quantum-simulation inputs never exceed magnitude 1, so seeing this warning
    means the caller fed data outside the intended operating range.
    """
