"""Exception hierarchy.

Every failure raised by the pipeline derives from :class:`BautinError`; the
CLI maps :class:`ConfigError` to exit code 2 and every other subclass to exit
code 3, naming ``stage``.
"""


class BautinError(Exception):
    stage = "pipeline"


class ConfigError(BautinError, ValueError):
    stage = "config"


class SpectrumError(BautinError):
    stage = "spectrum"


class BoundaryRoot(SpectrumError):
    """A characteristic root sits on (or numerically next to) a contour."""


class NoLeadingPair(SpectrumError):
    pass


class EigenbasisError(BautinError):
    stage = "eigenbasis"


class NotARoot(EigenbasisError):
    pass


class Degenerate(EigenbasisError):
    pass


class NormalizationSingular(EigenbasisError):
    pass


class ManifoldError(BautinError):
    stage = "manifold"


class MissingOrder(ManifoldError):
    pass


class Unresolvable(ManifoldError):
    pass


class NormalFormError(BautinError):
    stage = "normalform"


class DegenerateL2(NormalFormError):
    pass


class UnsupportedSign(NormalFormError):
    pass


class NoCycles(NormalFormError):
    pass


class NoConvergence(NormalFormError):
    pass


class StencilFailure(NormalFormError):
    pass


class SimulationError(BautinError):
    stage = "ddesim"


class StepTooLarge(SimulationError, ValueError):
    pass


class Inconclusive(SimulationError):
    pass


class NonFinite(SimulationError):
    pass
