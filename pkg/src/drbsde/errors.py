"""Exception hierarchy shared by the solver, verification and CLI layers."""


class DRBSDEError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(DRBSDEError, ValueError):
    pass


class InfeasibleProblem(DRBSDEError):
    """Barrier order or terminal compatibility fails somewhere on the lattice."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class StepTooCoarse(DRBSDEError):
    """``dt * a_norm >= 1``: the implicit step may have several roots."""


class GeneratorGrowthViolation(DRBSDEError):
    """The implicit root could not be bracketed after the maximum number of doublings."""


class InsufficientMetadata(DRBSDEError):
    """A generator lacks the growth constants needed by an operation."""


class ConfigError(DRBSDEError):
    """Experiment configuration is malformed. ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class VerdictViolation(DRBSDEError):
    """A structural property failed on a computed solution.

    ``witness`` is a dict locating the failure (level, node, defect, ...).
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness or {}


class MonotonicityViolation(VerdictViolation):
    pass


class SandwichViolation(VerdictViolation):
    pass


class LimitDisagreement(VerdictViolation):
    pass


class UniquenessViolation(VerdictViolation):
    pass


class InputsNotOrdered(DRBSDEError):
    """A comparison run was set up with inputs that are not ordered."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness or {}
