"""Exception hierarchy shared by all llhmm modules."""


class LLHMMError(Exception):
    """Base class for every error raised by llhmm."""


class NumericalError(LLHMMError):
    """A computation failed for numerical reasons (CLI exit code 3)."""


class ConfigError(LLHMMError):
    """Invalid user input or configuration (CLI exit code 2)."""


# grid / finite differences
class AxisOutOfRange(ConfigError):
    pass


class StencilWiderThanGrid(ConfigError):
    pass


class NonPositiveCoefficient(ConfigError):
    pass


class NonSPDMatrix(ConfigError):
    pass


# coefficients
class ExpressionSyntaxError(ConfigError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifier(ConfigError):
    def __init__(self, name, position):
        super().__init__(f"unknown identifier {name!r} at position {position}")
        self.name = name
        self.position = position


class SolverDivergence(NumericalError):
    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


# kernels
class IllConditionedSystem(NumericalError):
    pass


class AveragingBoxExceedsData(ConfigError):
    pass


# integrators
class ShapeMismatch(ConfigError):
    pass


class ZeroNormBeforeProjection(NumericalError):
    pass


class FixedPointDivergence(NumericalError):
    def __init__(self, iterations, residual):
        super().__init__(
            f"fixed-point iteration failed after {iterations} iterations "
            f"(last update {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class MissingHistory(ConfigError):
    pass


class NoStableStepFound(NumericalError):
    pass


class InstabilityDetected(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


# micro problem
class ExtrapolationRequested(ConfigError):
    pass


class VanishingInterpolant(NumericalError):
    pass


class NoReferenceAvailable(ConfigError):
    pass


# reference solvers
class UnderResolved(ConfigError):
    pass


class IncommensurateGrids(ConfigError):
    pass
