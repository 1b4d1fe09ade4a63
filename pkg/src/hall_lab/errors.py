"""Exception hierarchy for hall_lab."""


class HallLabError(Exception):
    """Base class for all library errors."""


class ConfigError(HallLabError, ValueError):
    """Invalid model or experiment configuration."""


class NonCommensurate(ConfigError):
    pass


class FluxTooSmall(ConfigError):
    pass


class CoveringViolated(ConfigError):
    pass


class EvenScale(ConfigError):
    pass


class GeometryViolated(HallLabError):
    pass


class InsufficientDecay(HallLabError):
    pass


class FluxMismatch(HallLabError):
    pass


class UnsupportedShift(HallLabError, ValueError):
    pass


class BandsNotResolved(HallLabError):
    pass


class ConvergenceFailure(HallLabError):
    pass


class MonotoneViolated(HallLabError):
    pass


class QuadratureUnresolved(HallLabError):
    pass


class MissingConstant(HallLabError, ValueError):
    pass


class SingularShift(HallLabError):
    pass


class GapViolated(HallLabError, ValueError):
    pass


class NotInGap(HallLabError):
    pass


class InvalidS(HallLabError, ValueError):
    pass


class EvenInitialScale(HallLabError, ValueError):
    pass


class FieldTooWeak(HallLabError, ValueError):
    pass


class ScaleRelationViolated(HallLabError, ValueError):
    pass


class DegenerateFermiCut(HallLabError):
    pass


class RegionTouchesSeam(HallLabError):
    pass


class UnstableStep(HallLabError):
    pass


class EmptyRegime(HallLabError):
    pass


class MissingOutput(HallLabError):
    pass


class DegenerateFermiLevel(UserWarning):
    pass


class ConfigInvalid(ConfigError):
    """Experiment configuration failed validation; ``field`` is the dotted path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TrialFailed(HallLabError):
    """A per-trial computation raised; carries the trial index and seed."""

    def __init__(self, trial: int, seed: int, cause: BaseException):
        super().__init__(f"trial {trial} (seed {seed}) failed: {type(cause).__name__}: {cause}")
        self.trial = trial
        self.seed = seed
        self.cause = cause
