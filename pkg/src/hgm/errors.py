"""Exception types raised across the control stack."""


class HgmError(Exception):
    """Base class for all package errors."""


class NonIntegerRatio(HgmError, ValueError):
    pass


class FactorisationViolation(HgmError):
    """A level asked for an observation channel outside its allow-list."""


class UnknownChannel(HgmError, KeyError):
    pass


class SimulationDiverged(HgmError, FloatingPointError):
    pass


class DimensionMismatch(HgmError, ValueError):
    pass


class NoForwardCache(HgmError, RuntimeError):
    pass


class NonFiniteLoss(HgmError, FloatingPointError):
    pass


class Infeasible(HgmError, ValueError):
    pass


class SolverFailure(HgmError, RuntimeError):
    pass


class UnknownActuator(HgmError, KeyError):
    pass


class PhaseOutOfRange(HgmError, ValueError):
    pass


class ConfigError(HgmError, ValueError):
    pass


class StageFailed(HgmError, RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"stage {stage} failed: {message}")
        self.stage = stage


class MissingCheckpoint(HgmError, FileNotFoundError):
    pass


class MissingLog(HgmError, FileNotFoundError):
    pass
