"""Exception hierarchy. Every error raised by this package derives from AdvDriveError."""


class AdvDriveError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AdvDriveError):
    """Invalid scenario or run configuration (bad spawn, overlapping agents, ...)."""


class ValidationError(ConfigurationError):
    """Config file failed schema validation; message names the offending key."""


class ContractViolationError(AdvDriveError):
    """A caller broke an operation precondition (bad shapes, unknown agent, ...)."""


class PpoError(AdvDriveError):
    """PPO update failed (stale batch, non-finite ratio or gradient)."""


class NonFiniteError(PpoError):
    """A loss, ratio, or gradient became NaN/Inf."""


class CheckpointError(AdvDriveError):
    """Base for checkpoint load failures."""


class ChecksumMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class FreezeViolationError(AdvDriveError):
    """A frozen policy's parameters changed during a phase."""


class PhaseAbortedError(AdvDriveError):
    """Training phase aborted; carries the path of the last good checkpoint set."""

    def __init__(self, message, last_checkpoints=None):
        super().__init__(message)
        self.last_checkpoints = dict(last_checkpoints or {})
