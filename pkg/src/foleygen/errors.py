"""Exception hierarchy shared across the package."""


class FoleygenError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FoleygenError):
    """Invalid, unknown, or inconsistent configuration values."""


class DatasetError(FoleygenError):
    """Corpus scanning or audio decoding failure."""


class SpectralError(FoleygenError):
    """Invalid input to the STFT/mel frontend."""


class ModelError(FoleygenError):
    """Invalid tensor fed to a network component."""


class TrainingError(FoleygenError):
    """Training pipeline failure (bad batch, non-finite loss, ...)."""


class CheckpointError(FoleygenError):
    """Checkpoint serialization or compatibility failure."""


class EvaluationError(FoleygenError):
    """Distance computation or report assembly failure."""


class GridSearchError(EvaluationError):
    """Grid search aborted; carries the reports finished so far."""

    def __init__(self, message, completed):
        super().__init__(message)
        self.completed = list(completed)
