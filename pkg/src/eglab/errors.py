"""Exception types shared across the package."""


class EglabError(Exception):
    """Base class for all package errors."""


class InputError(EglabError, ValueError):
    """Malformed or out-of-range input."""


class RepresentabilityError(EglabError, ValueError):
    """A label cannot be emitted in the available number of frames."""

    def __init__(self, label_length, n_frames, required):
        self.label_length = label_length
        self.n_frames = n_frames
        self.required = required
        super().__init__(
            f"label of length {label_length} needs at least {required} frames, got {n_frames}"
        )


class SizeError(EglabError, ValueError):
    """Instance too large for exhaustive enumeration."""


class TrainingError(EglabError, RuntimeError):
    """Training diverged."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training loss became non-finite at epoch {epoch}")


class ConfigError(EglabError, ValueError):
    """Invalid configuration value."""


class ParseError(EglabError, ValueError):
    """Malformed file contents."""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class SingularFisherError(EglabError, ArithmeticError):
    """Fisher matrix too ill-conditioned to invert."""

    def __init__(self, condition_number):
        self.condition_number = condition_number
        super().__init__(f"Fisher matrix is singular (condition number {condition_number:.3e})")
