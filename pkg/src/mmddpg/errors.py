"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not line up."""


class InputError(ValueError):
    """Input contains non-finite values or is otherwise unusable."""


class ConfigError(ValueError):
    """A configuration value violates its documented constraint.

    ``problems`` holds one ``(field, message)`` pair per violation so that
    callers can report every bad field at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("config", problems)]
        self.problems = list(problems)
        msg = "; ".join(f"{k}: {m}" for k, m in self.problems)
        super().__init__(msg)


class UsageError(RuntimeError):
    """An API was called in a state where it is not meaningful."""


class CacheError(UsageError):
    """A forward cache does not belong to the parameters given to backward."""


class NotReadyError(RuntimeError):
    """Replay buffer holds fewer transitions than the requested batch."""


class EnvFault(RuntimeError):
    """Simulation produced a non-finite state or cost."""

    def __init__(self, msg, mask=None):
        super().__init__(msg)
        self.mask = mask


class TrainingFault(RuntimeError):
    """A loss or normalizer became non-finite during an update."""
