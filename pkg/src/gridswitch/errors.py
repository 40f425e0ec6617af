"""Exception hierarchy shared by every gridswitch module."""


class GridSwitchError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for this error."""

    exit_code = 1


class CaseLoadError(GridSwitchError):
    exit_code = 3


class MalformedCase(CaseLoadError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class MissingSection(CaseLoadError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing section mpc.{name}")


class DuplicateBusId(CaseLoadError):
    def __init__(self, bus_id):
        self.bus_id = bus_id
        super().__init__(f"duplicate bus id {bus_id}")


class DimensionMismatch(GridSwitchError, ValueError):
    pass


class IslandedInput(GridSwitchError):
    """Raised when buses with load or generation are cut off from the slack bus."""


class InfeasibleBaseCase(GridSwitchError):
    pass


class EpisodeFinished(GridSwitchError):
    pass


class ActionOutOfRange(GridSwitchError, IndexError):
    pass


class ShapeMismatch(GridSwitchError, ValueError):
    pass


class StaleCache(ShapeMismatch):
    pass


class InvalidDim(GridSwitchError, ValueError):
    pass


class ConfigError(GridSwitchError, ValueError):
    exit_code = 2


class IoError(GridSwitchError, OSError):
    exit_code = 4


class CheckpointMismatch(GridSwitchError):
    exit_code = 5
