class FastPedError(Exception):
    pass


class ConfigError(FastPedError):
    pass


class ScenarioError(FastPedError):
    """Raised for malformed scenario text or files

    Parameters
    ----------
    message: str
        What went wrong
    line_number: int | None
        The 1-based line of the scenario text at fault, if known
    """

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class CapacityError(FastPedError):
    pass


class StateError(FastPedError):
    pass


class BaselineError(FastPedError):
    pass


class EquivalenceError(FastPedError):
    pass


class ResultsIOError(FastPedError):
    pass


class FundamentalDiagramError(FastPedError):
    pass
