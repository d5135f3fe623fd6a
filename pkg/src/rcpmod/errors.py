class ContractError(ValueError):
    """An operation was called with arguments that violate its preconditions."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class DataFormatError(ValueError):
    """A dataset directory could not be parsed."""


class TrainingDivergence(FloatingPointError):
    """Raised when a loss or gradient becomes non-finite.

    ``term`` names the offending loss component.
    """

    def __init__(self, term: str, message: str = ""):
        self.term = term
        super().__init__(f"non-finite values in {term}" + (f": {message}" if message else ""))


class ImputationDeferred(LookupError):
    """No usable counterpart exists yet for a missing-view instance."""
