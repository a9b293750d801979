"""Exception hierarchy shared by every module."""


class OntoKGCError(Exception):
    """Base class for all toolkit errors."""


class ParseError(OntoKGCError):
    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}" if where else f"line {lineno}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(OntoKGCError):
    """Input is well-formed but violates a data invariant."""


class OntologyError(ValidationError):
    def __init__(self, message, axioms=()):
        self.axioms = tuple(axioms)
        super().__init__(message)


class CycleError(OntologyError):
    def __init__(self, cycle, axioms=()):
        self.cycle = tuple(cycle)
        super().__init__("subclass cycle: " + " -> ".join(self.cycle), axioms)


class ConfigError(OntoKGCError):
    pass


class SamplingError(OntoKGCError):
    pass


class RoundLimitError(OntoKGCError):
    def __init__(self, limit):
        self.limit = limit
        super().__init__(f"materialization did not reach a fixpoint within {limit} rounds")


class TrainingError(OntoKGCError):
    """Raised when a loss turns non-finite."""


class DimensionMismatchError(OntoKGCError):
    pass


class ArtifactMissingError(OntoKGCError):
    pass


class TransportError(OntoKGCError):
    pass
