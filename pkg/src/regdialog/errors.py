"""Exception hierarchy shared by all regdialog modules."""


class RegDialogError(Exception):
    """Base class for every error raised by this package."""


class LineError(RegDialogError):
    """An input error tied to a 1-based line number."""

    def __init__(self, message, lineno=None, source=None):
        self.message = message
        self.lineno = lineno
        self.source = source
        super().__init__(str(self))

    def __str__(self):
        where = ""
        if self.source:
            where = f"{self.source}:"
        if self.lineno is not None:
            where += f"{self.lineno}:"
        return f"{where} {self.message}" if where else self.message


# -- snapshot text format ---------------------------------------------------

class SnapshotError(LineError):
    pass


class MalformedHeader(SnapshotError):
    pass


class MalformedLine(SnapshotError):
    pass


class DuplicateKeyPath(SnapshotError):
    pass


class DuplicateValueName(SnapshotError):
    pass


class BadTimestamp(SnapshotError):
    pass


class BadBase64(SnapshotError):
    pass


class IllegalCharacterInName(SnapshotError):
    pass


# -- ontology ---------------------------------------------------------------

class OntologyError(RegDialogError):
    pass


class OntologyParseError(LineError, OntologyError):
    pass


class IsaCycle(OntologyError):
    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__("isa cycle: " + " -> ".join(self.cycle))


class UndeclaredTerm(OntologyError):
    def __init__(self, term, kind="term"):
        self.term = term
        self.kind = kind
        super().__init__(f"undeclared {kind}: {term}")


class DisjointnessConflict(OntologyError):
    """Raised when the taxonomy itself contradicts a disjointness axiom."""


# -- diff -------------------------------------------------------------------

class DiffError(RegDialogError):
    pass


class HiveMismatch(DiffError):
    pass


class ChronologyError(DiffError):
    pass


class TooFewSnapshots(DiffError):
    pass


class PathMismatch(DiffError):
    pass


# -- rules ------------------------------------------------------------------

class RuleError(RegDialogError):
    pass


class RuleParseError(LineError, RuleError):
    pass


class UnsafeRule(RuleParseError):
    pass


class UnknownBuiltin(RuleParseError):
    pass


class IterationLimitExceeded(RuleError):
    pass


# -- knowledge base -----------------------------------------------------------

class AnnotationError(LineError):
    pass
