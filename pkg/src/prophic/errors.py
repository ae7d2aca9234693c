"""Exception types shared across the engine."""


class ProphicError(Exception):
    pass


class SortMismatch(ProphicError):
    def __init__(self, msg, child=None):
        super().__init__(msg)
        self.child = child


class UnassignedVariable(ProphicError):
    def __init__(self, var):
        super().__init__(f"no value for variable {var}")
        self.var = var


class UnsupportedEval(ProphicError):
    pass


class InvalidDepth(ProphicError):
    pass


class ScopeError(ProphicError):
    pass


class UnknownVariable(ProphicError):
    pass


class FiniteIndexSort(ProphicError):
    pass


class NestedArray(ProphicError):
    pass


class UnmappedSymbol(ProphicError):
    pass


class SolverCrashed(ProphicError):
    def __init__(self, msg, stderr=""):
        super().__init__(msg)
        self.stderr = stderr


class ProtocolError(ProphicError):
    pass


class SolverTimeout(ProphicError):
    pass


class ParseError(ProphicError):
    def __init__(self, msg, line=None, col=None):
        where = f" at {line}:{col}" if line is not None else ""
        super().__init__(msg + where)
        self.line = line
        self.col = col


class UnsupportedLogic(ProphicError):
    pass


class MissingSection(ProphicError):
    pass


class NotConsecutive(ProphicError):
    pass


class RefinementStuck(ProphicError):
    pass


class ResourceOut(ProphicError):
    pass


class EngineCrashed(ProphicError):
    pass


class InvalidTrace(ProphicError):
    pass
