"""Exception types raised across the package."""


class FairPathError(Exception):
    """Base class for all errors raised by fairpath."""


class GraphError(FairPathError, ValueError):
    """Malformed causal graph or path specification."""


class CycleError(GraphError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(map(str, self.cycle)))


class NotIdentifiedError(FairPathError):
    """The requested path-specific effect is not a function of the observed data."""

    def __init__(self, verdict):
        self.verdict = verdict
        witness = ", ".join(verdict.witness or ())
        super().__init__(f"effect is not identified ({verdict.reason}); witness: {{{witness}}}")


class ModelSpecError(FairPathError, ValueError):
    pass


class FitError(FairPathError):
    """A GLM could not be fitted (rank deficiency, separation, non-convergence)."""


class PositivityError(FairPathError, ValueError):
    def __init__(self, what, row, value):
        self.row = int(row)
        self.value = float(value)
        super().__init__(f"positivity violation: {what} = {value:.3g} < 1e-6 at row {row}")


class InfeasibleConstraintError(FairPathError):
    """The constrained solver could not bring the effect inside the bounds."""

    def __init__(self, result):
        self.result = result
        super().__init__(
            f"could not reach [{result.bounds.lower}, {result.bounds.upper}]; "
            f"closest achieved value {result.achieved_pse:.6g}"
        )


class DataError(FairPathError, ValueError):
    pass
