class DimensionError(ValueError):
    """Array shapes of a model, channel or kernel do not line up."""


class UnreachableMeasurementError(ValueError):
    """A measurement has zero probability under the prior doing the conditioning."""

    def __init__(self, symbol, message=None):
        self.symbol = symbol
        super().__init__(message or f"measurement {symbol!r} has zero probability")


class PreconditionError(ValueError):
    """Inputs violate a mathematical precondition of the requested check."""


class DivergenceError(FloatingPointError):
    """A Langevin iterate became non-finite."""

    def __init__(self, step, chain=None):
        self.step = step
        self.chain = chain
        where = f" (chain {chain})" if chain is not None else ""
        super().__init__(f"non-finite Langevin iterate at step {step}{where}")
