"""Exception types shared across the package.

Algorithmic failures carry a short ``code`` that the CLI prints verbatim and
maps to exit status 2.
"""


class LikError(Exception):
    code = "lik-error"


class InvalidDimensionError(LikError, ValueError):
    code = "invalid-dimension"


class NumericError(LikError, ValueError):
    code = "numeric-error"


class InsufficientDataError(LikError, ValueError):
    code = "insufficient-data"


class InvalidWeightError(LikError, ValueError):
    code = "invalid-weight"


class AlgorithmError(LikError):
    """Base for typed failures of an estimator (exit code 2 in the CLI)."""


class GapNotFoundError(AlgorithmError):
    code = "gap-not-found"

    def __init__(self, largest_gap, delta, d):
        self.largest_gap = float(largest_gap)
        self.delta = float(delta)
        super().__init__(
            f"gap-not-found: no spectral gap >= delta*d^2 = {delta * d * d:.6g} "
            f"(largest observed gap {largest_gap:.6g}, i.e. delta <= {largest_gap / (d * d):.6g})"
        )


class DegenerateSpectrumError(AlgorithmError):
    code = "degenerate-spectrum"


class NoSignalError(AlgorithmError):
    code = "no-signal"


class UndefinedBetaError(AlgorithmError):
    code = "undefined-beta"


class DegenerateVarianceError(AlgorithmError):
    code = "degenerate-variance"

    def __init__(self, msg, pnl_series=None, pnl_total=None):
        super().__init__(msg)
        self.pnl_series = pnl_series
        self.pnl_total = pnl_total


class DegenerateWeightsError(AlgorithmError):
    code = "degenerate-weights"
