"""Exception hierarchy shared across the toolkit.

Two broad failure families matter to callers (and map to distinct CLI exit
codes): problems with input data or files, and numerical breakdowns inside
the math. Everything raised on purpose by this package derives from one of
the two bases below.
"""


class DataError(ValueError):
    """Malformed or inconsistent input: corpora, trees, model files, configs."""


class NumericalError(ArithmeticError):
    """Numerical breakdown: degenerate kernels, asymmetric grams, divergence."""
