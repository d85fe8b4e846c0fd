"""Exception hierarchy shared across the toolkit.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than the message text.
"""


class TendonidError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TendonidError):
    """Bad or missing configuration (files, sections, parameter ranges)."""


class DataError(TendonidError):
    """Malformed or insufficient data (CSV parsing, shape mismatches)."""


class NumericError(TendonidError):
    """Numerical failure: rank deficiency, divergence, SVD breakdown."""


class DivergenceError(NumericError):
    """A simulation left the sane range (|value| > 1e6)."""


class InfeasibleError(TendonidError):
    """A constrained optimization problem has no feasible point."""
