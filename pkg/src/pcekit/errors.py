"""Exception hierarchy shared across the package.

Everything raised deliberately by pcekit derives from :class:`PcekitError`,
so callers (and the CLI) can distinguish data/estimation problems from bugs.
"""

from __future__ import annotations


class PcekitError(Exception):
    """Base class for all pcekit errors."""


class SchemaError(PcekitError):
    """A file or record does not match the expected schema."""


class MissingDataError(PcekitError):
    """An operation requires fields that are missing from the data."""


class SingularDesignError(PcekitError):
    """A design matrix is rank deficient; the message names a dependent column."""


class InsufficientDataError(PcekitError):
    """Too few rows for the requested fit or test."""


class DegenerateResponseError(PcekitError):
    """A binary response is constant, so no regression is possible."""


class ConvergenceError(PcekitError):
    """An iterative fit failed to converge where a converged fit is required."""


class InestimableStratumError(PcekitError):
    """A principal stratum mean or probability cannot be estimated from the data."""


class BootstrapError(PcekitError):
    """The bootstrap failed on too many replicates to summarize honestly."""


class DiagnosticError(PcekitError):
    """A diagnostic test could not be completed."""


class ConfigError(PcekitError):
    """A configuration value is invalid or inconsistent."""
