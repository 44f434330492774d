"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3.
"""


class GrouError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GrouError):
    """Experiment configuration is missing fields or inconsistent."""


class ParseError(ConfigError):
    """A file (edge list, CSV, JSON config) could not be parsed."""


class BadDimension(ConfigError):
    """Node count incompatible with the requested topology layout."""


class MissingGraph(ConfigError):
    """No adjacency matrix supplied and sparse inference not requested."""


class NumericalError(GrouError):
    """Base class for runtime numerical failures."""


class InvalidTheta(NumericalError):
    """Two-parameter dynamics outside the admissible region."""


class InvalidPsi(NumericalError):
    """Node-level dynamics vector outside the admissible region."""


class InvalidDynamics(NumericalError):
    """Dynamics matrix is not mean-reverting."""


class NotPSD(NumericalError):
    """A covariance matrix failed positive-semidefinite factorisation."""


class SingularK(NumericalError):
    """The empirical second-moment matrix is numerically singular."""


class NonUniformGrid(NumericalError):
    """An operation that requires equal spacings got a non-uniform grid."""


class MissingOracle(NumericalError):
    """Continuous-part increments requested from a path that has none."""


class NoConvergence(NumericalError):
    """An iterative solver hit its iteration cap before converging."""


class DegenerateData(NumericalError):
    """Input sample is rank-deficient or otherwise uninformative."""


class TooShort(NumericalError):
    """Time series too short for the requested preprocessing window."""
