"""Exception hierarchy shared by all triflow modules."""


class TriflowError(Exception):
    """Base class for all package errors."""


class MeshError(TriflowError):
    """Invalid cluster construction input or broken mesh invariant."""


class SingularGeometryError(TriflowError):
    """An element or vertex measure fell below the configured floor."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class AngleError(TriflowError):
    """Surface tensions admit no Young angles, or an angle is singular."""


class FoldOverError(TriflowError):
    """The graph map produced a degenerate or flipped element."""

    def __init__(self, message, patch=None, element=None):
        super().__init__(message)
        self.patch = patch
        self.element = element


class ConvergenceError(TriflowError):
    """The fixed-point iteration did not reach its tolerance."""

    def __init__(self, message, iterations=None, update_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.update_norm = update_norm


class SolverError(TriflowError):
    """Sparse factorization failed or the assembled system is inconsistent."""


class ConfigError(TriflowError):
    """Malformed or unknown configuration entry."""


class ProbeError(TriflowError):
    """A Lopatinskii probe lies outside the admissible parameter set."""
