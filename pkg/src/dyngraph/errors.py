"""Exception types shared across the package.

Everything raised on purpose derives from DynamicsError so callers (and the
command line front end) can catch one base class.
"""

from __future__ import annotations


class DynamicsError(Exception):
    """Base class for all errors raised by this package."""


class MalformedDescription(DynamicsError):
    """Robot description text that cannot be parsed into a model."""


class InvalidInertia(DynamicsError):
    """Mass or rotational inertia that is not physically meaningful."""


class GraphError(DynamicsError):
    """Link/joint connectivity that does not form a rooted tree."""


class InconsistentLoopState(DynamicsError):
    """Joint state that violates a loop-closure constraint."""


class RankDeficient(DynamicsError):
    """A variable whose stacked coefficient blocks do not determine it.

    `key` names the offending variable. When a dense rank analysis was
    performed, `keys` lists every variable touched by the null space.
    """

    def __init__(self, key, detail: str = "", keys=()):
        self.key = key
        self.keys = tuple(keys) if keys else (key,)
        msg = f"rank-deficient system at variable {key}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class IncompatibleScheme(DynamicsError):
    """A classical elimination scheme applied to the wrong problem type."""


class UnsupportedTopology(DynamicsError):
    """A recursive algorithm asked to run on a topology it cannot handle."""


class SingularMass(DynamicsError):
    """Joint-space mass matrix that is not positive definite."""
