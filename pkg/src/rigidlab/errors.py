"""Exception hierarchy shared by every rigidlab module."""


class RigidlabError(Exception):
    """Base class for library errors."""


class ParameterError(RigidlabError, ValueError):
    """An argument violates a documented precondition."""


class SingularityError(RigidlabError, ArithmeticError):
    """A map was evaluated at its pole."""


class BracketError(RigidlabError, ArithmeticError):
    """Root finding found no sign change in the search bracket."""


class ResourceError(RigidlabError):
    """A configured word or memory budget would be exceeded."""


class RankDeficiencyError(RigidlabError, ArithmeticError):
    """A moment or Gram form is too degenerate to fit."""


class SeparationError(RigidlabError):
    """Regions overlap where a construction requires them disjoint.

    ``pair`` names the offending indices.
    """

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class InjectivityError(RigidlabError):
    """A projection is not injective at grid resolution."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair
