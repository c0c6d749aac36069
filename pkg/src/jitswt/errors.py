"""Exception types shared across the package."""

from __future__ import annotations


class JitSwtError(Exception):
    """Base class for all package errors."""


class ZeroNormal(JitSwtError):
    """A halfspace normal has (numerically) zero length."""


class OracleError(JitSwtError):
    """Base class for linear-oracle failures."""


class Infeasible(OracleError):
    """The queried feasible set is empty."""


class Unbounded(OracleError):
    """The linear program is unbounded over the queried set."""


class Unsupported(OracleError):
    """The domain/guard combination is outside the supported dispatch."""


class NumericalFailure(OracleError):
    """Pivot limit exceeded or a numeric invariant broke down."""


class SchemaError(JitSwtError):
    """Model JSON does not match the exchange schema."""


class ShapeError(JitSwtError):
    """Layer shapes do not chain."""


class UnsupportedLayer(JitSwtError):
    """Unknown layer kind in a model description."""


class ArityMismatch(JitSwtError):
    """An expression constructor received the wrong number of children."""


class InfeasibleLeaf(JitSwtError):
    """Both children of a split are infeasible; the parent cell was empty."""


class WrongLabel(JitSwtError):
    """The reference point is already misclassified."""


class GeometryError(JitSwtError):
    """A geometric transform does not fit the model (stride, shape, ...)."""


class SubstitutionError(JitSwtError):
    """An intervention target cannot be resolved or replaced."""


class NotRefined(JitSwtError):
    """An exact quantity was requested on a leaf that is not fully refined."""


class UnsupportedNormPair(JitSwtError):
    """Requested operator norm pair has no exact tractable formula."""
