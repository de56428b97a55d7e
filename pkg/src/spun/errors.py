"""Exception and warning types shared across the package.

Exceptions derive from :class:`SpunError`.  Validation problems (bad inputs,
malformed files, contract violations detectable up front) carry
``exit_code = 2`` so the CLI can distinguish them from runtime failures
(``exit_code = 1``).
"""


class SpunError(Exception):
    exit_code = 1


class ValidationError(SpunError):
    exit_code = 2


# -- geometry ---------------------------------------------------------------

class ParseError(ValidationError):
    """Malformed shape or manifest file."""


class EmptyShape(ValidationError):
    """Shape file declares zero vertices."""


class DegenerateShape(ValidationError):
    """Mesh has zero surface area."""


class EmptySubmesh(ValidationError):
    """Region mask keeps no complete face."""


# -- spectral ---------------------------------------------------------------

class AllBoundary(ValidationError):
    """Dirichlet reduction left no interior vertex."""


class NoBoundary(ValidationError):
    """Dirichlet spectrum requested on a closed shape."""


class ConvergenceFailure(SpunError):
    """Eigensolver did not reach the residual tolerance."""


class NegativeOffset(ValidationError):
    """Offset decoding received a negative entry."""


# -- dataset ----------------------------------------------------------------

class SamplingExhausted(SpunError):
    """Pair sampling hit the retry budget without a valid pair."""


class InfeasibleSplit(ValidationError):
    """Not enough union-region classes to satisfy the split policy."""


class VersionMismatch(ValidationError):
    """File magic or version does not match the expected format."""


# -- nn ---------------------------------------------------------------------

class ShapeMismatch(ValidationError):
    """Tensor operands have incompatible shapes."""


class LengthMismatch(ValidationError):
    """Sequence length differs from the expected k."""


class NonFinite(SpunError):
    """NaN or Inf produced by a tensor operation."""


class ChecksumMismatch(ValidationError):
    """Checkpoint CRC or structure check failed."""


class DivergenceDetected(SpunError):
    """Training loss became non-finite."""


# -- downstream -------------------------------------------------------------

class EmptyIndex(ValidationError):
    """Retrieval index contains no entries."""


# -- warnings ---------------------------------------------------------------

class NonManifoldEdgeWarning(UserWarning):
    """Edge with more than two incident faces; classified by face count."""


class DegenerateTriangleWarning(UserWarning):
    """Near-degenerate triangle; cotangent clamped."""


class CannotReachWarning(UserWarning):
    """Decimation rejected every remaining collapse; best-effort mesh returned."""


class DisconnectedGraphWarning(UserWarning):
    """Point-cloud kNN graph has more than one connected component."""
