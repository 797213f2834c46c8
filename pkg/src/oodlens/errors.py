"""Exception taxonomy for the toolkit.

Every error raised by the library derives from OodlensError so callers can
catch toolkit failures without fishing for bare ValueErrors. The CLI maps the
three coarse families (config / data / method) onto exit codes.
"""


class OodlensError(Exception):
    """Base class for all toolkit errors."""


# --- tensor I/O -------------------------------------------------------------

class MagicMismatch(OodlensError):
    """File does not start with the OODT magic bytes."""


class TruncatedPayload(OodlensError):
    """File ends before the declared payload is complete."""


class NonFiniteValue(OodlensError):
    """A NaN or Inf was found where only finite values are allowed."""


class IoFailure(OodlensError):
    """Underlying filesystem read/write failed."""


class DegenerateSpec(OodlensError):
    """Synthetic dataset spec violates its own invariants."""


# --- scoring ----------------------------------------------------------------

class SingleClass(OodlensError):
    """Softmax-based score requested with fewer than two classes."""


class NonPositiveTemperature(OodlensError):
    """Energy score temperature must be positive."""


class EmptyClass(OodlensError):
    """A class label has too few samples to estimate its statistics."""


class SingularCovariance(OodlensError):
    """Covariance matrix is not symmetric positive definite."""


class DimensionMismatch(OodlensError):
    """Input shape does not match the fitted model."""


class RankDeficient(OodlensError):
    """Not enough positive-variance directions for the requested subspace."""


class DegenerateResidual(OodlensError):
    """Residual statistics collapse, leaving the virtual-logit scale undefined."""


class ZeroVariance(OodlensError):
    """A score is constant over the reference split; cannot standardize."""


# --- metrics ----------------------------------------------------------------

class EmptyInput(OodlensError):
    """A score vector or sample collection is empty."""


class BadTarget(OodlensError):
    """TPR target outside (0, 1]."""


# --- oracle diagnostics -----------------------------------------------------

class TooFewSamples(OodlensError):
    """Not enough rows to train and hold out an evaluation split."""


class NonConvergence(OodlensError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class EmptyGrid(OodlensError):
    """All candidate subspace sizes were dropped as infeasible."""


class TooFewSets(OodlensError):
    """Transfer matrix needs at least two OOD sets."""


# --- training ---------------------------------------------------------------

class ShapeMismatch(OodlensError):
    """Batch shapes do not match the network."""


class DivergenceDetected(OodlensError):
    """Training loss became non-finite."""


class NotKPlus1Model(OodlensError):
    """Detection via the extra class requires a net trained with one."""


class HessianNotPD(OodlensError):
    """Regularized Hessian is not positive definite."""


# --- CLI --------------------------------------------------------------------

class ConfigInvalid(OodlensError):
    """Experiment config failed validation. CLI exit code 2."""

    exit_code = 2


class DataError(OodlensError):
    """Dataset loading or consistency failure. CLI exit code 3."""

    exit_code = 3


class MethodError(OodlensError):
    """A scoring method failed on otherwise valid data. CLI exit code 4."""

    exit_code = 4
