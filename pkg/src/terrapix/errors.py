"""Exception types shared across the package."""


class TerrapixError(Exception):
    """Base class for all package errors."""


class NoValidObservations(TerrapixError):
    """A series has no valid timesteps to sample from."""


class ChannelMismatch(TerrapixError):
    """Channel count of a view does not match the statistics."""


class OutOfRange(TerrapixError):
    """A scalar argument is outside its documented domain."""


class EmptyCorpus(TerrapixError):
    """No pixel in the corpus passed the validity filter."""


class ChecksumMismatch(TerrapixError):
    """A chunk or tile file failed CRC validation."""


class ShapeMismatch(TerrapixError):
    """Tensor shapes are inconsistent with the configuration."""


class NonFiniteActivation(TerrapixError):
    """NaN/Inf appeared in a forward pass."""


class NonFiniteGradient(TerrapixError):
    """NaN/Inf appeared in a gradient."""


class NonFiniteLoss(TerrapixError):
    """Training loss became NaN/Inf."""


class BatchTooSmall(TerrapixError):
    """Batch statistics need at least two rows."""


class InvalidPermutation(TerrapixError):
    """Index vector is not a permutation of the batch."""


class DegenerateInput(TerrapixError):
    """Input matrix is identically zero."""


class NoCoverage(TerrapixError):
    """A region query does not intersect any stored tile."""


class EmptySplit(TerrapixError):
    """A probe data split contains no samples."""


class EmptyModel(TerrapixError):
    """kNN predict called before fit."""


class LengthMismatch(TerrapixError):
    """Prediction and label vectors differ in length."""


class SingleCluster(TerrapixError):
    """Cluster metrics need at least two clusters."""


class CoincidentCentroids(TerrapixError):
    """Davies-Bouldin is undefined for coincident centroids."""


class DegenerateVariance(TerrapixError):
    """PCA input has no usable variance."""
