"""perftensor - execution-time models from tensor completion.

This package bins performance measurements over a discretized parameter
space into a partially observed tensor, completes it with a low-rank CP
decomposition, and predicts unseen configurations by interpolation or
rank-1 extrapolation.
"""

from importlib.metadata import PackageNotFoundError, version


try:
    __version__ = version("perftensor")
except PackageNotFoundError:
    __version__ = "0.1.0"

__all__ = ["__version__"]
