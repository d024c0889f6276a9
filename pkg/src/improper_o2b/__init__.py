"""High-probability online-to-batch conversions for exp-concave losses."""

from . import analysis, estimators, losses, o2b, posterior

__version__ = "0.1.0"

__all__ = ["analysis", "estimators", "losses", "o2b", "posterior", "__version__"]
