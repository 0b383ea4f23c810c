"""K-fold baseline estimation for trust-region policy gradients."""

from .kfold import RunConfig, IterationMetrics, performance, run

__all__ = ["RunConfig", "IterationMetrics", "performance", "run"]
