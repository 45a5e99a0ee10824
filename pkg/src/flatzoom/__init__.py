"""flatzoom: conformal flattening of chart metrics.

Curvature calculus on coordinate charts, climb-function constructions,
decay-bound verification, a differential-inequality solver producing
conformal factors with flat rescaled geometry, and injectivity/convexity
radius estimation.
"""

__version__ = "0.1.0"
