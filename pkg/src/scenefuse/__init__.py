"""scenefuse: scene-context fusion for crop-based word recognizers.

The package pairs small word recognizers with a frozen scene-level image
encoder.  Per-crop features are mixed with a pooled scene representation
through a gated channel mixer or a multi-head cross-attention stack, and a
tanh-gated residual hands control from the original features to the mixed
ones as training progresses.  A synthetic scene/word benchmark with known
Bayes ceilings makes the context benefit measurable end to end.
"""

__version__ = "0.1.0"
