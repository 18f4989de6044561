"""Collaborative-filtering training engine with spectral diagnostics.

The package factorizes implicit-feedback interaction logs with embedding
tables trained under a family of losses (pairwise ranking, sampled softmax,
alignment/uniformity, stable-rank regularization), tracks the singular-value
structure of the tables while they train, and ships executable checks of the
rank dynamics those losses induce.
"""

__version__ = "0.1.0"
