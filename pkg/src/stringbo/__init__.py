"""String-embedding Bayesian optimisation with an in-context Transformer regressor."""

__version__ = "0.1.0"
