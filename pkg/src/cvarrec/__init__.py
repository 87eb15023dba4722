"""Model-agnostic item cold-start warm-up with a conditional variational autoencoder."""

__version__ = "0.1.0"
