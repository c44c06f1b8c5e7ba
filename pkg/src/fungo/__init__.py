"""fungo: kernel machines with fuzzy-logic consistency constraints for
hierarchical protein function prediction."""

__version__ = "0.1.0"
