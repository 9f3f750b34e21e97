"""covlab: exact and simulated checks of confidence-interval coverage semantics."""

__version__ = "0.1.0"
