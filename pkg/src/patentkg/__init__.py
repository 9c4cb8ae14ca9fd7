"""Co-occurrence knowledge graphs from patent text, link prediction and patent prediction."""

__version__ = "0.1.0"
