"""ioc-decay: decaying scores for shared indicators of compromise."""

__version__ = "0.1.0"
