"""Instance-weighted incremental evolution strategies for dynamic environments."""

__version__ = "0.1.0"
