"""Sequential drill-campaign planning under geological hypothesis uncertainty."""

__version__ = "0.1.0"
