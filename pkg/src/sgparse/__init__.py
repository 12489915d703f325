"""Grammar-based semantic parsing for task-oriented orders."""

__version__ = "0.1.0"
