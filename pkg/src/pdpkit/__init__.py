"""Rule induction and cascaded problematic-dialogue prediction."""

__version__ = "0.1.0"
