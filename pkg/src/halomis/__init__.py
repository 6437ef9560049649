"""Hallucination and omission detection for mental-health chatbot responses."""
__version__ = "0.1.0"
