"""Long-step gradient descent schedules, their dual certificates and numerical checks."""

__version__ = "0.1.0"
