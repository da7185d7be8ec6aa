"""Ball catching for a mobile manipulator with learned post-catch cushioning."""

__version__ = "0.1.0"
