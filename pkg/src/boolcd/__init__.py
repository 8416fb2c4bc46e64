"""Boolean coordinate descent for reservoir readouts."""

__version__ = "0.1.0"
