"""Knowledge-base assisted semantic communication of text over noisy channels."""

__version__ = "0.1.0"
