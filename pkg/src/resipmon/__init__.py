"""resipmon: residential-proxy service discovery, capture, and measurement."""

__version__ = "0.1.0"
