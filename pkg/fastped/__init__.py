"""Grid pedestrian simulation with parallel planning and sequential movement."""

__version__ = "0.1.0"
