"""LiDAR / 4D-radar fusion detection at desk scale."""

__version__ = "0.1.0"
