"""Euler characteristic of images from the skyrmion number of a learned spin field."""

__version__ = "0.1.0"
