"""Transitional training of class-conditional GANs on synthetic point clouds."""

__version__ = "0.1.0"
