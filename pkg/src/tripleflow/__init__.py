"""Front-tracking finite elements for multiphase incompressible flow with triple junctions."""

__version__ = "0.1.0"
