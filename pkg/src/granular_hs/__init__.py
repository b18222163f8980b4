"""Simulation and verification tools for the homogeneous inelastic hard-sphere Boltzmann equation."""

from ._version import __version__
from .kinematics import Plane, Restitution, make_restitution

__all__ = ["__version__", "Plane", "Restitution", "make_restitution"]
