"""Variance-Gamma approximation of second Wiener chaos variables.

Set ``VGCHAOS_DISABLE_NUMBA=1`` before import to run the pure-numpy
fallback kernels instead of the numba-compiled ones.
"""
__version__ = "0.1.0"

from .vg import ChaosVgParams, VgParams  # noqa: E402
from .chaos import SecondChaosElement  # noqa: E402
from .stein import SteinGrid, SteinSolution  # noqa: E402
from .bounds import BoundReport, build_bound_report  # noqa: E402
from .rosenblatt import RhoCase, RosenblattSpec  # noqa: E402

__all__ = [
    "VgParams",
    "ChaosVgParams",
    "SecondChaosElement",
    "SteinGrid",
    "SteinSolution",
    "BoundReport",
    "build_bound_report",
    "RosenblattSpec",
    "RhoCase",
]
