"""Optimal-stationary-state synchronization of heterogeneous linear agents."""

from . import conic, exocore, matkit, netgraph, oss
from .exceptions import OssyncError

__version__ = "0.1.0"
