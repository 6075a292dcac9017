"""Deterministic building-evacuation simulator with cognitive-packet
route discovery, hazard-aware QoS metrics and dynamic evacuee grouping.
"""

__version__ = "0.1.0"

from ._kernels import backend_name

__all__ = ["backend_name", "__version__"]
