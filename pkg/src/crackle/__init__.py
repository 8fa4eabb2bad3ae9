"""Homology of Čech complexes built on heavy-tailed noise."""

__version__ = "0.1.0"

from .sampler import DistributionSpec, Kind, PointCloud, sample_cloud  # noqa: E402
from .cech import SimplicialComplex, build_cech  # noqa: E402
from .homology import betti_numbers, crackle_statistics, minimal_cycle_indicator  # noqa: E402

__all__ = [
    "DistributionSpec",
    "Kind",
    "PointCloud",
    "sample_cloud",
    "SimplicialComplex",
    "build_cech",
    "betti_numbers",
    "crackle_statistics",
    "minimal_cycle_indicator",
]
