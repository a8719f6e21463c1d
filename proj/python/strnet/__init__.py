"""Elastic string networks: simulation and boundary control synthesis."""

from ._strnet import (
    StrnetError,
    connected_components,
    feasibility,
    laplacian,
    laplacian_rank,
    load_network,
    run,
    stress,
    stress_jacobian,
    traveling_times,
    wave_speeds,
)

__all__ = [
    "StrnetError",
    "connected_components",
    "feasibility",
    "laplacian",
    "laplacian_rank",
    "load_network",
    "run",
    "stress",
    "stress_jacobian",
    "traveling_times",
    "wave_speeds",
]
