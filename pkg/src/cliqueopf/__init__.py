"""Distributed SDP relaxation of optimal power flow by clique decomposition."""

from ._backend import available_backends, default_backend
from .netcase import Bus, CaseError, Line, PowerCase, generate_radial, load_case, parse_case, save_case
from .runner import Mode, RunConfig, RunReport, run, solve_centralized

__version__ = "0.1.0"

__all__ = [
    "Bus",
    "Line",
    "PowerCase",
    "CaseError",
    "parse_case",
    "load_case",
    "save_case",
    "generate_radial",
    "Mode",
    "RunConfig",
    "RunReport",
    "run",
    "solve_centralized",
    "available_backends",
    "default_backend",
    "__version__",
]
