"""Heterogeneous diffusion and finite-speed (Cattaneo-Vernotte) transport with
position-dependent diffusivity, plus the noisy voter model mapping."""

from .errors import ConfigError, ConvergenceError, DomainError, HetcvError

__version__ = "0.1.0"

__all__ = ["ConfigError", "ConvergenceError", "DomainError", "HetcvError", "__version__"]
