"""Incompressible viscoplastic flow with deviatoric stress: Galerkin oracle,
MAC-grid solver and energy diagnostics."""

__version__ = "0.1.0"
