"""Symbolic-numeric toolkit for local equivariant index densities.

Exact exterior/Clifford algebra, form-valued characteristic classes, Mehler
kernels, a Getzler-filtered Volterra symbol calculus, finite twisted spectral
triples and brute-force spectral oracles on flat tori and round spheres.
"""
from __future__ import annotations

from .exterior import GQ, MultiVector, wedge, component, component_kl, berezin_a, berezin_a0

__all__ = ["GQ", "MultiVector", "wedge", "component", "component_kl", "berezin_a", "berezin_a0"]
__version__ = "0.1.0"
