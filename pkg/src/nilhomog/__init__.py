"""Numerical homogenization of Hamilton-Jacobi equations invariant under
lattice actions of Z^n and the discrete Heisenberg group."""

__version__ = "0.1.0"
