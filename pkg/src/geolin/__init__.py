"""Geometric linearization checks for constraint Hamiltonian systems."""

from .exprjet import Expr, Jet, eval_jet, eval_scalar, parse, to_string

__all__ = ["Expr", "Jet", "eval_jet", "eval_scalar", "parse", "to_string"]
__version__ = "0.1.0"
