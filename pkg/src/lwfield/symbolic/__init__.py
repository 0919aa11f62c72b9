"""Exact polynomial verification of the field identities."""
from .engine import (VerificationReport, canonical_string, components, contract_sum_i,
                     differentiate_i, differentiate_t, evaluate, atom_values, normalize,
                     parse_poly, promote, run_bundled_scripts, run_script, run_verifications)
from .parser import parse_expression, parse_script, render_script
from .poly import ATOMS, Poly

__all__ = [
    "ATOMS", "Poly", "VerificationReport", "atom_values", "canonical_string", "components",
    "contract_sum_i", "differentiate_i", "differentiate_t", "evaluate", "normalize",
    "parse_expression", "parse_poly", "parse_script", "promote", "render_script",
    "run_bundled_scripts", "run_script", "run_verifications",
]
