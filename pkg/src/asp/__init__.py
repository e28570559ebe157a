"""Asp: a state-machine smart-contract language toolchain.

Pipeline: parse -> typecheck -> {simulate cascades, compile defensively,
check deductive proofs}.
"""

__version__ = "0.1.0"

from .parser import parse_program
from .typecheck import typecheck

__all__ = ["parse_program", "typecheck", "__version__"]
