"""heapcheck: a static verifier for dynamically allocated memory in an
annotated object-oriented C dialect, based on separation logic."""

__version__ = "0.1.0"

from .parser import parse_assertion, parse_program
from .symexec import Verdict, verify_program_term
from .termir import emit_text, lower_program, parse_term

__all__ = [
    "parse_program",
    "parse_assertion",
    "lower_program",
    "emit_text",
    "parse_term",
    "verify_program_term",
    "Verdict",
    "__version__",
]
