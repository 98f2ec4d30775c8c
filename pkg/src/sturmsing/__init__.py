"""Numerical toolkit for the singular Sturm comparison and separation theorems."""

from .errors import (
    DomainError,
    ExprError,
    HypothesisError,
    NumericalFailure,
    RefusalError,
    SturmError,
)
from .expr import diff, evaluate, parse
from .ode import ClosedForm, EquationSpec, Trajectory, integrate, matched_ivp, wronskian

__version__ = "0.1.0"

__all__ = [
    "ClosedForm",
    "DomainError",
    "EquationSpec",
    "ExprError",
    "HypothesisError",
    "NumericalFailure",
    "RefusalError",
    "SturmError",
    "Trajectory",
    "diff",
    "evaluate",
    "integrate",
    "matched_ivp",
    "parse",
    "wronskian",
]
