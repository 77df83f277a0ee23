"""Optimal dividends under a drawdown constraint on the dividend rate.

Typical use::

    from drawdown_dividend import make_params, solve, policy
    vp = make_params(alpha=0.5)
    fb = solve(vp)
    policy.value(5.0, 1.0, fb, vp)
"""

from .errors import DomainError
from .freeboundary import FreeBoundarySolution, solve
from .params import ModelParams, ValidatedParams, make_params, validate

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "FreeBoundarySolution",
    "ModelParams",
    "ValidatedParams",
    "__version__",
    "make_params",
    "solve",
    "validate",
]
