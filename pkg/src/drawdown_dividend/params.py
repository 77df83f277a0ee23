"""Model primitives and their feasibility check."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import AlphaOutOfRange, NonPositiveParam, RiskAversionInfeasible

PARAM_KEYS = ("mu", "sigma", "delta", "alpha", "p")

# Parameter set used by every figure of the reference model.
DEFAULTS = {"mu": 0.08, "sigma": 0.2, "delta": 0.2, "alpha": 0.5, "p": 0.8}


@dataclass(frozen=True)
class ModelParams:
    """Raw market and preference inputs.

    mu : drift of the excess return, sigma : volatility, delta : subjective
    discount rate, alpha : drawdown fraction of the dividend peak, p : relative
    risk aversion.
    """

    mu: float
    sigma: float
    delta: float
    alpha: float
    p: float


@dataclass(frozen=True)
class ValidatedParams:
    mu: float
    sigma: float
    delta: float
    alpha: float
    p: float
    kappa: float
    kd: float
    p_lower: float

    @property
    def base(self) -> ModelParams:
        return ModelParams(self.mu, self.sigma, self.delta, self.alpha, self.p)

    @property
    def q(self) -> float:
        """p(1 + kappa*delta) - 1, positive on the feasible set."""
        return self.p * (1.0 + self.kd) - 1.0

    @property
    def is_merton(self) -> bool:
        return self.alpha == 0.0

    @property
    def is_ratcheting(self) -> bool:
        return self.alpha == 1.0

    def with_alpha(self, alpha: float) -> ValidatedParams:
        return validate(ModelParams(self.mu, self.sigma, self.delta, alpha, self.p))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def validate(params: ModelParams | ValidatedParams) -> ValidatedParams:
    """Check feasibility and attach the derived constants.

    Strict inequalities throughout; the feasible risk-aversion range is an open
    interval and its endpoints are ill-posed.
    """
    if isinstance(params, ValidatedParams):
        params = params.base
    mu, sigma, delta = float(params.mu), float(params.sigma), float(params.delta)
    alpha, p = float(params.alpha), float(params.p)
    for name, val in (("mu", mu), ("sigma", sigma), ("delta", delta)):
        if not math.isfinite(val) or val <= 0.0:
            raise NonPositiveParam(f"{name} must be a positive finite number, got {val!r}")
    if not math.isfinite(alpha) or alpha < 0.0 or alpha > 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1] (0 and 1 select limit branches), got {alpha!r}")
    kappa = 2.0 * sigma**2 / mu**2
    kd = kappa * delta
    p_lower = 1.0 / (1.0 + kd)
    if not math.isfinite(p) or not (p_lower < p < 1.0):
        raise RiskAversionInfeasible(
            f"p must satisfy 1/(1+kappa*delta) = {p_lower:.6g} < p < 1, got {p!r}; "
            "outside this range the problem is ill-posed"
        )
    return ValidatedParams(mu, sigma, delta, alpha, p, kappa, kd, p_lower)


def make_params(**overrides) -> ValidatedParams:
    """Validated params from the default set with keyword overrides."""
    values = dict(DEFAULTS)
    values.update(overrides)
    return validate(ModelParams(**{k: values[k] for k in PARAM_KEYS}))


def read_config(path) -> dict:
    """Read a flat ``key=value`` file. Blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in PARAM_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}; allowed: {', '.join(PARAM_KEYS)}")
            out[key] = float(val)
    return out
