"""Model parameters, uptake laws and the scale relations between them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .errors import ValidationError

# Default dimensionless parameters.
DEFAULT_PARAMS = dict(epsilon=0.5, L=0.5, M=1.0, beta=0.0, D_u=1.0, kappa=1.0)

REGIMES = ("standard", "distinguished", "reference")
_REGIME_ALIASES = {
    "a": "standard", "standard": "standard", "standard-a": "standard",
    "b": "distinguished", "distinguished": "distinguished", "distinguished-b": "distinguished",
    "reference": "reference", "full": "reference", "full-reference": "reference",
}
# Power of epsilon in lambda = epsilon**p * ln(1/a_eps).
_LAMBDA_POWER = {"standard": 1, "distinguished": 2}


def canonical_regime(name: str) -> str:
    try:
        return _REGIME_ALIASES[str(name).strip().lower()]
    except KeyError:
        raise ValidationError(f"unknown regime {name!r}; expected one of {REGIMES}") from None


def lambda_from_a(regime: str, epsilon: float, a_eps: float) -> float:
    """Scale parameter of a regime: ``eps**p * ln(1/a_eps)`` with p=1 (A) or 2 (B)."""
    p = _LAMBDA_POWER[canonical_regime(regime)]
    return epsilon ** p * math.log(1.0 / a_eps)


def a_from_lambda(regime: str, epsilon: float, lam: float) -> float:
    p = _LAMBDA_POWER[canonical_regime(regime)]
    return math.exp(-lam / epsilon ** p)


@dataclass(frozen=True)
class Uptake:
    """Hair-surface uptake law ``g`` with derivative ``dg``.

    ``g`` must be non-decreasing; the Picard solvers linearise it through
    the secant coefficient ``g(u)/u``.
    """

    name: str
    g: Callable
    dg: Callable

    @property
    def is_linear(self) -> bool:
        return self.name == "linear"

    def secant(self, u):
        """``g(u)/u`` with the limit ``g'(0)`` at ``u = 0``."""
        u = np.asarray(u, dtype=float)
        small = np.abs(u) < 1e-14
        safe = np.where(small, 1.0, u)
        return np.where(small, self.dg(np.zeros_like(u)), self.g(safe) / safe)


LINEAR = Uptake("linear", lambda u: np.asarray(u, dtype=float) * 1.0,
                lambda u: np.ones_like(np.asarray(u, dtype=float)))
MICHAELIS_MENTEN = Uptake("michaelis-menten", lambda u: u / (1.0 + u),
                          lambda u: 1.0 / (1.0 + u) ** 2)


def custom_uptake(g: Callable, dg: Callable, name: str = "custom") -> Uptake:
    return Uptake(name, g, dg)


def get_uptake(spec: Union[str, Uptake]) -> Uptake:
    if isinstance(spec, Uptake):
        return spec
    key = str(spec).strip().lower().replace("_", "-")
    if key == "linear":
        return LINEAR
    if key in ("michaelis-menten", "mm", "michaelis"):
        return MICHAELIS_MENTEN
    raise ValidationError(f"unknown uptake {spec!r}; expected linear or michaelis-menten")


@dataclass(frozen=True)
class Scenario:
    """All physical and asymptotic parameters of one run.

    The scale relation is given either by ``a_eps`` (hair radius over cell
    width) or directly by ``lam`` in the units of ``regime``; the latter is
    what allows the ``lam = 0`` limit, which has no admissible ``a_eps``.
    ``u_init`` may be a constant or a function of the height ``x3`` only:
    the macroscopic solvers rely on lateral symmetry of the data.
    """

    regime: str
    epsilon: float = DEFAULT_PARAMS["epsilon"]
    a_eps: Optional[float] = None
    lam: Optional[float] = None
    L: float = DEFAULT_PARAMS["L"]
    M: float = DEFAULT_PARAMS["M"]
    beta: float = DEFAULT_PARAMS["beta"]
    D_u: float = DEFAULT_PARAMS["D_u"]
    kappa: float = DEFAULT_PARAMS["kappa"]
    uptake: Union[str, Uptake] = "linear"
    top_bc: str = "dirichlet"
    top_value: float = 1.0
    u_init: Union[float, Callable] = 1.0
    mode: str = "steady"
    T: float = 1.0
    dt: float = 0.01
    lateral_symmetry: bool = field(default=True, repr=False)

    def __post_init__(self):
        problems = []
        try:
            object.__setattr__(self, "regime", canonical_regime(self.regime))
        except ValidationError as exc:
            problems.extend(exc.problems)
        try:
            object.__setattr__(self, "uptake", get_uptake(self.uptake))
        except ValidationError as exc:
            problems.extend(exc.problems)
        if not self.epsilon > 0:
            problems.append("epsilon must be positive")
        if self.a_eps is not None and not 0 < self.a_eps < 1:
            problems.append("a_eps must lie in (0, 1)")
        if self.lam is not None and not self.lam >= 0:
            problems.append("lambda must be non-negative")
        if self.a_eps is not None and self.lam is not None:
            problems.append("give either a_eps or lambda, not both")
        if self.lam is not None and self.regime == "reference":
            problems.append("the reference regime needs a_eps, not lambda")
        if not 0 < self.L < self.M:
            problems.append(f"need 0 < L < M (got L={self.L}, M={self.M})")
        if not self.beta >= 0:
            problems.append("beta must be non-negative")
        if not self.D_u > 0:
            problems.append("D_u must be positive")
        if not self.kappa >= 0:
            problems.append("kappa must be non-negative")
        if self.top_bc not in ("dirichlet", "zero-flux"):
            problems.append(f"top_bc must be dirichlet or zero-flux, got {self.top_bc!r}")
        if self.mode not in ("steady", "transient"):
            problems.append(f"mode must be steady or transient, got {self.mode!r}")
        if self.mode == "transient" and not (self.dt > 0 and self.T >= self.dt):
            problems.append("transient mode needs dt > 0 and T >= dt")
        if not self.lateral_symmetry:
            problems.append("boundary and initial data must be laterally uniform")
        if not callable(self.u_init) and not self.u_init >= 0:
            problems.append("u_init must be non-negative")
        if self.mode == "steady" and self.top_bc == "zero-flux" and self.beta == 0 and self.kappa == 0:
            problems.append("steady mode with a zero-flux top and no uptake is singular")
        if problems:
            raise ValidationError(problems)

    # scale relations -------------------------------------------------
    def lambda_for(self, regime: str) -> float:
        regime = canonical_regime(regime)
        if regime == "reference":
            raise ValidationError("lambda is undefined for the reference regime")
        if self.lam is not None:
            if regime != self.regime:
                return lambda_from_a(regime, self.epsilon, self.hair_ratio)
            return float(self.lam)
        if self.a_eps is None:
            raise ValidationError("scenario needs a_eps or lambda")
        return lambda_from_a(regime, self.epsilon, self.a_eps)

    @property
    def lambda_value(self) -> float:
        return self.lambda_for(self.regime)

    @property
    def hair_ratio(self) -> float:
        """``a_eps``, derived from ``lam`` when only the latter was given."""
        if self.a_eps is not None:
            return float(self.a_eps)
        if self.lam is None:
            raise ValidationError("scenario needs a_eps or lambda")
        return a_from_lambda(self.regime, self.epsilon, self.lam)

    @property
    def r_eps(self) -> float:
        return self.epsilon * self.hair_ratio

    @property
    def kappa_tilde(self) -> float:
        """``lambda * kappa / D_u`` of the distinguished regime."""
        return self.lambda_for("distinguished") * self.kappa / self.D_u

    def initial_profile(self, x3) -> np.ndarray:
        x3 = np.asarray(x3, dtype=float)
        if callable(self.u_init):
            return np.asarray(self.u_init(x3), dtype=float) * np.ones_like(x3)
        return np.full_like(x3, float(self.u_init))

    def with_regime(self, regime: str) -> "Scenario":
        """Same data in another regime; an explicit lambda is carried over via a_eps."""
        regime = canonical_regime(regime)
        if regime == self.regime:
            return self
        if self.lam is not None:
            return replace(self, regime=regime, lam=None, a_eps=self.hair_ratio)
        return replace(self, regime=regime)
