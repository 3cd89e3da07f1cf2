from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy import integrate

from irg_ldp.domain.errors import DomainError

FloatArray = npt.NDArray[np.float64]
WeightLike = float | FloatArray
JSONDict = dict[str, Any]
PARAM_KEYS = ("alpha", "sigma", "q", "w_min")


def _finite(name: str, value: float) -> float:
    try:
        result = float(value)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{name} must be a real number") from exc
    if not math.isfinite(result):
        raise DomainError(f"{name} must be finite")
    return result


def _unwrap(value: FloatArray) -> WeightLike:
    if value.ndim == 0:
        return float(value)
    return value


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    sigma: float
    q: float
    w_min: float

    def __post_init__(self) -> None:
        alpha = _finite("alpha", self.alpha)
        sigma = _finite("sigma", self.sigma)
        q = _finite("q", self.q)
        w_min = _finite("w_min", self.w_min)

        if alpha <= 1:
            raise DomainError(f"alpha must satisfy alpha > 1 (got {alpha})")
        if sigma >= 2 * alpha - 1:
            raise DomainError(
                f"sigma must satisfy sigma < 2*alpha - 1 = {2 * alpha - 1} (got {sigma})"
            )
        if not 0 < q <= 1:
            raise DomainError(f"q must lie in (0, 1] (got {q})")
        if w_min <= 0:
            raise DomainError(f"w_min must be positive (got {w_min})")

        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "w_min", w_min)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ModelParams:
        missing = [key for key in PARAM_KEYS if key not in data]
        if missing:
            raise DomainError(f"Model parameters missing keys: {', '.join(missing)}")
        return cls(
            alpha=data["alpha"],
            sigma=data["sigma"],
            q=data["q"],
            w_min=data["w_min"],
        )

    def to_dict(self) -> JSONDict:
        return {"alpha": self.alpha, "sigma": self.sigma, "q": self.q, "w_min": self.w_min}

    def weight_dist(self) -> WeightDist:
        return WeightDist(alpha=self.alpha, w_min=self.w_min)


@dataclass(frozen=True)
class WeightDist:
    """Pareto weight law P(W > w) = L_const * w^(-alpha) on [w_min, inf)."""

    alpha: float
    w_min: float
    l_const: float | None = None

    def __post_init__(self) -> None:
        if self.alpha <= 1:
            raise DomainError(f"alpha must satisfy alpha > 1 (got {self.alpha})")
        if self.w_min <= 0:
            raise DomainError(f"w_min must be positive (got {self.w_min})")

        default = self.w_min**self.alpha
        if self.l_const is None:
            object.__setattr__(self, "l_const", default)
        elif self.l_const <= 0 or not math.isclose(self.l_const, default, rel_tol=1e-12):
            # tail(w_min) must equal 1 for a proper survival function on [w_min, inf)
            raise DomainError("l_const must equal w_min**alpha so that tail(w_min) = 1")

    @property
    def scale(self) -> float:
        assert self.l_const is not None
        return self.l_const

    def tail(self, w: WeightLike) -> WeightLike:
        values = np.asarray(w, dtype=np.float64)
        clipped = np.maximum(values, self.w_min)
        return _unwrap(np.where(values < self.w_min, 1.0, (clipped / self.w_min) ** (-self.alpha)))

    def cdf(self, w: WeightLike) -> WeightLike:
        return _unwrap(1.0 - np.asarray(self.tail(w)))

    def quantile(self, u: WeightLike) -> WeightLike:
        values = np.asarray(u, dtype=np.float64)
        if np.any(values <= 0) or np.any(values > 1):
            raise DomainError("quantile argument must lie in (0, 1]")
        return _unwrap(self.w_min * values ** (-1.0 / self.alpha))

    def interval_mass(self, a: WeightLike, b: WeightLike) -> WeightLike:
        """P(a <= W < b)."""
        return _unwrap(np.asarray(self.tail(a)) - np.asarray(self.tail(b)))

    def mean(self) -> float:
        return self.alpha * self.w_min / (self.alpha - 1)

    def expect(self, func: Callable[[float], float]) -> float:
        """E[func(W)] by adaptive quadrature in u = (w / w_min)^(-alpha)."""

        def integrand(u: float) -> float:
            if u <= 0:
                return 0.0
            return float(func(self.w_min * u ** (-1.0 / self.alpha)))

        value, _ = integrate.quad(integrand, 0.0, 1.0, limit=200)
        return float(value)


def kernel(w1: WeightLike, w2: WeightLike, sigma: float) -> WeightLike:
    a = np.asarray(w1, dtype=np.float64)
    b = np.asarray(w2, dtype=np.float64)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("kernel weights must be positive")
    return _unwrap(np.maximum(a, b) * np.minimum(a, b) ** sigma)


def edge_probability(w1: WeightLike, w2: WeightLike, params: ModelParams, n: int) -> WeightLike:
    if n < 1:
        raise DomainError(f"vertex count n must be at least 1 (got {n})")
    values = np.asarray(kernel(w1, w2, params.sigma), dtype=np.float64)
    return _unwrap(params.q * np.minimum(values / n, 1.0))


def sample_weight(dist: WeightDist, u: WeightLike) -> WeightLike:
    values = np.asarray(u, dtype=np.float64)
    if np.any(values <= 0):
        raise DomainError("uniform variate must be positive; u = 0 gives an infinite weight")
    return dist.quantile(values)


def kernel_mass_split(w: WeightLike, params: ModelParams) -> tuple[WeightLike, WeightLike]:
    """Split E[kappa(w, W)] into the parts with W < w and W >= w."""
    values = np.asarray(w, dtype=np.float64)
    alpha, sigma, w_min = params.alpha, params.sigma, params.w_min
    c = alpha * w_min**alpha
    exponent = sigma - alpha

    if abs(exponent) < 1e-12:
        below = values * c * np.log(values / w_min)
    else:
        below = values * c * (values**exponent - w_min**exponent) / exponent
    above = values**sigma * c * values ** (1 - alpha) / (alpha - 1)
    return _unwrap(np.asarray(below)), _unwrap(np.asarray(above))


def mean_kernel(w: WeightLike, params: ModelParams) -> WeightLike:
    below, above = kernel_mass_split(w, params)
    total = np.asarray(below) + np.asarray(above)
    if not np.all(np.isfinite(total)):
        raise DomainError("E[kappa(w, W)] is not finite for these parameters")
    return _unwrap(total)
