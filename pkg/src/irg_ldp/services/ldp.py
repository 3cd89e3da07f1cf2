from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
import numpy.typing as npt
from scipy import optimize
from scipy.stats import norm

from irg_ldp.domain.errors import DomainError, EstimationError
from irg_ldp.domain.model import ModelParams, mean_kernel
from irg_ldp.infrastructure.parallel import chunk_ranges, map_ordered
from irg_ldp.infrastructure.streams import Stream, StreamFactory, generator_for_key
from irg_ldp.services.branching import (
    TreePool,
    estimate_H,
    estimate_no_connection,
    estimate_theta,
    hub_miss_functional,
    no_connection_many,
    no_connection_terms,
)

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
JSONDict = dict[str, Any]
Status = Literal["typical", "asymptotic", "bounds-only"]

HUBS_TOLERANCE = 1e-9
INTEGER_TOLERANCE = 1e-8
PHI_GRID = np.geomspace(1e3, 1e-6, 181)
PHI_MARGIN_SE = 3.0
IMPORTANCE_CHUNK = 4096
_MAX_BRACKET = 2.0**60
_PHI_BLOCK = 16


@dataclass(frozen=True)
class HubWeights:
    """Rescaled hub weights in units of n, kept in descending order."""

    y: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(sorted((float(v) for v in self.y), reverse=True))
        if any(not math.isfinite(v) or v <= 0 for v in values):
            raise DomainError("hub weights must be positive and finite")
        object.__setattr__(self, "y", values)

    @property
    def h(self) -> int:
        return len(self.y)

    def as_array(self) -> FloatArray:
        return np.asarray(self.y, dtype=np.float64)


@dataclass(frozen=True)
class CEstimate:
    value: float
    ci: tuple[float, float]
    hits: int
    draws: int
    h: int
    phi: float

    def to_dict(self) -> JSONDict:
        return {
            "value": self.value,
            "ci": list(self.ci),
            "hits": self.hits,
            "draws": self.draws,
            "h": self.h,
            "phi": self.phi,
        }


@dataclass(frozen=True)
class CCurve:
    s: tuple[float, ...]
    values: tuple[float, ...]
    reference: float

    @property
    def ratios(self) -> tuple[float, ...]:
        if self.reference <= 0:
            return tuple(0.0 for _ in self.values)
        return tuple(value / self.reference for value in self.values)


@dataclass(frozen=True)
class LdpQuantities:
    rho: float
    hubs_value: float
    hubs_ceil: int
    rate: float
    theta_hat: float
    status: Status
    C_estimate: CEstimate | None = None
    phi: float | None = None

    def to_dict(self) -> JSONDict:
        return {
            "rho": self.rho,
            "hubs_value": self.hubs_value,
            "hubs_ceil": self.hubs_ceil,
            "rate": self.rate,
            "theta_hat": self.theta_hat,
            "status": self.status,
            "C_estimate": self.C_estimate.to_dict() if self.C_estimate else None,
            "phi": self.phi,
        }


def _check_pool(q: float, pool: TreePool) -> None:
    if not math.isclose(q, pool.params.q, rel_tol=0.0, abs_tol=1e-12):
        raise DomainError(f"q = {q} does not match the pool's q = {pool.params.q}")


def _check_rho(rho: float) -> None:
    if rho >= 1:
        raise DomainError(f"rho must be below 1 (got {rho}); hubs diverge as rho -> 1")
    if rho < 0:
        raise DomainError(f"rho must be non-negative (got {rho})")


def ceil_hubs(value: float) -> int:
    """Ceiling that treats values within the bisection tolerance of an integer as integral."""
    return max(0, math.ceil(value - INTEGER_TOLERANCE))


def is_integral(value: float) -> bool:
    return value > 0 and abs(value - round(value)) <= INTEGER_TOLERANCE


def hubs(rho: float, q: float, pool: TreePool) -> float:
    """Real number of hubs h' with E[(1 - q)^(|T| h')] = 1 - rho on a fixed pool."""
    _check_rho(rho)
    _check_pool(q, pool)

    theta = estimate_theta(pool)
    if rho <= theta.ci[1]:
        return 0.0
    if q == 1:
        return 1.0

    target = 1.0 - rho

    def gap(h_prime: float) -> float:
        return hub_miss_functional(pool, h_prime) - target

    upper = 1.0
    while gap(upper) >= 0:
        upper *= 2.0
        if upper > _MAX_BRACKET:
            raise EstimationError("could not bracket hubs; the pool has no finite trees")
    logger.debug("hubs bracket for rho=%.6g: [0, %.6g]", rho, upper)
    return float(optimize.bisect(gap, 0.0, upper, xtol=HUBS_TOLERANCE))


def hubs_from_generating_function(rho: float, pool: TreePool) -> float:
    """Same quantity via log(H^(-1)(1 - rho)) / log(1 - q)."""
    _check_rho(rho)
    q = pool.params.q
    theta = estimate_theta(pool)
    if rho <= theta.ci[1]:
        return 0.0
    if q == 1:
        return 1.0

    target = 1.0 - rho

    def gap(z: float) -> float:
        return estimate_H(pool, z).value - target

    z_star = optimize.brentq(gap, 0.0, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return float(math.log(z_star) / math.log(1.0 - q))


def hubs_asymptotic(rho: float, q: float) -> float:
    if not 0 < q < 1:
        raise DomainError(f"the asymptotic hubs ratio needs q in (0, 1) (got {q})")
    if not 0 < rho < 1:
        raise DomainError(f"rho must lie in (0, 1) (got {rho})")
    return math.log(1.0 / (1.0 - rho)) / math.log(1.0 / (1.0 - q))


def hubs_asymptotic_refined(rho: float, params: ModelParams) -> float:
    """Leading ratio corrected by log E[exp(-q E[kappa(W_root, W) | W_root])]."""
    if params.q >= 1:
        raise DomainError("the refined asymptotics need q < 1")
    if not 0 < rho < 1:
        raise DomainError(f"rho must lie in (0, 1) (got {rho})")

    dist = params.weight_dist()
    q = params.q
    if params.sigma == 1:
        mean_w = dist.mean()
        inner = dist.expect(lambda w: math.exp(-q * mean_w * w))
    else:
        inner = dist.expect(lambda w: math.exp(-q * float(mean_kernel(w, params))))
    return (math.log(1.0 / (1.0 - rho)) - math.log(inner)) / math.log(1.0 / (1.0 - q))


def y_membership(y: HubWeights | Sequence[float], rho: float, pool: TreePool) -> bool:
    values = y.as_array() if isinstance(y, HubWeights) else np.asarray(y, dtype=np.float64)
    return estimate_no_connection(pool, values).value <= 1.0 - rho


def phi_threshold(
    rho: float,
    q: float,
    h: int,
    pool: TreePool,
    grid: FloatArray = PHI_GRID,
) -> float:
    """Largest grid phi such that a hub below phi keeps the miss functional above 1 - rho.

    The other h - 1 hubs are taken as saturating, which contributes (1 - q)^(|T| (h - 1)).
    Admissibility needs a margin of three standard errors over the pool.
    """
    _check_rho(rho)
    _check_pool(q, pool)
    if h < 1:
        raise DomainError("phi_threshold needs at least one hub")

    descending = np.sort(np.asarray(grid, dtype=np.float64))[::-1]
    saturated = np.where(pool.censored, 0.0, (1.0 - q) ** (pool.sizes * (h - 1.0)))
    for start in range(0, descending.size, _PHI_BLOCK):
        block = descending[start : start + _PHI_BLOCK]
        terms = no_connection_terms(pool, block.reshape(-1, 1)) * saturated[None, :]
        means = terms.mean(axis=1)
        errors = terms.std(axis=1, ddof=1) / math.sqrt(pool.M) if pool.M > 1 else 0.0
        admissible = np.flatnonzero(means > (1.0 - rho) + PHI_MARGIN_SE * errors)
        if admissible.size:
            return float(block[admissible[0]])

    raise EstimationError(f"no admissible phi down to {descending[-1]:g}; increase the pool size")


def _importance_draws(
    alpha: float,
    phi: float,
    h: int,
    draws: int,
    streams: StreamFactory,
) -> list[FloatArray]:
    """Pareto(alpha) hub vectors on [phi, inf)^h, one block per importance chunk."""
    key = streams.key(Stream.IMPORTANCE)
    blocks = []
    for index, (start, stop) in enumerate(chunk_ranges(draws, IMPORTANCE_CHUNK)):
        u = 1.0 - generator_for_key(key, index).random((stop - start, h))
        blocks.append(phi * u ** (-1.0 / alpha))
    return blocks


def _miss_values(
    pool: TreePool,
    phi: float,
    h: int,
    draws: int,
    streams: StreamFactory,
    workers: int,
) -> FloatArray:
    if draws < 1:
        raise DomainError("the number of importance draws must be at least 1")
    if phi <= 0:
        raise DomainError("phi must be positive")
    blocks = _importance_draws(pool.params.alpha, phi, h, draws, streams)
    parts = map_ordered(lambda ys: no_connection_many(pool, ys), blocks, workers)
    return np.concatenate(parts)


def _constant_from_hits(hits: int, draws: int, h: int, phi: float, alpha: float) -> CEstimate:
    scale = phi ** (-alpha * h) / math.factorial(h)
    fraction = hits / draws
    value = scale * fraction
    if hits == 0:
        upper = scale * -math.log(0.05) / draws
        logger.warning("no importance draw fell in Y; reporting 0 with one-sided bound %.3g", upper)
        return CEstimate(0.0, (0.0, upper), 0, draws, h, phi)

    z = float(norm.ppf(0.975))
    half = z * scale * math.sqrt(fraction * (1.0 - fraction) / draws)
    return CEstimate(value, (max(0.0, value - half), value + half), hits, draws, h, phi)


def estimate_C(
    rho: float,
    q: float,
    pool: TreePool,
    phi: float,
    N: int,
    streams: StreamFactory,
    h: int | None = None,
    workers: int = 1,
) -> CEstimate:
    """Importance-sampling estimate of the leading constant of the upper tail.

    Draws y_i = phi * U^(-1/alpha) iid, so C = phi^(-alpha h) / h! * P(y in Y).
    """
    _check_rho(rho)
    _check_pool(q, pool)
    if h is None:
        h = ceil_hubs(hubs(rho, q, pool))
    if h < 1:
        raise DomainError("the leading constant needs at least one hub; rho is typical")

    values = _miss_values(pool, phi, h, N, streams, workers)
    hits = int(np.count_nonzero(values <= 1.0 - rho))
    return _constant_from_hits(hits, N, h, phi, pool.params.alpha)


def c_curve(
    pool: TreePool,
    rho: float,
    s_values: Sequence[float],
    phi: float,
    draws: int,
    streams: StreamFactory,
    h: int | None = None,
    workers: int = 1,
) -> CCurve:
    """C_s for each s from one shared set of importance draws, with C_rho as reference."""
    _check_rho(rho)
    if h is None:
        h = ceil_hubs(hubs(rho, pool.params.q, pool))
    if h < 1:
        raise DomainError("the leading constant needs at least one hub; rho is typical")

    values = np.sort(_miss_values(pool, phi, h, draws, streams, workers))
    scale = phi ** (-pool.params.alpha * h) / math.factorial(h)

    def constant(s: float) -> float:
        hits = int(np.searchsorted(values, 1.0 - s, side="right"))
        return scale * hits / draws

    return CCurve(
        s=tuple(float(s) for s in s_values),
        values=tuple(constant(s) for s in s_values),
        reference=constant(rho),
    )


def giant_fraction_with_hubs(pool: TreePool, h: float) -> float:
    """1 - E[(1 - q)^(|T| h)]: giant proportion when h hubs reach every finite tree."""
    return 1.0 - hub_miss_functional(pool, h)


def support_end(rho: float, pool: TreePool) -> float:
    """Smallest rho' > rho at which hubs(rho') is an integer."""
    if pool.params.q == 1:
        return 1.0
    value = hubs(rho, pool.params.q, pool)
    k = max(ceil_hubs(value), 1)
    if is_integral(value):
        k += 1
    return giant_fraction_with_hubs(pool, k)


def rate_function(rho: float, params: ModelParams, pool: TreePool) -> float:
    if pool.params != params:
        raise DomainError("model parameters do not match the pool")
    theta_hat = estimate_theta(pool).theta_hat
    if rho >= 1 or rho < theta_hat:
        return math.inf
    return (params.alpha - 1.0) * ceil_hubs(hubs(rho, params.q, pool))


def upper_tail_prediction(
    rho: float,
    n: int,
    params: ModelParams,
    quantities: LdpQuantities,
) -> float:
    """C * (n P(W > n))^ceil(hubs), the asymptotic size of P(|C1| > rho n)."""
    if n < 1:
        raise DomainError(f"vertex count n must be at least 1 (got {n})")
    if quantities.hubs_ceil < 1 or quantities.C_estimate is None:
        raise DomainError("the upper-tail prediction needs at least one hub")
    if quantities.status == "bounds-only":
        logger.warning("hubs(%.6g) is an integer with q < 1; only bounds hold here", rho)
    tail = float(params.weight_dist().tail(float(n)))
    return quantities.C_estimate.value * (n * tail) ** quantities.hubs_ceil


def compute_quantities(
    rho: float,
    pool: TreePool,
    draws: int,
    streams: StreamFactory,
    phi_override: float | None = None,
    workers: int = 1,
    estimate_constant: bool = True,
) -> LdpQuantities:
    """Every quantity of the upper tail at rho; the constant is skipped when not asked for."""
    params = pool.params
    theta = estimate_theta(pool)
    hubs_value = hubs(rho, params.q, pool)
    hubs_ceil = ceil_hubs(hubs_value)
    rate = rate_function(rho, params, pool)

    if hubs_ceil == 0:
        return LdpQuantities(rho, hubs_value, 0, rate, theta.theta_hat, "typical")

    status: Status = "bounds-only" if params.q < 1 and is_integral(hubs_value) else "asymptotic"
    if not estimate_constant:
        return LdpQuantities(rho, hubs_value, hubs_ceil, rate, theta.theta_hat, status)
    phi = phi_override or phi_threshold(rho, params.q, hubs_ceil, pool)
    estimate = estimate_C(rho, params.q, pool, phi, draws, streams, h=hubs_ceil, workers=workers)
    return LdpQuantities(
        rho=rho,
        hubs_value=hubs_value,
        hubs_ceil=hubs_ceil,
        rate=rate,
        theta_hat=theta.theta_hat,
        status=status,
        C_estimate=estimate,
        phi=phi,
    )
