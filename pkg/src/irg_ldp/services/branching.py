from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Protocol

import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.stats import norm

from irg_ldp.domain.errors import DomainError, EstimationError
from irg_ldp.domain.model import ModelParams, kernel_mass_split
from irg_ldp.infrastructure.parallel import chunk_ranges, map_ordered
from irg_ldp.infrastructure.storage import read_array_archive, write_array_archive
from irg_ldp.infrastructure.streams import Stream, StreamFactory, generator_for_key
from irg_ldp.services.graph import ComponentType, DeltaIrgModel, classify_component, level_kernel

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]
JSONDict = dict[str, Any]

DEFAULT_WEIGHT_STORE_CAP = 64
DEFAULT_Y_GRID = np.geomspace(1e-8, 1e4, 241)
_SAMPLES_PER_TASK = 1024
_LOG_MISS_BATCH = 64


@dataclass(frozen=True, eq=False)
class ProgenySample:
    """One explored tree.

    `size` is the population when exploration stopped; for censored trees it is the
    first count above the cap. Weights are kept for small trees, a single-hub miss
    profile on the pool's y-grid for the larger finite ones.
    """

    size: int
    censored: bool
    generations: int
    weights: FloatArray | None = None
    miss_profile: FloatArray | None = None

    def __post_init__(self) -> None:
        if self.size < 1:
            raise DomainError("progeny size must be at least 1")
        if self.weights is not None and len(self.weights) != self.size:
            raise DomainError("stored weights must have one entry per particle")


class OffspringLaw(Protocol):
    def root(self, rng: np.random.Generator) -> FloatArray: ...

    def children(self, parents: FloatArray, rng: np.random.Generator) -> FloatArray: ...


@dataclass(frozen=True)
class KernelOffspring:
    """Children of a type-w particle: Poisson(q * E[kappa(w, W)]) many, iid types.

    The type density kappa(w, x) dF(x) is split at x = w. Below w it is proportional
    to x^(sigma - alpha - 1); above w it is a Pareto(alpha - 1) law started at w.
    """

    params: ModelParams

    def root(self, rng: np.random.Generator) -> FloatArray:
        dist = self.params.weight_dist()
        return np.atleast_1d(np.asarray(dist.quantile(1.0 - rng.random()), dtype=np.float64))

    def children(self, parents: FloatArray, rng: np.random.Generator) -> FloatArray:
        alpha, sigma, w_min = self.params.alpha, self.params.sigma, self.params.w_min
        below, above = kernel_mass_split(parents, self.params)
        below = np.atleast_1d(np.asarray(below, dtype=np.float64))
        above = np.atleast_1d(np.asarray(above, dtype=np.float64))
        total = below + above
        if not np.all(np.isfinite(total)):
            raise DomainError("E[kappa(w, W)] is not finite for these parameters")

        counts = rng.poisson(self.params.q * total)
        born = int(counts.sum())
        if born == 0:
            return np.zeros(0, dtype=np.float64)

        w = np.repeat(parents, counts)
        below_share = np.repeat(below / total, counts)
        pick = rng.random(born)
        u = 1.0 - rng.random(born)

        upper = w * u ** (-1.0 / (alpha - 1.0))
        exponent = sigma - alpha
        if abs(exponent) < 1e-12:
            lower = w_min * (w / w_min) ** u
        else:
            base = w_min**exponent
            lower = (base + u * (w**exponent - base)) ** (1.0 / exponent)
        return np.where(pick < below_share, np.clip(lower, w_min, w), upper)


@dataclass(frozen=True, eq=False)
class DeltaOffspring:
    """Finite-type law on the levels of a delta-IRG model."""

    params: ModelParams
    model: DeltaIrgModel
    rates: FloatArray = field(init=False)
    cumulative: FloatArray = field(init=False)

    def __post_init__(self) -> None:
        levels = np.arange(self.model.level_count)
        matrix = level_kernel(levels[:, None], levels[None, :], self.model, self.params.sigma)
        intensity = self.params.q * matrix * self.model.masses[None, :]
        rates = intensity.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cumulative = np.cumsum(intensity, axis=1) / rates[:, None]
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "cumulative", np.nan_to_num(cumulative, nan=1.0))

    def root(self, rng: np.random.Generator) -> FloatArray:
        masses = self.model.masses
        level = rng.choice(masses.size, p=masses / masses.sum())
        return np.array([self.model.z_levels[level]], dtype=np.float64)

    def children(self, parents: FloatArray, rng: np.random.Generator) -> FloatArray:
        levels = self.model.level_of(parents)
        counts = rng.poisson(self.rates[levels])
        born = int(counts.sum())
        if born == 0:
            return np.zeros(0, dtype=np.float64)
        rows = self.cumulative[np.repeat(levels, counts)]
        u = rng.random(born)
        chosen = np.minimum((u[:, None] >= rows).sum(axis=1), self.model.level_count - 1)
        return self.model.z_levels[chosen]


def _log_miss(weights: FloatArray, y_grid: FloatArray, q: float, sigma: float) -> FloatArray:
    factors = 1.0 - q * np.minimum(np.outer(weights**sigma, y_grid), 1.0)
    with np.errstate(divide="ignore"):
        return np.log(factors).sum(axis=0)


def _explore(
    law: OffspringLaw,
    params: ModelParams,
    size_cap: int,
    weight_store_cap: int,
    y_grid: FloatArray,
    rng: np.random.Generator,
) -> ProgenySample:
    generation = law.root(rng)
    size = 1
    depth = 1
    kept: list[FloatArray] = [generation]
    log_profile: FloatArray | None = None

    while True:
        if log_profile is None and size > weight_store_cap:
            log_profile = np.zeros(y_grid.size)
            for part in kept:
                log_profile += _log_miss(part, y_grid, params.q, params.sigma)
            kept = []

        children = law.children(generation, rng)
        if children.size == 0:
            break
        size += children.size
        if size > size_cap:
            return ProgenySample(size=size, censored=True, generations=depth)

        depth += 1
        generation = children
        if log_profile is None:
            kept.append(children)
        else:
            log_profile += _log_miss(children, y_grid, params.q, params.sigma)

    if log_profile is None:
        return ProgenySample(size, censored=False, generations=depth, weights=np.concatenate(kept))
    return ProgenySample(size, censored=False, generations=depth, miss_profile=np.exp(log_profile))


def sample_progeny(
    params: ModelParams,
    size_cap: int,
    rng: np.random.Generator,
    weight_store_cap: int = DEFAULT_WEIGHT_STORE_CAP,
    y_grid: FloatArray = DEFAULT_Y_GRID,
) -> ProgenySample:
    if size_cap < 1:
        raise DomainError("size_cap must be at least 1")
    return _explore(KernelOffspring(params), params, size_cap, weight_store_cap, y_grid, rng)


@dataclass(frozen=True, eq=False)
class TreePool:
    """Columnar store of iid progeny samples shared by every tree functional."""

    params: ModelParams
    size_cap: int
    weight_store_cap: int
    seed: str
    sizes: IntArray
    censored: BoolArray
    generations: IntArray
    weight_offsets: IntArray
    flat_weights: FloatArray
    profile_rows: IntArray
    profiles: FloatArray
    y_grid: FloatArray
    kind: str = "kernel"

    def __post_init__(self) -> None:
        m = self.sizes.size
        if m < 1:
            raise DomainError("a tree pool must contain at least one tree")
        if self.censored.size != m or self.generations.size != m or self.profile_rows.size != m:
            raise DomainError("tree pool columns must have one entry per tree")
        if self.weight_offsets.size != m + 1 or self.weight_offsets[-1] != self.flat_weights.size:
            raise DomainError("tree pool weight offsets do not match the stored weights")
        if self.profiles.ndim != 2 or self.profiles.shape[1] != self.y_grid.size:
            raise DomainError("miss profiles must be evaluated on the pool's y-grid")

    @property
    def M(self) -> int:
        return int(self.sizes.size)

    @property
    def uncensored(self) -> BoolArray:
        return ~self.censored

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored))

    @property
    def has_weights(self) -> BoolArray:
        return np.diff(self.weight_offsets) > 0

    @cached_property
    def tree_of_weight(self) -> IntArray:
        return np.repeat(np.arange(self.M, dtype=np.int64), np.diff(self.weight_offsets))

    @cached_property
    def weight_powers(self) -> FloatArray:
        return self.flat_weights**self.params.sigma

    @cached_property
    def weight_indicator(self) -> sparse.csr_matrix:
        columns = np.arange(self.flat_weights.size)
        data = np.ones(self.flat_weights.size)
        return sparse.csr_matrix(
            (data, (self.tree_of_weight, columns)), shape=(self.M, self.flat_weights.size)
        )

    def tree_weights(self, index: int) -> FloatArray | None:
        start, stop = self.weight_offsets[index], self.weight_offsets[index + 1]
        return self.flat_weights[start:stop].copy() if stop > start else None

    def sample(self, index: int) -> ProgenySample:
        row = int(self.profile_rows[index])
        return ProgenySample(
            size=int(self.sizes[index]),
            censored=bool(self.censored[index]),
            generations=int(self.generations[index]),
            weights=self.tree_weights(index),
            miss_profile=self.profiles[row].copy() if row >= 0 else None,
        )

    @property
    def samples(self) -> list[ProgenySample]:
        return [self.sample(index) for index in range(self.M)]

    @classmethod
    def from_samples(
        cls,
        params: ModelParams,
        samples: Sequence[ProgenySample],
        size_cap: int,
        weight_store_cap: int = DEFAULT_WEIGHT_STORE_CAP,
        seed: str = "injected",
        y_grid: FloatArray = DEFAULT_Y_GRID,
        kind: str = "kernel",
    ) -> TreePool:
        lengths = [len(s.weights) if s.weights is not None else 0 for s in samples]
        offsets = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
        weights = [s.weights for s in samples if s.weights is not None]
        profile_rows = np.full(len(samples), -1, dtype=np.int64)
        profiles: list[FloatArray] = []
        for index, s in enumerate(samples):
            if s.miss_profile is not None:
                profile_rows[index] = len(profiles)
                profiles.append(np.asarray(s.miss_profile, dtype=np.float64))

        return cls(
            params=params,
            size_cap=size_cap,
            weight_store_cap=weight_store_cap,
            seed=seed,
            sizes=np.array([s.size for s in samples], dtype=np.int64),
            censored=np.array([s.censored for s in samples], dtype=np.bool_),
            generations=np.array([s.generations for s in samples], dtype=np.int64),
            weight_offsets=offsets,
            flat_weights=(
                np.concatenate(weights).astype(np.float64) if weights else np.zeros(0)
            ),
            profile_rows=profile_rows,
            profiles=(
                np.vstack(profiles) if profiles else np.zeros((0, y_grid.size), dtype=np.float64)
            ),
            y_grid=np.asarray(y_grid, dtype=np.float64),
            kind=kind,
        )

    def header(self) -> JSONDict:
        return {
            "params": self.params.to_dict(),
            "M": self.M,
            "size_cap": self.size_cap,
            "weight_store_cap": self.weight_store_cap,
            "seed": self.seed,
            "kind": self.kind,
        }

    def save(self, path: str | Path) -> None:
        write_array_archive(
            path,
            self.header(),
            {
                "sizes": self.sizes,
                "censored": self.censored,
                "generations": self.generations,
                "weight_offsets": self.weight_offsets,
                "flat_weights": self.flat_weights,
                "profile_rows": self.profile_rows,
                "profiles": self.profiles,
                "y_grid": self.y_grid,
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> TreePool:
        header, arrays = read_array_archive(path)
        try:
            return cls(
                params=ModelParams.from_dict(header["params"]),
                size_cap=int(header["size_cap"]),
                weight_store_cap=int(header["weight_store_cap"]),
                seed=str(header["seed"]),
                kind=str(header.get("kind", "kernel")),
                **{name: arrays[name] for name in _ARRAY_FIELDS},
            )
        except KeyError as exc:
            raise DomainError(f"{path}: pool archive is missing {exc}") from exc


_ARRAY_FIELDS = (
    "sizes",
    "censored",
    "generations",
    "weight_offsets",
    "flat_weights",
    "profile_rows",
    "profiles",
    "y_grid",
)


def _build(
    law: OffspringLaw,
    params: ModelParams,
    M: int,
    size_cap: int,
    streams: StreamFactory,
    weight_store_cap: int,
    workers: int,
    kind: str,
) -> TreePool:
    if M < 1:
        raise DomainError("pool size M must be at least 1")
    if size_cap < 1:
        raise DomainError("size_cap must be at least 1")

    key = streams.key(Stream.PROGENY)

    def run(bounds: tuple[int, int]) -> list[ProgenySample]:
        return [
            _explore(law, params, size_cap, weight_store_cap, DEFAULT_Y_GRID, rng)
            for rng in (generator_for_key(key, i) for i in range(*bounds))
        ]

    chunks = map_ordered(run, chunk_ranges(M, _SAMPLES_PER_TASK), workers)
    samples = [sample for chunk in chunks for sample in chunk]
    pool = TreePool.from_samples(
        params,
        samples,
        size_cap,
        weight_store_cap=weight_store_cap,
        seed=streams.label,
        kind=kind,
    )
    logger.info("built %s pool: M=%d censored=%.4f", kind, M, pool.censored_fraction)
    return pool


def build_pool(
    params: ModelParams,
    M: int,
    size_cap: int,
    streams: StreamFactory,
    weight_store_cap: int = DEFAULT_WEIGHT_STORE_CAP,
    workers: int = 1,
) -> TreePool:
    law = KernelOffspring(params)
    return _build(law, params, M, size_cap, streams, weight_store_cap, workers, "kernel")


def build_delta_pool(
    params: ModelParams,
    model: DeltaIrgModel,
    M: int,
    size_cap: int,
    streams: StreamFactory,
    weight_store_cap: int = DEFAULT_WEIGHT_STORE_CAP,
    workers: int = 1,
) -> TreePool:
    """Pool of the approximating finite-type process of a delta-IRG model."""
    law = DeltaOffspring(params, model)
    return _build(law, params, M, size_cap, streams, weight_store_cap, workers, "delta")


@dataclass(frozen=True)
class ThetaEstimate:
    theta_hat: float
    ci: tuple[float, float]
    cap_bracket: tuple[float, float]
    M: int

    def to_dict(self) -> JSONDict:
        return {
            "theta_hat": self.theta_hat,
            "ci": list(self.ci),
            "cap_bracket": list(self.cap_bracket),
            "M": self.M,
        }


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    z = float(norm.ppf(0.5 + level / 2))
    p = successes / trials
    denominator = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denominator
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denominator
    return max(0.0, center - half), min(1.0, center + half)


def estimate_theta(pool: TreePool) -> ThetaEstimate:
    """Censored fraction as the survival estimate, with Wilson 95% bounds.

    The cap bracket pairs the censored fraction with P(size > cap / 2).
    """
    survived = int(np.count_nonzero(pool.censored))
    half_cap = float(np.mean(pool.censored | (pool.sizes > pool.size_cap / 2)))
    return ThetaEstimate(
        theta_hat=survived / pool.M,
        ci=wilson_interval(survived, pool.M),
        cap_bracket=(survived / pool.M, half_cap),
        M=pool.M,
    )


def theta_rank_one_oracle(
    params: ModelParams,
    tolerance: float = 1e-13,
    max_iterations: int = 100_000,
) -> float:
    """Survival probability for sigma = 1 from c = E[W (1 - exp(-q c W))]."""
    if params.sigma != 1:
        raise DomainError("the rank-one oracle requires sigma = 1")

    dist = params.weight_dist()
    q = params.q
    c = dist.mean()
    for _ in range(max_iterations):
        updated = dist.expect(lambda w, c=c: w * -math.expm1(-q * c * w))
        if abs(updated - c) <= tolerance * max(1.0, c):
            c = updated
            break
        c = updated
    else:
        logger.warning("rank-one fixed point did not converge; c = %.3e", c)

    if c < 1e-10:
        return 0.0
    return 1.0 - dist.expect(lambda w: math.exp(-q * c * w))


@dataclass(frozen=True)
class TreeFunctional:
    value: float
    bias_bound: float

    def to_dict(self) -> JSONDict:
        return {"value": self.value, "bias_bound": self.bias_bound}


def estimate_H(pool: TreePool, z: float, h_exponent: float = 1.0) -> TreeFunctional:
    """Mean of z^(size * h_exponent) over finite trees; censored trees contribute 0.

    With z = 1 - q this is the hub functional E[(1 - q)^(|T| h')]; the censored
    trees would add at most z^(cap * h_exponent) each.
    """
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"z must lie in [0, 1] (got {z})")
    if h_exponent < 0:
        raise DomainError("h_exponent must be non-negative")
    terms = np.where(pool.censored, 0.0, z ** (pool.sizes * h_exponent))
    bias = pool.censored_fraction * z ** (pool.size_cap * h_exponent)
    return TreeFunctional(value=float(np.mean(terms)), bias_bound=float(bias))


def hub_miss_functional(pool: TreePool, h_prime: float) -> float:
    return estimate_H(pool, 1.0 - pool.params.q, h_prime).value


def size_distribution(pool: TreePool, ell_max: int) -> dict[int, float]:
    if ell_max < 1:
        raise DomainError("ell_max must be at least 1")
    finite = pool.sizes[pool.uncensored]
    counts = np.bincount(finite[finite <= ell_max], minlength=ell_max + 1)
    return {ell: counts[ell] / pool.M for ell in range(1, ell_max + 1)}


def _classified(
    pool: TreePool, eps: float, R: float, ells: Iterable[int]
) -> Counter[ComponentType]:
    wanted = set(ells)
    too_large = [ell for ell in wanted if ell > pool.weight_store_cap]
    if too_large:
        raise EstimationError(
            f"pool stores weights only up to size {pool.weight_store_cap}; "
            f"raise weight_store_cap to classify size {max(too_large)}"
        )

    counts: Counter[ComponentType] = Counter()
    candidates = np.flatnonzero(pool.uncensored & np.isin(pool.sizes, sorted(wanted)))
    for index in candidates:
        weights = pool.tree_weights(int(index))
        if weights is None:
            raise EstimationError(f"tree {index} has no stored weights")
        ctype = classify_component(weights, eps, R, pool.params.w_min)
        if ctype is not None:
            counts[ctype] += 1
    return counts


def type_distribution(
    pool: TreePool, eps: float, R: float, ell_max: int
) -> dict[ComponentType, float]:
    counts = _classified(pool, eps, R, range(1, ell_max + 1))
    return {ctype: count / pool.M for ctype, count in sorted(counts.items())}


def estimate_type_prob(pool: TreePool, ctype: ComponentType) -> float:
    counts = _classified(pool, ctype.eps, ctype.R, [ctype.ell])
    return counts.get(ctype, 0) / pool.M


def pbar(
    x: Sequence[float] | FloatArray,
    y: Sequence[float] | FloatArray,
    q: float,
    sigma: float,
) -> float:
    """Probability that particles of weights x attach to none of the hubs y."""
    xs = np.asarray(x, dtype=np.float64).reshape(-1)
    ys = np.asarray(y, dtype=np.float64).reshape(-1)
    if np.any(xs <= 0):
        raise DomainError("particle weights must be positive")
    if np.any(ys < 0):
        raise DomainError("hub weights must be non-negative")
    if xs.size == 0 or ys.size == 0:
        return 1.0
    factors = 1.0 - q * np.minimum(np.outer(xs**sigma, ys), 1.0)
    return float(np.prod(factors))


def _profile_columns(pool: TreePool, y_values: FloatArray) -> FloatArray:
    """Miss profiles at each hub weight; shape (profiles, len(y_values)).

    On the y-grid the profiles are interpolated in log y. Below it the log miss probability,
    concave in y and zero at y = 0, is scaled linearly from the first grid point; the error is
    of order q^2 * y * y_grid[0] * sum(w^(2 sigma)). Above it the last column is kept, which is
    exact once w^sigma * y_grid[-1] >= 1 for every weight of the tree and an upper bound
    otherwise.
    """
    grid = np.log(pool.y_grid)
    lowest = float(pool.y_grid[0])
    out = np.ones((pool.profiles.shape[0], y_values.size))
    if pool.profiles.shape[0] == 0:
        return out
    for column, value in enumerate(y_values):
        if value <= 0:
            continue
        if value < lowest:
            out[:, column] = pool.profiles[:, 0] ** (value / lowest)
            continue
        position = np.interp(np.log(value), grid, np.arange(grid.size, dtype=np.float64))
        low = int(math.floor(position))
        high = min(low + 1, grid.size - 1)
        frac = position - low
        out[:, column] = (1 - frac) * pool.profiles[:, low] + frac * pool.profiles[:, high]
    return out


def _log_miss_matrix(pool: TreePool, y_values: FloatArray) -> FloatArray:
    """log of the single-hub miss probability, per tree (rows) and hub weight (columns)."""
    q = pool.params.q
    logs = np.zeros((pool.M, y_values.size))

    if pool.flat_weights.size:
        factors = 1.0 - q * np.minimum(np.outer(pool.weight_powers, y_values), 1.0)
        with np.errstate(divide="ignore"):
            per_weight = np.log(factors)
        logs += pool.weight_indicator @ per_weight

    profiled = pool.profile_rows >= 0
    if np.any(profiled):
        with np.errstate(divide="ignore"):
            columns = np.log(_profile_columns(pool, y_values))
        logs[profiled] = columns[pool.profile_rows[profiled]]

    missing = pool.uncensored & ~pool.has_weights & ~profiled
    if np.any(missing):
        count = int(missing.sum())
        raise EstimationError(f"{count} finite trees carry neither weights nor a miss profile")
    return logs


def miss_probabilities(pool: TreePool, y: Sequence[float] | FloatArray) -> FloatArray:
    """Per-tree probability of attaching to none of the hubs; censored trees give 0."""
    return no_connection_terms(pool, np.asarray(y, dtype=np.float64).reshape(1, -1))[0]


def no_connection_terms(pool: TreePool, ys: FloatArray) -> FloatArray:
    """Per-tree miss probabilities for each row of ys; shape (rows, M)."""
    rows = np.asarray(ys, dtype=np.float64)
    if rows.ndim != 2:
        raise DomainError("hub weight batches must be two-dimensional")
    if np.any(rows < 0):
        raise DomainError("hub weights must be non-negative")
    count, h = rows.shape
    result = np.empty((count, pool.M))
    finite = pool.uncensored.astype(np.float64)
    if h == 0:
        result[:] = finite
        return result

    per_batch = max(1, _LOG_MISS_BATCH // h)
    for start in range(0, count, per_batch):
        block = rows[start : start + per_batch]
        logs = _log_miss_matrix(pool, block.reshape(-1))
        summed = logs.reshape(pool.M, block.shape[0], h).sum(axis=2)
        result[start : start + block.shape[0]] = (np.exp(summed) * finite[:, None]).T
    return result


def no_connection_many(pool: TreePool, ys: FloatArray) -> FloatArray:
    return no_connection_terms(pool, ys).mean(axis=1)


def estimate_no_connection(pool: TreePool, y: Sequence[float] | FloatArray) -> TreeFunctional:
    ys = np.asarray(y, dtype=np.float64).reshape(-1)
    value = float(np.mean(miss_probabilities(pool, ys)))
    bias = pool.censored_fraction
    if ys.size and pool.params.sigma >= 0:
        reach = min(float(ys.min()) * pool.params.w_min**pool.params.sigma, 1.0)
        bias *= (1.0 - pool.params.q * reach) ** pool.size_cap
    return TreeFunctional(value=value, bias_bound=float(bias))


def estimate_g_ell(pool: TreePool, y: Sequence[float] | FloatArray, ell: int) -> float:
    if ell < 1:
        raise DomainError("ell must be at least 1")
    terms = miss_probabilities(pool, y)
    return float(np.mean(np.where(pool.sizes == ell, terms, 0.0)) / ell)


def estimate_g(pool: TreePool, y: Sequence[float] | FloatArray, ell_max: int) -> dict[int, float]:
    """estimate_g_ell for every ell up to ell_max from one pass over the pool."""
    terms = miss_probabilities(pool, y)
    return {
        ell: float(np.mean(np.where(pool.sizes == ell, terms, 0.0)) / ell)
        for ell in range(1, ell_max + 1)
    }


def discretized_no_connection(
    pool: TreePool,
    y: Sequence[float] | FloatArray,
    eps: float,
    R: float,
    ell_max: int,
) -> float:
    """Sum over types of size <= ell_max of P̄(type lower weights, y) * theta(type)."""
    params = pool.params
    return sum(
        pbar(ctype.lower_weights(params.w_min), y, params.q, params.sigma) * probability
        for ctype, probability in type_distribution(pool, eps, R, ell_max).items()
    )
