from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any, Literal

import numpy as np

from irg_ldp.domain.errors import CouplingUnavailableError, DomainError, EstimationError
from irg_ldp.domain.model import ModelParams, edge_probability
from irg_ldp.infrastructure.parallel import map_ordered
from irg_ldp.infrastructure.streams import Stream, StreamFactory, generator_for_key
from irg_ldp.services.branching import (
    TreePool,
    estimate_g,
    estimate_theta,
    no_connection_many,
    size_distribution,
    theta_rank_one_oracle,
    type_distribution,
    wilson_interval,
)
from irg_ldp.services.graph import (
    ComponentType,
    EdgeMethod,
    Graph,
    build_delta_irg,
    components,
    count_types,
    generate,
    generate_coupled,
    largest_component_size,
)
from irg_ldp.services.ldp import (
    HubWeights,
    c_curve,
    ceil_hubs,
    hubs,
    phi_threshold,
    support_end,
)

logger = logging.getLogger(__name__)

JSONDict = dict[str, Any]
HubMode = Literal["sample", "explicit", "none"]

NAIVE_TAIL_FLOOR = 1e-6
ORACLE_MAX_VERTICES = 6
SUPPORT_SLACK = 0.02
G_ELL_TOLERANCE = 0.01
_HUB_BATCH = 256


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    n: int
    replications: int = 1
    rho: float = 0.5
    margin: float = 0.05
    seed: int = 20240917
    eps: float = 0.5
    R: float = 4.0
    ell_max: int = 5
    pool_ref: str | None = None
    method: EdgeMethod = "pairwise"
    workers: int = 1
    retry_cap: int = 100_000
    sufficiency_threshold: float = 0.9
    absence_threshold: float = 0.02
    deficit_threshold: float = 0.05

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DomainError(f"vertex count n must be at least 1 (got {self.n})")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")
        if not 0 < self.rho < 1:
            raise DomainError(f"rho must lie in (0, 1) (got {self.rho})")
        if self.margin <= 0:
            raise DomainError("margin must be positive")
        if self.ell_max < 1:
            raise DomainError("ell_max must be at least 1")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        for name in ("sufficiency_threshold", "absence_threshold", "deficit_threshold"):
            if not 0 <= getattr(self, name) <= 1:
                raise DomainError(f"{name} must lie in [0, 1]")

    @property
    def streams(self) -> StreamFactory:
        return StreamFactory(self.seed)

    def to_dict(self) -> JSONDict:
        data = asdict(self)
        data["params"] = self.params.to_dict()
        data.pop("workers")
        return data


@dataclass(frozen=True)
class Replication:
    index: int
    seed: str
    largest_fraction: float
    count_fractions: dict[int, float]
    hubs: tuple[float, ...] = ()
    success: bool | None = None
    extras: JSONDict = field(default_factory=dict)

    def to_dict(self) -> JSONDict:
        return {
            "index": self.index,
            "seed": self.seed,
            "largest_fraction": self.largest_fraction,
            "count_fractions": {str(ell): value for ell, value in self.count_fractions.items()},
            "hubs": list(self.hubs),
            "success": self.success,
            **self.extras,
        }


@dataclass(frozen=True)
class RunRecord:
    kind: str
    config: ExperimentConfig
    replications: tuple[Replication, ...]
    comparisons: JSONDict = field(default_factory=dict)

    @property
    def largest_fractions(self) -> np.ndarray:
        return np.array([rep.largest_fraction for rep in self.replications], dtype=np.float64)

    @property
    def success_fraction(self) -> float | None:
        flags = [rep.success for rep in self.replications if rep.success is not None]
        if not flags:
            return None
        return sum(flags) / len(flags)

    def empirical_cdf(self, s: float) -> float:
        return float(np.mean(self.largest_fractions <= s))

    def mean_count_fractions(self) -> dict[int, float]:
        return {
            ell: float(np.mean([rep.count_fractions.get(ell, 0.0) for rep in self.replications]))
            for ell in range(1, self.config.ell_max + 1)
        }

    def replication_records(self) -> list[JSONDict]:
        return [{"kind": self.kind, **rep.to_dict()} for rep in self.replications]

    def to_dict(self) -> JSONDict:
        fractions = self.largest_fractions
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "replications": len(self.replications),
            "success_fraction": self.success_fraction,
            "largest_fraction_mean": float(fractions.mean()),
            "largest_fraction_sorted": np.sort(fractions).tolist(),
            "mean_count_fractions": {
                str(ell): value for ell, value in self.mean_count_fractions().items()
            },
            "comparisons": self.comparisons,
        }


def _observe(
    g: Graph,
    cfg: ExperimentConfig,
    index: int,
    streams: StreamFactory,
    hub_y: tuple[float, ...] = (),
    success_rho: float | None = None,
    extras: JSONDict | None = None,
) -> Replication:
    stats = components(g)
    largest = stats.largest_size / cfg.n
    return Replication(
        index=index,
        seed=streams.label,
        largest_fraction=largest,
        count_fractions={
            ell: stats.count_by_size.get(ell, 0) / cfg.n for ell in range(1, cfg.ell_max + 1)
        },
        hubs=hub_y,
        success=None if success_rho is None else stats.largest_size > success_rho * cfg.n,
        extras=extras or {},
    )


def _replicate(
    cfg: ExperimentConfig,
    task: Callable[[int, StreamFactory], Replication],
) -> tuple[Replication, ...]:
    root = cfg.streams

    def run(index: int) -> Replication:
        replication = task(index, root.child(index))
        logger.info("replication %d/%d done", index + 1, cfg.replications)
        return replication

    return tuple(map_ordered(run, range(cfg.replications), cfg.workers))


def _check_pool(cfg: ExperimentConfig, pool: TreePool | None) -> None:
    if pool is not None and pool.params != cfg.params:
        raise DomainError("experiment parameters do not match the pool")


def run_lln(cfg: ExperimentConfig, pool: TreePool | None = None) -> RunRecord:
    _check_pool(cfg, pool)

    def task(index: int, streams: StreamFactory) -> Replication:
        g = generate(cfg.params, cfg.n, streams, method=cfg.method)
        return _observe(g, cfg, index, streams)

    replications = _replicate(cfg, task)
    comparisons: JSONDict = {}
    fractions = np.array([rep.largest_fraction for rep in replications])
    if cfg.params.sigma == 1:
        oracle = theta_rank_one_oracle(cfg.params)
        comparisons["theta_oracle"] = oracle
        comparisons["mean_abs_gap_to_oracle"] = float(np.mean(np.abs(fractions - oracle)))
    if pool is not None:
        theta = estimate_theta(pool)
        sizes = size_distribution(pool, cfg.ell_max)
        comparisons["theta_hat"] = theta.theta_hat
        gap = np.abs(fractions - theta.theta_hat)
        comparisons["mean_abs_gap_to_theta_hat"] = float(np.mean(gap))
        comparisons["vertex_fraction_gap"] = {
            str(ell): abs(
                ell * float(np.mean([rep.count_fractions[ell] for rep in replications]))
                - sizes[ell]
            )
            for ell in range(1, cfg.ell_max + 1)
        }
    return RunRecord("lln", cfg, replications, comparisons)


def sample_hubs_in_y(
    rho: float,
    pool: TreePool,
    h: int,
    phi: float,
    streams: StreamFactory,
    retry_cap: int = 100_000,
) -> HubWeights:
    """Pareto(alpha) hub vectors on [phi, inf)^h, rejected until they lie in Y(rho)."""
    if h < 1:
        raise DomainError("hub sampling needs at least one hub")
    key = streams.key(Stream.HUB_SEARCH)
    alpha = pool.params.alpha
    tried = 0
    batch = 0
    while tried < retry_cap:
        size = min(_HUB_BATCH, retry_cap - tried)
        u = 1.0 - generator_for_key(key, batch).random((size, h))
        ys = phi * u ** (-1.0 / alpha)
        members = np.flatnonzero(no_connection_many(pool, ys) <= 1.0 - rho)
        if members.size:
            return HubWeights(tuple(ys[members[0]].tolist()))
        tried += size
        batch += 1
    raise EstimationError(
        f"no hub vector in Y after {retry_cap} draws at rho = {rho}; the margin is too aggressive"
    )


def run_planted_hubs(
    cfg: ExperimentConfig,
    h: int | None = None,
    y_mode: HubMode = "sample",
    y: Sequence[float] | None = None,
    pool: TreePool | None = None,
) -> RunRecord:
    """Plant hubs of weight n*y in place of the largest sampled weights and test |C1| > rho n.

    The run is judged against the config thresholds: sufficiency when at least the needed
    number of hubs is planted, deficit when fewer are, absence when none are.
    """
    _check_pool(cfg, pool)
    comparisons: JSONDict = {"mode": y_mode}
    phi: float | None = None
    fixed: HubWeights | None = None
    target = cfg.rho + cfg.margin
    if pool is not None and target >= 1:
        raise DomainError("rho + margin must stay below 1")
    needed = ceil_hubs(hubs(target, cfg.params.q, pool)) if pool is not None else None

    if y_mode == "sample":
        if pool is None or needed is None:
            raise DomainError("sampling hubs in Y needs a tree pool")
        if h is None:
            h = needed
        if h < 1:
            raise DomainError(f"rho + margin = {target} is typical; no hubs are needed")
        phi = phi_threshold(target, cfg.params.q, h, pool)
        comparisons.update({"h": h, "phi": phi, "target_rho": target})
    elif y_mode == "explicit":
        if not y:
            raise DomainError("explicit hub mode needs at least one hub weight")
        fixed = HubWeights(tuple(y))
        comparisons["h"] = fixed.h
    elif y_mode == "none":
        comparisons["h"] = 0
    else:
        raise DomainError(f"unknown hub mode {y_mode!r}")

    def task(index: int, streams: StreamFactory) -> Replication:
        if y_mode == "sample":
            assert pool is not None and phi is not None and h is not None
            hub_y = sample_hubs_in_y(target, pool, h, phi, streams, cfg.retry_cap).y
        else:
            hub_y = fixed.y if fixed is not None else ()
        g = generate(
            cfg.params,
            cfg.n,
            streams,
            planted_weights=[cfg.n * value for value in hub_y],
            resample_above=phi * cfg.n if phi is not None else None,
            method=cfg.method,
        )
        return _observe(g, cfg, index, streams, hub_y, success_rho=cfg.rho)

    record = RunRecord("plant", cfg, _replicate(cfg, task), comparisons)
    comparisons["success_fraction"] = record.success_fraction
    comparisons["h_needed"] = needed
    comparisons.update(_planted_verdict(cfg, comparisons["h"], needed, record.success_fraction))
    return record


def _planted_verdict(
    cfg: ExperimentConfig, planted: int, needed: int | None, success: float | None
) -> JSONDict:
    if success is None or (planted > 0 and needed is None):
        return {}
    if planted == 0:
        check, threshold = "absence", cfg.absence_threshold
        passed = success <= threshold
    elif needed is not None and planted < needed:
        check, threshold = "deficit", cfg.deficit_threshold
        passed = success <= threshold
    else:
        check, threshold = "sufficiency", cfg.sufficiency_threshold
        passed = success >= threshold
    if not passed:
        logger.warning("%s check failed: success fraction %.3f vs %.3f", check, success, threshold)
    return {"check": check, "threshold": threshold, "passed": passed}


def run_conditional(
    cfg: ExperimentConfig,
    pool: TreePool,
    draws: int = 10_000,
    s_points: int = 21,
) -> RunRecord:
    """Hubs drawn from the Y(rho)-conditioned Pareto law.

    Component counts are compared with g_ell and the survival of |C1| / n with C_s / C_rho.
    """
    _check_pool(cfg, pool)
    q = cfg.params.q
    h = ceil_hubs(hubs(cfg.rho, q, pool))
    if h < 1:
        raise DomainError(f"rho = {cfg.rho} is typical; there is no conditional law to test")
    phi = phi_threshold(cfg.rho, q, h, pool)

    def task(index: int, streams: StreamFactory) -> Replication:
        hub_y = sample_hubs_in_y(cfg.rho, pool, h, phi, streams, cfg.retry_cap)
        g = generate(
            cfg.params,
            cfg.n,
            streams,
            planted_weights=[cfg.n * value for value in hub_y.y],
            resample_above=phi * cfg.n,
            method=cfg.method,
        )
        predicted = estimate_g(pool, hub_y.as_array(), cfg.ell_max)
        replication = _observe(g, cfg, index, streams, hub_y.y, success_rho=cfg.rho)
        gaps = {
            ell: abs(replication.count_fractions[ell] - predicted[ell]) for ell in predicted
        }
        replication.extras.update(
            {
                "g_ell": {str(ell): value for ell, value in predicted.items()},
                "g_ell_max_gap": max(gaps.values()),
            }
        )
        return replication

    replications = _replicate(cfg, task)
    end = support_end(cfg.rho, pool)
    s_grid = np.linspace(cfg.rho, end, s_points)
    curve = c_curve(
        pool, cfg.rho, s_grid.tolist(), phi, draws, cfg.streams, h=h, workers=cfg.workers
    )
    fractions = np.array([rep.largest_fraction for rep in replications])
    survival = [float(np.mean(fractions > s)) for s in s_grid]
    ks = max(abs(a - b) for a, b in zip(survival, curve.ratios))

    comparisons = {
        "h": h,
        "phi": phi,
        "support_end": end,
        "s": s_grid.tolist(),
        "empirical_survival": survival,
        "C_ratio": list(curve.ratios),
        "ks_distance": ks,
        "support_fraction": float(np.mean(fractions >= cfg.rho - SUPPORT_SLACK)),
        "g_ell_pass_fraction": float(
            np.mean([rep.extras["g_ell_max_gap"] <= G_ELL_TOLERANCE for rep in replications])
        ),
    }
    return RunRecord("conditional", cfg, replications, comparisons)


def _type_gap(
    counts: dict[ComponentType, int],
    reference: dict[ComponentType, float],
    n: int,
) -> float:
    keys = set(counts) | set(reference)
    return float(
        sum(abs(key.ell * counts.get(key, 0) / n - reference.get(key, 0.0)) for key in keys)
    )


def run_coupling_check(
    cfg: ExperimentConfig,
    delta: float,
    R: float,
    pool: TreePool | None = None,
    max_attempts: int = 10,
) -> RunRecord:
    _check_pool(cfg, pool)
    ratio = cfg.eps / delta
    if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-6 * ratio:
        raise DomainError("eps must be a positive integer multiple of delta")
    model = build_delta_irg(cfg.params, cfg.n, delta, R)
    reference = type_distribution(pool, cfg.eps, R, cfg.ell_max) if pool is not None else None

    def task(index: int, streams: StreamFactory) -> Replication:
        for attempt in range(max_attempts):
            attempt_streams = streams.child(attempt)
            try:
                coupled = generate_coupled(cfg.params, cfg.n, model, attempt_streams)
                break
            except CouplingUnavailableError as exc:
                logger.warning("replication %d attempt %d: %s", index, attempt, exc)
        else:
            raise CouplingUnavailableError(
                f"coupling unavailable after {max_attempts} attempts in replication {index}"
            )

        approx_stats = components(coupled.approx)
        extras: JSONDict = {
            "attempts": attempt + 1,
            "violations": coupled.violations(),
            "edge_difference": (coupled.full.edge_count - coupled.approx.edge_count) / cfg.n,
            "largest_approx_fraction": approx_stats.largest_size / cfg.n,
        }
        if reference is not None:
            extras["type_gap_full"] = _type_gap(
                count_types(coupled.full, cfg.eps, R, cfg.ell_max), reference, cfg.n
            )
            extras["type_gap_approx"] = _type_gap(
                count_types(coupled.approx, cfg.eps, R, cfg.ell_max), reference, cfg.n
            )
        return _observe(coupled.full, cfg, index, attempt_streams, extras=extras)

    replications = _replicate(cfg, task)
    comparisons: JSONDict = {
        "delta": delta,
        "R": R,
        "n_total": model.n_total,
        "violations": sum(rep.extras["violations"] for rep in replications),
        "edge_difference_mean": float(
            np.mean([rep.extras["edge_difference"] for rep in replications])
        ),
    }
    if reference is not None:
        for key in ("type_gap_full", "type_gap_approx"):
            comparisons[f"{key}_mean"] = float(np.mean([rep.extras[key] for rep in replications]))
    return RunRecord("couple", cfg, replications, comparisons)


def exact_small_oracle(
    weights: Sequence[float],
    params: ModelParams,
    n_model: int,
) -> dict[int, float]:
    """Exact law of the largest component size by enumerating every edge subset."""
    values = np.asarray(weights, dtype=np.float64)
    n = values.size
    if n < 1:
        raise DomainError("the exact oracle needs at least one vertex")
    if n > ORACLE_MAX_VERTICES:
        raise DomainError(f"the exact oracle enumerates at most {ORACLE_MAX_VERTICES} vertices")
    if np.any(values < params.w_min):
        raise DomainError(f"oracle weights must be at least w_min = {params.w_min}")

    us, vs = np.triu_indices(n, k=1)
    probabilities = np.atleast_1d(
        np.asarray(edge_probability(values[us], values[vs], params, n_model))
    )
    m = us.size
    subsets = np.arange(2**m, dtype=np.int64)
    present = ((subsets[:, None] >> np.arange(m)) & 1).astype(bool)
    weight = np.prod(np.where(present, probabilities, 1.0 - probabilities), axis=1)

    largest = np.array(
        [largest_component_size(n, np.column_stack((us[row], vs[row]))) for row in present],
        dtype=np.int64,
    )

    law = np.bincount(largest, weights=weight, minlength=n + 1)
    return {ell: float(law[ell]) for ell in range(1, n + 1)}


def run_naive_tail(cfg: ExperimentConfig, pool: TreePool) -> RunRecord:
    """Plain Monte Carlo of P(|C1| > rho n), refused when the event is far too rare."""
    _check_pool(cfg, pool)
    h = ceil_hubs(hubs(cfg.rho, cfg.params.q, pool))
    scale = cfg.n * float(cfg.params.weight_dist().tail(float(cfg.n)))
    predicted = scale**h if h >= 1 else 1.0
    if h >= 1 and predicted < NAIVE_TAIL_FLOOR:
        raise EstimationError(
            f"(n P(W > n))^{h} = {predicted:.3g} is below {NAIVE_TAIL_FLOOR:g}; "
            "naive Monte Carlo would see no events, use the planted or conditional runs"
        )

    def task(index: int, streams: StreamFactory) -> Replication:
        g = generate(cfg.params, cfg.n, streams, method=cfg.method)
        return _observe(g, cfg, index, streams, success_rho=cfg.rho)

    replications = _replicate(cfg, task)
    successes = sum(bool(rep.success) for rep in replications)
    comparisons = {
        "h": h,
        "predicted_scale": predicted,
        "estimate": successes / len(replications),
        "ci": list(wilson_interval(successes, len(replications))),
    }
    return RunRecord("naive_tail", cfg, replications, comparisons)
