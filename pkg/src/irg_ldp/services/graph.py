from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.sparse import csgraph

from irg_ldp.domain.errors import CouplingUnavailableError, DomainError
from irg_ldp.domain.model import ModelParams, WeightDist, edge_probability
from irg_ldp.infrastructure.parallel import chunk_ranges, map_ordered
from irg_ldp.infrastructure.storage import read_edge_list, write_edge_list
from irg_ldp.infrastructure.streams import Stream, StreamFactory, generator_for_key

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
JSONDict = dict[str, Any]
EdgeMethod = Literal["pairwise", "bucketed"]
PlantedMode = Literal["replace", "append"]

_ROWS_PER_TASK = 256


def _empty_edges() -> IntArray:
    return np.zeros((0, 2), dtype=np.int64)


def _canonical_edges(edges: npt.ArrayLike) -> IntArray:
    pairs = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        return _empty_edges()
    low = np.minimum(pairs[:, 0], pairs[:, 1])
    high = np.maximum(pairs[:, 0], pairs[:, 1])
    order = np.lexsort((high, low))
    return np.column_stack((low[order], high[order]))


@dataclass(frozen=True, eq=False)
class Graph:
    """A realized graph: weights per vertex and a canonical (u < v, sorted) edge list.

    `n_model` is the n in the edge-probability denominator, which differs from the
    vertex count for weight windows and appended hubs.
    """

    weights: FloatArray
    edges: IntArray
    seed: str
    w_min: float
    n_model: int

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        edges = _canonical_edges(self.edges)
        n = weights.size

        if np.any(weights < self.w_min):
            raise DomainError(f"every vertex weight must be at least w_min = {self.w_min}")
        if edges.size:
            if np.any(edges[:, 0] == edges[:, 1]):
                raise DomainError("graph edges must not contain self-loops")
            if edges.min() < 0 or edges.max() >= n:
                raise DomainError(f"edge endpoints must lie in [0, {n})")
            if np.any(np.all(np.diff(edges, axis=0) == 0, axis=1)):
                raise DomainError("graph edges must not contain duplicates")
        if self.n_model < 1:
            raise DomainError("n_model must be at least 1")

        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "edges", edges)

    @property
    def n(self) -> int:
        return int(self.weights.size)

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def save(self, path: str | Path) -> None:
        write_edge_list(path, self.n, self.seed, self.weights, self.edges)

    @classmethod
    def load(
        cls,
        path: str | Path,
        w_min: float | None = None,
        n_model: int | None = None,
    ) -> Graph:
        n, seed, weights, edges = read_edge_list(path)
        if w_min is None:
            w_min = float(weights.min()) if weights.size else 0.0
        return cls(
            weights=weights,
            edges=edges,
            seed=seed,
            w_min=w_min,
            n_model=n_model if n_model is not None else max(n, 1),
        )


@dataclass(frozen=True, eq=False)
class ComponentStats:
    component_id: IntArray
    sizes: IntArray
    largest_size: int
    count_by_size: dict[int, int]

    @property
    def vertices_by_size(self) -> dict[int, int]:
        return {ell: ell * count for ell, count in self.count_by_size.items()}

    def to_dict(self) -> JSONDict:
        return {
            "largest_size": self.largest_size,
            "component_count": int(self.sizes.size),
            "count_by_size": {str(ell): count for ell, count in self.count_by_size.items()},
            "vertices_by_size": {str(ell): count for ell, count in self.vertices_by_size.items()},
        }


@dataclass(frozen=True, order=True)
class ComponentType:
    ell: int
    bucket_indices: tuple[int, ...]
    eps: float
    R: float

    def __post_init__(self) -> None:
        indices = tuple(sorted(int(index) for index in self.bucket_indices))
        if len(indices) != self.ell:
            raise DomainError("a component type needs exactly ell bucket indices")
        if indices and indices[0] < 0:
            raise DomainError("bucket indices must be non-negative")
        object.__setattr__(self, "bucket_indices", indices)

    def lower_weights(self, w_min: float) -> FloatArray:
        return w_min + self.eps * np.asarray(self.bucket_indices, dtype=np.float64)

    def label(self) -> str:
        return f"{self.ell}:" + ",".join(str(index) for index in self.bucket_indices)


@dataclass(frozen=True, eq=False)
class DeltaIrgModel:
    """Discretized graph on levels z_i = w_min + i*delta below R."""

    delta: float
    R: float
    w_min: float
    n: int
    z_levels: FloatArray
    masses: FloatArray
    counts: IntArray
    n_total: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_total", int(np.sum(self.counts)))

    @property
    def level_count(self) -> int:
        return int(self.z_levels.size)

    def level_of(self, weights: npt.ArrayLike) -> IntArray:
        """Level index of each weight, or -1 for weights at or above R."""
        values = np.asarray(weights, dtype=np.float64)
        levels = _grid_index(values, self.w_min, self.delta, self.level_count)
        return np.where(values >= self.R, -1, levels)

    def to_dict(self) -> JSONDict:
        return {
            "delta": self.delta,
            "R": self.R,
            "w_min": self.w_min,
            "n": self.n,
            "z_levels": self.z_levels.tolist(),
            "masses": self.masses.tolist(),
            "counts": self.counts.tolist(),
            "n_total": self.n_total,
        }


@dataclass(frozen=True, eq=False)
class CoupledGraphs:
    full: Graph
    approx: Graph
    selected: IntArray

    def violations(self) -> int:
        """Approx edges, mapped to full vertex ids, that are missing from the full graph."""
        if self.approx.edge_count == 0:
            return 0
        mapped = self.selected[self.approx.edges]
        full_edges = self.full.edge_set()
        return sum((int(u), int(v)) not in full_edges for u, v in _canonical_edges(mapped))


def _grid_index(values: FloatArray, origin: float, step: float, count: int) -> IntArray:
    """Index i with origin + i*step <= value < origin + (i+1)*step, clipped to [0, count).

    Grid points are origin + step * i exactly as the grids are built, so a weight on a cell edge
    lands in the upper cell and a weight one ulp below it stays in the lower one.
    """
    index = np.floor((values - origin) / step).astype(np.int64)
    index -= (origin + step * index > values).astype(np.int64)
    index += (origin + step * (index + 1) <= values).astype(np.int64)
    return np.clip(index, 0, count - 1)


def _grid_steps(span: float, step: float, name: str) -> int:
    ratio = span / step
    steps = round(ratio)
    if steps < 1 or abs(ratio - steps) > 1e-6 * max(1.0, ratio):
        raise DomainError(f"R - w_min must be a positive integer multiple of {name}")
    return int(steps)


def _kernel_bounds(
    a1: FloatArray,
    b1: FloatArray,
    a2: FloatArray,
    b2: FloatArray,
    sigma: float,
) -> tuple[FloatArray, FloatArray]:
    """Infimum and supremum of the kernel over rectangles [a1, b1] x [a2, b2].

    The kernel is monotone in each argument on either side of the diagonal, so the
    extremes sit at the corners or where the diagonal crosses the rectangle.
    """
    corners = [(a1, a2), (a1, b2), (b1, a2), (b1, b2)]
    low = np.maximum(a1, a2)
    high = np.minimum(b1, b2)
    crosses = low <= high

    def value(x: FloatArray, y: FloatArray) -> FloatArray:
        return np.maximum(x, y) * np.minimum(x, y) ** sigma

    candidates = [value(x, y) for x, y in corners]
    inf = np.minimum.reduce(candidates)
    sup = np.maximum.reduce(candidates)
    for point in (low, high):
        diagonal = point ** (1.0 + sigma)
        inf = np.where(crosses, np.minimum(inf, diagonal), inf)
        sup = np.where(crosses, np.maximum(sup, diagonal), sup)
    return inf, sup


def sample_weights(
    params: ModelParams,
    n: int,
    rng: np.random.Generator,
    window: tuple[float, float] | None = None,
) -> FloatArray:
    """n iid weights, conditioned on [a, b) by inverse transform when a window is given."""
    dist = params.weight_dist()
    uniforms = 1.0 - rng.random(n)
    if window is None:
        return np.asarray(dist.quantile(uniforms), dtype=np.float64)

    a, b = window
    if a >= b:
        raise DomainError(f"weight window [{a}, {b}) is empty")
    if a < params.w_min:
        raise DomainError(f"weight window must start at or above w_min = {params.w_min}")
    top = float(dist.tail(a))
    bottom = 0.0 if math.isinf(b) else float(dist.tail(b))
    values = np.asarray(dist.quantile(bottom + (top - bottom) * uniforms), dtype=np.float64)
    return np.clip(values, a, np.nextafter(b, -np.inf))


def _pairwise_rows(
    weights: FloatArray,
    params: ModelParams,
    n_model: int,
    streams: StreamFactory,
    rows: tuple[int, int],
) -> IntArray:
    key = streams.key(Stream.EDGES)
    chunks: list[IntArray] = []
    for u in range(*rows):
        others = weights[u + 1 :]
        if others.size == 0:
            continue
        draws = generator_for_key(key, u).random(others.size)
        probabilities = np.asarray(edge_probability(weights[u], others, params, n_model))
        hits = np.flatnonzero(draws < probabilities) + u + 1
        if hits.size:
            chunks.append(np.column_stack((np.full(hits.size, u, dtype=np.int64), hits)))
    return np.concatenate(chunks) if chunks else _empty_edges()


def _triangular_pairs(k: IntArray) -> tuple[IntArray, IntArray]:
    """Map k in [0, s(s-1)/2) to pairs (a, b), a < b, ordered by b then a."""
    b = ((1.0 + np.sqrt(1.0 + 8.0 * k.astype(np.float64))) // 2).astype(np.int64)
    b = np.where(b * (b - 1) // 2 > k, b - 1, b)
    b = np.where((b + 1) * b // 2 <= k, b + 1, b)
    return k - b * (b - 1) // 2, b


def _skip_positions(rng: np.random.Generator, probability: float, total: int) -> IntArray:
    """Positions in [0, total) of successes of iid Bernoulli(probability) trials."""
    if probability <= 0 or total <= 0:
        return np.zeros(0, dtype=np.int64)
    if probability >= 1:
        return np.arange(total, dtype=np.int64)

    positions: list[IntArray] = []
    cursor = -1
    while True:
        expected = (total - cursor) * probability
        batch = int(expected + 5.0 * math.sqrt(expected) + 16)
        steps = rng.geometric(probability, size=batch)
        candidates = cursor + np.cumsum(steps)
        inside = candidates[candidates < total]
        positions.append(inside)
        if inside.size < candidates.size:
            break
        cursor = int(candidates[-1])
    return np.concatenate(positions)


def _bucketed_edges(
    weights: FloatArray,
    params: ModelParams,
    n_model: int,
    streams: StreamFactory,
) -> IntArray:
    n = weights.size
    if n < 2:
        return _empty_edges()

    buckets = np.floor(np.log2(weights / params.w_min)).astype(np.int64)
    members = {int(b): np.flatnonzero(buckets == b) for b in np.unique(buckets)}
    labels = sorted(members)
    chunks: list[IntArray] = []

    for j_pos, j in enumerate(labels):
        for i in labels[: j_pos + 1]:
            left, right = members[i], members[j]
            same = i == j
            total = left.size * (left.size - 1) // 2 if same else left.size * right.size
            if total == 0:
                continue

            _, sup = _kernel_bounds(
                np.array([weights[left].min()]),
                np.array([weights[left].max()]),
                np.array([weights[right].min()]),
                np.array([weights[right].max()]),
                params.sigma,
            )
            bound = params.q * min(float(sup[0]) / n_model, 1.0)
            rng = streams.generator(Stream.BUCKETED, j * (j + 1) // 2 + i)
            positions = _skip_positions(rng, bound, total)
            if positions.size == 0:
                continue

            if same:
                a, b = _triangular_pairs(positions)
                us, vs = left[a], left[b]
            else:
                us, vs = left[positions // right.size], right[positions % right.size]
            probabilities = np.asarray(
                edge_probability(weights[us], weights[vs], params, n_model), dtype=np.float64
            )
            keep = rng.random(positions.size) * bound < probabilities
            chunks.append(np.column_stack((us[keep], vs[keep])))

    return _canonical_edges(np.concatenate(chunks)) if chunks else _empty_edges()


def sample_edges(
    weights: npt.ArrayLike,
    params: ModelParams,
    n_model: int,
    streams: StreamFactory,
    method: EdgeMethod = "pairwise",
    workers: int = 1,
) -> IntArray:
    """Independent edges with probability q * min(kernel / n_model, 1).

    The pairwise method draws the uniform of pair (u, v), u < v, from row u of the
    edge stream, so the result does not depend on the worker count.
    """
    values = np.asarray(weights, dtype=np.float64)
    if n_model < 1:
        raise DomainError(f"vertex count n must be at least 1 (got {n_model})")
    if method == "bucketed":
        return _bucketed_edges(values, params, n_model, streams)
    if method != "pairwise":
        raise DomainError(f"unknown edge sampling method {method!r}")

    tasks = chunk_ranges(max(values.size - 1, 0), _ROWS_PER_TASK)
    parts = map_ordered(
        lambda rows: _pairwise_rows(values, params, n_model, streams, rows), tasks, workers
    )
    return np.concatenate(parts) if parts else _empty_edges()


def _plant(
    weights: FloatArray,
    planted: FloatArray,
    mode: PlantedMode,
) -> tuple[FloatArray, IntArray]:
    if planted.size == 0:
        return weights, np.zeros(0, dtype=np.int64)
    if mode == "append":
        slots = np.arange(weights.size, weights.size + planted.size, dtype=np.int64)
        return np.concatenate((weights, planted)), slots
    if mode != "replace":
        raise DomainError(f"unknown planted mode {mode!r}")
    if planted.size > weights.size:
        raise DomainError("cannot replace more vertices than the graph has")

    slots = np.sort(np.argsort(weights, kind="stable")[weights.size - planted.size :])
    replaced = weights.copy()
    replaced[slots] = np.sort(planted)[::-1]
    return replaced, slots


def generate(
    params: ModelParams,
    n: int,
    streams: StreamFactory,
    weight_window: tuple[float, float] | None = None,
    planted_weights: Sequence[float] | None = None,
    planted_mode: PlantedMode = "replace",
    resample_above: float | None = None,
    n_model: int | None = None,
    method: EdgeMethod = "pairwise",
    workers: int = 1,
) -> Graph:
    if n < 1:
        raise DomainError(f"vertex count n must be at least 1 (got {n})")

    planted = np.asarray(planted_weights if planted_weights is not None else [], dtype=np.float64)
    if np.any(planted < params.w_min):
        raise DomainError(f"planted weights must be at least w_min = {params.w_min}")

    weights = sample_weights(params, n, streams.generator(Stream.WEIGHTS), weight_window)
    weights, slots = _plant(weights, planted, planted_mode)

    if resample_above is not None:
        redraw = weights >= resample_above
        redraw[slots] = False
        count = int(np.count_nonzero(redraw))
        if count:
            low = weight_window[0] if weight_window is not None else params.w_min
            weights[redraw] = sample_weights(
                params, count, streams.generator(Stream.RESAMPLE), (low, resample_above)
            )

    denominator = n_model if n_model is not None else n
    edges = sample_edges(weights, params, denominator, streams, method=method, workers=workers)
    return Graph(
        weights=weights,
        edges=edges,
        seed=streams.label,
        w_min=params.w_min,
        n_model=denominator,
    )


def components(g: Graph) -> ComponentStats:
    n = g.n
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return ComponentStats(empty, empty, 0, {})

    ones = np.ones(g.edge_count, dtype=np.int8)
    adjacency = sparse.coo_matrix((ones, (g.edges[:, 0], g.edges[:, 1])), shape=(n, n))
    count, labels = csgraph.connected_components(adjacency, directed=False)

    smallest = np.full(count, n, dtype=np.int64)
    np.minimum.at(smallest, labels, np.arange(n, dtype=np.int64))
    order = np.argsort(smallest)
    sizes = np.bincount(labels, minlength=count)[order].astype(np.int64)

    histogram = Counter(int(size) for size in sizes)
    return ComponentStats(
        component_id=smallest[labels],
        sizes=sizes,
        largest_size=int(sizes.max()),
        count_by_size=dict(sorted(histogram.items())),
    )


def largest_component_size(n: int, edges: npt.ArrayLike) -> int:
    pairs = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if n == 0:
        return 0
    ones = np.ones(pairs.shape[0], dtype=np.int8)
    adjacency = sparse.coo_matrix((ones, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(adjacency, directed=False)
    return int(np.bincount(labels).max())


def classify_component(
    weights_of_component: Sequence[float] | FloatArray,
    eps: float,
    R: float,
    w_min: float,
) -> ComponentType | None:
    """Bucket multiset on the half-open grid [w_min + i*eps, w_min + (i+1)*eps).

    Returns None when some weight is at or above R.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    bucket_count = _grid_steps(R - w_min, eps, "eps")

    values = np.asarray(weights_of_component, dtype=np.float64)
    if np.any(values < w_min):
        raise DomainError(f"component weights must be at least w_min = {w_min}")
    if np.any(values >= R):
        return None

    indices = _grid_index(values, w_min, eps, bucket_count)
    return ComponentType(ell=int(values.size), bucket_indices=tuple(indices.tolist()), eps=eps, R=R)


def count_types(g: Graph, eps: float, R: float, ell_max: int) -> dict[ComponentType, int]:
    if ell_max < 1:
        raise DomainError("ell_max must be at least 1")
    _grid_steps(R - g.w_min, eps, "eps")

    stats = components(g)
    if g.n == 0:
        return {}
    per_vertex_size = np.bincount(stats.component_id, minlength=g.n)[stats.component_id]

    small = np.flatnonzero(per_vertex_size <= ell_max)
    if small.size == 0:
        return {}
    order = small[np.argsort(stats.component_id[small], kind="stable")]
    boundaries = np.flatnonzero(np.diff(stats.component_id[order])) + 1

    counts: Counter[ComponentType] = Counter()
    for group in np.split(order, boundaries):
        ctype = classify_component(g.weights[group], eps, R, g.w_min)
        if ctype is not None:
            counts[ctype] += 1
    return dict(sorted(counts.items()))


def delta_level_counts(n: int, delta: float, masses: npt.ArrayLike) -> IntArray:
    """Level sizes ceil((1 - delta) * n * f_i)."""
    raw = (1.0 - delta) * n * np.asarray(masses, dtype=np.float64)
    return np.ceil(np.round(raw, 9)).astype(np.int64)


def build_delta_irg(params: ModelParams, n: int, delta: float, R: float) -> DeltaIrgModel:
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    if n < 1:
        raise DomainError(f"vertex count n must be at least 1 (got {n})")
    levels = _grid_steps(R - params.w_min, delta, "delta")

    dist: WeightDist = params.weight_dist()
    edges_of_cells = params.w_min + delta * np.arange(levels + 1, dtype=np.float64)
    edges_of_cells[-1] = R
    masses = np.asarray(dist.interval_mass(edges_of_cells[:-1], edges_of_cells[1:]))
    counts = delta_level_counts(n, delta, masses)

    if int(counts.sum()) > n:
        raise DomainError(
            f"delta-IRG needs {int(counts.sum())} vertices but n = {n}; increase n or delta"
        )
    return DeltaIrgModel(
        delta=delta,
        R=R,
        w_min=params.w_min,
        n=n,
        z_levels=edges_of_cells[:-1].copy(),
        masses=masses,
        counts=counts,
    )


def level_kernel(
    level_1: npt.ArrayLike,
    level_2: npt.ArrayLike,
    model: DeltaIrgModel,
    sigma: float,
) -> FloatArray:
    """Cell infimum of the kernel for level indices; level -1 means at or above R."""
    i = np.asarray(level_1, dtype=np.int64)
    j = np.asarray(level_2, dtype=np.int64)
    lower_i = model.z_levels[np.maximum(i, 0)]
    lower_j = model.z_levels[np.maximum(j, 0)]
    inf, _ = _kernel_bounds(lower_i, lower_i + model.delta, lower_j, lower_j + model.delta, sigma)
    return np.where((i < 0) | (j < 0), 0.0, inf)


def kernel_delta(w1: float, w2: float, model: DeltaIrgModel, sigma: float) -> float:
    levels = model.level_of([w1, w2])
    return float(level_kernel(levels[0], levels[1], model, sigma))


def generate_coupled(
    params: ModelParams,
    n: int,
    model: DeltaIrgModel,
    streams: StreamFactory,
    workers: int = 1,
) -> CoupledGraphs:
    """Sample the graph restricted to [w_min, R) together with a delta-IRG inside it."""
    if model.n != n or model.w_min != params.w_min:
        raise DomainError("delta-IRG model was built for different n or w_min")

    all_weights = sample_weights(params, n, streams.generator(Stream.WEIGHTS))
    weights = all_weights[all_weights < model.R]
    levels = model.level_of(weights)

    observed = np.bincount(levels, minlength=model.level_count)
    upper = (1.0 + model.delta) * n * model.masses
    irregular = np.flatnonzero((observed < model.counts) | (observed > upper))
    if irregular.size:
        raise CouplingUnavailableError(
            f"level occupancy outside (1 +/- delta) * n * f at levels {irregular.tolist()}"
        )

    edges = sample_edges(weights, params, n, streams, workers=workers)
    full = Graph(weights=weights, edges=edges, seed=streams.label, w_min=params.w_min, n_model=n)

    chosen = [np.flatnonzero(levels == i)[: model.counts[i]] for i in range(model.level_count)]
    selected = np.sort(np.concatenate(chosen)).astype(np.int64)
    relabel = np.full(weights.size, -1, dtype=np.int64)
    relabel[selected] = np.arange(selected.size, dtype=np.int64)

    inside = (relabel[edges[:, 0]] >= 0) & (relabel[edges[:, 1]] >= 0)
    candidates = edges[inside]
    full_p = np.asarray(
        edge_probability(weights[candidates[:, 0]], weights[candidates[:, 1]], params, n)
    )
    coarse = level_kernel(levels[candidates[:, 0]], levels[candidates[:, 1]], model, params.sigma)
    coarse_p = params.q * np.minimum(coarse / n, 1.0)
    uniforms = streams.generator(Stream.COUPLING_DELETE).random(candidates.shape[0])
    keep = uniforms < coarse_p / full_p

    approx = Graph(
        weights=model.z_levels[levels[selected]],
        edges=relabel[candidates[keep]],
        seed=streams.label,
        w_min=params.w_min,
        n_model=n,
    )
    coupled = CoupledGraphs(full=full, approx=approx, selected=selected)
    assert coupled.violations() == 0
    logger.debug("coupled: full %d edges, approx %d edges", full.edge_count, approx.edge_count)
    return coupled
