import math

import numpy as np
import pytest
from scipy import integrate

from irg_ldp.domain import DomainError, EstimationError
from irg_ldp.domain.model import ModelParams, kernel_mass_split, mean_kernel
from irg_ldp.infrastructure.streams import StreamFactory
from irg_ldp.services.branching import (
    KernelOffspring,
    ProgenySample,
    TreePool,
    build_delta_pool,
    build_pool,
    discretized_no_connection,
    estimate_g,
    estimate_g_ell,
    estimate_H,
    estimate_no_connection,
    estimate_theta,
    estimate_type_prob,
    miss_probabilities,
    pbar,
    sample_progeny,
    size_distribution,
    theta_rank_one_oracle,
    type_distribution,
    wilson_interval,
)
from irg_ldp.services.graph import ComponentType, build_delta_irg

SUBCRITICAL = ModelParams(alpha=3.5, sigma=1.0, q=0.2, w_min=1.0)
FLAT = ModelParams(alpha=2.0, sigma=0.0, q=1.0, w_min=1.0)


def test_tiny_q_gives_isolated_roots():
    params = ModelParams(alpha=3.5, sigma=1.0, q=1e-6, w_min=1.0)
    rng = np.random.default_rng(3)

    samples = [sample_progeny(params, 100, rng) for _ in range(200)]

    assert all(s.size == 1 and not s.censored for s in samples)
    assert all(s.weights is not None and s.weights.size == 1 for s in samples)


def test_offspring_count_and_types_follow_the_kernel():
    params = ModelParams(alpha=3.5, sigma=0.5, q=1.0, w_min=1.0)
    law = KernelOffspring(params)
    parents = np.full(20000, 3.0)
    below, above = kernel_mass_split(3.0, params)
    total = below + above

    children = law.children(parents, np.random.default_rng(5))

    assert abs(children.size / parents.size - total) <= 4 * math.sqrt(total / parents.size)
    assert np.all(children >= 1.0)
    share = below / total
    observed = np.mean(children < 3.0)
    assert abs(observed - share) <= 4 * math.sqrt(share * (1 - share) / children.size)
    heavy = children[children >= 3.0]
    ratio = 2.0 ** -(params.alpha - 1)
    assert abs(np.mean(heavy > 6.0) - ratio) <= 4 * math.sqrt(ratio * (1 - ratio) / heavy.size)


@pytest.mark.parametrize("w", [1.0, 2.5, 8.0])
def test_childless_probability_is_poisson_void(w):
    params = ModelParams(alpha=3.5, sigma=0.5, q=0.3, w_min=1.0)
    law = KernelOffspring(params)
    rng = np.random.default_rng(17)
    trials = 20_000

    childless = sum(law.children(np.array([w]), rng).size == 0 for _ in range(trials))

    expected = math.exp(-params.q * mean_kernel(w, params))
    spread = math.sqrt(expected * (1 - expected) / trials)
    assert abs(childless / trials - expected) <= 4 * spread


def test_progeny_sample_validates_size():
    with pytest.raises(DomainError, match="at least 1"):
        ProgenySample(size=0, censored=False, generations=0)
    with pytest.raises(DomainError, match="one entry per particle"):
        ProgenySample(size=2, censored=False, generations=1, weights=np.ones(3))


def test_pool_is_deterministic_across_workers():
    params = ModelParams(alpha=3.5, sigma=1.0, q=0.6, w_min=1.0)

    serial = build_pool(params, 2500, 200, StreamFactory(4), workers=1)
    threaded = build_pool(params, 2500, 200, StreamFactory(4), workers=3)

    np.testing.assert_array_equal(serial.sizes, threaded.sizes)
    np.testing.assert_array_equal(serial.flat_weights, threaded.flat_weights)
    np.testing.assert_array_equal(serial.profiles, threaded.profiles)
    assert serial.seed == "4"


def test_pool_of_one_tree():
    pool = build_pool(SUBCRITICAL, 1, 50, StreamFactory(1))

    assert pool.M == 1
    assert pool.sample(0).size == pool.sizes[0]


def test_subcritical_pool_has_no_survival():
    pool = build_pool(SUBCRITICAL, 2000, 1000, StreamFactory(2))

    assert estimate_theta(pool).theta_hat <= 0.01
    assert theta_rank_one_oracle(SUBCRITICAL) == 0.0


def test_rank_one_oracle_requires_sigma_one():
    with pytest.raises(DomainError, match="sigma = 1"):
        theta_rank_one_oracle(ModelParams(alpha=3.5, sigma=0.5, q=1.0, w_min=1.0))


def test_rank_one_oracle_increases_with_q():
    values = [
        theta_rank_one_oracle(ModelParams(alpha=3.5, sigma=1.0, q=q, w_min=1.0))
        for q in (0.6, 0.8, 1.0)
    ]

    assert 0 < values[0] < values[1] < values[2] < 1


def test_supercritical_survival_matches_oracle(rank_one_params):
    pool = build_pool(rank_one_params, 2000, 500, StreamFactory(9))

    theta = estimate_theta(pool)

    assert theta.theta_hat == pytest.approx(theta_rank_one_oracle(rank_one_params), abs=0.05)
    assert theta.ci[0] <= theta.theta_hat <= theta.ci[1]
    assert theta.cap_bracket[0] <= theta.cap_bracket[1]


def test_singleton_pool_functionals(singleton_pool):
    pool = singleton_pool(FLAT)

    assert estimate_theta(pool).theta_hat == 0.0
    assert estimate_H(pool, 0.0).value == 0.0
    assert estimate_H(pool, 1.0).value == 1.0
    assert estimate_H(pool, 0.5).value == pytest.approx(0.5)
    assert size_distribution(pool, 2) == {1: 1.0, 2: 0.0}


def test_estimate_H_counts_only_finite_trees(singleton_pool):
    pool = singleton_pool(FLAT, M=1000, censored=200)

    assert estimate_H(pool, 1.0).value == pytest.approx(0.8)
    assert estimate_H(pool, 1.0).bias_bound == pytest.approx(0.2)


def test_estimate_H_rejects_z_outside_unit_interval(singleton_pool):
    with pytest.raises(DomainError, match="z must lie in"):
        estimate_H(singleton_pool(FLAT), 1.5)


def test_wilson_interval_for_no_successes():
    low, high = wilson_interval(0, 1000)

    assert low == 0.0
    assert high == pytest.approx(1.96**2 / (1000 + 1.96**2), rel=1e-3)


def test_pbar_examples():
    assert pbar([1.0], [], 0.5, 1.0) == 1.0
    assert pbar([1.0], [1.0], 0.5, 1.0) == pytest.approx(0.5)
    assert pbar([1.0, 2.0], [0.6], 1.0, 1.0) == 0.0
    assert pbar([1.0, 1.0], [0.2, 0.5], 1.0, 0.0) == pytest.approx((0.8 * 0.5) ** 2)


def test_g_ell_without_hubs_is_size_law_over_ell(singleton_pool):
    pool = singleton_pool(FLAT)

    assert estimate_g_ell(pool, [], 1) == pytest.approx(1.0)
    assert estimate_g_ell(pool, [0.0, 0.0], 1) == pytest.approx(1.0)
    assert estimate_g(pool, [], 2) == {1: pytest.approx(1.0), 2: 0.0}
    assert estimate_g_ell(pool, [1.0], 1) == 0.0


def test_no_connection_examples(singleton_pool):
    pool = singleton_pool(FLAT, M=1000, censored=200)

    assert estimate_no_connection(pool, [0.0]).value == pytest.approx(0.8)
    assert estimate_no_connection(pool, [0.3]).value == pytest.approx(0.8 * 0.7)
    assert estimate_no_connection(pool, [2.0]).value == 0.0


def test_discretized_no_connection_matches_for_singletons(singleton_pool):
    pool = singleton_pool(FLAT)

    assert discretized_no_connection(pool, [0.3], 0.5, 4.0, 3) == pytest.approx(0.7)


def test_type_distribution_of_singletons(singleton_pool):
    pool = singleton_pool(FLAT)
    root_type = ComponentType(ell=1, bucket_indices=(0,), eps=0.5, R=4.0)

    assert type_distribution(pool, 0.5, 4.0, 2) == {root_type: 1.0}
    assert estimate_type_prob(pool, root_type) == 1.0
    assert estimate_type_prob(pool, ComponentType(1, (5,), 0.5, 4.0)) == 0.0


def test_type_distribution_needs_stored_weights(singleton_pool):
    with pytest.raises(EstimationError, match="raise weight_store_cap"):
        estimate_type_prob(singleton_pool(FLAT), ComponentType(70, (0,) * 70, 0.5, 4.0))


def test_miss_profiles_agree_with_stored_weights():
    params = ModelParams(alpha=3.5, sigma=1.0, q=0.6, w_min=1.0)
    stored = build_pool(params, 500, 200, StreamFactory(14))
    profiled = build_pool(params, 500, 200, StreamFactory(14), weight_store_cap=1)

    np.testing.assert_array_equal(stored.sizes, profiled.sizes)
    large = profiled.uncensored & (profiled.sizes > 1)
    assert profiled.profiles.shape[0] == int(np.count_nonzero(large))
    for y in ([0.013], [0.2, 0.05]):
        assert estimate_no_connection(profiled, y).value == pytest.approx(
            estimate_no_connection(stored, y).value, abs=5e-3
        )


def test_miss_profiles_extend_beyond_the_y_grid():
    params = ModelParams(alpha=3.5, sigma=1.0, q=0.6, w_min=1.0)
    stored = build_pool(params, 500, 200, StreamFactory(14))
    profiled = build_pool(params, 500, 200, StreamFactory(14), weight_store_cap=1)
    assert profiled.profiles.shape[0] > 0

    for y in ([1e-10], [3e-9, 1e-11], [1e6], [5e5, 1e-12]):
        np.testing.assert_allclose(
            miss_probabilities(profiled, y), miss_probabilities(stored, y), rtol=1e-9, atol=1e-12
        )


def test_pool_archive_round_trip(tmp_path):
    params = ModelParams(alpha=3.5, sigma=1.0, q=0.6, w_min=1.0)
    pool = build_pool(params, 300, 100, StreamFactory(5), weight_store_cap=4)

    pool.save(tmp_path / "pool.bin")
    loaded = TreePool.load(tmp_path / "pool.bin")

    assert loaded.header() == pool.header()
    for name in ("sizes", "censored", "generations", "flat_weights", "profiles", "y_grid"):
        np.testing.assert_array_equal(getattr(loaded, name), getattr(pool, name))


def test_delta_pool_uses_level_weights():
    params = ModelParams(alpha=3.5, sigma=1.0, q=0.6, w_min=1.0)
    model = build_delta_irg(params, 1000, 0.25, 3.0)

    pool = build_delta_pool(params, model, 500, 100, StreamFactory(3))

    assert pool.kind == "delta"
    assert np.isin(pool.flat_weights, model.z_levels).all()
    assert 0.0 <= estimate_theta(pool).theta_hat < 1.0


@pytest.mark.slow
@pytest.mark.parametrize("bucket", [0, 1, 3])
def test_isolated_root_types_match_quadrature(bucket):
    params = ModelParams(alpha=3.5, sigma=1.0, q=0.5, w_min=1.0)
    pool = build_pool(params, 20_000, 500, StreamFactory(23), workers=4)
    eps, R = 0.5, 3.0
    dist = params.weight_dist()

    def density(w):
        isolated = math.exp(-params.q * mean_kernel(w, params))
        return params.alpha * w ** (-params.alpha - 1) * isolated

    low = params.w_min + bucket * eps
    expected, _ = integrate.quad(density, low, low + eps)
    observed = estimate_type_prob(pool, ComponentType(1, (bucket,), eps, R))

    assert dist.interval_mass(low, low + eps) > expected
    assert abs(observed - expected) <= 4 * math.sqrt(expected * (1 - expected) / pool.M)
