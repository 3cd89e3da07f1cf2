import math

import numpy as np
import pytest

from irg_ldp.domain import DomainError
from irg_ldp.domain.model import (
    ModelParams,
    WeightDist,
    edge_probability,
    kernel,
    kernel_mass_split,
    mean_kernel,
    sample_weight,
)


@pytest.mark.parametrize(("sigma", "expected"), [(1.0, 6.0), (0.0, 3.0), (-1.0, 1.5)])
def test_kernel_is_max_times_min_to_the_sigma(sigma, expected):
    assert kernel(2.0, 3.0, sigma) == pytest.approx(expected)
    assert kernel(3.0, 2.0, sigma) == pytest.approx(expected)


def test_kernel_rejects_non_positive_weights():
    with pytest.raises(DomainError, match="positive"):
        kernel(0.0, 3.0, 1.0)


def test_edge_probability_examples():
    half = ModelParams(alpha=3.5, sigma=1.0, q=0.5, w_min=1.0)
    saturated = ModelParams(alpha=3.5, sigma=1.0, q=0.7, w_min=1.0)
    full = ModelParams(alpha=3.5, sigma=1.0, q=1.0, w_min=1.0)

    assert edge_probability(2.0, 3.0, half, 10) == pytest.approx(0.3)
    assert edge_probability(5.0, 5.0, saturated, 10) == pytest.approx(0.7)
    assert edge_probability(1.0, 1.0, full, 3) == pytest.approx(1 / 3)


def test_edge_probability_rejects_empty_graph():
    params = ModelParams(alpha=3.5, sigma=1.0, q=1.0, w_min=1.0)

    with pytest.raises(DomainError, match="at least 1"):
        edge_probability(1.0, 1.0, params, 0)


def test_quantile_examples():
    dist = WeightDist(alpha=2.0, w_min=1.0)

    assert sample_weight(dist, 1.0) == pytest.approx(1.0)
    assert sample_weight(dist, 0.25) == pytest.approx(2.0)


def test_sample_weight_rejects_zero_uniform():
    with pytest.raises(DomainError, match="infinite weight"):
        sample_weight(WeightDist(alpha=2.0, w_min=1.0), 0.0)


def test_pareto_mean_matches_samples():
    dist = WeightDist(alpha=3.5, w_min=1.0)
    rng = np.random.default_rng(11)

    samples = np.asarray(sample_weight(dist, 1.0 - rng.random(1_000_000)))

    error = samples.std() / math.sqrt(samples.size)
    assert abs(samples.mean() - 1.4) <= 3 * error
    assert dist.mean() == pytest.approx(1.4)


def test_tail_and_cdf_are_complementary():
    dist = WeightDist(alpha=2.5, w_min=2.0)

    assert dist.tail(2.0) == pytest.approx(1.0)
    assert dist.tail(1.0) == pytest.approx(1.0)
    assert dist.tail(4.0) == pytest.approx(2.0**-2.5)
    assert dist.cdf(4.0) == pytest.approx(1 - 2.0**-2.5)
    assert dist.interval_mass(2.0, 4.0) == pytest.approx(1 - 2.0**-2.5)


@pytest.mark.parametrize(("alpha", "w_min"), [(2.0, 1.0), (2.5, 2.0), (3.5, 0.5)])
def test_quantile_inverts_the_tail(alpha, w_min):
    dist = WeightDist(alpha=alpha, w_min=w_min)
    uniforms = np.logspace(-12, 0, 49)
    weights = w_min * np.logspace(0, 6, 49)

    np.testing.assert_allclose(dist.tail(dist.quantile(uniforms)), uniforms, rtol=1e-12, atol=0)
    np.testing.assert_allclose(dist.quantile(dist.tail(weights)), weights, rtol=1e-12, atol=0)


def test_weight_dist_rejects_inconsistent_scale():
    with pytest.raises(DomainError, match="l_const"):
        WeightDist(alpha=2.0, w_min=1.0, l_const=2.0)


@pytest.mark.parametrize("sigma", [1.0, 0.5, -0.5, 3.5])
def test_mean_kernel_matches_quadrature(sigma):
    params = ModelParams(alpha=3.5, sigma=sigma, q=1.0, w_min=1.0)
    dist = params.weight_dist()

    for w in (1.0, 2.5, 10.0):
        by_quadrature = dist.expect(lambda x, w=w: float(kernel(w, x, sigma)))
        assert mean_kernel(w, params) == pytest.approx(by_quadrature, rel=1e-5)


def test_mean_kernel_is_linear_in_rank_one_case():
    params = ModelParams(alpha=3.5, sigma=1.0, q=1.0, w_min=1.0)

    assert mean_kernel(3.0, params) == pytest.approx(3.0 * 1.4)
    below, above = kernel_mass_split(1.0, params)
    assert below == pytest.approx(0.0)
    assert above == pytest.approx(1.4)


@pytest.mark.parametrize(
    ("overrides", "message"),
    [
        ({"alpha": 0.9}, "alpha > 1"),
        ({"sigma": 6.0}, "sigma < 2\\*alpha - 1"),
        ({"q": 0.0}, "q must lie in"),
        ({"q": 1.5}, "q must lie in"),
        ({"w_min": -1.0}, "w_min must be positive"),
        ({"alpha": float("nan")}, "alpha must be finite"),
    ],
)
def test_model_params_validation(overrides, message):
    values = {"alpha": 3.5, "sigma": 1.0, "q": 1.0, "w_min": 1.0, **overrides}

    with pytest.raises(DomainError, match=message):
        ModelParams(**values)


def test_model_params_dict_round_trip():
    params = ModelParams(alpha=2.5, sigma=0.5, q=0.8, w_min=1.5)

    assert ModelParams.from_dict(params.to_dict()) == params


def test_model_params_from_dict_names_missing_keys():
    with pytest.raises(DomainError, match="missing keys: q, w_min"):
        ModelParams.from_dict({"alpha": 2.5, "sigma": 1.0})
