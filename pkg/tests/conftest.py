import numpy as np
import pytest

from irg_ldp.domain.model import ModelParams
from irg_ldp.services.branching import ProgenySample, TreePool


@pytest.fixture
def sim_env(monkeypatch, tmp_path):
    for name in ("IRG_LDP_THREADS", "IRG_LDP_LOG_LEVEL", "IRG_LDP_POOL_SIZE", "IRG_LDP_DRAWS"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("IRG_LDP_SEED", "7")
    monkeypatch.setenv("IRG_LDP_RESULTS_DIR", str(tmp_path / "results"))
    return tmp_path


@pytest.fixture
def rank_one_params():
    return ModelParams(alpha=3.5, sigma=1.0, q=1.0, w_min=1.0)


@pytest.fixture
def singleton_pool():
    """Factory for injected pools of isolated roots of weight w_min, plus censored trees."""

    def build(params, M=1000, censored=0, size_cap=100):
        finite = [
            ProgenySample(size=1, censored=False, generations=1, weights=np.array([params.w_min]))
            for _ in range(M - censored)
        ]
        infinite = [
            ProgenySample(size=size_cap + 1, censored=True, generations=size_cap)
            for _ in range(censored)
        ]
        return TreePool.from_samples(params, finite + infinite, size_cap)

    return build
